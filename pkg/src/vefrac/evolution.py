"""Time-stepping driver and run-level diagnostics.

run_scheme iterates the viscously corrected incremental minimization
over a time partition, recording a per-step ledger (energy, power, the
dissipation split d / Delta / alpha of each hop, and the residual
stability of the chosen state). The crack history is monotone by
construction and is read back as the right-continuous piecewise
constant interpolant: the state decided by the minimization at t_i
holds on [t_i, t_{i+1}).

Also here: jump detection on the discrete history, the connected-
component bound, the energetic (non-viscous) comparison mode, the
refinement study over a list of step sizes, and the factory that wires
the elastic energy into a RisInstance. The factory caches one FEM solve
per distinct crack set: the datum scales linearly with the amplitude,
so E(t,K) = a(t)^2 E1(K) and the power is a(t) adot(t) times a cached
bilinear value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .dissipation import (
    CostValue,
    DissipationParams,
    alpha as alpha_count,
    atw_integral,
    delta_atw,
    dist_d,
)
from .elastic import (
    BoundaryLoad,
    LinearAmplitude,
    power_bound_constant,
    solve_on_space,
    split_along_crack,
)
from .geometry import CrackSet, Mesh, connected_components, hausdorff
from .ve_core import RisInstance, incremental_step, residual_stability

__all__ = [
    "TimePartition",
    "StepLedger",
    "DiscreteEvolution",
    "JumpRecord",
    "run_scheme",
    "detect_jumps",
    "component_bound_check",
    "ComponentBoundReport",
    "energetic_mode",
    "refine_study",
    "RefineReport",
    "fracture_instance",
]


@dataclass(frozen=True)
class TimePartition:
    """Strictly increasing times 0 = t_0 < ... < t_N = T."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a partition needs at least the two endpoints")
        if t[0] != 0.0:
            raise ValueError("partitions start at time 0")
        if not np.all(np.diff(t) > 0):
            raise ValueError("partition times must be strictly increasing")
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, horizon: float, n_steps: int) -> "TimePartition":
        if n_steps < 1:
            raise ValueError("need at least one step")
        return cls(np.linspace(0.0, horizon, n_steps + 1))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def tau(self) -> float:
        return float(np.max(np.diff(self.times)))

    def __len__(self):
        return len(self.times)


@dataclass
class StepLedger:
    """Per-index run data; row i describes the step into state K_i
    (zeros at i = 0). power is dE/dt at (t_i, K_i); power_pre evaluates
    the old state at the new time, which is what the pre-step trapezoid
    work integral needs."""

    energy: np.ndarray
    power: np.ndarray
    power_pre: np.ndarray
    d: np.ndarray
    delta: np.ndarray
    alpha: np.ndarray
    r: np.ndarray

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("energy", "power", "power_pre", "d", "delta", "alpha", "r")}


@dataclass(frozen=True)
class JumpRecord:
    """A detected jump: state moved from left through at, ending the
    flagged run of steps at right. left <= at <= right as sets."""

    index: int
    time: float
    left: CrackSet
    at: CrackSet
    right: CrackSet
    magnitude: float

    def __post_init__(self):
        if not (self.left.issubset(self.at) and self.at.issubset(self.right)):
            raise ValueError("jump record states must be nested")


@dataclass
class DiscreteEvolution:
    partition: TimePartition
    states: list[CrackSet]
    ledger: StepLedger

    def state_at(self, t: float) -> CrackSet:
        """Right-continuous interpolant: the state minimized at t_i
        holds on [t_i, t_{i+1})."""
        times = self.partition.times
        i = int(np.searchsorted(times, t, side="right")) - 1
        i = min(max(i, 0), len(self.states) - 1)
        return self.states[i]

    def changing_steps(self) -> list[int]:
        return [i for i in range(1, len(self.states))
                if self.states[i].bits != self.states[i - 1].bits]

    def default_jump_records(self) -> list[JumpRecord]:
        """Every changing step as an isolated jump, for audits that
        treat all interpolant discontinuities alike."""
        times = self.partition.times
        return [JumpRecord(index=i, time=float(times[i]),
                           left=self.states[i - 1], at=self.states[i],
                           right=self.states[i],
                           magnitude=float(self.ledger.d[i]))
                for i in self.changing_steps()]


def run_scheme(instance: RisInstance, partition: TimePartition,
               k0: CrackSet) -> DiscreteEvolution:
    """Iterate the incremental minimization over the partition."""
    times = partition.times
    n = len(times)
    states = [k0]
    led = StepLedger(*(np.zeros(n) for _ in range(7)))
    led.energy[0] = instance.energy(times[0], k0)
    led.power[0] = instance.power(times[0], k0)
    led.power_pre[0] = led.power[0]
    led.r[0] = residual_stability(times[0], k0, instance).residual
    for i in range(1, n):
        t = float(times[i])
        prev = states[-1]
        nxt = incremental_step(t, prev, instance)
        states.append(nxt)
        led.energy[i] = instance.energy(t, nxt)
        led.power[i] = instance.power(t, nxt)
        led.power_pre[i] = instance.power(t, prev)
        led.d[i] = instance.d(prev, nxt).value
        delta, alph = instance.hop_parts(prev, nxt)
        led.delta[i] = delta
        led.alpha[i] = alph
        led.r[i] = residual_stability(t, nxt, instance).residual
    return DiscreteEvolution(partition=partition, states=states, ledger=led)


def detect_jumps(evolution: DiscreteEvolution, threshold: float = 10.0) -> list[JumpRecord]:
    """Flag steps whose d-cost exceeds threshold times the typical step
    cost, merging consecutive flagged steps into one record.

    A step is judged against the median d of the *other* changing steps,
    so a lone discontinuity in an otherwise frozen run still registers
    (there is nothing to call typical, and the only change is the jump).
    Steady growth flags nothing: every step sits at the shared median.
    threshold = 0 flags every changing step.
    """
    d = evolution.ledger.d
    positive = np.flatnonzero(d > 0.0)

    def typical_for(i: int) -> float:
        others = d[positive[positive != i]]
        return float(np.median(others)) if others.size else 0.0

    flagged = [int(i) for i in positive if d[i] > threshold * typical_for(int(i))]
    records = []
    run: list[int] = []
    times = evolution.partition.times

    def close(run):
        first, last = run[0], run[-1]
        records.append(JumpRecord(
            index=first, time=float(times[first]),
            left=evolution.states[first - 1],
            at=evolution.states[first],
            right=evolution.states[last],
            magnitude=float(d[first:last + 1].sum())))

    for i in flagged:
        if run and i == run[-1] + 1:
            run.append(i)
        else:
            if run:
                close(run)
            run = [i]
    if run:
        close(run)
    return records


@dataclass(frozen=True)
class ComponentBoundReport:
    bound: float
    counts: np.ndarray
    ok: bool
    slack: float


def component_bound_check(evolution: DiscreteEvolution,
                          instance: RisInstance) -> ComponentBoundReport:
    """Check #components(K(t)) <= h + exp(C_P T)(E_0 + 1)/(lam + mu)
    with h the component count of the initial state."""
    if instance.power_bound is None:
        raise ValueError("instance.power_bound (the constant C_P) is required")
    h = len(connected_components(evolution.states[0]))
    e0 = float(evolution.ledger.energy[0])
    horizon = evolution.partition.horizon
    lam_mu = instance.params.lam + instance.params.mu
    bound = h + math.exp(instance.power_bound * horizon) * (e0 + 1.0) / lam_mu
    counts = np.array([len(connected_components(k)) for k in evolution.states],
                      dtype=float)
    worst = float(counts.max())
    return ComponentBoundReport(bound=bound, counts=counts,
                                ok=worst <= bound, slack=bound - worst)


def energetic_mode(instance: RisInstance, partition: TimePartition,
                   k0: CrackSet) -> DiscreteEvolution:
    """Run the classical quasistatic scheme: the viscous correction is
    switched off (delta = 0, no sweep integral, no mu-charge), while d
    keeps charging new length and lam per nucleation."""

    def zero_delta(h: CrackSet, k: CrackSet) -> CostValue:
        if not h.issubset(k):
            return CostValue.infinity()
        return CostValue.finite(0.0)

    stripped = replace(instance, delta=zero_delta, delta_integral=zero_delta)
    return run_scheme(stripped, partition, k0)


@dataclass(frozen=True)
class RefineReport:
    """Hausdorff distances between interpolants of consecutive
    refinements, sampled on a fixed time grid. Stabilization under
    refinement is expected off the jump brackets; near a jump the
    distances legitimately stay at the jump size."""

    taus: tuple[float, ...]
    sample_times: np.ndarray
    distances: np.ndarray  # (len(taus) - 1, len(sample_times))


def refine_study(instance: RisInstance, k0: CrackSet, tau_list: Sequence[float],
                 horizon: float, n_samples: int = 11) -> RefineReport:
    taus = tuple(tau_list)
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau_list must be strictly decreasing")
    samples = np.linspace(0.0, horizon, n_samples)
    runs = []
    for tau in taus:
        n_steps = max(1, math.ceil(horizon / tau))
        runs.append(run_scheme(instance, TimePartition.uniform(horizon, n_steps), k0))
    dists = np.zeros((len(taus) - 1, len(samples)))
    for r, (coarse, fine) in enumerate(zip(runs, runs[1:])):
        for c, t in enumerate(samples):
            dists[r, c] = hausdorff(coarse.state_at(t), fine.state_at(t))
    return RefineReport(taus=taus, sample_times=samples, distances=dists)


class _ScaledEnergyCache:
    """One FEM solve per distinct crack set: with datum a(t) G the
    minimizer scales linearly in a(t), so E(t,K) = a(t)^2 E1(K) and
    dE/dt = adot(t) a(t) p1(K) with p1 the cached profile pairing."""

    def __init__(self, mesh: Mesh, load: BoundaryLoad):
        load.check_mesh(mesh)
        self.mesh = mesh
        self.load = load
        self.unit = BoundaryLoad(profile=load.profile,
                                 amplitude=_UNIT_AMPLITUDE, horizon=load.horizon)
        self._entries: dict[int, tuple[float, float]] = {}

    def _entry(self, k: CrackSet) -> tuple[float, float]:
        got = self._entries.get(k.bits)
        if got is None:
            space = split_along_crack(self.mesh, k)
            sol = solve_on_space(1.0, space, self.unit)
            g = self.load.profile[space.dof_vertex]
            p1 = float(g @ (space.stiffness() @ sol.u))
            got = (sol.energy, p1)
            self._entries[k.bits] = got
        return got

    def energy(self, t: float, k: CrackSet) -> float:
        a = self.load.amplitude(t)
        return a * a * self._entry(k)[0]

    def power(self, t: float, k: CrackSet) -> float:
        a = self.load.amplitude(t)
        return self.load.amplitude.derivative(t) * a * self._entry(k)[1]


_UNIT_AMPLITUDE = LinearAmplitude(1.0, 0.0)


def fracture_instance(mesh: Mesh, load: BoundaryLoad, params: DissipationParams,
                      pool: CrackSet, budget: int = 3, search: str = "exhaustive",
                      lattice_cap: int = 16, stability_rtol: float = 1e-9) -> RisInstance:
    """Wire the elastic energy and the edge dissipation into an
    instance the scheme can drive."""
    cache = _ScaledEnergyCache(mesh, load)
    return RisInstance(
        pool=pool,
        energy=cache.energy,
        power=cache.power,
        d=lambda h, k: dist_d(h, k, params),
        delta=lambda h, k: delta_atw(h, k, params),
        alpha=alpha_count,
        delta_integral=lambda h, k: atw_integral(h, k, params),
        params=params,
        budget=budget,
        search=search,
        lattice_cap=lattice_cap,
        stability_rtol=stability_rtol,
        power_bound=power_bound_constant(load, mesh),
        load=load,
    )
