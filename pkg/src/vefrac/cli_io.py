"""Run configuration, archives, plot extracts, and the command line.

Configs are INI-style text (sections run/load/partition/pool/search/
tolerances) and validate strictly: unknown sections or keys are errors,
as are non-positive moduli. A finished run is persisted as a JSON
archive tagged `ve-fracture/1`: the effective config, the partition,
the per-step ledger, the detected jumps, and the audit residuals. The
archive is the product; audits report into it rather than failing the
process, and every float is written with 17 significant digits so a
reload reproduces the run bit for bit.

The dispatcher is plain single-threaded orchestration. Exit codes: 0
for success (including audits that report FAIL), 1 for validation
problems, 2 when the solver gives up.
"""

from __future__ import annotations

import configparser
import io
import json
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dissipation import DissipationParams
from .elastic import (
    BoundaryLoad,
    ElasticError,
    LinearAmplitude,
    TableAmplitude,
)
from .evolution import (
    DiscreteEvolution,
    JumpRecord,
    StepLedger,
    TimePartition,
    component_bound_check,
    detect_jumps,
    energetic_mode,
    fracture_instance,
    run_scheme,
)
from .geometry import CrackSet, Mesh, MeshError, read_mesh
from .griffith import GriffithError, TipPath, check_kkt, griffith_report
from .ve_core import audit_balance, audit_jump_conditions, jump_cost

SCHEMA_TAG = "ve-fracture/1"

GRIFFITH_COLUMNS = ("t", "tip", "sigma", "sigmadot", "kappa2", "slack", "compl")

_BUDGET_CAP = 12


class ConfigError(Exception):
    """A config file fails validation."""


class ArchiveError(Exception):
    """An archive is missing, malformed, or from another schema."""


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """Validated run description with defaults already applied.

    pool_items holds vertex pairs for kind "pairs" and edge ids for
    kind "edges"; it is empty for "all-interior". The solver and h
    tolerances are echoed into archives for self-description even
    where the inner modules pin their own constants.
    """

    mesh: str
    mode: str = "ve"
    lam: float = 1.0
    mu: float = 1.0
    output: str = "out"
    profile: str = "builtin:linear-y"
    amplitude: str = "linear(0, 1)"
    steps: int = 50
    horizon: float = 1.0
    times: tuple[float, ...] | None = None
    pool_kind: str = "all-interior"
    pool_items: tuple = ()
    initial: tuple = ()
    search: str = "exhaustive"
    budget: int = 3
    tol_stability: float = 1e-9
    tol_solver: float = 1e-10
    tol_h: float = 1e-8
    tol_balance: float = 1e-9


_KNOWN_KEYS = {
    "run": {"mesh", "mode", "lambda", "mu", "output"},
    "load": {"profile", "amplitude"},
    "partition": {"steps", "horizon", "times"},
    "pool": {"kind", "items", "initial"},
    "search": {"mode", "budget"},
    "tolerances": {"stability", "solver", "h", "balance"},
}


def _number(section: str, key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(
            f"malformed number for {section}.{key}: {raw!r}") from None


def _integer(section: str, key: str, raw: str) -> int:
    try:
        return int(raw, 10)
    except ValueError:
        raise ConfigError(
            f"malformed integer for {section}.{key}: {raw!r}") from None


def _parse_pool_items(kind: str, raw: str):
    groups = [g.strip() for g in raw.split(",") if g.strip()]
    if kind == "pairs":
        pairs = []
        for g in groups:
            parts = g.split()
            if len(parts) != 2:
                raise ConfigError(
                    f"pool pairs need two vertex ids per group, got {g!r}")
            pairs.append((_integer("pool", "items", parts[0]),
                          _integer("pool", "items", parts[1])))
        return tuple(pairs)
    ids = []
    for g in groups:
        ids.extend(_integer("pool", "items", p) for p in g.split())
    return tuple(ids)


def parse_config(text: str) -> RunConfig:
    """Parse and validate an INI-like config document.

    Unknown sections and keys are rejected by name; missing values get
    the documented defaults (notably budget 3 and 50 steps).
    """
    parser = configparser.ConfigParser(
        delimiters=("=",), interpolation=None,
        inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}") from None

    values: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section: {section}")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"unknown config key: {section}.{key}")
            values[section][key] = raw.strip()

    def get(section: str, key: str, default=None):
        return values.get(section, {}).get(key, default)

    mesh = get("run", "mesh")
    if not mesh:
        raise ConfigError("missing mesh")
    mode = get("run", "mode", "ve")
    if mode not in ("ve", "energetic"):
        raise ConfigError(f"mode must be 've' or 'energetic', got {mode!r}")
    lam = _number("run", "lambda", get("run", "lambda", "1"))
    if lam <= 0:
        raise ConfigError("lambda must be positive")
    mu = _number("run", "mu", get("run", "mu", "1"))
    if mu <= 0:
        raise ConfigError("mu must be positive")

    steps = _integer("partition", "steps", get("partition", "steps", "50"))
    if steps < 1:
        raise ConfigError("partition needs at least one step")
    horizon = _number("partition", "horizon", get("partition", "horizon", "1"))
    if horizon <= 0:
        raise ConfigError("horizon must be positive")
    times = None
    if get("partition", "times") is not None:
        entries = [e for e in get("partition", "times").split(",") if e.strip()]
        times = tuple(_number("partition", "times", e) for e in entries)
        if len(times) < 2:
            raise ConfigError("explicit times need at least the two endpoints")

    pool_kind = get("pool", "kind", "all-interior")
    if pool_kind not in ("all-interior", "pairs", "edges"):
        raise ConfigError(
            f"pool kind must be all-interior, pairs or edges, got {pool_kind!r}")
    items_raw = get("pool", "items")
    if pool_kind == "all-interior":
        if items_raw is not None:
            raise ConfigError("pool items make no sense with kind all-interior")
        pool_items = ()
    else:
        if not items_raw:
            raise ConfigError(f"pool kind {pool_kind} needs items")
        pool_items = _parse_pool_items(pool_kind, items_raw)

    initial_raw = get("pool", "initial")
    initial = (_parse_pool_items("pairs", initial_raw)
               if initial_raw else ())

    search = get("search", "mode", "exhaustive")
    if search not in ("exhaustive", "greedy"):
        raise ConfigError(
            f"search mode must be exhaustive or greedy, got {search!r}")
    budget = _integer("search", "budget", get("search", "budget", "3"))
    if not 0 <= budget <= _BUDGET_CAP:
        raise ConfigError(f"budget must be between 0 and {_BUDGET_CAP}")

    def tol(key: str, default: str) -> float:
        v = _number("tolerances", key, get("tolerances", key, default))
        if v <= 0:
            raise ConfigError(f"tolerance {key} must be positive")
        return v

    return RunConfig(
        mesh=mesh, mode=mode, lam=lam, mu=mu,
        output=get("run", "output", "out"),
        profile=get("load", "profile", "builtin:linear-y"),
        amplitude=get("load", "amplitude", "linear(0, 1)"),
        steps=steps, horizon=horizon, times=times,
        pool_kind=pool_kind, pool_items=pool_items, initial=initial,
        search=search, budget=budget,
        tol_stability=tol("stability", "1e-9"),
        tol_solver=tol("solver", "1e-10"),
        tol_h=tol("h", "1e-8"),
        tol_balance=tol("balance", "1e-9"),
    )


# ---------------------------------------------------------------------------
# assembling a run from a config
# ---------------------------------------------------------------------------

@dataclass
class RunContext:
    """Everything a subcommand needs to drive or re-drive a run."""

    config: RunConfig
    base: str
    mesh: Mesh
    load: BoundaryLoad
    pool: CrackSet
    instance: object
    partition: TimePartition
    k0: CrackSet


_AMPLITUDE_RE = re.compile(r"^(linear|table)\s*\((.*)\)$")


def _parse_amplitude(spec: str, base: Path):
    m = _AMPLITUDE_RE.match(spec.strip())
    if not m:
        raise ConfigError(
            f"amplitude must be linear(c0, c1) or table(file), got {spec!r}")
    kind, body = m.group(1), m.group(2)
    if kind == "linear":
        parts = [p.strip() for p in body.split(",")]
        if len(parts) != 2:
            raise ConfigError(f"linear amplitude needs two coefficients: {spec!r}")
        return LinearAmplitude(_number("load", "amplitude", parts[0]),
                               _number("load", "amplitude", parts[1]))
    table_path = _resolve(body.strip(), base)
    rows = []
    for ln in table_path.read_text(encoding="utf-8").splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        parts = ln.replace(",", " ").split()
        if len(parts) != 2:
            raise ConfigError(f"amplitude table rows need two values: {ln!r}")
        rows.append((float(parts[0]), float(parts[1])))
    return TableAmplitude([r[0] for r in rows], [r[1] for r in rows])


def _read_profile(spec: str, mesh: Mesh, base: Path) -> np.ndarray:
    if spec == "builtin:linear-y":
        return mesh.vertices[:, 1].copy()
    if spec.startswith("builtin:"):
        raise ConfigError(f"unknown builtin load profile {spec!r}")
    vals = []
    for ln in _resolve(spec, base).read_text(encoding="utf-8").splitlines():
        ln = ln.split("#", 1)[0].strip()
        if ln:
            vals.append(float(ln))
    return np.array(vals, dtype=float)


def _build_pool(cfg: RunConfig, mesh: Mesh) -> CrackSet:
    if cfg.pool_kind == "all-interior":
        exclude = set(map(int, mesh.dirichlet_edges()))
        return CrackSet.of_edges(
            mesh, [e for e in range(mesh.n_edges) if e not in exclude])
    if cfg.pool_kind == "pairs":
        return CrackSet.of_vertex_pairs(mesh, cfg.pool_items)
    return CrackSet.of_edges(mesh, cfg.pool_items)


def _resolve(path_str: str, base: Path) -> Path:
    p = Path(path_str)
    return p if p.is_absolute() else Path(base) / p


def build_run(cfg: RunConfig, base) -> RunContext:
    """Materialize a config: read the mesh, wire the load, the pool and
    the driving instance. Relative paths resolve against `base`, the
    directory of the config file."""
    base = Path(base)
    mesh = read_mesh(_resolve(cfg.mesh, base))
    if cfg.times is not None:
        try:
            partition = TimePartition(np.array(cfg.times, dtype=float))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    else:
        partition = TimePartition.uniform(cfg.horizon, cfg.steps)
    profile = _read_profile(cfg.profile, mesh, base)
    load = BoundaryLoad(profile=profile, amplitude=_parse_amplitude(cfg.amplitude, base),
                        horizon=partition.horizon)
    pool = _build_pool(cfg, mesh)
    params = DissipationParams(lam=cfg.lam, mu=cfg.mu)
    instance = fracture_instance(
        mesh, load, params, pool, budget=cfg.budget, search=cfg.search,
        stability_rtol=cfg.tol_stability)
    k0 = (CrackSet.of_vertex_pairs(mesh, cfg.initial) if cfg.initial
          else CrackSet.empty(mesh))
    return RunContext(config=cfg, base=str(base), mesh=mesh, load=load,
                      pool=pool, instance=instance, partition=partition,
                      k0=k0)


def _config_echo(cfg: RunConfig, base: str) -> dict:
    return {
        "base": base,
        "run": {"mesh": cfg.mesh, "mode": cfg.mode, "lambda": cfg.lam,
                "mu": cfg.mu, "output": cfg.output},
        "load": {"profile": cfg.profile, "amplitude": cfg.amplitude},
        "partition": {"steps": cfg.steps, "horizon": cfg.horizon,
                      "times": list(cfg.times) if cfg.times is not None else None},
        "pool": {"kind": cfg.pool_kind,
                 "items": [list(p) if isinstance(p, tuple) else p
                           for p in cfg.pool_items],
                 "initial": [list(p) for p in cfg.initial]},
        "search": {"mode": cfg.search, "budget": cfg.budget},
        "tolerances": {"stability": cfg.tol_stability, "solver": cfg.tol_solver,
                       "h": cfg.tol_h, "balance": cfg.tol_balance},
    }


def _config_from_echo(echo: dict) -> tuple[RunConfig, str]:
    run, load = echo["run"], echo["load"]
    part, pool = echo["partition"], echo["pool"]
    search, tols = echo["search"], echo["tolerances"]
    items = pool["items"]
    cfg = RunConfig(
        mesh=run["mesh"], mode=run["mode"], lam=run["lambda"], mu=run["mu"],
        output=run["output"], profile=load["profile"],
        amplitude=load["amplitude"], steps=part["steps"],
        horizon=part["horizon"],
        times=tuple(part["times"]) if part["times"] is not None else None,
        pool_kind=pool["kind"],
        pool_items=tuple(tuple(p) if isinstance(p, list) else p for p in items),
        initial=tuple(tuple(p) for p in pool.get("initial", [])),
        search=search["mode"], budget=search["budget"],
        tol_stability=tols["stability"], tol_solver=tols["solver"],
        tol_h=tols["h"], tol_balance=tols["balance"])
    return cfg, echo["base"]


# ---------------------------------------------------------------------------
# archives
# ---------------------------------------------------------------------------

@dataclass
class EvolutionArchive:
    """In-memory image of an archive document."""

    schema: str
    config: dict | None
    times: np.ndarray
    steps: list[dict]
    jumps: list[dict]
    audits: dict | None
    griffith: dict | None

    def to_evolution(self, mesh: Mesh) -> DiscreteEvolution:
        """Rebuild the run on its mesh; exact because floats round-trip."""
        states = [CrackSet.of_edges(mesh, s["edges"]) for s in self.steps]
        cols = {name: np.array([float(s[key]) for s in self.steps])
                for name, key in (("energy", "E"), ("power", "power"),
                                  ("power_pre", "power_pre"), ("d", "d"),
                                  ("delta", "Delta"), ("alpha", "alpha"),
                                  ("r", "R"))}
        return DiscreteEvolution(
            partition=TimePartition(self.times.copy()),
            states=states, ledger=StepLedger(**cols))

    def jump_records(self, mesh: Mesh) -> list[JumpRecord]:
        return [JumpRecord(index=j["index"], time=j["time"],
                           left=CrackSet.of_edges(mesh, j["left"]),
                           at=CrackSet.of_edges(mesh, j["at"]),
                           right=CrackSet.of_edges(mesh, j["right"]),
                           magnitude=j["magnitude"])
                for j in self.jumps]


def _document(evolution: DiscreteEvolution, audits, config, jumps, griffith) -> dict:
    led = evolution.ledger
    times = evolution.partition.times
    steps = []
    for i, state in enumerate(evolution.states):
        steps.append({
            "t": float(times[i]),
            "edges": [int(e) for e in sorted(state.edge_ids)],
            "E": float(led.energy[i]),
            "power": float(led.power[i]),
            "power_pre": float(led.power_pre[i]),
            "d": float(led.d[i]),
            "Delta": float(led.delta[i]),
            "alpha": float(led.alpha[i]),
            "R": float(led.r[i]),
        })
    jump_docs = []
    for rec in (jumps or []):
        jump_docs.append({
            "index": int(rec.index), "time": float(rec.time),
            "left": [int(e) for e in sorted(rec.left.edge_ids)],
            "at": [int(e) for e in sorted(rec.at.edge_ids)],
            "right": [int(e) for e in sorted(rec.right.edge_ids)],
            "magnitude": float(rec.magnitude),
        })
    return {
        "schema": SCHEMA_TAG,
        "config": config,
        "partition": [float(t) for t in times],
        "steps": steps,
        "jumps": jump_docs,
        "audits": audits,
        "griffith": griffith,
    }


def _json_text(obj, indent: int = 0) -> str:
    pad = " " * indent
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ArchiveError(f"archives cannot hold non-finite floats ({x})")
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = list(obj)
        if any(isinstance(x, (dict, list, tuple, np.ndarray)) for x in items):
            inner = (",\n" + pad + "  ").join(
                _json_text(x, indent + 2) for x in items)
            return "[\n" + pad + "  " + inner + "\n" + pad + "]" if items else "[]"
        return "[" + ", ".join(_json_text(x, indent) for x in items) + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        rows = (",\n" + pad + "  ").join(
            f"{json.dumps(str(k))}: {_json_text(v, indent + 2)}"
            for k, v in obj.items())
        return "{\n" + pad + "  " + rows + "\n" + pad + "}"
    raise ArchiveError(f"cannot serialize {type(obj).__name__} into an archive")


def save_archive(evolution: DiscreteEvolution, audits, path,
                 config: dict | None = None, jumps=None,
                 griffith: dict | None = None) -> Path:
    """Write the run as a schema-tagged JSON document and return the
    path. Floats carry 17 significant digits, so loading is lossless;
    key order and newlines are fixed, so reruns are byte-identical."""
    doc = _document(evolution, audits, config, jumps, griffith)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_json_text(doc) + "\n")
    return path


def _archive_from_document(doc: dict) -> EvolutionArchive:
    schema = doc.get("schema")
    if schema != SCHEMA_TAG:
        raise ArchiveError(
            f"unsupported archive schema {schema!r}; this build reads "
            f"{SCHEMA_TAG!r}")
    return EvolutionArchive(
        schema=schema, config=doc.get("config"),
        times=np.array(doc["partition"], dtype=float),
        steps=list(doc["steps"]), jumps=list(doc.get("jumps") or []),
        audits=doc.get("audits"), griffith=doc.get("griffith"))


def load_archive(path) -> EvolutionArchive:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ArchiveError(f"cannot read archive: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ArchiveError(f"archive is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ArchiveError("archive root must be an object")
    return _archive_from_document(doc)


def collect_audits(evolution: DiscreteEvolution, instance, jumps,
                   cfg: RunConfig) -> dict:
    """Recompute every audit for the archive. Failures become data."""
    balance = audit_balance(evolution, instance, upper_tol=cfg.tol_balance)
    identities = audit_jump_conditions(evolution, instance, jumps=jumps)
    comp = component_bound_check(evolution, instance)
    return {
        "tolerances": {"stability": cfg.tol_stability,
                       "solver": cfg.tol_solver,
                       "h": cfg.tol_h, "balance": cfg.tol_balance},
        "balance": {
            "residual": [float(x) for x in balance.residual],
            "residual_alt": [float(x) for x in balance.residual_alt],
            "form_difference": [float(x) for x in balance.form_difference],
            "quadrature_bound": [float(x) for x in balance.quadrature_bound],
            "work": [float(x) for x in balance.work],
            "upper_ok": [bool(x) for x in balance.upper_ok],
            "max_form_difference": float(balance.max_form_difference),
        },
        "jump_identities": [
            {"time": a.time, "res_left": a.res_left,
             "res_right": a.res_right, "res_across": a.res_across}
            for a in identities],
        "component_bound": {
            "bound": float(comp.bound),
            "worst": float(comp.counts.max()),
            "ok": bool(comp.ok),
        },
    }


# ---------------------------------------------------------------------------
# plot extracts
# ---------------------------------------------------------------------------

def _csv(rows, header) -> str:
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for row in rows:
        cells = []
        for x in row:
            if isinstance(x, (int, np.integer)):
                cells.append(str(int(x)))
            else:
                cells.append(format(float(x), ".17g"))
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def emit_plot_data(archive: EvolutionArchive, kind: str) -> str:
    """Tidy CSV for one plot kind: energy, dissipation, tips, balance."""
    if kind == "energy":
        bal = (archive.audits or {}).get("balance")
        if bal is None:
            raise ArchiveError("archive carries no balance audit; "
                               "energy plots need the work column")
        rows = zip(archive.times, (s["E"] for s in archive.steps),
                   bal["work"], bal["residual"])
        return _csv(rows, ("t", "E", "work", "balance_residual"))
    if kind == "dissipation":
        rows = ((s["t"], s["d"], s["Delta"], s["alpha"], s["R"])
                for s in archive.steps)
        return _csv(rows, ("t", "d", "Delta", "alpha", "R"))
    if kind == "balance":
        bal = (archive.audits or {}).get("balance")
        if bal is None:
            raise ArchiveError("archive carries no balance audit")
        rows = zip(archive.times, bal["residual"], bal["residual_alt"],
                   bal["form_difference"], bal["quadrature_bound"])
        return _csv(rows, ("t", "residual", "residual_alt",
                           "form_difference", "quadrature_bound"))
    if kind == "tips":
        if not archive.griffith:
            raise ArchiveError("archive has no griffith report; "
                               "run the griffith subcommand first")
        return _csv(archive.griffith["rows"],
                    tuple(archive.griffith["columns"]))
    raise ArchiveError(f"unknown plot kind {kind!r}")


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

USAGE = """usage: vefrac <subcommand> [arguments]

subcommands:
  run <config> [--output DIR]         drive a run, write archive.json
  audit <archive>                     re-state the stored audits, PASS/FAIL
  jumpcost <archive> --time T --left IDS --right IDS
                                      price one transition on the run's system
  griffith <archive> --paths E,E,..[;E,..] [--estimator sif|release] [--hsteps N]
                                      tip tracking, KKT checks, griffith.csv
  compare <configA> <configB>         run both, compare first growth steps
  sweep <config> --param NAME --values V1,V2,..
                                      rerun the config across one parameter

exit codes: 0 success (audits report FAIL as data), 1 validation error,
2 numerical failure.
"""


def _split_args(args, n_positional, flags):
    """Tiny deterministic option scanner: every flag takes one value."""
    positional, options = [], {}
    it = iter(args)
    for a in it:
        if a.startswith("--"):
            if a not in flags:
                raise ConfigError(f"unknown option {a}")
            try:
                options[a] = next(it)
            except StopIteration:
                raise ConfigError(f"option {a} needs a value") from None
        else:
            positional.append(a)
    if len(positional) != n_positional:
        raise ConfigError(
            f"expected {n_positional} positional argument(s), "
            f"got {len(positional)}")
    return positional, options


def _load_context(config_path: str) -> RunContext:
    path = Path(config_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    cfg = parse_config(text)
    return build_run(cfg, path.parent.resolve())


def _drive(ctx: RunContext) -> DiscreteEvolution:
    if ctx.config.mode == "energetic":
        return energetic_mode(ctx.instance, ctx.partition, ctx.k0)
    return run_scheme(ctx.instance, ctx.partition, ctx.k0)


def _first_change(evolution: DiscreteEvolution):
    changing = evolution.changing_steps()
    return changing[0] if changing else None


def _summarize_run(evolution: DiscreteEvolution, jumps) -> list[str]:
    first = _first_change(evolution)
    lines = [f"steps: {len(evolution.partition) - 1}, "
             f"final crack: {evolution.states[-1].cardinality} edge(s), "
             f"jumps detected: {len(jumps)}"]
    if first is None:
        lines.append("the crack never moves")
    else:
        t = evolution.partition.times[first]
        lines.append(f"first growth at step {first} (t={t:.6g})")
    return lines


def _cmd_run(args) -> int:
    positional, options = _split_args(args, 1, {"--output"})
    ctx = _load_context(positional[0])
    evolution = _drive(ctx)
    jumps = detect_jumps(evolution)
    audits = collect_audits(evolution, ctx.instance, jumps, ctx.config)
    out_dir = Path(options.get("--output",
                               _resolve(ctx.config.output, Path(ctx.base))))
    path = save_archive(evolution, audits, out_dir / "archive.json",
                        config=_config_echo(ctx.config, ctx.base),
                        jumps=jumps)
    for line in _summarize_run(evolution, jumps):
        print(line)
    bal = audits["balance"]
    print(f"balance forms differ by {bal['max_form_difference']:.3g}; "
          f"upper estimate {'ok' if all(bal['upper_ok']) else 'VIOLATED'}")
    print(f"archive: {path}")
    return 0


def _audit_lines(archive: EvolutionArchive) -> list[str]:
    audits = archive.audits
    if not audits:
        return ["no audits stored"]
    lines = []
    bal = audits.get("balance")
    if bal:
        diff = bal["max_form_difference"]
        ok = diff < 1e-12
        lines.append(f"balance forms: {'PASS' if ok else 'FAIL'} "
                     f"(max difference {diff:.3g}, limit 1e-12)")
        upper = all(bal["upper_ok"])
        worst = max(r - q for r, q in zip(bal["residual"],
                                          bal["quadrature_bound"]))
        lines.append(f"upper estimate: {'PASS' if upper else 'FAIL'} "
                     f"(worst residual excess {worst:.3g})")
    idents = audits.get("jump_identities", [])
    if idents:
        tols = audits.get("tolerances", {})
        scale = 1.0 + max(abs(s["E"]) for s in archive.steps)
        limit = (tols.get("balance", 1e-9) + tols.get("stability", 1e-9)) * scale
        worst = max(max(abs(a["res_left"]), abs(a["res_right"]),
                        abs(a["res_across"])) for a in idents)
        ok = worst <= limit
        lines.append(f"jump identities: {'PASS' if ok else 'FAIL'} "
                     f"(worst residual {worst:.3g}, limit {limit:.3g})")
    else:
        lines.append("jump identities: PASS (no jumps)")
    comp = audits.get("component_bound")
    if comp:
        lines.append(f"component bound: {'PASS' if comp['ok'] else 'FAIL'} "
                     f"(worst {comp['worst']:.0f} vs bound {comp['bound']:.3g})")
    return lines


def _cmd_audit(args) -> int:
    positional, _ = _split_args(args, 1, {})
    archive = load_archive(positional[0])
    for line in _audit_lines(archive):
        print(line)
    return 0


def _context_from_archive(archive: EvolutionArchive) -> RunContext:
    if not archive.config:
        raise ArchiveError("archive stores no config echo; cannot rebuild "
                           "the run's system")
    cfg, base = _config_from_echo(archive.config)
    return build_run(cfg, base)


def _edge_list(raw: str) -> list[int]:
    raw = raw.strip()
    if not raw:
        return []
    try:
        return [int(p) for p in raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"malformed edge id list {raw!r}") from None


def _cmd_jumpcost(args) -> int:
    positional, options = _split_args(
        args, 1, {"--time", "--left", "--right"})
    for needed in ("--time", "--left", "--right"):
        if needed not in options:
            raise ConfigError(f"jumpcost needs {needed}")
    archive = load_archive(positional[0])
    ctx = _context_from_archive(archive)
    try:
        t = float(options["--time"])
    except ValueError:
        raise ConfigError(
            f"malformed time {options['--time']!r}") from None
    left = CrackSet.of_edges(ctx.mesh, _edge_list(options["--left"]))
    right = CrackSet.of_edges(ctx.mesh, _edge_list(options["--right"]))
    result = jump_cost(t, left, right, ctx.instance)
    print(f"jump cost at t={t:.6g}: {result.cost:.17g}")
    if result.chain is not None:
        states = " -> ".join(
            "{" + ",".join(map(str, sorted(k.edge_ids))) + "}"
            for k in result.chain)
        print(f"chain: {states}")
        for i, hop in enumerate(result.hops):
            print(f"hop {i}: Delta={hop.delta:.6g} alpha={hop.alpha:.0f} "
                  f"R={hop.r_start:.6g}")
    return 0


def _parse_paths(mesh: Mesh, raw: str) -> list[TipPath]:
    groups = [g for g in raw.split(";") if g.strip()]
    if not groups:
        raise ConfigError("empty --paths")
    return [TipPath.along(mesh, _edge_list(g)) for g in groups]


def _cmd_griffith(args) -> int:
    positional, options = _split_args(
        args, 1, {"--paths", "--estimator", "--output", "--hsteps"})
    if "--paths" not in options:
        raise ConfigError("griffith needs --paths")
    estimator = options.get("--estimator", "sif")
    if estimator not in ("sif", "release"):
        raise ConfigError(f"estimator must be sif or release, got {estimator!r}")
    try:
        h_steps = int(options.get("--hsteps", "3"))
    except ValueError:
        raise ConfigError(
            f"malformed --hsteps {options['--hsteps']!r}") from None
    if not 1 <= h_steps <= 8:
        raise ConfigError("--hsteps must be between 1 and 8")
    archive_path = Path(positional[0])
    archive = load_archive(archive_path)
    ctx = _context_from_archive(archive)
    evolution = archive.to_evolution(ctx.mesh)
    paths = _parse_paths(ctx.mesh, options["--paths"])
    report = griffith_report(evolution, ctx.load, paths, estimator=estimator,
                             h_steps=h_steps)
    kkt = check_kkt(report)
    rows = [list(r) for r in report.rows()]
    griffith_doc = {
        "estimator": estimator,
        "columns": list(GRIFFITH_COLUMNS),
        "rows": rows,
        "kkt": {
            "tol": kkt.tol, "passed": bool(kkt.passed),
            "rate_ok": bool(kkt.rate_ok),
            "threshold_ok": bool(kkt.threshold_ok),
            "complementarity_ok": bool(kkt.complementarity_ok),
            "worst_rate": kkt.worst_rate,
            "worst_slack": kkt.worst_slack,
            "worst_complementarity": kkt.worst_complementarity,
        },
    }
    save_archive(evolution, archive.audits, archive_path,
                 config=archive.config,
                 jumps=archive.jump_records(ctx.mesh),
                 griffith=griffith_doc)
    out_dir = Path(options.get("--output", archive_path.parent))
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "griffith.csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_csv(rows, GRIFFITH_COLUMNS))
    print(f"tips: {report.n_tips}, samples: {len(report.times)}, "
          f"estimator: {estimator}")
    print(f"rate condition: {'PASS' if kkt.rate_ok else 'FAIL'} "
          f"(min sigmadot {kkt.worst_rate:.3g})")
    print(f"threshold condition: {'PASS' if kkt.threshold_ok else 'FAIL'} "
          f"(min slack {kkt.worst_slack:.3g}, tol {kkt.tol:.3g})")
    print(f"complementarity: {'PASS' if kkt.complementarity_ok else 'FAIL'} "
          f"(max {kkt.worst_complementarity:.3g}, tol {kkt.tol:.3g})")
    print(f"csv: {csv_path}")
    return 0


def _cmd_compare(args) -> int:
    positional, _ = _split_args(args, 2, {})
    reports = []
    for label, cfg_path in zip("AB", positional):
        ctx = _load_context(cfg_path)
        evolution = _drive(ctx)
        first = _first_change(evolution)
        reports.append((label, ctx, evolution, first))
        where = ("never" if first is None
                 else f"step {first} (t={ctx.partition.times[first]:.6g})")
        print(f"{label} [{ctx.config.mode}]: first growth {where}, "
              f"final {evolution.states[-1].cardinality} edge(s)")
    (_, _, _, fa), (_, _, _, fb) = reports
    if fa == fb:
        print("both runs first move at the same step"
              if fa is not None else "neither run moves")
    else:
        earlier = "A" if (fb is None or (fa is not None and fa < fb)) else "B"
        print(f"run {earlier} moves first")
    return 0


_SWEEPABLE = {
    "lambda": ("lam", float),
    "mu": ("mu", float),
    "budget": ("budget", int),
    "steps": ("steps", int),
    "horizon": ("horizon", float),
    "mode": ("mode", str),
}


def _cmd_sweep(args) -> int:
    positional, options = _split_args(args, 1, {"--param", "--values"})
    for needed in ("--param", "--values"):
        if needed not in options:
            raise ConfigError(f"sweep needs {needed}")
    param = options["--param"]
    if param not in _SWEEPABLE:
        raise ConfigError(
            f"unknown sweep parameter {param!r}; pick one of "
            + ", ".join(sorted(_SWEEPABLE)))
    field, convert = _SWEEPABLE[param]
    try:
        values = [convert(v.strip()) for v in options["--values"].split(",")
                  if v.strip()]
    except ValueError:
        raise ConfigError(
            f"malformed sweep values {options['--values']!r}") from None
    if not values:
        raise ConfigError("sweep needs at least one value")

    config_path = Path(positional[0])
    base = config_path.parent.resolve()
    base_cfg = parse_config(config_path.read_text(encoding="utf-8"))
    for value in values:
        cfg = replace(base_cfg, **{field: value})
        cfg = parse_config_like(cfg)
        ctx = build_run(cfg, base)
        evolution = _drive(ctx)
        jumps = detect_jumps(evolution)
        audits = collect_audits(evolution, ctx.instance, jumps, cfg)
        out_dir = _resolve(cfg.output, base) / f"sweep-{param}-{value}"
        save_archive(evolution, audits, out_dir / "archive.json",
                     config=_config_echo(cfg, str(base)), jumps=jumps)
        first = _first_change(evolution)
        where = ("never" if first is None
                 else f"step {first} (t={ctx.partition.times[first]:.6g})")
        print(f"{param}={value}: first growth {where}, "
              f"final {evolution.states[-1].cardinality} edge(s), "
              f"jumps {len(jumps)}")
    return 0


def parse_config_like(cfg: RunConfig) -> RunConfig:
    """Re-validate a programmatically tweaked config (sweeps edit
    fields directly, so the constructor checks must run again)."""
    if cfg.lam <= 0:
        raise ConfigError("lambda must be positive")
    if cfg.mu <= 0:
        raise ConfigError("mu must be positive")
    if not 0 <= cfg.budget <= _BUDGET_CAP:
        raise ConfigError(f"budget must be between 0 and {_BUDGET_CAP}")
    if cfg.steps < 1:
        raise ConfigError("partition needs at least one step")
    if cfg.horizon <= 0:
        raise ConfigError("horizon must be positive")
    if cfg.mode not in ("ve", "energetic"):
        raise ConfigError(f"mode must be 've' or 'energetic', got {cfg.mode!r}")
    return cfg


_COMMANDS = {
    "run": _cmd_run,
    "audit": _cmd_audit,
    "jumpcost": _cmd_jumpcost,
    "griffith": _cmd_griffith,
    "compare": _cmd_compare,
    "sweep": _cmd_sweep,
}

_VALIDATION_ERRORS = (ConfigError, ArchiveError, MeshError, GriffithError,
                      ValueError, OSError)


def cli_dispatch(argv) -> int:
    """Route one invocation; never raises for user-input problems."""
    argv = list(argv)
    if not argv:
        print(USAGE, end="")
        return 1
    if argv[0] in ("-h", "--help", "help"):
        print(USAGE, end="")
        return 0
    handler = _COMMANDS.get(argv[0])
    if handler is None:
        print(f"unknown subcommand {argv[0]!r}")
        print(USAGE, end="")
        return 1
    try:
        return handler(argv[1:])
    except ElasticError as exc:
        if str(exc).startswith("CG failed"):
            print(f"numerical failure: {exc}")
            return 2
        print(f"error: {exc}")
        return 1
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}")
        return 1


def main() -> None:
    import sys
    raise SystemExit(cli_dispatch(sys.argv[1:]))
