"""Experiment configuration: JSON schema, parsing, validation and instance building.

A config file is a UTF-8 JSON object. Matrices are nested row-major lists
shaped ``types x sources``. Recognised keys (defaults in brackets)::

    name          free-form label ["experiment"]
    types         type ids, or an integer count [length of prob]
    sources       source ids, or an integer count [columns of target]
    edges         "complete" or a list of [type, source] pairs ["complete"]
    utility       {"family": "linear" | "log" | "sqrt",
                   "target": matrix, "source": matrix,
                   "lipschitz_sum": number [derived]}
    p_lo, p_hi    per-type bounds on total received amount [p_lo = 0]
    q_lo, q_hi    per-source bounds on total shipped amount [q_lo = 0]
    prob          type distribution, positive, sums to 1
    population    number of target nodes N
    population_estimate
                  N used by the federated learner [population]
    solver        "admm" | "federated" | "oracle" ["federated"]
    schedule      {"kind": "constant" | "inverse_sqrt", "value": c}
                  [{"kind": "inverse_sqrt", "value": 0.5}]
    iterations    federated iterations [8000]
    seed          RNG seed [42]
    shifts        list of {"at_iteration": k, "prob": [...]} [[]]
    eta, max_iterations, primal_tol, dual_tol
                  ADMM settings [1.0, 50000, 1e-6, 1e-7]
    compare_oracle
                  also solve centrally and report the gap [true]
    out           output directory ["runs/<name>"]
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import numpy as np

from .errors import FedOTError, ParseError, ValidationError
from .fedlearn import ShiftEvent, StepSchedule
from .instance import Instance
from .network import PROB_TOL, Bounds, TypeDistribution, build_network
from .utility import FAMILIES, UtilityModel

SOLVERS = ("admm", "federated", "oracle")


@dataclass(frozen=True)
class ShiftSpec:
    at_iteration: int
    prob: tuple


@dataclass(frozen=True)
class ExperimentConfig:
    types: tuple
    sources: tuple
    edges: Any  # "complete" or tuple of (type, source) pairs
    family: str
    target: tuple
    source: tuple
    p_hi: tuple
    q_hi: tuple
    prob: tuple
    population: float
    p_lo: tuple = ()
    q_lo: tuple = ()
    lipschitz_sum: float | None = None
    population_estimate: float | None = None
    solver: str = "federated"
    schedule_kind: str = "inverse_sqrt"
    schedule_value: float = 0.5
    iterations: int = 8000
    seed: int = 42
    shifts: tuple = ()
    eta: float = 1.0
    max_iterations: int = 50_000
    primal_tol: float = 1e-6
    dual_tol: float = 1e-7
    compare_oracle: bool = True
    name: str = "experiment"
    out: str = ""

    # ---- conversion

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "types": list(self.types),
            "sources": list(self.sources),
            "edges": self.edges if self.edges == "complete" else [list(e) for e in self.edges],
            "utility": {"family": self.family, "target": _lists(self.target),
                        "source": _lists(self.source), "lipschitz_sum": self.lipschitz_sum},
            "p_lo": list(self.p_lo), "p_hi": list(self.p_hi),
            "q_lo": list(self.q_lo), "q_hi": list(self.q_hi),
            "prob": list(self.prob),
            "population": self.population,
            "population_estimate": self.population_estimate,
            "solver": self.solver,
            "schedule": {"kind": self.schedule_kind, "value": self.schedule_value},
            "iterations": self.iterations,
            "seed": self.seed,
            "shifts": [{"at_iteration": s.at_iteration, "prob": list(s.prob)} for s in self.shifts],
            "eta": self.eta,
            "max_iterations": self.max_iterations,
            "primal_tol": self.primal_tol,
            "dual_tol": self.dual_tol,
            "compare_oracle": self.compare_oracle,
            "out": self.out,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict, lines: dict | None = None) -> "ExperimentConfig":
        return _parse(d, lines or {})

    def replace(self, **changes) -> "ExperimentConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        cfg = ExperimentConfig(**d)
        validate(cfg)
        return cfg

    # ---- model objects

    @property
    def network(self):
        if self.edges == "complete":
            pairs = [(x, y) for x in self.types for y in self.sources]
        else:
            pairs = [tuple(e) for e in self.edges]
        return build_network(list(self.types), list(self.sources), pairs)

    @property
    def schedule(self) -> StepSchedule:
        return StepSchedule(self.schedule_kind, self.schedule_value)

    def instance(self) -> Instance:
        net = self.network
        fam = FAMILIES[self.family]
        mask = net.mask
        tgt = np.where(mask, np.array(self.target, dtype=float), 0.0)
        src = np.where(mask, np.array(self.source, dtype=float), 0.0)
        util = UtilityModel(net, fam(tgt), fam(src), self.lipschitz_sum)
        bounds = Bounds(np.array(self.p_lo, float), np.array(self.p_hi, float),
                        np.array(self.q_lo, float), np.array(self.q_hi, float))
        dist = TypeDistribution(np.array(self.prob, float), float(self.population))
        return Instance(net, util, bounds, dist)

    def shift_events(self) -> list[ShiftEvent]:
        return [ShiftEvent(s.at_iteration, TypeDistribution(np.array(s.prob, float), float(self.population)))
                for s in self.shifts]

    @property
    def n_est(self) -> float:
        return float(self.population if self.population_estimate is None else self.population_estimate)

    @property
    def out_dir(self) -> Path:
        return Path(self.out) if self.out else Path("runs") / self.name


def _lists(m):
    return [list(r) for r in m]


def _tuple2(m):
    return tuple(tuple(float(v) for v in r) for r in m)


# ---------------------------------------------------------------- parsing

_KEYS = {
    "name", "types", "sources", "edges", "utility", "p_lo", "p_hi", "q_lo", "q_hi", "prob",
    "population", "population_estimate", "solver", "schedule", "iterations", "seed", "shifts",
    "eta", "max_iterations", "primal_tol", "dual_tol", "compare_oracle", "out",
}


def _key_lines(text: str) -> dict:
    """Line number of the first occurrence of each top-level-looking key."""
    out = {}
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith('"'):
            key = s[1:].split('"', 1)[0]
            out.setdefault(key, i)
    return out


def _need(d: dict, key: str, lines: dict):
    if key not in d:
        raise ParseError(f"missing required field {key!r}", field=key)
    return d[key]


def _numbers(value, key, lines, ndim=1):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"field {key!r} must hold numbers", line=lines.get(key), field=key) from None
    if arr.ndim != ndim:
        shape = "a list" if ndim == 1 else "a nested list (matrix)"
        raise ParseError(f"field {key!r} must be {shape}", line=lines.get(key), field=key)
    return arr


def _scalar(d, key, lines, default, kind=float):
    v = d.get(key, default)
    if v is None:
        return None
    if kind is bool:
        if not isinstance(v, bool):
            raise ParseError(f"field {key!r} must be true or false", line=lines.get(key), field=key)
        return v
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"field {key!r} must be a number", line=lines.get(key), field=key)
    if kind is int:
        if float(v) != int(v):
            raise ParseError(f"field {key!r} must be an integer", line=lines.get(key), field=key)
        return int(v)
    return float(v)


def _ids(value, key, lines):
    if isinstance(value, bool):
        raise ParseError(f"field {key!r} must be a count or a list of ids", line=lines.get(key), field=key)
    if isinstance(value, int):
        return tuple(range(1, value + 1))
    if isinstance(value, list) and all(isinstance(v, (int, str)) and not isinstance(v, bool) for v in value):
        return tuple(value)
    raise ParseError(f"field {key!r} must be a count or a list of ids", line=lines.get(key), field=key)


def _parse(d: dict, lines: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ParseError("config must be a JSON object", line=1)
    unknown = sorted(set(d) - _KEYS)
    if unknown:
        raise ParseError(f"unknown field {unknown[0]!r}", line=lines.get(unknown[0]), field=unknown[0])

    util = _need(d, "utility", lines)
    if not isinstance(util, dict):
        raise ParseError("field 'utility' must be an object", line=lines.get("utility"), field="utility")
    family = util.get("family", "linear")
    if family not in FAMILIES:
        raise ValidationError(f"unknown utility family {family!r}", "utility.family in " + "|".join(FAMILIES))
    target = _numbers(_need(util, "target", lines), "target", lines, ndim=2)
    source = _numbers(_need(util, "source", lines), "source", lines, ndim=2)

    prob = _numbers(_need(d, "prob", lines), "prob", lines)
    types = _ids(d.get("types", len(prob)), "types", lines)
    sources = _ids(d.get("sources", target.shape[1]), "sources", lines)
    nt, ns = len(types), len(sources)

    edges = d.get("edges", "complete")
    if edges != "complete":
        if not (isinstance(edges, list) and all(isinstance(e, list) and len(e) == 2 for e in edges)):
            raise ParseError("field 'edges' must be \"complete\" or a list of [type, source] pairs",
                             line=lines.get("edges"), field="edges")
        edges = tuple(tuple(e) for e in edges)

    p_hi = _numbers(_need(d, "p_hi", lines), "p_hi", lines)
    q_hi = _numbers(_need(d, "q_hi", lines), "q_hi", lines)
    p_lo = _numbers(d.get("p_lo", [0.0] * nt), "p_lo", lines)
    q_lo = _numbers(d.get("q_lo", [0.0] * ns), "q_lo", lines)

    sched = d.get("schedule", {"kind": "inverse_sqrt", "value": 0.5})
    if not isinstance(sched, dict):
        raise ParseError("field 'schedule' must be an object", line=lines.get("schedule"), field="schedule")

    shifts = []
    raw_shifts = d.get("shifts", [])
    if not isinstance(raw_shifts, list):
        raise ParseError("field 'shifts' must be a list", line=lines.get("shifts"), field="shifts")
    for s in raw_shifts:
        if not isinstance(s, dict) or "at_iteration" not in s or "prob" not in s:
            raise ParseError("each shift needs 'at_iteration' and 'prob'", line=lines.get("shifts"), field="shifts")
        at = _scalar(s, "at_iteration", lines, None, int)
        shifts.append(ShiftSpec(at, tuple(float(v) for v in _numbers(s["prob"], "shifts.prob", lines))))

    name = d.get("name", "experiment")
    out = d.get("out", "")
    solver = d.get("solver", "federated")
    for key, val in (("name", name), ("out", out), ("solver", solver)):
        if not isinstance(val, str):
            raise ParseError(f"field {key!r} must be a string", line=lines.get(key), field=key)

    cfg = ExperimentConfig(
        types=types, sources=sources, edges=edges, family=family,
        target=_tuple2(target), source=_tuple2(source),
        p_hi=tuple(map(float, p_hi)), q_hi=tuple(map(float, q_hi)),
        p_lo=tuple(map(float, p_lo)), q_lo=tuple(map(float, q_lo)),
        prob=tuple(map(float, prob)),
        population=_scalar(d, "population", lines, _need(d, "population", lines)),
        lipschitz_sum=_scalar(util, "lipschitz_sum", lines, None),
        population_estimate=_scalar(d, "population_estimate", lines, None),
        solver=solver,
        schedule_kind=sched.get("kind", "inverse_sqrt"),
        schedule_value=_scalar(sched, "value", lines, 0.5),
        iterations=_scalar(d, "iterations", lines, 8000, int),
        seed=_scalar(d, "seed", lines, 42, int),
        shifts=tuple(shifts),
        eta=_scalar(d, "eta", lines, 1.0),
        max_iterations=_scalar(d, "max_iterations", lines, 50_000, int),
        primal_tol=_scalar(d, "primal_tol", lines, 1e-6),
        dual_tol=_scalar(d, "dual_tol", lines, 1e-7),
        compare_oracle=_scalar(d, "compare_oracle", lines, True, bool),
        name=name,
        out=out,
    )
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    """Raise ``ValidationError`` naming the first violated constraint."""
    nt, ns = len(cfg.types), len(cfg.sources)
    if cfg.solver not in SOLVERS:
        raise ValidationError(f"unknown solver {cfg.solver!r}", "solver in admm|federated|oracle")
    for key, n in (("prob", nt), ("p_lo", nt), ("p_hi", nt), ("q_lo", ns), ("q_hi", ns)):
        if len(getattr(cfg, key)) != n:
            raise ValidationError(f"{key} has length {len(getattr(cfg, key))}, expected {n}", f"len({key})")
    for key in ("target", "source"):
        m = getattr(cfg, key)
        if len(m) != nt or any(len(r) != ns for r in m):
            raise ValidationError(f"utility {key} matrix must be {nt}x{ns}", "utility matrix shape")
    prob = np.array(cfg.prob)
    if np.any(prob <= 0):
        raise ValidationError("type probabilities must be positive", "prob > 0")
    if abs(prob.sum() - 1.0) > PROB_TOL:
        raise ValidationError(f"type probabilities sum to {prob.sum():.12g}, not 1", "sum(prob) == 1")
    for s in cfg.shifts:
        sp = np.array(s.prob)
        if len(sp) != nt or np.any(sp <= 0) or abs(sp.sum() - 1.0) > PROB_TOL:
            raise ValidationError("shift distribution must be positive, length |types| and sum to 1",
                                  "shift prob is a distribution")
        if s.at_iteration < 1:
            raise ValidationError("shift iteration must be >= 1", "at_iteration >= 1")
    if cfg.population is None or not cfg.population > 0:
        raise ValidationError("population must be positive", "population > 0")
    if cfg.population_estimate is not None and not cfg.population_estimate > 0:
        raise ValidationError("population_estimate must be positive", "population_estimate > 0")
    if cfg.schedule_kind not in ("constant", "inverse_sqrt"):
        raise ValidationError(f"unknown schedule kind {cfg.schedule_kind!r}", "schedule.kind")
    if not cfg.schedule_value > 0:
        raise ValidationError("schedule value must be positive", "schedule.value > 0")
    if cfg.iterations < 1:
        raise ValidationError("iterations must be >= 1", "iterations >= 1")
    if not cfg.eta > 0:
        raise ValidationError("eta must be positive", "eta > 0")
    if cfg.max_iterations < 1 or not (cfg.primal_tol > 0 and cfg.dual_tol > 0):
        raise ValidationError("ADMM limits must be positive", "max_iterations, tolerances > 0")
    if cfg.edges != "complete":
        tset, sset = set(cfg.types), set(cfg.sources)
        for x, y in cfg.edges:
            if x not in tset or y not in sset:
                raise ValidationError(f"edge ({x}, {y}) references an unknown node", "edges reference nodes")
    # delegate the remaining structural checks (bounds order, isolated nodes, monotone utilities)
    try:
        cfg.instance()
    except ValidationError:
        raise
    except (FedOTError, ValueError) as e:
        raise ValidationError(str(e), type(e).__name__) from None


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", line=e.lineno) from None
    return _parse(d, _key_lines(text))


def write_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path
