"""Experiment orchestration: configs, batch runs, CSV/JSON output, trend report.

The harness reproduces the scaling comparison between output-perturbation
noise and body-shaped noise on random sign workloads. Each (d, mechanism)
cell draws a fresh workload, runs `trials` invocations at x = 0 (mechanism
error is translation covariant, so the database choice is statistics-neutral),
and records the mean l2 error next to the volume lower bounds and the
reference curves. All randomness is derived from (seed, cell index), so a rerun
with the same config is byte-identical at the CSV level.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .bounds import bound_report_for, theory_curves
from .mechanisms import MECHANISM_NAMES, run_mechanism
from .query import evaluate, random_bernoulli_query
from .rng import RngStream
from .sampling import GridWalkConfig

_SAMPLER_CHOICES = ("rejection", "grid-walk")


@dataclass(frozen=True)
class ExperimentConfig:
    """One batch run: the cross product dims x mechanisms at fixed n, eps."""

    dims: "tuple[int, ...]" = (2, 4, 8)
    n: int = 1024
    eps: float = 1.0
    delta: float = 0.1
    mechanisms: "tuple[str, ...]" = ("laplace", "knorm")
    trials: int = 2000
    seed: int = 0
    sampler: str = "grid-walk"
    output: str = "results.csv"

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "mechanisms", tuple(str(m) for m in self.mechanisms))
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.dims:
            raise ValueError("dims must list at least one dimension")
        if self.n < 1:
            raise ValueError("n must be positive")
        for d in self.dims:
            if d < 1:
                raise ValueError(f"dimension {d} must be positive")
            if d > self.n:
                raise ValueError(f"dimension {d} exceeds n={self.n}")
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise ValueError("eps must be positive")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if not self.mechanisms:
            raise ValueError("mechanisms must list at least one mechanism")
        for m in self.mechanisms:
            if m not in MECHANISM_NAMES:
                raise ValueError(f"unknown mechanism {m!r}; choose from {MECHANISM_NAMES}")
        if self.sampler not in _SAMPLER_CHOICES:
            raise ValueError(f"sampler must be one of {_SAMPLER_CHOICES}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


_LIST_KEYS = {"dims", "mechanisms"}
_INT_KEYS = {"n", "trials", "seed"}
_FLOAT_KEYS = {"eps", "delta"}


def parse_config(text: str) -> ExperimentConfig:
    """Flat key=value lines; keys are exactly the ExperimentConfig field names.

    Blank lines and # comments are skipped. List values (dims, mechanisms)
    are comma separated.
    """
    known = {f.name for f in fields(ExperimentConfig)}
    kwargs: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key in kwargs:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        try:
            if key in _LIST_KEYS:
                items = [tok.strip() for tok in value.split(",") if tok.strip()]
                kwargs[key] = tuple(int(t) for t in items) if key == "dims" else tuple(items)
            elif key in _INT_KEYS:
                kwargs[key] = int(value)
            elif key in _FLOAT_KEYS:
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: bad value for {key!r}: {value!r}") from exc
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


@dataclass(frozen=True)
class ResultRow:
    """One experiment cell. NaN fields mean the quantity failed or is undefined."""

    d: int
    n: int
    eps: float
    mechanism: str
    mean_error: float
    std_error: float
    vol_lb: float
    gvol_lb: float
    knorm_ref: float
    laplace_ref: float
    wall_time: float
    seed: int
    error: str = ""

    def __post_init__(self):
        if math.isfinite(self.mean_error) and self.mean_error < 0:
            raise ValueError("mean error cannot be negative")

    def to_dict(self) -> dict:
        return {
            "d": self.d, "n": self.n, "eps": self.eps, "mechanism": self.mechanism,
            "mean_error": self.mean_error, "std_error": self.std_error,
            "vol_lb": self.vol_lb, "gvol_lb": self.gvol_lb,
            "knorm_ref": self.knorm_ref, "laplace_ref": self.laplace_ref,
            "wall_time": self.wall_time, "seed": self.seed, "error": self.error,
        }


# wall_time is deliberately absent: the CSV must be byte-identical across
# reruns of the same seed, and timings never are. The JSON mirror carries it.
CSV_COLUMNS = ("d", "n", "eps", "mechanism", "mean_error", "std_error",
               "vol_lb", "gvol_lb", "knorm_ref", "laplace_ref", "seed", "error")


def _fmt(value) -> str:
    if isinstance(value, str):
        return value.replace(",", ";").replace("\n", " ")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return ""
    return f"{v:.9g}"


def rows_to_csv(rows: "list[ResultRow]") -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        rec = row.to_dict()
        lines.append(",".join(_fmt(rec[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def _harness_walk_config(d: int) -> GridWalkConfig:
    # Measured mixing plateau on sign workloads: flat well before 1000 steps
    # at beta=1/4 up to d=8; keep a 2x margin and grow linearly past that.
    # Coarser-than-default beta only inflates the sampled superset body, which
    # costs a bounded accuracy factor (about 1+beta/2), never privacy.
    return GridWalkConfig(beta=0.25, steps=max(2000, 250 * d))


def _run_cell(cfg: ExperimentConfig, d: int, mechanism: str, cell_index: int,
              x: "np.ndarray | None", bound_trials: int, cov_samples: int) -> ResultRow:
    cell = RngStream(cfg.seed).substream(cell_index)
    start = time.perf_counter()
    notes = []

    query = random_bernoulli_query(d, cfg.n, cell.substream(0).generator())
    database = np.zeros(cfg.n) if x is None else x
    walk = _harness_walk_config(d) if cfg.sampler == "grid-walk" else None

    mean_err = std_err = float("nan")
    try:
        answers = run_mechanism(mechanism, query, database, cfg.eps, cfg.trials,
                                cell.substream(1).generator(), delta=cfg.delta,
                                sampler=cfg.sampler, walk_config=walk)
        resid = answers - evaluate(query, database)
        errs = np.linalg.norm(resid, axis=1)
        mean_err = float(errs.mean())
        std_err = float(errs.std(ddof=1)) if cfg.trials > 1 else 0.0
    except Exception as exc:  # noqa: BLE001 - cell failures must not kill the run
        notes.append(f"mechanism: {exc}")

    v_lb = g_lb = float("nan")
    try:
        report = bound_report_for(query, cfg.eps, cell.substream(2).generator(),
                                  trials=bound_trials, cov_samples=cov_samples)
        v_lb = report.vol_lb
        g_lb = report.gvol_lb
    except Exception as exc:  # noqa: BLE001
        notes.append(f"bounds: {exc}")

    k_ref = l_ref = float("nan")
    try:
        curves = theory_curves(d, cfg.n, cfg.eps, cfg.delta)
        k_ref = curves["knorm_ref"]
        l_ref = curves["laplace_ref"]
    except ValueError as exc:
        l_ref = d * math.sqrt(d) / cfg.eps
        notes.append(f"knorm_ref: {exc}")

    return ResultRow(d=d, n=cfg.n, eps=cfg.eps, mechanism=mechanism,
                     mean_error=mean_err, std_error=std_err,
                     vol_lb=v_lb, gvol_lb=g_lb,
                     knorm_ref=k_ref, laplace_ref=l_ref,
                     wall_time=time.perf_counter() - start, seed=cfg.seed,
                     error="; ".join(notes))


def run_experiment(cfg: ExperimentConfig, *, database=None,
                   bound_trials: int = 8000, cov_samples: int = 1024,
                   write: bool = True) -> "list[ResultRow]":
    """Run every (d, mechanism) cell and persist CSV plus a JSON mirror.

    Cells are independent: each derives its streams from (seed, cell index),
    so the set of rows does not depend on execution order. A cell that throws
    is recorded in its row's error column and the run continues.
    """
    if database is not None:
        database = np.asarray(database, dtype=float)
        if database.shape != (cfg.n,):
            raise ValueError(f"database must have shape ({cfg.n},)")
    rows = []
    cell_index = 0
    for d in cfg.dims:
        for mechanism in cfg.mechanisms:
            rows.append(_run_cell(cfg, d, mechanism, cell_index, database,
                                  bound_trials, cov_samples))
            cell_index += 1
    if write and cfg.output:
        write_results(rows, cfg)
    return rows


def write_results(rows: "list[ResultRow]", cfg: ExperimentConfig) -> None:
    out = Path(cfg.output)
    out.write_text(rows_to_csv(rows))
    mirror = {
        "config": {f.name: getattr(cfg, f.name) for f in fields(ExperimentConfig)},
        "rows": [r.to_dict() for r in rows],
    }
    out.with_suffix(".json").write_text(json.dumps(mirror, indent=2, default=list) + "\n")


def compare_to_theory(rows: "list[ResultRow]") -> dict:
    """Trend report over a finished run.

    Normalizes each row's mean error by both reference curves and measures the
    spread (max/min) of each normalized ratio across d, per mechanism. The
    verdict is PASS when body-shaped noise tracks its reference curve (ratio
    spread <= 2.5x) while output-perturbation noise pulls away from it
    (strictly increasing ratio to knorm_ref).
    """
    dims = sorted({r.d for r in rows})
    if len(dims) < 3:
        raise ValueError("need rows spanning at least 3 values of d")
    per_mech: dict = {}
    for row in rows:
        per_mech.setdefault(row.mechanism, []).append(row)

    report = {"dims": dims, "per_mechanism": {}, "verdict": "PASS", "notes": []}
    for name, group in per_mech.items():
        group = sorted(group, key=lambda r: r.d)
        usable = [r for r in group
                  if math.isfinite(r.mean_error) and math.isfinite(r.knorm_ref)]
        k_ratio = {r.d: r.mean_error / r.knorm_ref for r in usable}
        l_ratio = {r.d: r.mean_error / r.laplace_ref for r in group
                   if math.isfinite(r.mean_error) and math.isfinite(r.laplace_ref)}
        skipped = len(group) - len(usable)
        if skipped:
            report["notes"].append(f"{name}: {skipped} row(s) without a finite ratio")

        entry = {"knorm_ref_ratio": k_ratio, "laplace_ref_ratio": l_ratio}
        vals = list(k_ratio.values())
        if vals and min(vals) > 0:
            entry["spread_knorm_ref"] = max(vals) / min(vals)
        lvals = list(l_ratio.values())
        if lvals and min(lvals) > 0:
            entry["spread_laplace_ref"] = max(lvals) / min(lvals)
        ks = sorted(k_ratio)
        entry["grows_with_d"] = (
            len(ks) >= 2 and all(k_ratio[a] < k_ratio[b] for a, b in zip(ks, ks[1:]))
        )
        report["per_mechanism"][name] = entry

    knorm = report["per_mechanism"].get("knorm")
    if knorm is not None:
        if knorm.get("spread_knorm_ref", float("inf")) > 2.5:
            report["verdict"] = "FAIL"
            report["notes"].append("knorm ratio spread exceeds 2.5x")
    laplace = report["per_mechanism"].get("laplace")
    if laplace is not None and not laplace["grows_with_d"]:
        report["verdict"] = "FAIL"
        report["notes"].append("laplace ratio to knorm_ref is not increasing")
    return report


def config_template() -> str:
    """A commented config file showing every key at its default."""
    cfg = ExperimentConfig()
    return (
        "# experiment config: flat key=value, one per line\n"
        f"dims = {','.join(str(d) for d in cfg.dims)}\n"
        f"n = {cfg.n}\n"
        f"eps = {cfg.eps}\n"
        f"delta = {cfg.delta}\n"
        f"mechanisms = {','.join(cfg.mechanisms)}\n"
        f"trials = {cfg.trials}\n"
        f"seed = {cfg.seed}\n"
        f"sampler = {cfg.sampler}\n"
        f"output = {cfg.output}\n"
    )


__all__ = [
    "ExperimentConfig", "ResultRow", "CSV_COLUMNS", "parse_config", "load_config",
    "run_experiment", "write_results", "rows_to_csv", "compare_to_theory",
    "config_template",
]
