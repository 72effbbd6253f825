"""Example pipelines, flat key=value run configs and CSV / JSON report emission."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .covering import CoveringParams, Region, generate_covering, ray_atlas
from .criteria import SamplerConfig, estimate_c_inf, estimate_c_q, fit_layer_exponent, fit_power
from .divdiff import cusp_ratio_trace, dm3_trace, newton_table, planes_trace
from .domain import DomainDescriptor
from .errors import ConfigError
from .variety import cusp, dm3, planes, roots_univariate, restrict_to_line


@dataclass
class RunConfig:
    example: str = ""
    seed: int = 0
    output: str | None = None
    params: dict = field(default_factory=dict)

    def get(self, key, default):
        return self.params.get(key, default)


def _parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config(text: str) -> RunConfig:
    """Flat ``key = value`` lines; values are JSON where possible, else strings. ``#`` comments."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = line.split("=", 1)
        values[key.strip()] = _parse_value(val)
    cfg = RunConfig(str(values.pop("example", "")), int(values.pop("seed", 0)), values.pop("output", None))
    cfg.params = values
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


@dataclass
class ExampleVerdict:
    example: str
    measured: float
    predicted: float
    tolerance: float
    passed: bool
    seed: int
    details: dict = field(default_factory=dict)
    table: list = field(default_factory=list)  # per-term rows

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("table")
        return out


def _tol(target: float, rel: float) -> float:
    return rel * max(abs(target), 1.0)


# ---------------------------------------------------------------- example 1


def run_example_bmo_planes(cfg: RunConfig) -> ExampleVerdict:
    """Union of k planes through the origin; order-k criterion growth for (1 + w)^alpha traces."""
    alphas = [complex(a) for a in cfg.get("alphas", [0.0, 1.0])]
    if len(set(alphas)) != len(alphas):
        raise ConfigError("plane slopes must be pairwise distinct")
    k = len(alphas)
    family = cfg.get("family", "power")
    alpha = float(cfg.get("alpha", 0.25))
    d = DomainDescriptor.ball((1, 0), 1.0)
    sampler = SamplerConfig(seed=cfg.seed, layers=int(cfg.get("layers", 6)), rho_top=float(cfg.get("rho_top", 0.01)),
                            points_per_layer=int(cfg.get("points_per_layer", 16)), max_order=max(k, 2))
    kappa = float(cfg.get("kappa", 0.05))
    g = planes_trace(alphas, family, alpha)
    rep = estimate_c_inf(g, planes(alphas), d, sampler, kappa=kappa)
    rhos = np.array(rep.layer_values)[:, 0]
    # constant traces have vanishing differences beyond order 1; their criterion is the order-1 supremum
    order = 1 if family == "const" else k
    vals = np.array(rep.layer_order_values[order])
    table = [{"layer": j, "abs_rho": float(r), "order": order, "value": float(v)}
             for j, (r, v) in enumerate(zip(rhos, vals))]
    if family == "const" or alpha >= (k - 1) / 2:
        spread = float(vals.max() / vals.min()) if vals.min() > 0 else math.inf
        measured = fit_power(rhos, vals) if vals.min() > 0 else 0.0
        passed = bool(math.isfinite(rep.value) and rep.relative_change < 0.05 and abs(measured) < 0.1)
        return ExampleVerdict("bmo-planes", measured, 0.0, 0.1, passed, cfg.seed,
                              {"k": k, "family": family, "alpha": alpha, "c_inf": rep.value,
                               "relative_change": rep.relative_change, "layer_spread": spread}, table)
    predicted = alpha - (k - 1) / 2
    measured = fit_power(rhos, vals)
    return ExampleVerdict("bmo-planes", measured, predicted, 0.1, bool(abs(measured - predicted) <= 0.1), cfg.seed,
                          {"k": k, "family": family, "alpha": alpha, "c_inf": rep.value}, table)


# ---------------------------------------------------------------- example 2


def cusp_atlas(cfg: RunConfig, kappa: float = 0.2):
    d = DomainDescriptor.ball((1, 0), 1.0)
    p = CoveringParams(kappa=float(cfg.get("kappa", kappa)), c=float(cfg.get("c", 1.0)),
                       eps0=float(cfg.get("eps0", 0.1)), max_layers=int(cfg.get("layers", 12)),
                       region=Region((0, 0), float(cfg.get("window", 0.1))), anchor=(0, 0), seed=cfg.seed)
    return d, generate_covering(d, p)


def _series_table(series) -> list:
    return [{"layer": j, "level": float(lv), "sum": float(s)} for j, (lv, s) in enumerate(zip(series.levels, series.sums))]


def run_example_l2_cusp(cfg: RunConfig) -> ExampleVerdict:
    qv = int(cfg.get("q_var", 3))
    if qv % 2 == 0:
        raise ConfigError("q_var must be odd")
    d, atlas = cusp_atlas(cfg)
    power = 1.0 if qv == 3 else qv / 2
    series = estimate_c_q(cusp_ratio_trace(power), cusp(qv), d, atlas, 2.0)
    table = _series_table(series)
    if qv <= 3:
        ratios = series.tail_ratios(2)
        measured = float(ratios.max())
        passed = bool(len(series.sums) >= 6 and measured < 0.9)
        return ExampleVerdict("l2-cusp", measured, 0.9, 0.0, passed, cfg.seed,
                              {"q_var": qv, "tail_ratios": ratios.tolist(), "total": series.total,
                               "atlas": atlas.counts()}, table)
    predicted = 4.0 - qv
    measured = fit_layer_exponent(series)
    tol = _tol(predicted, 0.1)
    return ExampleVerdict("l2-cusp", measured, predicted, tol, bool(abs(measured - predicted) <= tol), cfg.seed,
                          {"q_var": qv, "atlas": atlas.counts()}, table)


# ---------------------------------------------------------------- example 3


def dm3_identity_error(q: int, count: int = 50, seed: int = 0) -> float:
    """Max relative gap between the two-point difference along e_1 and 1/(1 - z3)^(q/4)."""
    rng = np.random.default_rng(seed)
    f, g = dm3(q), dm3_trace(q)
    e1 = np.array([1, 0, 0], dtype=complex)
    worst = 0.0
    for _ in range(count):
        z = np.array([0, *(rng.uniform(-0.4, 0.4, 2) + 1j * rng.uniform(-0.4, 0.4, 2))], dtype=complex)
        z[1] *= 0.5
        lam = roots_univariate(restrict_to_line(f, z, e1))
        if len(lam) != 2 or abs(lam[0] - lam[1]) < 1e-12:
            continue
        dd = newton_table(g, z, e1, lam).top
        exact = 1.0 / (1.0 - z[2]) ** (q / 4)
        worst = max(worst, float(abs(dd - exact) / abs(exact)))
    return worst


def run_example_dm3(cfg: RunConfig) -> ExampleVerdict:
    q = int(cfg.get("q", 12))
    d = DomainDescriptor.ball((0, 0, 0), 1.0)
    p = CoveringParams(kappa=float(cfg.get("kappa", 0.2)), c=float(cfg.get("c", 0.5)),
                       eps0=float(cfg.get("eps0", 0.001)), max_layers=int(cfg.get("layers", 9)), seed=cfg.seed)
    atlas = ray_atlas(d, p, (0, 0, 1))
    series = estimate_c_q(dm3_trace(q), dm3(q), d, atlas, 2.0)
    predicted = 5.0 - q / 2
    measured = fit_layer_exponent(series)
    tol = _tol(predicted, 0.1)
    ident = dm3_identity_error(q, seed=cfg.seed)
    passed = bool(abs(measured - predicted) <= tol and ident <= 1e-10 and len(series.sums) >= 8)
    return ExampleVerdict("dm3", measured, predicted, tol, passed, cfg.seed,
                          {"q": q, "identity_error": ident, "ray_points": len(series.sums)}, _series_table(series))


EXAMPLES = {"bmo-planes": run_example_bmo_planes, "l2-cusp": run_example_l2_cusp, "dm3": run_example_dm3}


def run_example(cfg: RunConfig) -> ExampleVerdict:
    try:
        fn = EXAMPLES[cfg.example]
    except KeyError:
        raise ConfigError(f"unknown example {cfg.example!r}") from None
    return fn(cfg)


# ---------------------------------------------------------------- reports

CSV_FIELDS = ["example", "seed", "row", "key", "value"]


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def report_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for res in results:
        for i, row in enumerate(res.table):
            for key in sorted(row):
                w.writerow([res.example, res.seed, i, key, repr(row[key])])
    return buf.getvalue()


def report_summary(results, config: RunConfig | None = None) -> dict:
    return _jsonable({"config": asdict(config) if config else None, "results": [r.to_dict() for r in results]})


def emit_report(results, path, config: RunConfig | None = None):
    """Write ``<path>.csv`` (long-format per-term table) and ``<path>.json`` (summary)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = path.with_suffix(".csv"), path.with_suffix(".json")
    csv_path.write_text(report_csv(results), encoding="utf-8")
    json_path.write_text(json.dumps(report_summary(results, config), indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")
    return csv_path, json_path
