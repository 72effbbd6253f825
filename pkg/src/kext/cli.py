"""Command-line interface: ``kext <group> <command> [options]``.

Results go to stdout as JSON, or with ``--out PREFIX`` to PREFIX.json (plus
PREFIX.csv for tabular commands).  ``KEXT_THREADS`` caps BLAS threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def _cap_threads():
    n = os.environ.get("KEXT_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


_cap_threads()

import numpy as np  # noqa: E402

from . import ba_kernel, covering, criteria, divdiff, domain, extension, pipelines, variety  # noqa: E402
from .errors import ConfigError, KextError  # noqa: E402


# ---------------------------------------------------------------- argument parsing helpers


def parse_point(text: str) -> np.ndarray:
    """Comma-separated complex numbers in Python syntax, e.g. ``0.8,0.1+0.2j``."""
    return np.array([complex(t.replace(" ", "")) for t in text.split(",")], dtype=complex)


def build_domain(args) -> domain.DomainDescriptor:
    center = parse_point(args.center)
    if args.semi_axes:
        return domain.DomainDescriptor.ellipsoid(center, [float(s) for s in args.semi_axes.split(",")])
    return domain.DomainDescriptor.ball(center, args.radius)


def build_variety(text: str) -> variety.PolyVariety:
    """``cusp:Q``, ``planes:a1,a2,...``, ``dm3:Q`` or ``file:PATH`` (lines ``i j re im``)."""
    kind, _, arg = text.partition(":")
    if kind == "cusp":
        return variety.cusp(int(arg))
    if kind == "planes":
        return variety.planes([complex(a) for a in arg.split(",")])
    if kind == "dm3":
        return variety.dm3(int(arg))
    if kind == "file":
        return variety.parse_poly(Path(arg).read_text(encoding="utf-8"))
    raise ConfigError(f"unknown variety {text!r}")


def build_trace(text: str, f: variety.PolyVariety | None = None) -> divdiff.TraceFunction:
    """``const:C``, ``cusp:P`` (z2/z1^P), ``planes-power:A1,A2;ALPHA``, ``planes-const:A1,A2``,
    ``dm3:Q`` or ``poly:PATH``."""
    kind, _, arg = text.partition(":")
    if kind == "const":
        return divdiff.constant_trace(complex(arg or 1))
    if kind == "cusp":
        return divdiff.cusp_ratio_trace(float(arg))
    if kind == "planes-power":
        slopes, _, alpha = arg.partition(";")
        return divdiff.planes_trace([complex(a) for a in slopes.split(",")], "power", float(alpha))
    if kind == "planes-const":
        return divdiff.planes_trace([complex(a) for a in arg.split(",")], "const")
    if kind == "dm3":
        return divdiff.dm3_trace(int(arg))
    if kind == "poly":
        return divdiff.polynomial_trace(variety.parse_poly(Path(arg).read_text(encoding="utf-8")))
    raise ConfigError(f"unknown trace {text!r}")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        x = x.tolist()
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    return x


def _emit(args, payload: dict, rows: list | None = None):
    payload = _jsonable(payload)
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        prefix = Path(args.out)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        prefix.with_suffix(".json").write_text(text, encoding="utf-8")
        if rows is not None:
            import csv
            import io

            buf = io.StringIO()
            fields = sorted({k for r in rows for k in r}) or ["value"]
            w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
            prefix.with_suffix(".csv").write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands


def cmd_tau(args):
    d = build_domain(args)
    z, v = parse_point(args.z), parse_point(args.v)
    _emit(args, {"tau": float(domain.tau(d, z, v, args.eps)), "seed": args.seed})


def cmd_delta(args):
    d = build_domain(args)
    val = domain.delta(d, parse_point(args.z), parse_point(args.zeta))
    _emit(args, {"delta": float(val), "seed": args.seed})


def _cover_params(args) -> covering.CoveringParams:
    region = None
    if args.region:
        region = covering.Region(tuple(parse_point(args.region)), args.window)
    anchor = tuple(parse_point(args.anchor)) if args.anchor else None
    return covering.CoveringParams(args.kappa, args.c, args.eps0, args.layers, region, anchor, args.seed)


def cmd_cover_generate(args):
    d = build_domain(args)
    atlas = covering.generate_covering(d, _cover_params(args))
    if args.atlas:
        Path(args.atlas).write_text(atlas.to_json(), encoding="utf-8")
    _emit(args, {"counts": atlas.counts(), "balls": len(atlas), "seed": args.seed},
          [{"layer": k, "count": c} for k, c in enumerate(atlas.counts())])


def _load_atlas(path) -> covering.CoveringAtlas:
    return covering.CoveringAtlas.from_json(Path(path).read_text(encoding="utf-8"))


def cmd_cover_verify(args):
    atlas = _load_atlas(args.atlas)
    rep = covering.verify_atlas(atlas, probes=args.probes, seed=args.seed, dilation=args.dilation)
    _emit(args, {"separation_ok": rep.separation_ok, "coverage_fraction": rep.coverage_fraction,
                 "max_overlap": rep.max_overlap, "growth_exponent": covering.layer_growth_exponent(atlas),
                 "seed": args.seed})


def cmd_roots(args):
    f = build_variety(args.variety)
    z, v = parse_point(args.z), parse_point(args.v)
    lam = variety.roots_univariate(variety.restrict_to_line(f, z, v))
    _emit(args, {"roots": lam, "seed": args.seed}, [{"re": r.real, "im": r.imag} for r in lam])


def cmd_sheets(args):
    d = build_domain(args)
    f = build_variety(args.variety)
    fam = variety.sheets_over_disc(f, d, parse_point(args.z), args.kappa)
    _emit(args, {"sheets": fam.p0, "selected": fam.selected, "level": fam.level,
                 "radius": fam.radius, "threshold": fam.threshold, "seed": args.seed})


def cmd_divdiff(args):
    f = build_variety(args.variety) if args.variety else None
    g = build_trace(args.trace)
    z, v = parse_point(args.z), parse_point(args.v)
    if args.nodes:
        nodes = parse_point(args.nodes)
    else:
        if f is None:
            raise KextError("give --nodes or --variety")
        nodes = variety.roots_univariate(variety.restrict_to_line(f, z, v))
    tab = divdiff.newton_table(g, z, v, nodes, f)
    _emit(args, {"nodes": nodes, "value": tab.top, "condition": tab.condition, "seed": args.seed})


def _sampler(args) -> criteria.SamplerConfig:
    return criteria.SamplerConfig(seed=args.seed, layers=args.layers, rho_top=args.rho_top,
                                  points_per_layer=args.points, max_order=args.max_order)


def cmd_criteria(args):
    d = build_domain(args)
    f = build_variety(args.variety)
    g = build_trace(args.trace)
    if args.which == "cq":
        atlas = _load_atlas(args.atlas)
        s = criteria.estimate_c_q(g, f, d, atlas, args.q)
        out = s.to_dict()
        try:
            out["fitted_exponent"] = criteria.fit_layer_exponent(s)
        except KextError:
            out["fitted_exponent"] = None
        out["seed"] = args.seed
        _emit(args, out, [{"layer": j, "level": lv, "sum": v} for j, (lv, v) in enumerate(zip(s.levels, s.sums))])
        return
    cfg = _sampler(args)
    if args.which == "cinf":
        rep = criteria.estimate_c_inf(g, f, d, cfg, kappa=args.kappa)
    elif args.which == "cinfke":
        rep = criteria.estimate_c_inf_kappa_eps(g, f, d, args.kappa, args.eps0, cfg)
    else:
        rep = criteria.estimate_c_eps_interior(g, f, d, args.eps, cfg, kappa=args.kappa)
    out = rep.to_dict()
    out["seed"] = args.seed
    _emit(args, out, [{"abs_rho": r, "value": v} for r, v in rep.layer_values])


def _build_ext(args):
    atlas = _load_atlas(args.atlas)
    f = build_variety(args.variety)
    g = build_trace(args.trace)
    return atlas, f, g, extension.build_extension(g, f, atlas.domain, atlas)


def cmd_extend(args):
    atlas, f, g, ext = _build_ext(args)
    if args.which == "build":
        _emit(args, {"balls": len(ext.interpolants),
                     "nonempty": sum(not ip.empty for ip in ext.interpolants), "seed": args.seed})
    elif args.which == "eval":
        z = parse_point(args.z)
        _emit(args, {"value": complex(ext(z[None])[0]), "seed": args.seed})
    else:
        on_x = extension.variety_probes(f, atlas, args.probes, seed=args.seed)
        err = float(np.max(np.abs(ext(on_x) - g(on_x))))
        probes = extension.stencil_covered_probes(ext, args.probes, seed=args.seed)
        rep = extension.check_derivative_bounds(ext, atlas.domain, probes)
        pou = ext.weights(on_x)
        sums = np.bincount(pou[0], weights=pou[2], minlength=len(on_x))
        _emit(args, {"on_variety_error": err, "partition_error": float(np.max(np.abs(sums - 1))),
                     "derivatives": rep.to_dict(), "seed": args.seed})


def cmd_kernel(args):
    d = build_domain(args)
    if args.which == "calibrate":
        cfg = ba_kernel.calibrate(d, args.N, points=args.points, seed=args.seed)
        _emit(args, {"N": args.N, "C_cal": cfg.C_cal,
                     "analytic": ba_kernel.analytic_constant(d.n, args.N), "seed": args.seed})
        return
    cfg = ba_kernel.calibrate(d, args.N)
    P = variety.parse_poly(Path(args.poly_G).read_text(encoding="utf-8")) if args.poly_G else None
    G = P if P is not None else (lambda zeta: np.ones(len(zeta)))
    z = parse_point(args.z)
    est = ba_kernel.reproduce(d, G, z, cfg, points=args.points, seed=args.seed)
    _emit(args, {"estimate": est.value, "stderr": est.stderr, "points": est.points,
                 "exact": complex(G(z[None])[0]), "C_cal": cfg.C_cal, "seed": args.seed})


def cmd_example(args):
    cfg = pipelines.load_config(args.config) if args.config else pipelines.RunConfig()
    cfg.example = args.name
    if args.seed is not None:
        cfg.seed = args.seed
    for kv in args.set or []:
        key, _, val = kv.partition("=")
        cfg.params[key] = pipelines._parse_value(val)
    verdict = pipelines.run_example(cfg)
    out = args.out or cfg.output
    if out:
        pipelines.emit_report([verdict], out, cfg)
    else:
        sys.stdout.write(json.dumps(pipelines.report_summary([verdict], cfg), indent=2, sort_keys=True) + "\n")
    return 0 if verdict.passed else 1


# ---------------------------------------------------------------- parser


def _domain_opts(p):
    p.add_argument("--center", default="1,0", help="domain centre, comma-separated complex")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--semi-axes", help="ellipsoid semi-axes (overrides --radius)")


def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output prefix for .json / .csv")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kext", description=__doc__.splitlines()[0])
    groups = ap.add_subparsers(dest="group", required=True)

    geo = groups.add_parser("geometry").add_subparsers(dest="cmd", required=True)
    p = geo.add_parser("tau")
    _domain_opts(p), _common(p)
    p.add_argument("--z", required=True)
    p.add_argument("--v", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.set_defaults(func=cmd_tau)
    p = geo.add_parser("delta")
    _domain_opts(p), _common(p)
    p.add_argument("--z", required=True)
    p.add_argument("--zeta", required=True)
    p.set_defaults(func=cmd_delta)

    cov = groups.add_parser("cover").add_subparsers(dest="cmd", required=True)
    p = cov.add_parser("generate")
    _domain_opts(p), _common(p)
    p.add_argument("--kappa", type=float, default=0.05)
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--eps0", type=float, default=0.1)
    p.add_argument("--layers", type=int, default=10)
    p.add_argument("--region", help="window centre point")
    p.add_argument("--window", type=float, default=0.1)
    p.add_argument("--anchor")
    p.add_argument("--atlas", help="write the atlas JSON here")
    p.set_defaults(func=cmd_cover_generate)
    p = cov.add_parser("verify")
    _common(p)
    p.add_argument("--atlas", required=True)
    p.add_argument("--probes", type=int, default=10_000)
    p.add_argument("--dilation", type=float, default=1.0)
    p.set_defaults(func=cmd_cover_verify)

    var = groups.add_parser("variety").add_subparsers(dest="cmd", required=True)
    p = var.add_parser("roots")
    _common(p)
    p.add_argument("--variety", required=True)
    p.add_argument("--z", required=True)
    p.add_argument("--v", required=True)
    p.set_defaults(func=cmd_roots)
    p = var.add_parser("sheets")
    _domain_opts(p), _common(p)
    p.add_argument("--variety", required=True)
    p.add_argument("--z", required=True)
    p.add_argument("--kappa", type=float, default=0.05)
    p.set_defaults(func=cmd_sheets)

    p = groups.add_parser("divdiff")
    _common(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--variety")
    p.add_argument("--z", required=True)
    p.add_argument("--v", required=True)
    p.add_argument("--nodes")
    p.set_defaults(func=cmd_divdiff)

    cri = groups.add_parser("criteria").add_subparsers(dest="which", required=True)
    for name in ("cinf", "cinfke", "cq", "ceps"):
        p = cri.add_parser(name)
        _domain_opts(p), _common(p)
        p.add_argument("--variety", required=True)
        p.add_argument("--trace", required=True)
        p.add_argument("--kappa", type=float, default=0.05)
        p.add_argument("--layers", type=int, default=6)
        p.add_argument("--rho-top", type=float, default=0.04)
        p.add_argument("--points", type=int, default=32)
        p.add_argument("--max-order", type=int, default=3)
        p.add_argument("--eps0", type=float, default=0.1)
        p.add_argument("--eps", type=float, default=0.05)
        p.add_argument("--q", type=float, default=2.0)
        p.add_argument("--atlas", help="atlas JSON (cq)")
        p.set_defaults(func=cmd_criteria)

    ext = groups.add_parser("extend").add_subparsers(dest="which", required=True)
    for name in ("build", "eval", "check"):
        p = ext.add_parser(name)
        _common(p)
        p.add_argument("--atlas", required=True)
        p.add_argument("--variety", required=True)
        p.add_argument("--trace", required=True)
        p.add_argument("--z")
        p.add_argument("--probes", type=int, default=200)
        p.set_defaults(func=cmd_extend)

    ker = groups.add_parser("kernel").add_subparsers(dest="which", required=True)
    for name in ("calibrate", "reproduce"):
        p = ker.add_parser(name)
        _domain_opts(p), _common(p)
        p.add_argument("--N", type=int, default=4)
        p.add_argument("--points", type=int, default=2**20)
        p.add_argument("--poly-G", help="polynomial file (lines 'i j re im'); default G = 1")
        p.add_argument("--z", default="0.8,0.1")
        p.set_defaults(func=cmd_kernel)

    exm = groups.add_parser("example").add_subparsers(dest="name", required=True)
    for name in pipelines.EXAMPLES:
        p = exm.add_parser(name)
        p.add_argument("--config", help="flat key = value file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.set_defaults(func=cmd_example)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = args.func(args)
    except KextError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
