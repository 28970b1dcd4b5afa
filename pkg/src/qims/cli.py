"""Command-line interface: config ingestion, experiment orchestration, JSON/CSV/SVG output.

Exit codes: 0 all checks passed / output written; 1 a verification check
failed; 2 configuration error; 3 numerical failure (nonconvergence or a
pole).  Identical config and seed produce byte-identical output files;
human-readable progress goes to stderr only.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from . import cohomology, hypint, pfaffian, polyalg, weylops
from .errors import (ChamberError, ConvergenceError, ParameterError,
                     PropagationError, QimsError, SingularityError,
                     StructureError, SubspaceError)
from .quadrature import QuadratureSpec
from .svgplot import write_line_chart

CONFIG_ERRORS = (ParameterError, StructureError, SubspaceError, json.JSONDecodeError,
                 KeyError, TypeError, ValueError)
NUMERIC_ERRORS = (ConvergenceError, PropagationError, SingularityError, ChamberError)


def parse_scalar(x):
    """Loss-free scalar intake: 'p/q' strings stay exact, decimals go float."""
    if isinstance(x, bool):
        raise ParameterError(f"boolean is not a scalar: {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return x
    if isinstance(x, str):
        s = x.strip()
        if "/" in s or ("." not in s and "e" not in s and "E" not in s):
            return Fraction(s)
        return float(s)
    raise ParameterError(f"cannot parse scalar {x!r}")


def emit_scalar(x, tolerance=None):
    """Numbers carry provenance: exact values as 'p/q', floats with tolerance."""
    if isinstance(x, (int, Fraction)):
        f = Fraction(x)
        return {"value": f"{f.numerator}/{f.denominator}", "kind": "exact"}
    out = {"value": float(getattr(x, "real", x)) if not isinstance(x, complex) else
           [x.real, x.imag], "kind": "float"}
    if tolerance is not None:
        out["tolerance"] = tolerance
    return out


def emit_matrix(mat, tolerance=None):
    return [[emit_scalar(x, tolerance) for x in row] for row in mat]


def index_label(A, L, N):
    bits = []
    for m in range(1, L):
        for i in range(1, N + 1):
            e = A[polyalg.flat_pos(m, i, N)]
            if e:
                bits.append(f"m{m}i{i}:{e}")
    return ",".join(bits) if bits else "1"


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def build_parameters(cfg) -> weylops.Parameters:
    model = cfg["model"]
    L, N = int(model["L"]), int(model["N"])
    p = cfg["parameters"]
    e = [parse_scalar(x) for x in p["e"]]
    kappa = [parse_scalar(x) for x in p["kappa"]]
    theta = [parse_scalar(x) for x in p["theta"]]
    hbar = parse_scalar(p.get("hbar", 1))
    planck = parse_scalar(p.get("planck", 1))
    theta0 = parse_scalar(p["theta0"]) if "theta0" in p else None
    if len(theta) == N + 1 and theta0 is None:
        theta0, theta = theta[0], theta[1:]
    return weylops.make_parameters(L, N, e=e, kappa=kappa, theta=theta,
                                   theta0=theta0, hbar=hbar, planck=planck)


def get_z(cfg, args):
    if args.z is not None:
        return tuple(parse_scalar(s) for s in args.z.split(","))
    return tuple(parse_scalar(x) for x in cfg["z"])


def get_space(cfg, args):
    model = cfg["model"]
    if args.M is not None:
        return ("V", int(args.M))
    if "M" in model:
        return ("V", int(model["M"]))
    if "T" in model:
        return ("F", tuple(int(t) for t in model["T"]))
    raise ParameterError("config model must carry M (for V(M)) or T (for F(T))")


def get_quad(cfg, args):
    q = dict(cfg.get("quadrature", {}))
    if args.nodes is not None:
        q["nodes_per_axis"] = args.nodes
    if args.seed is not None:
        q["seed"] = args.seed
    allowed = {"scheme", "nodes_per_axis", "mc_samples", "seed", "stabilize_tol"}
    return QuadratureSpec(**{k: v for k, v in q.items() if k in allowed})


def write_output(args, payload):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)


def write_csv_matrix(path, mat, basis, L, N):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([index_label(A, L, N) for A in basis])
        for row in mat:
            w.writerow([f"{Fraction(x).numerator}/{Fraction(x).denominator}"
                        if isinstance(x, (int, Fraction)) else repr(x)
                        for x in row])


def _pmap(fn, items):
    """Map over probe sets, optionally in parallel (QIMS_THREADS workers);
    reduction order is the input order either way."""
    workers = int(os.environ.get("QIMS_THREADS", "1"))
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --- subcommands ----------------------------------------------------------------

def cmd_basis(cfg, args):
    model = cfg["model"]
    L, N = int(model["L"]), int(model["N"])
    if args.M is not None or "M" in model:
        M = int(args.M if args.M is not None else model["M"])
        basis = polyalg.enumerate_basis(L, N, M)
        space = {"kind": "V", "M": M}
    else:
        T = tuple(int(t) for t in model["T"])
        basis = polyalg.enumerate_basis_FT(L, N, T)
        space = {"kind": "F", "T": list(T)}
    payload = {
        "space": space,
        "dimension": len(basis),
        "basis": [list(A) for A in basis],
        "labels": [index_label(A, L, N) for A in basis],
    }
    write_output(args, payload)
    return 0


def cmd_hamiltonian(cfg, args):
    params = build_parameters(cfg)
    z = get_z(cfg, args)
    space = get_space(cfg, args)
    i = args.i or int(cfg.get("i", 1))
    system = pfaffian.PfaffianSystem(params, space)
    mat = system.matrix_at(i, z)
    if args.out and args.out.endswith(".csv"):
        write_csv_matrix(args.out, mat, system.basis, params.L, params.N)
        print(f"wrote {args.out}", file=sys.stderr)
        return 0
    payload = {
        "space": {"kind": space[0], "data": space[1] if isinstance(space[1], int)
                  else list(space[1])},
        "i": i,
        "z": [emit_scalar(x) for x in z],
        "dimension": system.dim,
        "basis_labels": [index_label(A, params.L, params.N) for A in system.basis],
        "matrix": emit_matrix(mat),
    }
    write_output(args, payload)
    return 0


def _probes(params, dmax):
    return polyalg.enumerate_basis(params.L, params.N, dmax)


def _check_commute(cfg, args, params, z):
    probes = _probes(params, args.dmax)
    worst = Fraction(0)
    pairs = [(i, j) for i in range(1, params.N + 1) for j in range(i, params.N + 1)]
    res = _pmap(lambda ij: weylops.commutator_residual(ij[0], ij[1], params, z, probes),
                pairs)
    for r in res:
        worst = max(worst, r)
    return {"residual": emit_scalar(worst), "pairs": len(pairs),
            "probes": len(probes)}, worst == 0


def _check_braid(cfg, args, params, z):
    probes = _probes(params, min(args.dmax, 2))
    worst = weylops.ahat_commutator_residual(1, 1, params, probes)
    if params.N >= 2:
        worst = max(worst, weylops.ahat_commutator_residual(1, 2, params, probes))
    count = 0
    for i in range(1, params.N + 1):
        for j in range(1, params.N + 1):
            for k in range(1, params.N + 1):
                if len({i, j, k}) == 3:
                    worst = max(worst, weylops.braid_residual_adjacent(
                        i, j, k, params, probes))
                    count += 1
    for l in range(1, params.N + 1):
        if params.N >= 4 and len({1, 2, 3, l}) == 4:
            worst = max(worst, weylops.braid_residual_disjoint(1, 2, 3, l, params, probes))
            count += 1
    return {"residual": emit_scalar(worst), "triples": count,
            "probes": len(probes)}, worst == 0


def _check_flatness(cfg, args, params, z):
    space = get_space(cfg, args)
    system = pfaffian.PfaffianSystem(params, space)
    worst_c = Fraction(0)
    worst_d = 0.0
    for i in range(1, params.N + 1):
        for j in range(i + 1, params.N + 1):
            r = pfaffian.flatness_residual(system, z, i, j, h=args.h or 1e-5)
            worst_c = max(worst_c, r.commutator)
            worst_d = max(worst_d, r.derivative_rel)
    ok = worst_c == 0 and worst_d < 1e-7
    return {"commutator": emit_scalar(worst_c),
            "derivative_rel": emit_scalar(worst_d, 1e-7)}, ok


def _check_subspace(cfg, args, params, z):
    space = get_space(cfg, args)
    system = pfaffian.PfaffianSystem(params, space)  # raises SubspaceError on leakage
    return {"dimension": system.dim, "overflow": emit_scalar(Fraction(0))}, True


def _check_garnier(cfg, args, params, z):
    if params.L != 2:
        raise ParameterError("the explicit-example check needs L = 2")
    probes = _probes(params, args.dmax)
    worst = Fraction(0)
    for i in range(1, params.N + 1):
        worst = max(worst, weylops.garnier_example_residual(i, params, z, probes))
    return {"deviation": emit_scalar(worst), "probes": len(probes)}, worst == 0


def _check_lemmas(cfg, args, params, z):
    import random
    rng = random.Random(args.seed if args.seed is not None else 20240)
    nsamples = int(cfg.get("lemma_samples", 10))
    worst = Fraction(0)
    detail = {}
    for lemma in cohomology.LEMMA_IDS:
        Lmin = {"l_lt_n": 3, "n_lt_l": 4, "one_lt_l": 3}.get(lemma, 2)
        L = max(params.L, Lmin)
        bad = Fraction(0)
        for _ in range(nsamples):
            s = cohomology.random_lemma_sample(lemma, L, rng)
            bad = max(bad, cohomology.lemma_residual(lemma, **s))
        detail[lemma] = emit_scalar(bad)
        worst = max(worst, bad)
    return {"residuals": detail, "samples": nsamples}, worst == 0


CHECKS = {
    "commute": _check_commute,
    "braid": _check_braid,
    "flatness": _check_flatness,
    "subspace": _check_subspace,
    "garnier": _check_garnier,
    "lemmas": _check_lemmas,
}


def cmd_check(cfg, args):
    params = build_parameters(cfg)
    z = get_z(cfg, args)
    names = list(CHECKS) if args.which == "all" else [args.which]
    report = {}
    all_ok = True
    for name in names:
        detail, ok = CHECKS[name](cfg, args, params, z)
        report[name] = {"passed": ok, **detail}
        all_ok = all_ok and ok
        print(f"check {name}: {'pass' if ok else 'FAIL'}", file=sys.stderr)
    write_output(args, {"checks": report, "passed": all_ok})
    return 0 if all_ok else 1


def cmd_pfaffian(cfg, args):
    params = build_parameters(cfg)
    space = get_space(cfg, args)
    system = pfaffian.PfaffianSystem(params, space)
    if args.path:
        waypoints = load_config(args.path)["path"] if args.path.endswith(".json") else None
    else:
        waypoints = cfg.get("path")
    if waypoints is None:
        raise ParameterError("pfaffian needs a path: config 'path' or --path FILE")
    zpath = pfaffian.ZPath([[complex(float(parse_scalar(x))) if not isinstance(x, list)
                             else complex(*x) for x in w] for w in waypoints])
    if "c0" not in cfg:
        raise ParameterError("pfaffian needs an initial vector 'c0' in the config")
    c0 = np.array([complex(float(parse_scalar(x))) if not isinstance(x, list)
                   else complex(*x) for x in cfg["c0"]])
    tol = cfg.get("tolerances", {})
    rtol = float(tol.get("rtol", 1e-10))
    atol = float(tol.get("atol", 1e-12))
    vec, stats = pfaffian.propagate(system, zpath, c0, rtol=rtol, atol=atol,
                                    with_stats=True)
    payload = {
        "endpoint": [emit_scalar(complex(x), rtol) for x in vec],
        "steps": {"accepted": stats.steps_accepted, "rejected": stats.steps_rejected,
                  "rhs_evaluations": stats.rhs_evaluations},
        "rtol": rtol, "atol": atol,
    }
    write_output(args, payload)
    return 0


def cmd_integral(cfg, args):
    params = build_parameters(cfg)
    z = tuple(float(parse_scalar(x)) for x in (args.z.split(",") if args.z else cfg["z"]))
    M = int(args.M if args.M is not None else cfg["model"]["M"])
    quad = get_quad(cfg, args)
    chamber = cfg.get("chamber", "level_blocks")
    res = hypint.eval_psiM(params, z, M, quad, chamber=chamber)
    payload = {
        "basis_labels": [index_label(A, params.L, params.N) for A in res.basis],
        "coefficients": [emit_scalar(float(v), res.convergence) for v in res.vector],
        "convergence": res.convergence,
        "meta": res.meta,
    }
    write_output(args, payload)
    return 0


def cmd_series(cfg, args):
    params = build_parameters(cfg)
    z = tuple(float(parse_scalar(x)) for x in (args.z.split(",") if args.z else cfg["z"]))
    order = int(cfg.get("order", 30))
    res = hypint.series_psi1(params, z, order)
    payload = {
        "basis_labels": [index_label(A, params.L, params.N) for A in res.basis],
        "coefficients": [emit_scalar(float(v), res.meta["tail_bound"]) for v in res.vector],
        "order": order,
        "tail_bound": res.meta["tail_bound"],
    }
    write_output(args, payload)
    return 0


def cmd_verify(cfg, args):
    params = build_parameters(cfg)
    zf = tuple(float(parse_scalar(x)) for x in (args.z.split(",") if args.z else cfg["z"]))
    M = int(args.M if args.M is not None else cfg["model"]["M"])
    quad = get_quad(cfg, args)
    chamber = cfg.get("chamber", "level_blocks")
    i = args.i or int(cfg.get("i", 1))
    h = args.h or float(cfg.get("h", 5e-3))
    tol = float(cfg.get("tolerances", {}).get("pde", 1e-4))

    residual = hypint.pde_residual(params, zf, M, quad, i=i, h=h, chamber=chamber)
    z_exact = tuple(parse_scalar(x) for x in cfg["z"])
    exact_ok = all(isinstance(x, Fraction) for x in z_exact)
    if exact_ok:
        cmpres = cohomology.compare_cohomology_operator(params, z_exact, M, i)
        comparison = {
            "exact_equal": cmpres.exact_equal,
            "max_abs_diff": emit_scalar(cmpres.max_abs_diff),
            "lambda_shift": None if cmpres.lambda_shift is None
            else emit_scalar(cmpres.lambda_shift),
        }
        if not cmpres.exact_equal:
            comparison["discrepancy"] = emit_matrix(cmpres.discrepancy)
        cmp_ok = cmpres.exact_equal or cmpres.lambda_shift is not None
    else:
        comparison = {"skipped": "z is not exact rational"}
        cmp_ok = True

    if args.plot:
        lo, hi = sorted((0.98 * zf[i - 1], min(1.02 * zf[i - 1], 0.97)))
        grid = np.linspace(lo, hi, 13)
        curves = []
        for g in grid:
            zz = list(zf)
            zz[i - 1] = float(g)
            curves.append(hypint.eval_psiM(params, tuple(zz), M, quad,
                                           chamber=chamber).vector)
        curves = np.array(curves)
        basis = polyalg.enumerate_basis(params.L, params.N, M)
        series = [(index_label(A, params.L, params.N), list(grid), list(curves[:, k]))
                  for k, A in enumerate(basis)]
        write_line_chart(args.plot, series, title="coefficient trajectories",
                         xlabel=f"z_{i}", ylabel="c_A")
        print(f"wrote {args.plot}", file=sys.stderr)

    ok = residual < tol and cmp_ok
    write_output(args, {
        "pde_residual": emit_scalar(residual, tol),
        "pde_tolerance": tol,
        "cohomology_vs_operator": comparison,
        "passed": bool(ok),
    })
    return 0 if ok else 1


def build_argparser():
    ap = argparse.ArgumentParser(prog="qims",
                                 description="quantum isomonodromic system toolkit")
    ap.add_argument("--config", required=False, help="JSON run configuration")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--L", type=int)
        p.add_argument("--N", type=int)
        p.add_argument("--M", type=int)
        p.add_argument("--z")
        p.add_argument("--i", type=int)
        p.add_argument("--nodes", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--dmax", type=int, default=2)
        p.add_argument("--h", type=float)
        p.add_argument("--out")
        p.add_argument("--plot")
        p.add_argument("--path")

    for name in ("basis", "hamiltonian", "pfaffian", "integral", "series", "verify"):
        common(sub.add_parser(name))
    pc = sub.add_parser("check")
    pc.add_argument("which", choices=list(CHECKS) + ["all"])
    common(pc)
    return ap


def main(argv=None):
    args = build_argparser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else {}
        if args.L is not None or args.N is not None:
            cfg.setdefault("model", {})
            if args.L is not None:
                cfg["model"]["L"] = args.L
            if args.N is not None:
                cfg["model"]["N"] = args.N
        handler = {
            "basis": cmd_basis,
            "hamiltonian": cmd_hamiltonian,
            "check": cmd_check,
            "pfaffian": cmd_pfaffian,
            "integral": cmd_integral,
            "series": cmd_series,
            "verify": cmd_verify,
        }[args.command]
        return handler(cfg, args)
    except NUMERIC_ERRORS as exc:
        write_output(args, {"error": {"code": 3, "type": type(exc).__name__,
                                      "message": str(exc)}})
        return 3
    except CONFIG_ERRORS as exc:
        write_output(args, {"error": {"code": 2, "type": type(exc).__name__,
                                      "message": str(exc)}})
        return 2


if __name__ == "__main__":
    sys.exit(main())
