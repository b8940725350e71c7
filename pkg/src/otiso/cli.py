"""Command-line front end: verification runs, sharpness sweeps, the
identity suite, and the planar semi-discrete solver.

Every run is deterministic given its flags (seeds default to 0), and every
artifact writer emits bytes that depend only on the RunConfig, so repeated
invocations can be compared with cmp.  Exit codes: 0 success, 1 bad
configuration, 2 inequality violated, 3 positivity-cone failure, 4
transport solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import geometry, series, symfun, transport, verify
from .geometry import DomainSpec, InvalidDomainError, UnsupportedDomainError
from .series import SeriesConfig
from .transport import SolverError

EXIT_OK = 0
EXIT_BAD_CONFIG = 1
EXIT_VIOLATED = 2
EXIT_CONE = 3
EXIT_NO_CONVERGENCE = 4

_CONE_FLAGS = ("cone_violation", "cone_violation_nodes")


class BadConfig(Exception):
    """Raised for malformed flags or domain parameters; exits with code 1."""


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved, deterministic description of one CLI run."""

    subcommand: str
    spec: DomainSpec | None = None
    inequality: str = "af1"
    quad_order: int = 24
    series_k: int = 100
    targets: int = 1024
    seed: int = 0
    tol: float | None = None
    mass_tol: float = 1e-7
    out: str | None = None
    svg: str | None = None
    resume: str | None = None
    eps: tuple[float, ...] = ()
    harmonic_coeff: float = 0.3
    potential_mode: str = "auto"   # auto | closed-form | none | semidiscrete

    @property
    def series_cfg(self) -> SeriesConfig:
        return SeriesConfig(truncation=self.series_k)


def _out_dir() -> str:
    return os.environ.get("OTISO_OUT_DIR", ".")


def _resolve_out(cfg_out: str | None, default_name: str) -> str:
    if cfg_out:
        return cfg_out
    return os.path.join(_out_dir(), default_name)


def _write_text(path: str, text: str) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# Domain resolution
# ---------------------------------------------------------------------------


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise BadConfig(f"expected a comma-separated float list: {exc}")


def _spec_from_args(args) -> DomainSpec:
    if getattr(args, "domain", None):
        try:
            with open(args.domain, encoding="utf-8") as fh:
                data = json.load(fh)
            spec = DomainSpec.from_json_dict(data)
        except (OSError, json.JSONDecodeError, KeyError,
                InvalidDomainError, TypeError) as exc:
            raise BadConfig(f"cannot load domain file {args.domain}: {exc}")
        if getattr(args, "dim", None) and args.dim != spec.dim:
            raise BadConfig(
                f"--dim {args.dim} contradicts domain file dim {spec.dim}")
        return spec
    family = getattr(args, "family", None)
    if family is None:
        raise BadConfig("need --domain <file> or --family with parameters")
    try:
        if family == "ball":
            dim = args.dim or 3
            return DomainSpec.ball(dim, args.radius)
        if family == "ellipsoid":
            if not args.axes:
                raise BadConfig("ellipsoid requires --axes a1,a2,...")
            axes = _parse_floats(args.axes)
            if args.dim and args.dim != len(axes):
                raise BadConfig(
                    f"--dim {args.dim} does not match {len(axes)} axes")
            return DomainSpec.ellipsoid(axes)
        if family == "perturbed_sphere":
            dim = args.dim or 3
            eps = getattr(args, "eps_value", 0.0)
            return _perturbed_sphere(dim, eps, args.harmonic_coeff)
        raise BadConfig(f"unknown family {family!r}")
    except InvalidDomainError as exc:
        raise BadConfig(str(exc))


def _perturbed_sphere(dim: int, eps: float, coeff: float) -> DomainSpec:
    """Radial graph rho = 1 + eps * coeff * u_last (first spherical
    harmonic); eps = 0 is the unit ball."""
    if eps == 0.0:
        return DomainSpec.ball(dim, 1.0)
    mono = tuple(0 for _ in range(dim - 1)) + (1,)
    return DomainSpec.radial_graph(dim, 1.0, ((eps * coeff, mono),),
                                   convex=True)


def _potential_for(spec: DomainSpec, cfg: RunConfig):
    mode = cfg.potential_mode
    if mode == "none":
        return None
    if mode == "semidiscrete":
        if spec.dim != 2:
            raise BadConfig("semi-discrete potentials are planar only")
        dual = transport.semidiscrete_solve(
            spec, cfg.targets, mass_tol=cfg.mass_tol, seed=cfg.seed)
        return transport.potential_from_weights(dual)
    if mode == "closed-form" or spec.family in ("ball", "ellipsoid"):
        try:
            return transport.closed_form_potential(spec)
        except UnsupportedDomainError as exc:
            if mode == "closed-form":
                raise BadConfig(str(exc))
            return None
    return None   # auto fallback: geometry-only check


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def _report_exit(report: verify.CheckReport) -> int:
    if report.verdict == "violated":
        return EXIT_VIOLATED
    if any(f in report.flags for f in _CONE_FLAGS):
        return EXIT_CONE
    return EXIT_OK


def _one_check(ineq: str, spec: DomainSpec, p, cfg: RunConfig):
    fn = verify.check_af1 if ineq == "af1" else verify.check_af2
    return fn(spec, p, cfg=cfg.series_cfg, order=cfg.quad_order, tol=cfg.tol)


def cmd_check(cfg: RunConfig) -> int:
    spec = cfg.spec
    if cfg.inequality not in ("af1", "af2", "af_family"):
        raise BadConfig(f"unknown inequality {cfg.inequality!r}")
    if cfg.inequality in ("af2", "af_family") and spec.dim < 3:
        raise BadConfig("the order-2 inequality needs dim >= 3")
    try:
        p = _potential_for(spec, cfg)
    except SolverError as exc:
        print(f"transport solver failed: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE

    names = ("af1", "af2") if cfg.inequality == "af_family" \
        else (cfg.inequality,)
    reports = [_one_check(name, spec, p, cfg) for name in names]

    if len(reports) == 1:
        text = verify.report_to_json(reports[0]) + "\n"
    else:
        text = json.dumps([r.to_json_dict() for r in reports], indent=1) + "\n"
    out = _resolve_out(cfg.out, f"{cfg.inequality}_report.json")
    _write_text(out, text)

    for r in reports:
        print(f"{r.inequality}: verdict={r.verdict} ratio={r.ratio:.12g} "
              f"lhs={r.lhs:.12g} rhs={r.rhs:.12g}")
    print(f"report written to {out}")
    return max(_report_exit(r) for r in reports)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _sweep_rows(cfg: RunConfig):
    rows = []
    for eps in cfg.eps:
        spec = _perturbed_sphere(cfg.spec.dim if cfg.spec else 3,
                                 eps, cfg.harmonic_coeff)
        p = transport.closed_form_potential(spec) \
            if spec.family == "ball" else None
        report = _one_check(cfg.inequality, spec, p, cfg)
        margin = min(report.cone_margins) if report.cone_margins else math.nan
        if margin <= 0.0:
            print(f"eps={eps:g}: outside the certified convexity cone "
                  f"(min sigma margin {margin:.3e}); row kept",
                  file=sys.stderr)
        rows.append((eps, report.lhs, report.rhs, report.ratio, margin))
    return rows


def _sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eps", "lhs", "rhs", "ratio", "min_cone_margin"])
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def _sweep_svg(rows) -> str:
    """Ratio vs eps as a bare polyline; fixed viewport, margins, 6-decimal
    coordinates so the bytes are reproducible."""
    width, height, pad = 480, 320, 48
    eps = [r[0] for r in rows]
    ratio = [r[3] for r in rows]
    e_lo, e_hi = min(eps), max(eps)
    r_lo, r_hi = min(ratio), max(ratio)
    e_span = (e_hi - e_lo) or 1.0
    r_span = (r_hi - r_lo) or 1.0

    def sx(e):
        return pad + (e - e_lo) / e_span * (width - 2 * pad)

    def sy(r):
        return height - pad - (r - r_lo) / r_span * (height - 2 * pad)

    pts = " ".join(f"{sx(e):.6f},{sy(r):.6f}" for e, r in zip(eps, ratio))
    marks = "".join(
        f'<circle cx="{sx(e):.6f}" cy="{sy(r):.6f}" r="3" fill="#1f6feb"/>'
        for e, r in zip(eps, ratio))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
        f'y2="{height - pad}" stroke="black"/>\n'
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" '
        f'stroke="black"/>\n'
        f'<polyline points="{pts}" fill="none" stroke="#1f6feb" '
        f'stroke-width="1.5"/>\n{marks}\n'
        f'<text x="{width // 2}" y="{height - 12}" font-size="12" '
        f'text-anchor="middle">eps</text>\n'
        f'<text x="14" y="{height // 2}" font-size="12" '
        f'text-anchor="middle" transform="rotate(-90 14 {height // 2})">'
        f'ratio</text>\n</svg>\n'
    )


def cmd_sweep(cfg: RunConfig) -> int:
    if not cfg.eps:
        raise BadConfig("sweep needs --eps e1,e2,...")
    rows = _sweep_rows(cfg)
    out = _resolve_out(cfg.out, "sweep.csv")
    _write_text(out, _sweep_csv(rows))
    print(f"sweep written to {out}")
    if cfg.svg:
        _write_text(cfg.svg, _sweep_svg(rows))
        print(f"plot written to {cfg.svg}")
    worst = min(r[3] for r in rows)
    return EXIT_OK if worst >= 1.0 - 1e-9 else EXIT_VIOLATED


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------


def _newton_suite(seed: int, count: int = 1000):
    """Max relative errors of the contraction and mixed-polarization
    identities over random symmetric matrices of dims 2..8."""
    rng = np.random.default_rng(seed)
    worst_contract = 0.0
    worst_mixed = 0.0
    for _ in range(count):
        d = int(rng.integers(2, 9))
        a = symfun.symmetrize(rng.standard_normal((d, d)))
        b = symfun.symmetrize(rng.standard_normal((d, d)))
        sig = symfun.elementary_symmetric_all(a)
        for k in range(0, d):
            tk = symfun.newton_tensor(a, k)
            lhs = (k + 1) * sig[k + 1]
            rhs = float(np.tensordot(tk, a))
            worst_contract = max(worst_contract,
                                 abs(lhs - rhs) / max(abs(lhs), 1.0))
        if d >= 3:
            # polarization route vs quadratic-form difference route
            t2ab = symfun.newton_tensor_mixed(a, b)
            diff = 0.5 * (symfun.newton_tensor(a + b, 2)
                          - symfun.newton_tensor(a, 2)
                          - symfun.newton_tensor(b, 2))
            worst_mixed = max(worst_mixed,
                              float(np.max(np.abs(t2ab - diff)))
                              / max(float(np.max(np.abs(diff))), 1.0))
    return worst_contract, worst_mixed


def _divergence_suite(seed: int, count: int = 5):
    worst = 0.0
    for i in range(count):
        dim = 2 + (i % 3)   # dims 2, 3, 4
        p = transport.cubic_test_potential(dim, seed=seed + i)
        x0 = np.zeros(dim)
        for k in (1, 2):
            if k >= dim:
                continue
            worst = max(worst, transport.newton_divergence_fd(p, x0, k))
    return worst


def _identity_rows(cfg: RunConfig):
    scfg = cfg.series_cfg
    s = np.linspace(0.0, scfg.s_max, 1000)
    res = series.identity_residuals(s, scfg)
    rows = [
        ("fact_a_coefficients", _coeff_error(scfg), 1e-12),
        ("fact_b_derivative", float(np.max(res.deriv)), 1e-7),
        ("fact_c_cubic", float(np.max(res.cubic)), 1e-7),
        ("fact_d_split", float(np.max(res.split)), 1e-7),
        ("fact_e_product", float(np.max(res.product_margin)), 1e-12),
        ("p_bound_max_plus_quarter",
         verify.P_grid_max(scfg) + 0.25, 1e-9),
    ]
    contract, mixed = _newton_suite(cfg.seed)
    rows.append(("newton_contraction", contract, 1e-10))
    rows.append(("newton_mixed_t2", mixed, 1e-10))
    rows.append(("newton_divergence_fd", _divergence_suite(cfg.seed), 1e-6))

    spec = DomainSpec.ellipsoid((1.0, 1.0, 2.0))
    order = max(cfg.quad_order, 128)
    grid = geometry.boundary_quadrature(spec, order)
    p = transport.closed_form_potential(spec)
    fields = verify.boundary_fields(grid, p)
    bt1 = verify.boundary_term(grid, p, 1, fields)
    bt2 = verify.boundary_term(grid, p, 2, fields)
    d2 = verify.L_decomposition_2(fields)
    d3 = verify.L_decomposition_3(fields)
    m3 = verify.M_functionals_3(fields, cfg=scfg)
    _, h_tot, s2_tot = verify._grid_totals(grid)
    rows += [
        ("decomposition_2_sum", abs(d2.total - bt1) / abs(bt1), 1e-7),
        ("decomposition_2_parts", abs(d2.L21 - d2.L21_by_parts) / abs(bt1),
         1e-7),
        ("decomposition_3_sum", abs(d3.total - bt2) / abs(bt2), 1e-7),
        ("recomposition_star", abs(m3.total - s2_tot - m3.E_total)
         / abs(s2_tot), 1e-7),
        ("jk_recursion_k1",
         verify.Jk_recursion_residual(fields, k=1) / abs(h_tot), 1e-7),
        ("jk_recursion_k2",
         verify.Jk_recursion_residual(fields, k=2) / abs(h_tot), 1e-7),
        ("weighted_sigma2_k0",
         verify.weighted_sigma2_recursion_residual(fields, k=0)
         / abs(s2_tot), 1e-7),
        ("weighted_sigma2_k1",
         verify.weighted_sigma2_recursion_residual(fields, k=1)
         / abs(s2_tot), 1e-7),
        ("codazzi_cap_identity",
         verify.codazzi_residual(fields) / abs(s2_tot), 1e-7),
    ]
    return rows


def _coeff_error(scfg: SeriesConfig) -> float:
    worst = 0.0
    for k in range(1, min(scfg.truncation, 12) + 1):
        exact = math.comb(2 * k, k) / (2.0 ** (2 * k) * (2 * k - 1))
        worst = max(worst, abs(series.coeff(k) - exact))
    return worst


def cmd_identities(cfg: RunConfig) -> int:
    rows = _identity_rows(cfg)
    width = max(len(name) for name, _, _ in rows)
    lines = []
    ok = True
    for name, value, thresh in rows:
        passed = value <= thresh
        ok = ok and passed
        lines.append(f"{name:<{width}}  {value: .3e}  <= {thresh:.0e}  "
                     f"{'pass' if passed else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if cfg.out:
        _write_text(cfg.out, text)
    return EXIT_OK if ok else EXIT_VIOLATED


# ---------------------------------------------------------------------------
# ot-solve
# ---------------------------------------------------------------------------


def cmd_ot_solve(cfg: RunConfig) -> int:
    out = _resolve_out(cfg.out, "checkpoint.json")

    if cfg.resume:
        try:
            dual = transport.load_dual_weights(cfg.resume)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise BadConfig(f"cannot load checkpoint {cfg.resume}: {exc}")
        polygon = dual.polygon()
        cc = transport.laguerre_cells(polygon, dual.points, dual.weights)
        area = transport.polygon_area(polygon)
        n = len(dual.points)
        resid = float(np.max(np.abs(cc.masses - area / n)))
        tol = cfg.mass_tol * area / n
        print(f"iter 0 residual {resid:.6e} (tolerance {tol:.6e})")
        if resid > tol:
            print(f"checkpoint no longer converged: residual {resid:.3e}",
                  file=sys.stderr)
            return EXIT_NO_CONVERGENCE
        print("converged at checkpoint; 0 additional iterations")
        transport.save_dual_weights(dual, out)
        print(f"checkpoint written to {out}")
        return EXIT_OK

    spec = cfg.spec
    try:
        dual = transport.semidiscrete_solve(
            spec, cfg.targets, mass_tol=cfg.mass_tol, seed=cfg.seed)
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    for it, dual_val, resid in dual.convergence_log:
        print(f"iter {it:3d} dual {dual_val:.12e} residual {resid:.6e}")
    transport.save_dual_weights(dual, out)
    dev = transport.map_deviation(dual)
    print(f"mean map deviation {dev:.6f}")
    print(f"checkpoint written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):   # argparse default exits 2; contract says 1
        raise BadConfig(message)


def _add_domain_flags(p):
    p.add_argument("--domain", help="domain spec JSON file")
    p.add_argument("--family", choices=("ball", "ellipsoid",
                                        "perturbed_sphere"))
    p.add_argument("--dim", type=int)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--axes", help="comma-separated semi-axes")
    p.add_argument("--harmonic-coeff", type=float, default=0.3)


def _add_common_flags(p):
    p.add_argument("--quad-order", type=int, default=24)
    p.add_argument("--series-K", dest="series_k", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float)
    p.add_argument("--out")


def build_parser() -> _Parser:
    ap = _Parser(prog="otiso", description=__doc__)
    sub = ap.add_subparsers(dest="subcommand", required=True)

    pc = sub.add_parser("check", help="verify one inequality chain")
    _add_domain_flags(pc)
    _add_common_flags(pc)
    pc.add_argument("--ineq", default="af1",
                    choices=("af1", "af2", "af_family"))
    pc.add_argument("--potential", dest="potential_mode", default="auto",
                    choices=("auto", "closed-form", "none", "semidiscrete"))
    pc.add_argument("--targets", type=int, default=1024)
    pc.add_argument("--mass-tol", type=float, default=1e-7)
    pc.add_argument("--eps-value", dest="eps_value", type=float,
                    default=0.0,
                    help="perturbation size for --family perturbed_sphere")

    ps = sub.add_parser("sweep", help="sharpness scan near the ball")
    _add_domain_flags(ps)
    _add_common_flags(ps)
    ps.add_argument("--ineq", default="af1", choices=("af1", "af2"))
    ps.add_argument("--eps", required=True,
                    help="comma-separated perturbation amplitudes")
    ps.add_argument("--svg", help="optional ratio-vs-eps plot path")

    pi = sub.add_parser("identities", help="run the identity suite")
    _add_common_flags(pi)

    po = sub.add_parser("ot-solve", help="planar semi-discrete transport")
    _add_domain_flags(po)
    _add_common_flags(po)
    po.add_argument("--targets", type=int, default=1024)
    po.add_argument("--mass-tol", type=float, default=1e-7)
    po.add_argument("--resume", help="checkpoint to verify and rewrite")
    return ap


def _config_from_args(args) -> RunConfig:
    spec = None
    resuming = args.subcommand == "ot-solve" and args.resume
    if args.subcommand in ("check", "ot-solve") and not resuming:
        spec = _spec_from_args(args)
        if args.subcommand == "ot-solve" and spec.dim != 2:
            raise BadConfig("the semi-discrete solver needs --dim 2")
    eps = ()
    if args.subcommand == "sweep":
        eps = _parse_floats(args.eps)
        if not eps:
            raise BadConfig("empty --eps list")
        if args.dim:
            spec = DomainSpec.ball(args.dim, 1.0)
    if args.subcommand != "identities" and args.quad_order < 4:
        raise BadConfig("--quad-order must be at least 4")
    if args.series_k < 1:
        raise BadConfig("--series-K must be positive")
    return RunConfig(
        subcommand=args.subcommand,
        spec=spec,
        inequality=getattr(args, "ineq", "af1"),
        quad_order=args.quad_order,
        series_k=args.series_k,
        targets=getattr(args, "targets", 1024),
        seed=args.seed,
        tol=args.tol,
        mass_tol=getattr(args, "mass_tol", 1e-7),
        out=args.out,
        svg=getattr(args, "svg", None),
        resume=getattr(args, "resume", None),
        eps=eps,
        harmonic_coeff=getattr(args, "harmonic_coeff", 0.3),
        potential_mode=getattr(args, "potential_mode", "auto"),
    )


_DISPATCH = {
    "check": cmd_check,
    "sweep": cmd_sweep,
    "identities": cmd_identities,
    "ot-solve": cmd_ot_solve,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _config_from_args(args)
        return _DISPATCH[cfg.subcommand](cfg)
    except (BadConfig, InvalidDomainError, UnsupportedDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
