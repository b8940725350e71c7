"""Boundary-field assembly and end-to-end verification of the two sharp
inequality chains.

Everything the proofs manipulate on the boundary lives here: the frame
split of the ambient Hessian into a tangential part A and a curvature
part B, the boundary contractions of Newton tensors, the decompositions
L_{2,*} / L_{3,*} with their capped counterparts M_{2,*} / M_{3,*}, the
recursion and Codazzi identities used to rearrange them, the pointwise
bound P, and the chain drivers check_af1 / check_af2 that tie the volume
to the curvature integrals link by link.

Node fields are produced in chunks so that a dim-6 grid with ~7e5 nodes
never materializes more than a few hundred MB at a time; chunk results
are cached and replayed when the whole collection is small enough, and
constant Hessians stay zero-copy broadcast views throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import geometry, series, symfun
from .geometry import DomainSpec, QuadratureGrid, unit_ball_volume
from .series import SeriesConfig, DEFAULT_CONFIG
from .transport import Potential

__all__ = [
    "InvariantViolationError", "BoundaryFields", "FieldsCollection",
    "boundary_fields", "boundary_term",
    "Decomposition2", "L_decomposition_2", "Functionals2", "M_functionals_2",
    "Jk_recursion_residual", "weighted_sigma2_recursion_residual",
    "codazzi_residual", "divergence_totals",
    "Decomposition3", "L_decomposition_3", "Functionals3", "M_functionals_3",
    "P_pointwise", "P_grid_max",
    "ChainLink", "CheckReport", "check_af1", "check_af2", "report_to_json",
]

CHUNK_NODES = 65536
# chunk caching is skipped once m * n^2 exceeds this (keeps peak RSS modest)
CACHE_BUDGET = 28_000_000
BLOCK_TOL = 1e-10


class InvariantViolationError(RuntimeError):
    """A structural identity that must hold exactly failed at a node."""


# ---------------------------------------------------------------------------
# Per-node boundary fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryFields:
    """Fields of one chunk of boundary nodes, all in the tangent frame.

    The frame is (e_1 .. e_{n-1}, nu) with the outward normal last, so the
    ambient Hessian of the potential appears as ``frame_hessian`` with
    tangential block ``ambient_tangential``, mixed column and corner entry
    split off.  ``surface_hessian`` is the intrinsic Hessian of the boundary
    restriction (tangential block minus shape * normal derivative) and
    ``normal_grad`` the tangential gradient of the normal derivative.
    """

    offset: int
    weights: np.ndarray            # (m,) surface weights (view into the grid)
    shape: np.ndarray              # (m, n-1, n-1) shape operator (view)
    tangential_grad: np.ndarray    # (m, n-1)
    tangential_norm: np.ndarray    # (m,) |tangential_grad|
    normal_deriv: np.ndarray       # (m,) gradient . normal
    cap: np.ndarray                # (m,) sqrt(1 - |tangential_grad|^2)
    frame_hessian: np.ndarray      # (m, n, n)
    surface_hessian: np.ndarray    # (m, n-1, n-1)
    normal_grad: np.ndarray        # (m, n-1)
    corner: np.ndarray             # (m,) second normal derivative

    @property
    def ambient_tangential(self) -> np.ndarray:
        return self.frame_hessian[:, :-1, :-1]

    def blocks(self):
        """Assemble the split (A, B): A carries the potential's intrinsic
        second derivatives, B everything proportional to the shape operator.
        A + B reproduces the frame Hessian exactly."""
        m, n = self.frame_hessian.shape[:2]
        phin = self.normal_deriv
        a = np.zeros((m, n, n))
        a[:, :-1, :-1] = self.surface_hessian
        a[:, :-1, -1] = self.normal_grad
        a[:, -1, :-1] = self.normal_grad
        a[:, -1, -1] = self.corner
        b = np.zeros((m, n, n))
        b[:, :-1, :-1] = self.shape * phin[:, None, None]
        ltg = np.einsum("qab,qb->qa", self.shape, self.tangential_grad)
        b[:, :-1, -1] = -ltg
        b[:, -1, :-1] = -ltg
        return a, b


def _assemble_chunk(sec: QuadratureGrid, potential: Potential,
                    tol_map: float, offset: int) -> BoundaryFields:
    pts, nu, frames, L = sec.points, sec.normals, sec.frames, sec.shape_ops
    m, n = pts.shape

    g = potential.grad(pts)
    gnorm2 = np.einsum("qi,qi->q", g, g)
    worst = int(np.argmax(gnorm2))
    if gnorm2[worst] > (1.0 + tol_map) ** 2:
        raise InvariantViolationError(
            f"transport map leaves the unit ball at node {offset + worst}: "
            f"|grad| = {math.sqrt(gnorm2[worst]):.12g}"
        )

    phin = np.einsum("qi,qi->q", g, nu)
    tg = np.einsum("qai,qi->qa", frames, g)
    s2 = np.einsum("qa,qa->q", tg, tg)
    s = np.sqrt(s2)
    cap = np.sqrt(np.clip(1.0 - s2, 0.0, None))

    kind, data = potential.hess_compact(pts)
    if kind == "scalar":
        c = np.asarray(data, dtype=float)
        if np.ptp(c) == 0.0:
            hf = np.broadcast_to(np.eye(n) * c[0], (m, n, n))
        else:
            hf = np.eye(n)[None, :, :] * c[:, None, None]
    else:
        q = np.concatenate([frames, nu[:, None, :]], axis=1)  # (m, n, n)
        if kind == "diag":
            hf = np.einsum("qai,i,qbi->qab", q, np.asarray(data, float), q)
        else:
            hf = np.einsum("qai,qij,qbj->qab", q, data, q)
        hf = 0.5 * (hf + np.swapaxes(hf, 1, 2))

    ht = hf[:, :-1, :-1]
    corner = np.ascontiguousarray(hf[:, -1, -1])
    mix0 = np.ascontiguousarray(hf[:, :-1, -1])
    lphin = L * phin[:, None, None]
    surf = ht - lphin
    ltg = np.einsum("qab,qb->qa", L, tg)
    ngrad = mix0 + ltg

    # the A + B = frame-Hessian invariant, checked block by block (the
    # off-blocks of A and B are zero or shared, so this is the full check)
    scale = 1.0 + float(np.max(np.abs(corner))) + float(np.max(np.abs(ht)))
    err_t = np.abs((surf + lphin) - ht).max()
    err_m = np.abs((ngrad - ltg) - mix0).max()
    if max(err_t, err_m) > BLOCK_TOL * scale:
        per_node = np.abs((surf + lphin) - ht).reshape(m, -1).max(axis=1)
        node = int(np.argmax(per_node))
        raise InvariantViolationError(
            f"A + B fails to reassemble the frame Hessian at node "
            f"{offset + node}: max deviation {max(err_t, err_m):.3e}"
        )

    return BoundaryFields(
        offset=offset, weights=sec.weights, shape=L,
        tangential_grad=tg, tangential_norm=s, normal_deriv=phin, cap=cap,
        frame_hessian=hf, surface_hessian=surf, normal_grad=ngrad,
        corner=corner,
    )


class FieldsCollection:
    """Replayable chunked view of all boundary fields of (grid, potential).

    Iterating yields BoundaryFields chunks in node order.  Small grids are
    cached after the first pass; large ones are recomputed per pass so the
    peak footprint stays bounded.
    """

    def __init__(self, grid: QuadratureGrid, potential: Potential,
                 tol_map: float = 1e-9, chunk_size: int = CHUNK_NODES):
        self.grid = grid
        self.potential = potential
        self.tol_map = tol_map
        self.chunk_size = chunk_size
        n = grid.points.shape[1]
        self._cacheable = len(grid) * n * n <= CACHE_BUDGET
        self._cache = None

    def __len__(self) -> int:
        return len(self.grid)

    @property
    def dim(self) -> int:
        return self.grid.points.shape[1]

    def __iter__(self):
        if self._cache is not None:
            yield from self._cache
            return
        store = [] if self._cacheable else None
        for lo in range(0, len(self.grid), self.chunk_size):
            hi = min(lo + self.chunk_size, len(self.grid))
            bf = _assemble_chunk(self.grid.section(lo, hi), self.potential,
                                 self.tol_map, lo)
            if store is not None:
                store.append(bf)
            yield bf
        if store is not None:
            self._cache = store


def boundary_fields(grid: QuadratureGrid, p: Potential,
                    tol_map: float = 1e-9,
                    chunk_size: int = CHUNK_NODES) -> FieldsCollection:
    """All per-node boundary fields of the potential on the grid.

    Raises InvariantViolationError (naming the node) if the gradient leaves
    the closed unit ball by more than tol_map, or if the A + B split fails
    to reassemble the frame Hessian to 1e-10.
    """
    return FieldsCollection(grid, p, tol_map=tol_map, chunk_size=chunk_size)


# ---------------------------------------------------------------------------
# Chunk-level algebra shared by the reductions
# ---------------------------------------------------------------------------


def _tr(mat: np.ndarray) -> np.ndarray:
    return np.einsum("qaa->q", mat)


def _frob(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.einsum("qab,qab->q", x, y)


def _dot(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.einsum("qa,qa->q", x, y)


def _t2_form(trx, tr_y, frob_xy, qfx, qfy, vx, vy, s2):
    """Quadratic form of the polarized second Newton tensor on the
    tangential gradient: [T_2(X, Y)](v, v) with v the tangential gradient.

    2 T_2(X, Y) = Sigma_2(X, Y) I - T_1(X) Y - T_1(Y) X collapses to
    0.5 Sigma_2 s^2 - 0.5 (tr X qf_Y + tr Y qf_X) + (X v).(Y v).
    """
    sigma2 = trx * tr_y - frob_xy
    return (0.5 * sigma2 * s2
            - 0.5 * (trx * qfy + tr_y * qfx)
            + np.einsum("qa,qa->q", vx, vy))


class _ChunkAlgebra:
    """Lazy per-chunk derived quantities; each is computed at most once."""

    def __init__(self, bf: BoundaryFields, cfg: SeriesConfig = DEFAULT_CONFIG):
        self.bf = bf
        self.cfg = cfg
        self.L = bf.shape
        self.S = bf.surface_hessian
        self.tg = bf.tangential_grad
        self.w = bf.weights
        self.phin = bf.normal_deriv
        self.cap = bf.cap
        self.s = bf.tangential_norm
        self.s2 = self.s * self.s
        self._t2 = {}

    @cached_property
    def trL(self):
        return _tr(self.L)

    @cached_property
    def trS(self):
        return _tr(self.S)

    @cached_property
    def vL(self):
        return np.einsum("qab,qb->qa", self.L, self.tg)

    @cached_property
    def vS(self):
        return np.einsum("qab,qb->qa", self.S, self.tg)

    @cached_property
    def qfL(self):
        return _dot(self.tg, self.vL)

    @cached_property
    def qfS(self):
        return _dot(self.tg, self.vS)

    @cached_property
    def sigma2_L(self):
        return 0.5 * (self.trL ** 2 - _frob(self.L, self.L))

    @cached_property
    def sigma2_S(self):
        return 0.5 * (self.trS ** 2 - _frob(self.S, self.S))

    @cached_property
    def pol_SL(self):
        return self.trS * self.trL - _frob(self.S, self.L)

    @cached_property
    def ric_qf(self):
        """Ric(tg, tg) via the Gauss equation Ric = T_1(L) L.

        Identical to [T_1(L) L](tg, tg); using the same expression for both
        makes the cap-substituted order-3 split cancel exactly node-wise.
        """
        return self.trL * self.qfL - _dot(self.vL, self.vL)

    @cached_property
    def t1SL_qf(self):
        return self.trS * self.qfL - _dot(self.vS, self.vL)

    @cached_property
    def trH(self):
        return _tr(self.bf.ambient_tangential)

    @cached_property
    def vH(self):
        return np.einsum("qab,qb->qa", self.bf.ambient_tangential, self.tg)

    @cached_property
    def qfH(self):
        return _dot(self.tg, self.vH)

    @cached_property
    def F(self):
        return series.series_f(self.s, self.cfg)

    @cached_property
    def G(self):
        return series.series_g(self.s, self.cfg)

    def t2qf(self, which: str) -> np.ndarray:
        """[T_2(X, Y)](tg, tg) for X, Y in {S, L, Ht}."""
        if which in self._t2:
            return self._t2[which]
        if which == "SS":
            out = _t2_form(self.trS, self.trS, _frob(self.S, self.S),
                           self.qfS, self.qfS, self.vS, self.vS, self.s2)
        elif which == "SL":
            out = _t2_form(self.trS, self.trL, _frob(self.S, self.L),
                           self.qfS, self.qfL, self.vS, self.vL, self.s2)
        elif which == "LL":
            out = _t2_form(self.trL, self.trL, _frob(self.L, self.L),
                           self.qfL, self.qfL, self.vL, self.vL, self.s2)
        elif which == "HH":
            ht = self.bf.ambient_tangential
            out = _t2_form(self.trH, self.trH, _frob(ht, ht),
                           self.qfH, self.qfH, self.vH, self.vH, self.s2)
        elif which == "HL":
            ht = self.bf.ambient_tangential
            out = _t2_form(self.trH, self.trL, _frob(ht, self.L),
                           self.qfH, self.qfL, self.vH, self.vL, self.s2)
        else:
            raise ValueError(f"unknown T_2 pairing {which!r}")
        self._t2[which] = out
        return out

    def bt_integrand(self, k: int) -> np.ndarray:
        """Pointwise Newton contraction [T_k(Hf) gradient]_normal."""
        bf = self.bf
        hf = bf.frame_hessian
        gfull = np.concatenate(
            [bf.tangential_grad, bf.normal_deriv[:, None]], axis=1)
        hg = np.einsum("qij,qj->qi", hf, gfull)
        tr = _tr(hf)
        if k == 1:
            return tr * bf.normal_deriv - hg[:, -1]
        sig2 = 0.5 * (tr ** 2 - _frob(hf, hf))
        hhg = np.einsum("qij,qj->qi", hf, hg)
        return sig2 * bf.normal_deriv - tr * hg[:, -1] + hhg[:, -1]


def _reduce(fields: FieldsCollection, weighted=None, scan_max=None,
            collectors=None, cfg: SeriesConfig = DEFAULT_CONFIG):
    """One pass over all chunks: weighted sums, running maxima, callbacks.

    weighted maps name -> fn(alg) -> (m,) integrand (integrated against the
    surface weights); scan_max maps name -> fn(alg) -> (m,) values tracked
    by their maximum; collectors are called as fn(alg) once per chunk.
    """
    sums = {k: 0.0 for k in (weighted or {})}
    maxes = {k: -math.inf for k in (scan_max or {})}
    for bf in fields:
        alg = _ChunkAlgebra(bf, cfg)
        if weighted:
            for name, fn in weighted.items():
                sums[name] += float(np.sum(alg.w * fn(alg)))
        if scan_max:
            for name, fn in scan_max.items():
                maxes[name] = max(maxes[name], float(np.max(fn(alg))))
        if collectors:
            for fn in collectors:
                fn(alg)
    return sums, maxes


def _accumulate(fields: FieldsCollection, terms, cfg=DEFAULT_CONFIG):
    return _reduce(fields, weighted=terms, cfg=cfg)[0]


# ---------------------------------------------------------------------------
# Boundary term (Newton tensor contraction against the map gradient)
# ---------------------------------------------------------------------------


def boundary_term(grid: QuadratureGrid, p: Potential, k: int,
                  fields: FieldsCollection | None = None) -> float:
    """Boundary contraction int [T_k(frame Hessian)]_{ij} grad_i nu_j dmu.

    The contraction is evaluated directly from trace powers, without
    materializing the Newton tensor: with the normal last in the frame the
    integrand is the last component of T_k(Hf) applied to the full frame
    gradient (tangential gradient, normal derivative).
    """
    if k not in (1, 2):
        raise ValueError("only the first two Newton contractions are defined")
    if fields is None:
        fields = boundary_fields(grid, p)
    t = _accumulate(fields, {"bt": lambda a: a.bt_integrand(k)})
    return t["bt"]


# ---------------------------------------------------------------------------
# Order-2 decompositions
# ---------------------------------------------------------------------------


_TERMS_2 = {
    "l21": lambda a: 2.0 * a.trS * a.phin,
    "l21p": lambda a: -2.0 * _dot(a.tg, a.bf.normal_grad),
    "l22": lambda a: a.trL * a.phin ** 2 + a.qfL,
    "m21": lambda a: 2.0 * a.trS * a.cap,
    "m22": lambda a: a.trL * a.cap ** 2 + a.qfL,
    "t1l": lambda a: a.trL * a.s2 - a.qfL,
    "claim": lambda a: (2.0 * a.trS * (a.phin - a.cap)
                        + a.trL * (a.phin ** 2 - a.cap ** 2)),
}


@dataclass(frozen=True)
class Decomposition2:
    L21: float      # 2 int (surface Laplacian) * normal_deriv
    L22: float      # int (H normal_deriv^2 + L(tg, tg))
    L21_by_parts: float  # -2 int tg . grad(normal_deriv), same up to parts

    @property
    def total(self) -> float:
        return self.L21 + self.L22


def L_decomposition_2(fields: FieldsCollection,
                      grid: QuadratureGrid | None = None) -> Decomposition2:
    """Split of the k=1 boundary term into Laplacian and curvature parts."""
    t = _accumulate(fields, {k: _TERMS_2[k] for k in ("l21", "l21p", "l22")})
    return Decomposition2(L21=t["l21"], L22=t["l22"], L21_by_parts=t["l21p"])


@dataclass(frozen=True)
class Functionals2:
    M21: float           # 2 int (surface Laplacian) * cap
    M22: float           # int (H cap^2 + L(tg, tg))
    T1L_energy: float    # int [T_1(L)](tg, tg)
    claim_slack: float   # int (2 Lap (phin - cap) + H (phin^2 - cap^2)), <= 0

    @property
    def total(self) -> float:
        return self.M21 + self.M22


def M_functionals_2(fields: FieldsCollection,
                    grid: QuadratureGrid | None = None) -> Functionals2:
    """Capped counterparts of the order-2 split, with the cap replacing the
    normal derivative, plus the shape-operator energy they compare against."""
    t = _accumulate(fields, {k: _TERMS_2[k]
                             for k in ("m21", "m22", "t1l", "claim")})
    return Functionals2(M21=t["m21"], M22=t["m22"], T1L_energy=t["t1l"],
                        claim_slack=t["claim"])


def Jk_recursion_residual(fields: FieldsCollection,
                          grid: QuadratureGrid | None = None,
                          k: int = 1) -> float:
    """|int Lap * s^(2k) - (2k/(2k+1)) int [T_1(S)](tg,tg) s^(2k-2)|.

    Both sides by direct quadrature; integration by parts on a closed
    surface makes them equal, so the residual measures quadrature error.
    """
    if k < 1:
        raise ValueError("recursion index must be >= 1")
    t = _accumulate(fields, {
        "lhs": lambda a: a.trS * a.s2 ** k,
        "rhs": lambda a: (a.trS * a.s2 - a.qfS) * a.s2 ** (k - 1),
    })
    return abs(t["lhs"] - (2.0 * k / (2.0 * k + 1.0)) * t["rhs"])


def weighted_sigma2_recursion_residual(fields: FieldsCollection,
                                       grid: QuadratureGrid | None = None,
                                       k: int = 0) -> float:
    """Residual of the weighted surface-sigma_2 recursion.

    k = 0 is the base identity int sigma_2(S) = (1/2) int Ric(tg, tg);
    k >= 1 relates int sigma_2(S) s^(2k) to the T_2(S,S) energy at weight
    s^(2k-2) plus a Ricci correction.
    """
    if k < 0:
        raise ValueError("recursion index must be >= 0")
    if k == 0:
        t = _accumulate(fields, {
            "lhs": lambda a: a.sigma2_S,
            "ric": lambda a: a.ric_qf,
        })
        return abs(t["lhs"] - 0.5 * t["ric"])
    t = _accumulate(fields, {
        "lhs": lambda a: a.sigma2_S * a.s2 ** k,
        "t2": lambda a: a.t2qf("SS") * a.s2 ** (k - 1),
        "ric": lambda a: a.ric_qf * a.s2 ** k,
    })
    rhs = (k / (k + 1.0)) * t["t2"] + t["ric"] / (2.0 * (k + 1.0))
    return abs(t["lhs"] - rhs)


def codazzi_residual(fields: FieldsCollection,
                     grid: QuadratureGrid | None = None) -> float:
    """|int Sigma_2(S, L) cap^2 - 2 int [T_1(L)](tg, S tg)|.

    The divergence-free property of T_1(L) (Codazzi) plus the chain rule
    for cap^2 = 1 - s^2 make the two quadratures agree on smooth domains.
    """
    t = _accumulate(fields, {
        "lhs": lambda a: a.pol_SL * a.cap ** 2,
        "rhs": lambda a: a.trL * a.qfS - _dot(a.vL, a.vS),
    })
    return abs(t["lhs"] - 2.0 * t["rhs"])


def divergence_totals(fields: FieldsCollection,
                      grid: QuadratureGrid | None = None):
    """(int Lap, int Sigma_2(S, L)); both vanish on closed surfaces."""
    t = _accumulate(fields, {
        "lap": lambda a: a.trS,
        "pol": lambda a: a.pol_SL,
    })
    return t["lap"], t["pol"]


# ---------------------------------------------------------------------------
# Order-3 decompositions
# ---------------------------------------------------------------------------


_TERMS_3 = {
    "l31": lambda a: (3.0 * a.sigma2_S - a.ric_qf) * a.phin,
    "l32": lambda a: 1.5 * a.pol_SL * a.phin ** 2 + a.t1SL_qf,
    "l33": lambda a: a.sigma2_L * a.phin ** 3 + a.ric_qf * a.phin,
    "m31": lambda a: (3.0 * a.sigma2_S - a.ric_qf) * a.cap,
    "m32": lambda a: 1.5 * a.pol_SL * a.cap ** 2 + a.t1SL_qf,
    "m33": lambda a: a.sigma2_L * a.cap ** 3 + a.ric_qf * a.cap,
    "e1": lambda a: -3.0 * a.F * a.t2qf("SS"),
    "e2": lambda a: -2.0 * a.t2qf("SL"),
    "e3": lambda a: -3.0 * a.G * a.t2qf("LL"),
    "t2l": lambda a: a.t2qf("LL"),
    "bracket": lambda a: (3.0 * a.sigma2_S * (a.phin - a.cap)
                          + 1.5 * a.pol_SL * (a.phin ** 2 - a.cap ** 2)
                          + a.sigma2_L * (a.phin ** 3 - a.cap ** 3)),
    "e11": lambda a: -3.0 * a.F * a.t2qf("HH"),
    "cross": lambda a: a.t2qf("HL") * (6.0 * a.F * a.phin - 2.0),
    "crossb": lambda a: -0.5 * a.t2qf("HL"),
}


@dataclass(frozen=True)
class Decomposition3:
    L31: float   # int (3 sigma_2(S) - Ric(tg, tg)) phin
    L32: float   # int ((3/2) Sigma_2(S, L) phin^2 + [T_1(S) L](tg, tg))
    L33: float   # int (sigma_2(L) phin^3 + [T_1(L) L](tg, tg) phin)

    @property
    def total(self) -> float:
        return self.L31 + self.L32 + self.L33


def L_decomposition_3(fields: FieldsCollection,
                      grid: QuadratureGrid | None = None) -> Decomposition3:
    """Split of the k=2 boundary term by powers of the normal derivative."""
    t = _accumulate(fields, {k: _TERMS_3[k] for k in ("l31", "l32", "l33")})
    return Decomposition3(L31=t["l31"], L32=t["l32"], L33=t["l33"])


@dataclass(frozen=True)
class Functionals3:
    M31: float
    M32: float
    M33: float
    E1: float            # -3 int [T_2(S, S)](tg, tg) F(s)
    E2: float            # -2 int [T_2(S, L)](tg, tg)
    E3: float            # -3 int [T_2(L, L)](tg, tg) G(s)
    T2L_energy: float    # int [T_2(L)](tg, tg)
    bracket: float       # cap-vs-normal-derivative slack of the order-3 sum
    E11: float           # -3 int [T_2(Ht, Ht)](tg, tg) F(s), always <= 0
    cross_pair: float    # int [T_2(Ht, L)](tg, tg) (6 F phin - 2)
    cross_pair_bound: float  # -(1/2) int [T_2(Ht, L)](tg, tg)
    gamma3_violations: tuple = ()

    @property
    def total(self) -> float:
        return self.M31 + self.M32 + self.M33

    @property
    def E_total(self) -> float:
        return self.E1 + self.E2 + self.E3


def _gamma3_collector(bad_nodes: list):
    def collect(a: _ChunkAlgebra):
        if len(bad_nodes) >= 32:
            return
        kmax = min(3, a.L.shape[-1])
        sig = symfun.batched_elementary(a.L, kmax)
        bad = np.where(np.any(sig[1:] <= 0.0, axis=0))[0]
        bad_nodes.extend(int(a.bf.offset + i) for i in bad[:32])
    return collect


def M_functionals_3(fields: FieldsCollection,
                    grid: QuadratureGrid | None = None,
                    cfg: SeriesConfig = DEFAULT_CONFIG) -> Functionals3:
    """Capped order-3 functionals, their tangential remainder terms and the
    shape-operator energy of the refined inequality.

    Nodes whose shape operator is not strictly inside the degree-3 positive
    cone are collected in gamma3_violations (capped list) rather than
    raising, so the caller can downgrade its verdict.  series_f / series_g
    raise if a node's tangential norm exceeds the validated range; that is
    deliberate (the bound is unproven out there).
    """
    bad: list[int] = []
    keys = ("m31", "m32", "m33", "e1", "e2", "e3", "t2l",
            "bracket", "e11", "cross", "crossb")
    sums, _ = _reduce(fields, weighted={k: _TERMS_3[k] for k in keys},
                      collectors=[_gamma3_collector(bad)], cfg=cfg)
    return Functionals3(
        M31=sums["m31"], M32=sums["m32"], M33=sums["m33"],
        E1=sums["e1"], E2=sums["e2"], E3=sums["e3"],
        T2L_energy=sums["t2l"], bracket=sums["bracket"],
        E11=sums["e11"], cross_pair=sums["cross"],
        cross_pair_bound=sums["crossb"],
        gamma3_violations=tuple(bad[:32]),
    )


# ---------------------------------------------------------------------------
# Pointwise bound
# ---------------------------------------------------------------------------


def P_pointwise(s, phi_n, cfg: SeriesConfig = DEFAULT_CONFIG):
    """P(s, phi_n) = -3 F(s) phi_n^2 + 2 phi_n - 3 G(s); at most -1/4 on the
    admissible region 0 <= phi_n <= sqrt(1 - s^2), 0 <= s <= s_max."""
    s = np.asarray(s, dtype=float)
    phi_n = np.asarray(phi_n, dtype=float)
    if np.any(s < 0.0) or np.any(s > cfg.s_max):
        raise ValueError(f"s outside [0, {cfg.s_max}]")
    lim = np.sqrt(np.clip(1.0 - s * s, 0.0, None))
    if np.any(phi_n < -1e-15) or np.any(phi_n > lim + 1e-12):
        raise ValueError("normal component outside [0, sqrt(1 - s^2)]")
    out = (-3.0 * series.series_f(s, cfg) * phi_n ** 2
           + 2.0 * phi_n - 3.0 * series.series_g(s, cfg))
    if out.ndim == 0:
        return float(out)
    return out


def P_grid_max(cfg: SeriesConfig = DEFAULT_CONFIG,
               n_s: int = 500, n_normal: int = 500) -> float:
    """Max of P over an n_s x n_normal grid of the admissible region."""
    s = np.linspace(0.0, cfg.s_max, n_s)
    frac = np.linspace(0.0, 1.0, n_normal)
    lim = np.sqrt(1.0 - s * s)
    phin = frac[None, :] * lim[:, None]
    f = series.series_f(s, cfg)[:, None]
    g = series.series_g(s, cfg)[:, None]
    p = -3.0 * f * phin ** 2 + 2.0 * phin - 3.0 * g
    return float(np.max(p))


# ---------------------------------------------------------------------------
# Chain reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainLink:
    name: str
    lhs: float
    rhs: float
    margin: float   # (rhs - lhs) / scale, >= -tol when the link holds
    holds: bool

    def to_json_dict(self):
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "margin": self.margin, "holds": self.holds}


def _link(name: str, lhs: float, rhs: float, tol: float) -> ChainLink:
    scale = max(abs(lhs), abs(rhs), 1e-12)
    margin = (rhs - lhs) / scale
    return ChainLink(name=name, lhs=float(lhs), rhs=float(rhs),
                     margin=float(margin), holds=bool(margin >= -tol))


@dataclass
class CheckReport:
    inequality: str
    lhs: float
    rhs: float
    ratio: float
    links: tuple
    residuals: dict
    quadrature: int
    provenance: str
    verdict: str
    tolerance: float
    flags: tuple = ()
    cone_margins: tuple = ()
    cone_nodes: tuple = ()

    def to_json_dict(self):
        return {
            "id": self.inequality,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "links": [lk.to_json_dict() for lk in self.links],
            "residuals": {k: self.residuals[k]
                          for k in sorted(self.residuals)},
            "quadrature": self.quadrature,
            "provenance": self.provenance,
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "flags": list(self.flags),
            "cone": {"margins": list(self.cone_margins),
                     "nodes": list(self.cone_nodes)},
        }


def report_to_json(report: CheckReport) -> str:
    """Deterministic JSON text: fixed key order, repr-exact floats."""
    return json.dumps(report.to_json_dict(), indent=1)


def _cone_scan(grid: QuadratureGrid, kmax: int, chunk: int = CHUNK_NODES):
    """Min sigma_j(L) over nodes for j = 1..kmax, plus violating node ids."""
    d = grid.shape_ops.shape[-1]
    kmax = min(kmax, d)
    mins = np.full(kmax, np.inf)
    nodes: list[int] = []
    for lo in range(0, len(grid), chunk):
        sig = symfun.batched_elementary(grid.shape_ops[lo:lo + chunk], kmax)
        mins = np.minimum(mins, sig[1:].min(axis=1))
        if len(nodes) < 32:
            bad = np.where(np.any(sig[1:] <= 0.0, axis=0))[0]
            nodes.extend(int(lo + i) for i in bad[:32])
    return tuple(float(v) for v in mins), tuple(nodes[:32])


def _grid_totals(grid: QuadratureGrid, chunk: int = CHUNK_NODES):
    """(volume, int H dmu, int sigma_2(L) dmu) from the boundary grid."""
    vol = 0.0
    h_tot = 0.0
    s2_tot = 0.0
    n = grid.points.shape[1]
    for lo in range(0, len(grid), chunk):
        sec = grid.section(lo, min(lo + chunk, len(grid)))
        w = sec.weights
        vol += float(np.sum(w * np.einsum(
            "qi,qi->q", sec.points, sec.normals))) / n
        tr = _tr(sec.shape_ops)
        h_tot += float(np.sum(w * tr))
        s2_tot += float(np.sum(
            w * 0.5 * (tr ** 2 - _frob(sec.shape_ops, sec.shape_ops))))
    return vol, h_tot, s2_tot


def _map_hessian_floor(fields: FieldsCollection) -> float:
    """Smallest sigma_j(frame Hessian) over nodes and j = 1..n; positive iff
    the map Hessian is positive definite everywhere it was sampled.

    Constant isotropic and diagonal Hessians admit closed forms; only
    genuinely varying Hessians pay for the batched char-poly scan.
    """
    n = fields.dim
    kind, data = fields.potential.hess_compact(fields.grid.points[:1])
    if kind == "diag":
        e = symfun._elementary_from_values(np.asarray(data, float), n)
        return float(np.min(e[1:]))
    if kind == "scalar":
        worst = math.inf
        for bf in fields:
            # for an isotropic Hessian the corner entry is the scalar
            for c in (float(bf.corner.min()), float(bf.corner.max())):
                worst = min(worst, *(math.comb(n, j) * c ** j
                                     for j in range(1, n + 1)))
        return worst
    worst = math.inf
    for bf in fields:
        sig = symfun.batched_elementary(bf.frame_hessian, n)
        worst = min(worst, float(sig[1:].min()))
    return worst


def _interior_stats(p: Potential):
    """(sigma_2, sigma_3, det) of the constant ambient Hessian, or None."""
    if p.kind not in ("quadratic_isotropic", "quadratic_diag"):
        return None
    n = p.dim
    kind, data = p.hess_compact(np.zeros((1, n)))
    eig = np.full(n, data[0]) if kind == "scalar" else np.asarray(data, float)
    e = symfun._elementary_from_values(eig, min(3, n))
    det = float(np.prod(eig))
    sig2 = float(e[2]) if n >= 2 else 0.0
    sig3 = float(e[3]) if n >= 3 else 0.0
    return sig2, sig3, det


def _default_tol(provenance: str, tol: float | None) -> float:
    if tol is not None:
        return tol
    return 5e-2 if provenance == "semi_discrete" else 1e-6


def _verdict(links, ratio: float, tol: float, cone_ok: bool) -> str:
    if not all(lk.holds for lk in links):
        return "violated"
    verdict = "equality_within_tol" if abs(ratio - 1.0) <= tol else "holds"
    if not cone_ok and verdict == "equality_within_tol":
        # precondition failure downgrades the strongest verdict
        verdict = "holds"
    return verdict


def check_af1(spec: DomainSpec, p: Potential | None = None,
              grid: QuadratureGrid | None = None,
              cfg: SeriesConfig = DEFAULT_CONFIG,
              order: int = 24, tol: float | None = None) -> CheckReport:
    """Verify the order-1 chain from the volume to the mean curvature.

    With a potential the chain runs volume -> boundary term -> refined
    middle bound -> total mean curvature, each link checked separately and
    every intermediate identity recorded as a residual.  Without one the
    report contains the single end-to-end inequality, which only needs the
    boundary geometry.
    """
    if grid is None:
        grid = geometry.boundary_quadrature(spec, order)
    n = spec.dim
    provenance = p.provenance if p is not None else "geometry_only"
    tol = _default_tol(provenance, tol)

    vol, h_tot, _ = _grid_totals(grid)
    c1 = unit_ball_volume(n) ** (-2.0 / n) / (n * (n - 1))
    lhs = vol ** ((n - 2.0) / n)
    rhs = c1 * h_tot

    cone_margins, cone_nodes = _cone_scan(grid, kmax=2)
    cone_ok = all(m > 0.0 for m in cone_margins)
    flags = []
    if n == 2:
        flags.append("boundary_case")
    if not cone_ok:
        flags.append("cone_violation")

    residuals: dict = {
        "volume_vs_reference": abs(vol - geometry.reference_volume(spec))
        / max(vol, 1e-12),
    }

    if p is None:
        links = (_link("volume_to_curvature", lhs, rhs, tol),)
    else:
        fields = boundary_fields(grid, p)
        terms = {"bt1": lambda a: a.bt_integrand(1), "lap": lambda a: a.trS,
                 "jk_lhs": lambda a: a.trS * a.s2,
                 "jk_rhs": lambda a: a.trS * a.s2 - a.qfS}
        terms.update(_TERMS_2)
        sums, maxes = _reduce(fields, weighted=terms,
                              scan_max={"smax": lambda a: a.s}, cfg=cfg)
        bt1 = sums["bt1"]
        refined = h_tot - sums["t1l"] / 3.0
        links = (
            _link("volume_to_transport", lhs, c1 * bt1, tol),
            _link("transport_to_refined", c1 * bt1, c1 * refined, tol),
            _link("refined_to_curvature", c1 * refined, rhs, tol),
        )
        scale = max(abs(bt1), 1e-12)
        hscale = max(abs(h_tot), 1e-12)
        residuals.update({
            "split_sum": abs(sums["l21"] + sums["l22"] - bt1) / scale,
            "l21_by_parts": abs(sums["l21"] - sums["l21p"]) / scale,
            "m22_trace_identity":
                abs(sums["m22"] + sums["t1l"] - h_tot) / hscale,
            "claim_slack": sums["claim"] / hscale,
            "m21_bound_margin":
                (2.0 / 3.0 * sums["t1l"] - sums["m21"]) / hscale,
            "jk_k1": abs(sums["jk_lhs"] - (2.0 / 3.0) * sums["jk_rhs"])
                / hscale,
            "laplacian_total": sums["lap"] / hscale,
            "map_hessian_min_sigma": _map_hessian_floor(fields),
            "max_tangential_norm": maxes["smax"],
        })
        stats = _interior_stats(p)
        if stats is not None:
            sig2, _, det = stats
            residuals["interior_divergence"] = abs(
                2.0 * sig2 * vol - bt1) / scale
            residuals["interior_am_gm_margin"] = (
                sig2 / math.comb(n, 2) - det ** (2.0 / n)) * vol / scale
        if p.provenance == "semi_discrete":
            flags.append("hessian_psd_clamped")

    ratio = rhs / lhs if lhs != 0.0 else math.inf
    verdict = _verdict(links, ratio, tol, cone_ok)
    return CheckReport(
        inequality="af1", lhs=float(lhs), rhs=float(rhs), ratio=float(ratio),
        links=links,
        residuals={k: float(v) for k, v in residuals.items()},
        quadrature=grid.order, provenance=provenance, verdict=verdict,
        tolerance=tol, flags=tuple(flags),
        cone_margins=cone_margins, cone_nodes=cone_nodes,
    )


def check_af2(spec: DomainSpec, p: Potential | None = None,
              grid: QuadratureGrid | None = None,
              cfg: SeriesConfig = DEFAULT_CONFIG,
              order: int = 24, tol: float | None = None) -> CheckReport:
    """Verify the order-2 chain from the volume to the total sigma_2 of the
    shape operator, including every sub-claim of the capped decomposition:
    the bracket sign, the paired cross-term bound, the tangential remainder
    bound against the T_2(L) energy, and the recomposition identity."""
    n = spec.dim
    if n < 3:
        raise ValueError("the order-2 chain needs boundary dimension >= 2")
    if grid is None:
        grid = geometry.boundary_quadrature(spec, order)
    provenance = p.provenance if p is not None else "geometry_only"
    tol = _default_tol(provenance, tol)

    vol, _, sig2_tot = _grid_totals(grid)
    c2 = unit_ball_volume(n) ** (-3.0 / n) / (3.0 * math.comb(n, 3))
    lhs = vol ** ((n - 3.0) / n)
    rhs = c2 * sig2_tot

    cone_margins, cone_nodes = _cone_scan(grid, kmax=3)
    cone_ok = all(m > 0.0 for m in cone_margins)
    flags = []
    if n == 3:
        flags.append("boundary_case")
    if not cone_ok:
        flags.append("cone_violation")

    residuals: dict = {
        "volume_vs_reference": abs(vol - geometry.reference_volume(spec))
        / max(vol, 1e-12),
    }

    if p is None:
        links = (_link("volume_to_curvature", lhs, rhs, tol),)
    else:
        fields = boundary_fields(grid, p)
        bad: list[int] = []
        terms = {
            "bt2": lambda a: a.bt_integrand(2),
            "cod_lhs": lambda a: a.pol_SL * a.cap ** 2,
            "cod_rhs": lambda a: a.trL * a.qfS - _dot(a.vL, a.vS),
            "a0_lhs": lambda a: a.sigma2_S,
            "a0_ric": lambda a: a.ric_qf,
            "a1_lhs": lambda a: a.sigma2_S * a.s2,
            "a1_t2": lambda a: a.t2qf("SS"),
            "a1_ric": lambda a: a.ric_qf * a.s2,
            "pol": lambda a: a.pol_SL,
        }
        terms.update(_TERMS_3)
        sums, maxes = _reduce(fields, weighted=terms,
                              scan_max={"smax": lambda a: a.s},
                              collectors=[_gamma3_collector(bad)], cfg=cfg)
        bt2 = sums["bt2"]
        e_total = sums["e1"] + sums["e2"] + sums["e3"]
        m_total = sums["m31"] + sums["m32"] + sums["m33"]
        refined = sig2_tot - sums["t2l"] / 4.0
        links = (
            _link("volume_to_transport", lhs, c2 * bt2, tol),
            _link("transport_to_refined", c2 * bt2, c2 * refined, tol),
            _link("refined_to_curvature", c2 * refined, rhs, tol),
        )
        scale = max(abs(bt2), 1e-12)
        sscale = max(abs(sig2_tot), 1e-12)
        residuals.update({
            "split_sum":
                abs(sums["l31"] + sums["l32"] + sums["l33"] - bt2) / scale,
            "recomposition":
                abs(m_total - sig2_tot - e_total) / sscale,
            "bracket_slack": sums["bracket"] / sscale,
            "e_sum_margin":
                (-0.25 * sums["t2l"] - e_total) / sscale,
            "lemma_pair_margin":
                (sums["crossb"] - sums["cross"]) / sscale,
            "lemma_sign": -sums["crossb"] / sscale,
            "pure_tangential_sign": -sums["e11"] / sscale,
            "m32_codazzi": abs(sums["m32"] - sums["e2"]) / sscale,
            "codazzi_capsq":
                abs(sums["cod_lhs"] - 2.0 * sums["cod_rhs"]) / sscale,
            "weighted_sigma2_base":
                abs(sums["a0_lhs"] - 0.5 * sums["a0_ric"]) / sscale,
            "weighted_sigma2_k1":
                abs(sums["a1_lhs"] - 0.5 * sums["a1_t2"]
                    - 0.25 * sums["a1_ric"]) / sscale,
            "polarization_total": sums["pol"] / sscale,
            "map_hessian_min_sigma": _map_hessian_floor(fields),
            "max_tangential_norm": maxes["smax"],
        })
        if bad:
            flags.append("cone_violation_nodes")
            cone_nodes = tuple(sorted(set(cone_nodes) | set(bad)))[:32]
        stats = _interior_stats(p)
        if stats is not None:
            _, sig3, det = stats
            residuals["interior_divergence"] = abs(
                3.0 * sig3 * vol - bt2) / scale
            residuals["interior_am_gm_margin"] = (
                sig3 / math.comb(n, 3) - det ** (3.0 / n)) * vol / scale
        if p.provenance == "semi_discrete":
            flags.append("hessian_psd_clamped")

    ratio = rhs / lhs if lhs != 0.0 else math.inf
    verdict = _verdict(links, ratio, tol, cone_ok)
    return CheckReport(
        inequality="af2", lhs=float(lhs), rhs=float(rhs), ratio=float(ratio),
        links=links,
        residuals={k: float(v) for k, v in residuals.items()},
        quadrature=grid.order, provenance=provenance, verdict=verdict,
        tolerance=tol, flags=tuple(flags),
        cone_margins=cone_margins, cone_nodes=cone_nodes,
    )
