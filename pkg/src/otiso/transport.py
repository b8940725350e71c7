"""Brenier potentials onto the unit ball, closed-form and semi-discrete.

Potentials push the uniform probability measure on a domain to the uniform
measure on the unit ball.  Balls and ellipsoids admit linear transport maps
written down in closed form.  In the plane a damped-Newton semi-discrete
solver produces the Kantorovich dual weights of an atomic target filling
the disk; its Laguerre (power) cells are clipped exactly against a
polygonal approximation of the domain, so cell masses and the Newton
Jacobian are exact up to float rounding.

Conventions: the potential is convex, its gradient is the transport map,
gradients of semi-discrete potentials take values in the target point set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse
import scipy.sparse.linalg
import scipy.spatial

from . import geometry
from .geometry import DomainSpec, InvalidDomainError, UnsupportedDomainError


class SolverError(RuntimeError):
    """Semi-discrete Newton solve failed to converge."""


_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


# ---------------------------------------------------------------------------
# Potential objects
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Potential:
    """Convex transport potential with closed-form derivative evaluators.

    kind 'quadratic_isotropic': phi = |x|^2 / (2 radius), gradient x/radius.
    kind 'quadratic_diag': phi = sum x_i^2 / (2 a_i), gradient x_i/a_i.
    kind 'cubic': quadratic plus a symmetric third-order form, for
        finite-difference identity tests on a unit box (no source domain).
    kind 'piecewise_affine': max of affine functions from semi-discrete
        dual weights; Hessians are recovered by local affine regression of
        the gradient, symmetrized and eigenvalue-clamped at zero.
    """

    provenance: str                       # closed_form | semi_discrete | synthetic
    kind: str
    spec: DomainSpec | None = None
    radius: float | None = None
    inv_axes: tuple[float, ...] | None = None
    cubic: np.ndarray | None = None       # (n,n,n) symmetric third-order form
    dual: "DualWeights | None" = None
    smoothing_radius: float | None = None

    @property
    def dim(self) -> int:
        if self.spec is not None:
            return self.spec.dim
        return self.cubic.shape[0]

    # -- evaluators ---------------------------------------------------------

    def value(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind == "quadratic_isotropic":
            return 0.5 * np.sum(pts * pts, axis=1) / self.radius
        if self.kind == "quadratic_diag":
            ia = np.array(self.inv_axes)
            return 0.5 * np.sum(pts * pts * ia, axis=1)
        if self.kind == "cubic":
            quad = 0.5 * np.sum(pts * pts, axis=1)
            cub = np.einsum("ijk,qi,qj,qk->q", self.cubic, pts, pts, pts) / 6.0
            return quad + cub
        _require_near_polygon(self.dual, pts)
        return _affine_max_value(self.dual, pts)

    def grad(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind == "quadratic_isotropic":
            return pts / self.radius
        if self.kind == "quadratic_diag":
            return pts * np.array(self.inv_axes)
        if self.kind == "cubic":
            return pts + 0.5 * np.einsum("ijk,qj,qk->qi", self.cubic, pts, pts)
        _require_near_polygon(self.dual, pts)
        owner = _affine_argmax(self.dual, pts)
        return self.dual.points[owner]

    def hess_compact(self, pts: np.ndarray):
        """Ambient Hessian as ('scalar', c) / ('diag', v) / ('full', H)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind == "quadratic_isotropic":
            return ("scalar", np.full(pts.shape[0], 1.0 / self.radius))
        if self.kind == "quadratic_diag":
            return ("diag", np.array(self.inv_axes))
        if self.kind == "cubic":
            n = self.dim
            h = np.eye(n)[None, :, :] + np.einsum("ijk,qk->qij", self.cubic, pts)
            return ("full", h)
        return ("full", _recovered_hessian(self, pts))

    def hess(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        kind, data = self.hess_compact(pts)
        n = pts.shape[1]
        if kind == "scalar":
            return data[:, None, None] * np.eye(n)[None, :, :]
        if kind == "diag":
            return np.broadcast_to(np.diag(data), (pts.shape[0], n, n)).copy()
        return data


def closed_form_potential(spec: DomainSpec) -> Potential:
    """Linear Brenier map onto the unit ball for balls and ellipsoids."""
    if spec.family == "ball":
        return Potential(provenance="closed_form", kind="quadratic_isotropic",
                         spec=spec, radius=spec.radius)
    if spec.family == "ellipsoid":
        return Potential(provenance="closed_form", kind="quadratic_diag",
                         spec=spec, inv_axes=tuple(1.0 / a for a in spec.axes))
    raise UnsupportedDomainError(
        f"no closed-form potential for family {spec.family!r}; "
        "use semidiscrete_solve (dim 2) instead"
    )


def cubic_test_potential(dim: int, seed: int, strength: float = 0.4) -> Potential:
    """Random convex quadratic-plus-cubic potential on the unit box.

    The Hessian is I + A(x) with A linear in x; row sums of |A| are kept
    below `strength` on [-1, 1]^dim, so the potential is uniformly convex
    there.  Entries of the Newton tensors are then polynomials of degree
    <= 2 in x and central differences of them are exact.
    """
    gen = np.random.Generator(np.random.Philox(key=seed))
    m = gen.uniform(-1.0, 1.0, size=(dim, dim, dim))
    m = m + m.transpose(1, 0, 2) + m.transpose(2, 1, 0) \
        + m.transpose(0, 2, 1) + m.transpose(1, 2, 0) + m.transpose(2, 0, 1)
    # the 6-way sum is symmetric only up to addition order; this pairwise
    # average makes the Hessian's index symmetry exact in floating point
    m = 0.5 * (m + m.transpose(1, 0, 2))
    row_mass = np.abs(m).sum(axis=(1, 2)).max()
    m *= strength / row_mass
    return Potential(provenance="synthetic", kind="cubic", cubic=m)


# ---------------------------------------------------------------------------
# Monge-Ampere and pushforward diagnostics
# ---------------------------------------------------------------------------


def monge_ampere_residual(p: Potential, points: np.ndarray) -> float:
    """max over points of |det Hess - target| / target, target = omega_n/vol."""
    if p.spec is None:
        raise InvalidDomainError("potential has no source domain")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(geometry.implicit_value(p.spec, points) > 1e-9):
        raise InvalidDomainError("Monge-Ampere residual point outside the domain")
    target = geometry.unit_ball_volume(p.spec.dim) / geometry.reference_volume(p.spec)
    dets = np.linalg.det(p.hess(points))
    return float(np.max(np.abs(dets - target)) / target)


def pushforward_check(p: Potential, order: int = 32) -> float:
    """Radial-CDF discrepancy of the image measure against the uniform ball.

    The image of a volume quadrature under the gradient map is an atomic
    measure; its cumulative weights at each image radius are compared with
    r^n using the half-atom (midpoint) convention, after grouping radii
    that coincide up to 1e-11.  Semi-discrete potentials contribute their
    Laguerre cells directly as atoms at the target points.
    """
    n = p.dim
    if p.kind == "piecewise_affine":
        radii = np.linalg.norm(p.dual.points, axis=1)
        wts = np.asarray(p.dual.masses, dtype=float)
    else:
        pts, wts = geometry.interior_quadrature(
            p.spec, order, radial_nodes=max(256, 4 * order))
        radii = np.linalg.norm(p.grad(pts), axis=1)
    wts = wts / np.sum(wts)
    idx = np.argsort(radii, kind="stable")
    radii = radii[idx]
    wts = wts[idx]
    new_group = np.empty(radii.size, dtype=bool)
    new_group[0] = True
    new_group[1:] = np.diff(radii) > 1e-11
    gid = np.cumsum(new_group) - 1
    n_groups = gid[-1] + 1
    gw = np.zeros(n_groups)
    np.add.at(gw, gid, wts)
    g_radius = radii[new_group]
    cum = np.cumsum(gw)
    mid = cum - 0.5 * gw
    target = np.minimum(g_radius, 1.0) ** n
    return float(np.max(np.abs(mid - target)))


def ga_step_margin(p: Potential, points: np.ndarray, k: int) -> float:
    """min over points of sigma_(k+1)(H)/binom(n,k+1) - det(H)^((k+1)/n).

    Nonnegative for positive semidefinite Hessians (arithmetic-geometric
    mean inequality applied to eigenvalues).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    h = p.hess(points)
    n = h.shape[-1]
    lam = np.linalg.eigvalsh(h)
    from .symfun import _elementary_from_values

    sig = np.array([_elementary_from_values(l, k + 1)[k + 1] for l in lam])
    dets = np.prod(lam, axis=1)
    dets = np.maximum(dets, 0.0)
    return float(np.min(sig / math.comb(n, k + 1) - dets ** ((k + 1) / n)))


def cyclical_monotonicity_margin(p: Potential, x: np.ndarray, xp: np.ndarray) -> float:
    """min of (grad(x) - grad(x')) . (x - x') over paired points."""
    gx = p.grad(x)
    gxp = p.grad(xp)
    return float(np.min(np.einsum("qi,qi->q", gx - gxp, np.atleast_2d(x) - np.atleast_2d(xp))))


def newton_divergence_fd(p: Potential, x0: np.ndarray, k: int, h: float = 1e-3) -> float:
    """max |sum_j d_j [T_k(Hess)]_{ij}| at x0 by central finite differences."""
    from . import symfun

    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    div = np.zeros(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        t_plus = symfun.newton_tensor(p.hess((x0 + e)[None])[0], k)
        t_minus = symfun.newton_tensor(p.hess((x0 - e)[None])[0], k)
        div += (t_plus[:, j] - t_minus[:, j]) / (2.0 * h)
    return float(np.max(np.abs(div)))


# ---------------------------------------------------------------------------
# Semi-discrete solver (dim 2): exact Laguerre cells over a polygon
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualWeights:
    """Converged Kantorovich dual data for the semi-discrete problem."""

    points: np.ndarray     # (N, 2) target atoms in the open unit disk
    weights: np.ndarray    # (N,) dual weights
    masses: np.ndarray     # (N,) Laguerre cell masses, sum = polygon area
    residual: float        # final max |mass - target mass|
    seed: int
    spec: DomainSpec

    def polygon(self) -> np.ndarray:
        return polygonize(self.spec)


def polygonize(spec: DomainSpec, n_vertices: int = 512) -> np.ndarray:
    """Inscribed polygon of the boundary, counterclockwise."""
    if spec.dim != 2:
        raise UnsupportedDomainError("polygonization is for planar domains")
    ang = 2.0 * math.pi * np.arange(n_vertices) / n_vertices
    u = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return geometry.radial_function(spec, u)[:, None] * u


def polygon_area(verts: np.ndarray) -> float:
    x, y = verts[:, 0], verts[:, 1]
    return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def disk_fill(n: int, seed: int) -> np.ndarray:
    """Low-discrepancy golden-angle fill of the unit disk, seeded rotation."""
    gen = np.random.Generator(np.random.Philox(key=seed))
    rot = gen.uniform(0.0, 2.0 * math.pi)
    i = np.arange(n)
    r = np.sqrt((i + 0.5) / n)
    th = i * _GOLDEN_ANGLE + rot
    pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    pts += gen.normal(0.0, 1e-9, size=pts.shape)  # break exact collinearity
    return pts


def _lower_hull_facets(y: np.ndarray, psi: np.ndarray):
    """Regular-triangulation facets of the lifted points, ghosts appended.

    Ghosts close the unbounded cells.  They sit at 8x the point span, far
    enough that their bisectors with any real point clear the domain, yet
    close enough that the lifted hull stays well conditioned; Qbb rescales
    the paraboloid coordinate for the same reason.
    """
    n = y.shape[0]
    span = float(np.max(np.abs(y))) + 1.0
    g = 8.0 * span
    ghosts = np.array([[g, 0.0], [-g, 0.0], [0.0, g], [0.0, -g]])
    pts = np.vstack([y, ghosts])
    z = np.einsum("qi,qi->q", pts, pts)
    z[:n] -= psi
    lifted = np.column_stack([pts, z])
    hull = scipy.spatial.ConvexHull(lifted, qhull_options="Qt Qbb")
    lower = hull.equations[:, 2] < -1e-12
    return hull.simplices[lower], pts, z


def _clip_halfplane(verts, labels, a, b, label):
    """Sutherland-Hodgman step for a . x <= b; edge labels carried along.

    labels[i] names the constraint that generated the edge leaving verts[i]
    (>= 0 neighbor index, -1 domain boundary, -2 initial bounding box).
    """
    m = len(verts)
    if m == 0:
        return verts, labels
    d = [verts[i][0] * a[0] + verts[i][1] * a[1] - b for i in range(m)]
    out_v, out_l = [], []
    for i in range(m):
        j = (i + 1) % m
        di, dj = d[i], d[j]
        vi, vj = verts[i], verts[j]
        if di <= 0.0:
            if dj <= 0.0:
                out_v.append(vj)
                out_l.append(labels[j])
            else:
                t = di / (di - dj)
                x = (vi[0] + t * (vj[0] - vi[0]), vi[1] + t * (vj[1] - vi[1]))
                out_v.append(x)
                out_l.append(label)
        elif dj <= 0.0:
            t = di / (di - dj)
            x = (vi[0] + t * (vj[0] - vi[0]), vi[1] + t * (vj[1] - vi[1]))
            out_v.append(x)
            out_l.append(labels[i])
            out_v.append(vj)
            out_l.append(labels[j])
    return out_v, out_l


@dataclass
class CellComplex:
    masses: np.ndarray
    centroids: np.ndarray
    second_moments: np.ndarray     # integral of |x - y_j|^2 over cell j
    edge_rows: np.ndarray          # interface (j, k) pairs, j < k
    edge_lengths: np.ndarray
    cells: list                    # per-cell vertex lists (tuples)


def laguerre_cells(polygon: np.ndarray, y: np.ndarray, psi: np.ndarray) -> CellComplex:
    """Exact Laguerre cells of (y, psi) intersected with a convex polygon.

    Cells start from the regular-triangulation neighbor halfplanes (exact:
    non-neighbor constraints are redundant for points on the lower hull)
    and are clipped only against polygon edges some cell vertex violates
    (exact for convex polygons: a halfplane containing every vertex of a
    convex cell contains the cell).
    """
    n = y.shape[0]
    facets, pts, z = _lower_hull_facets(y, psi)
    neighbors = [set() for _ in range(n)]
    on_hull = np.zeros(n, dtype=bool)
    for (a, b, c) in facets:
        for i, j in ((a, b), (b, c), (a, c)):
            if i < n:
                on_hull[i] = True
                neighbors[i].add(j)
            if j < n:
                on_hull[j] = True
                neighbors[j].add(i)

    # polygon edge halfplanes (outward normals), and its inradius about 0
    nxt = np.roll(polygon, -1, axis=0)
    edge = nxt - polygon
    elen = np.linalg.norm(edge, axis=1)
    e_normal = np.stack([edge[:, 1], -edge[:, 0]], axis=1) / elen[:, None]
    e_b = np.einsum("qi,qi->q", e_normal, polygon)
    inradius = float(np.min(e_b))

    span = float(np.max(np.abs(polygon))) * 2.0 + float(np.max(np.abs(y))) + 1.0
    box_r = 2e3 * span
    box = [(-box_r, -box_r), (box_r, -box_r), (box_r, box_r), (-box_r, box_r)]

    masses = np.zeros(n)
    centroids = np.zeros((n, 2))
    second = np.zeros(n)
    edge_acc: dict[tuple[int, int], float] = {}
    cells = []
    for j in range(n):
        if not on_hull[j]:
            cells.append(())
            continue
        verts = list(box)
        labels = [-2, -2, -2, -2]
        yj = y[j]
        for k in sorted(neighbors[j]):
            a = 2.0 * (pts[k] - yj)
            b = z[k] - z[j]
            verts, labels = _clip_halfplane(verts, labels, a, b, k)
            if not verts:
                break
        if verts:
            vx = np.array(verts)
            if np.max(np.einsum("vi,vi->v", vx, vx)) > (inradius - 1e-12) ** 2:
                viol = np.einsum("vi,ei->ve", vx, e_normal) > e_b[None, :] + 1e-14
                for e_idx in np.nonzero(np.any(viol, axis=0))[0]:
                    verts, labels = _clip_halfplane(
                        verts, labels, tuple(e_normal[e_idx]), e_b[e_idx], -1)
                    if not verts:
                        break
        cells.append(tuple(verts))
        if len(verts) < 3:
            continue
        vx = np.array(verts)
        rel = vx - yj
        cross = rel[:, 0] * np.roll(rel[:, 1], -1) - np.roll(rel[:, 0], -1) * rel[:, 1]
        tri_a = 0.5 * cross
        area = float(np.sum(tri_a))
        masses[j] = area
        rel_n = np.roll(rel, -1, axis=0)
        centroids[j] = yj + np.sum(tri_a[:, None] * (rel + rel_n), axis=0) / (3.0 * area)
        dots = (np.einsum("qi,qi->q", rel, rel)
                + np.einsum("qi,qi->q", rel, rel_n)
                + np.einsum("qi,qi->q", rel_n, rel_n))
        second[j] = float(np.sum(tri_a * dots) / 6.0)
        for v_idx, lab in enumerate(labels):
            if lab >= 0 and lab < n:
                w_idx = (v_idx + 1) % len(verts)
                seg = np.hypot(verts[w_idx][0] - verts[v_idx][0],
                               verts[w_idx][1] - verts[v_idx][1])
                key = (j, lab) if j < lab else (lab, j)
                # each interface is measured once from either side
                edge_acc[key] = edge_acc.get(key, 0.0) + 0.5 * seg
    total = float(np.sum(masses))
    poly_area = polygon_area(polygon)
    if abs(total - poly_area) > 1e-8 * poly_area:
        # cells partition the polygon for every weight vector; a gap or an
        # overlap means the triangulation lost a neighbor pair
        raise SolverError(
            f"Laguerre cells do not partition the domain: cell mass {total:.12g}"
            f" vs polygon area {poly_area:.12g}")
    rows = np.array(sorted(edge_acc.keys()), dtype=int).reshape(-1, 2)
    lengths = np.array([edge_acc[tuple(r)] for r in rows])
    return CellComplex(masses=masses, centroids=centroids, second_moments=second,
                       edge_rows=rows, edge_lengths=lengths, cells=cells)


def _dual_objective(cc: CellComplex, psi: np.ndarray, nu: np.ndarray) -> float:
    """Concave dual functional maximized by the optimal weights."""
    return float(np.sum(cc.second_moments) - np.dot(psi, cc.masses) + np.dot(psi, nu))


def semidiscrete_solve(spec: DomainSpec, n_targets: int, mass_tol: float = 1e-7,
                       seed: int = 0, max_iter: int = 60) -> DualWeights:
    """Damped Newton on the semi-discrete dual; each cell ends within
    mass_tol * vol/N of its target mass.

    Masses are kept above half the initial minimum throughout (step
    halving), which keeps the Jacobian connected and the iteration inside
    the region where convergence is quadratic.
    """
    if spec.dim != 2:
        raise UnsupportedDomainError("semi-discrete solver is planar only")
    if n_targets < 16:
        raise InvalidDomainError("need at least 16 target points")
    polygon = polygonize(spec)
    area = polygon_area(polygon)
    y = disk_fill(n_targets, seed)
    nu = np.full(n_targets, area / n_targets)
    psi = np.zeros(n_targets)
    cc = laguerre_cells(polygon, y, psi)
    floor = 0.5 * min(float(np.min(cc.masses)), float(np.min(nu)))
    if floor <= 0:
        raise SolverError("empty initial cell; target points degenerate")
    resid = float(np.max(np.abs(cc.masses - nu)))
    tol = mass_tol * area / n_targets
    log = [(0, _dual_objective(cc, psi, nu), resid)]
    for it in range(1, max_iter + 1):
        if resid <= tol:
            break
        rows, lens = cc.edge_rows, cc.edge_lengths
        dist = np.linalg.norm(y[rows[:, 0]] - y[rows[:, 1]], axis=1)
        w = lens / (2.0 * dist)
        i_idx = np.concatenate([rows[:, 0], rows[:, 1], rows[:, 0], rows[:, 1]])
        j_idx = np.concatenate([rows[:, 1], rows[:, 0], rows[:, 0], rows[:, 1]])
        vals = np.concatenate([-w, -w, w, w])
        jac = scipy.sparse.coo_matrix(
            (vals, (i_idx, j_idx)), shape=(n_targets, n_targets)).tocsr()
        rhs = nu - cc.masses
        delta = np.zeros(n_targets)
        delta[1:] = scipy.sparse.linalg.spsolve(jac[1:, 1:], rhs[1:])
        step = 1.0
        for _ in range(30):
            trial = psi + step * delta
            cc_trial = laguerre_cells(polygon, y, trial)
            new_resid = float(np.max(np.abs(cc_trial.masses - nu)))
            if float(np.min(cc_trial.masses)) >= floor and new_resid < resid:
                psi, cc, resid = trial, cc_trial, new_resid
                break
            step *= 0.5
        else:
            raise SolverError(
                f"damping floor reached at iteration {it}; residual {resid:.3e}")
        log.append((it, _dual_objective(cc, psi, nu), resid))
    if resid > tol:
        raise SolverError(
            f"no convergence in {max_iter} iterations; residual {resid:.3e}")
    dw = DualWeights(points=y, weights=psi, masses=cc.masses,
                     residual=resid, seed=seed, spec=spec)
    object.__setattr__(dw, "convergence_log", tuple(log))
    return dw


# ---------------------------------------------------------------------------
# Potential recovery from dual weights
# ---------------------------------------------------------------------------


def _affine_offsets(dual: DualWeights) -> np.ndarray:
    y = dual.points
    return 0.5 * (dual.weights - np.einsum("qi,qi->q", y, y))


def _affine_max_value(dual: DualWeights, pts: np.ndarray) -> np.ndarray:
    scores = pts @ dual.points.T + _affine_offsets(dual)[None, :]
    return np.max(scores, axis=1)


def _affine_argmax(dual: DualWeights, pts: np.ndarray) -> np.ndarray:
    scores = pts @ dual.points.T + _affine_offsets(dual)[None, :]
    return np.argmax(scores, axis=1)


def _require_near_polygon(dual: DualWeights, pts: np.ndarray,
                          slack: float = 2e-3) -> None:
    # boundary-quadrature nodes of the true curve sit a sagitta outside the
    # inscribed polygon, so the domain test carries a small absolute slack
    poly = dual.polygon()
    nxt = np.roll(poly, -1, axis=0)
    edge = nxt - poly
    nrm = np.stack([edge[:, 1], -edge[:, 0]], axis=1)
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]
    b = np.einsum("qi,qi->q", nrm, poly)
    depth = np.max(pts @ nrm.T - b[None, :], axis=1)
    if np.any(depth > slack):
        worst = int(np.argmax(depth))
        raise InvalidDomainError(
            f"evaluation point {worst} lies {float(depth[worst]):.2e} "
            "outside the polygonal domain")


def _recovered_hessian(p: Potential, pts: np.ndarray) -> np.ndarray:
    """Weighted affine regression of the gradient map around each point.

    Probes falling outside the polygon are dropped before fitting: out
    there the power-diagram gradient saturates at the boundary atoms, and
    keeping those samples would bias the slopes low near the boundary.
    A one-sided stencil is still exact for affine gradient fields.
    """
    dual = p.dual
    n_t = dual.points.shape[0]
    poly = dual.polygon()
    diam = float(np.max(np.linalg.norm(poly, axis=1))) * 2.0
    radius = p.smoothing_radius or 3.0 * diam / math.sqrt(n_t)
    k = 64
    i = np.arange(k)
    pr = radius * np.sqrt((i + 0.5) / k)
    pth = i * _GOLDEN_ANGLE
    probe = np.stack([pr * np.cos(pth), pr * np.sin(pth)], axis=1)
    wts = (1.0 - (pr / radius) ** 2) ** 2  # biweight taper

    nxt = np.roll(poly, -1, axis=0)
    edge = nxt - poly
    nrm = np.stack([edge[:, 1], -edge[:, 0]], axis=1)
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]
    b = np.einsum("qi,qi->q", nrm, poly)

    out = np.empty((pts.shape[0], 2, 2))
    design = np.column_stack([probe, np.ones(k)])
    for q in range(pts.shape[0]):
        loc = pts[q][None, :] + probe
        depth = np.max(loc @ nrm.T - b[None, :], axis=1)
        w = np.where(depth <= 0.0, wts, 0.0)
        if np.count_nonzero(w) < 8:   # deep outside; fit the full stencil
            w = wts
        g = dual.points[_affine_argmax(dual, loc)]
        sw = np.sqrt(w)[:, None]
        sol, *_ = np.linalg.lstsq(design * sw, g * sw, rcond=None)
        a = 0.5 * (sol[:2] + sol[:2].T)
        lam, vec = np.linalg.eigh(a)
        lam = np.maximum(lam, 0.0)
        out[q] = (vec * lam) @ vec.T
    return out


def potential_from_weights(dual: DualWeights,
                           smoothing_radius: float | None = None) -> Potential:
    """Max-of-affine potential whose gradient realizes the atomic coupling."""
    return Potential(provenance="semi_discrete", kind="piecewise_affine",
                     spec=dual.spec, dual=dual, smoothing_radius=smoothing_radius)


def map_deviation(dual: DualWeights, reference: np.ndarray | None = None) -> float:
    """Mass-weighted mean |y_j - A c_j| with c_j the cell centroids.

    `reference` is the linear oracle map (identity when omitted); the
    deviation measures how far the computed coupling sits from it.
    """
    polygon = dual.polygon()
    cc = laguerre_cells(polygon, dual.points, dual.weights)
    a = np.eye(2) if reference is None else np.asarray(reference, dtype=float)
    dev = np.linalg.norm(dual.points - cc.centroids @ a.T, axis=1)
    return float(np.sum(cc.masses * dev) / np.sum(cc.masses))


# ---------------------------------------------------------------------------
# Checkpoint I/O (bit-exact round trip via repr floats)
# ---------------------------------------------------------------------------


def dual_weights_to_json(dual: DualWeights) -> str:
    payload = {
        "points": [[repr(float(v)) for v in row] for row in dual.points],
        "weights": [repr(float(v)) for v in dual.weights],
        "masses": [repr(float(v)) for v in dual.masses],
        "residual": repr(float(dual.residual)),
        "seed": int(dual.seed),
        "domain": dual.spec.to_json_dict(),
    }
    return json.dumps(payload, indent=1)


def dual_weights_from_json(text: str) -> DualWeights:
    data = json.loads(text)
    return DualWeights(
        points=np.array([[float(v) for v in row] for row in data["points"]]),
        weights=np.array([float(v) for v in data["weights"]]),
        masses=np.array([float(v) for v in data["masses"]]),
        residual=float(data["residual"]),
        seed=int(data["seed"]),
        spec=DomainSpec.from_json_dict(data["domain"]),
    )


def save_dual_weights(dual: DualWeights, path) -> None:
    with open(path, "w") as fh:
        fh.write(dual_weights_to_json(dual))


def load_dual_weights(path) -> DualWeights:
    with open(path) as fh:
        return dual_weights_from_json(fh.read())
