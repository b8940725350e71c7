"""Analytic star-shaped domains and boundary quadrature.

Domains are closed-form level sets (balls, ellipsoids, radial graphs over
the sphere), never meshes: positions, outward normals, tangent frames and
shape operators are evaluated exactly at quadrature nodes.  Surface
integrals use a product rule on the parametrizing sphere, Gauss-Legendre
in each polar angle and trapezoid in the periodic azimuth; `order` is the
target spherical-polynomial exactness degree, so node counts stay modest
while smooth integrands converge at a spectral rate.

Monte-Carlo outer-parallel-body volumes (Steiner machinery) use a
counter-based Philox generator so every estimate is reproducible from its
seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import symfun


class InvalidDomainError(ValueError):
    """Domain parameters are malformed or violate a precondition."""


class UnsupportedDomainError(ValueError):
    """Operation not available for this domain family or certification."""


def unit_ball_volume(k: int) -> float:
    """Volume of the unit ball in R^k: pi^(k/2) / Gamma(k/2 + 1)."""
    if k < 0:
        raise ValueError("dimension must be >= 0")
    return math.pi ** (k / 2.0) / math.gamma(k / 2.0 + 1.0)


# ---------------------------------------------------------------------------
# Domain specifications
# ---------------------------------------------------------------------------

_FAMILIES = ("ball", "ellipsoid", "radial_graph")


@dataclass(frozen=True)
class DomainSpec:
    """A star-shaped C^2 domain given in closed form.

    family 'ball': params radius > 0.
    family 'ellipsoid': semi-axes (a_1..a_n), all > 0.
    family 'radial_graph': boundary {rho(u) u : |u| = 1} with
        rho(u) = rho_const + sum_t coeff_t * prod_i u_i^(e_i),
    a positive smooth radial function; convexity is a user-supplied
    certificate, not something the lab derives.
    """

    family: str
    dim: int
    radius: float | None = None
    axes: tuple[float, ...] | None = None
    rho_const: float | None = None
    rho_terms: tuple[tuple[float, tuple[int, ...]], ...] = ()
    convexity_certificate: bool = False

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InvalidDomainError(f"unknown family {self.family!r}")
        if not 2 <= self.dim <= 6:
            raise InvalidDomainError(f"dim {self.dim} outside [2, 6]")
        if self.family == "ball":
            if self.radius is None or not self.radius > 0:
                raise InvalidDomainError("ball requires radius > 0")
            object.__setattr__(self, "convexity_certificate", True)
        elif self.family == "ellipsoid":
            if self.axes is None or len(self.axes) != self.dim:
                raise InvalidDomainError("ellipsoid requires dim semi-axes")
            if not all(a > 0 for a in self.axes):
                raise InvalidDomainError("semi-axes must be positive")
            object.__setattr__(self, "axes", tuple(float(a) for a in self.axes))
            object.__setattr__(self, "convexity_certificate", True)
        else:
            if self.rho_const is None:
                raise InvalidDomainError("radial_graph requires rho_const")
            terms = []
            for coeff, expo in self.rho_terms:
                expo = tuple(int(e) for e in expo)
                if len(expo) != self.dim or any(e < 0 for e in expo):
                    raise InvalidDomainError(f"bad monomial exponents {expo}")
                terms.append((float(coeff), expo))
            object.__setattr__(self, "rho_terms", tuple(terms))
            # rigorous positivity guard: |poly part| <= sum |coeff| on the sphere
            slack = self.rho_const - sum(abs(c) for c, _ in self.rho_terms)
            if not slack > 0:
                raise InvalidDomainError(
                    "radial function not certifiably positive: "
                    f"const {self.rho_const} minus coefficient mass leaves {slack}"
                )

    # -- constructors -------------------------------------------------------

    @staticmethod
    def ball(dim: int, radius: float) -> "DomainSpec":
        return DomainSpec(family="ball", dim=dim, radius=float(radius))

    @staticmethod
    def ellipsoid(axes) -> "DomainSpec":
        axes = tuple(float(a) for a in axes)
        return DomainSpec(family="ellipsoid", dim=len(axes), axes=axes)

    @staticmethod
    def radial_graph(dim: int, const: float, terms, convex: bool = False) -> "DomainSpec":
        terms = tuple((float(c), tuple(int(e) for e in expo)) for c, expo in terms)
        return DomainSpec(family="radial_graph", dim=dim, rho_const=float(const),
                          rho_terms=terms, convexity_certificate=bool(convex))

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        if self.family == "ball":
            params = {"radius": self.radius}
        elif self.family == "ellipsoid":
            params = {"axes": list(self.axes)}
        else:
            params = {
                "const": self.rho_const,
                "terms": [{"coeff": c, "monomial": list(e)} for c, e in self.rho_terms],
            }
        return {
            "family": self.family,
            "dim": self.dim,
            "params": params,
            "convexity_certificate": self.convexity_certificate,
        }

    @staticmethod
    def from_json_dict(data: dict) -> "DomainSpec":
        try:
            family = data["family"]
            dim = int(data["dim"])
            params = data.get("params", {})
        except (KeyError, TypeError) as exc:
            raise InvalidDomainError(f"malformed domain spec: {exc}") from exc
        if family == "ball":
            return DomainSpec.ball(dim, params["radius"])
        if family == "ellipsoid":
            return DomainSpec.ellipsoid(params["axes"])
        if family == "radial_graph":
            terms = [(t["coeff"], tuple(t["monomial"])) for t in params.get("terms", [])]
            return DomainSpec.radial_graph(
                dim, params["const"], terms,
                convex=bool(data.get("convexity_certificate", False)),
            )
        raise InvalidDomainError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# Level-set machinery.  F < 0 inside, F = 0 on the boundary.
# ---------------------------------------------------------------------------


def _poly_eval(spec: DomainSpec, u: np.ndarray):
    """Value, gradient, Hessian of the monomial sum at unit vectors u."""
    m, n = u.shape
    val = np.full(m, spec.rho_const)
    grad = np.zeros((m, n))
    hess = np.zeros((m, n, n))
    for coeff, expo in spec.rho_terms:
        mono = np.ones(m)
        for i, e in enumerate(expo):
            if e:
                mono = mono * u[:, i] ** e
        val += coeff * mono
        for i, ei in enumerate(expo):
            if ei == 0:
                continue
            di = np.full(m, float(ei) * coeff)
            for j, ej in enumerate(expo):
                p = ej - 1 if j == i else ej
                if p:
                    di = di * u[:, j] ** p
            grad[:, i] += di
            for j, ej in enumerate(expo):
                pj = ej - (1 if j == i else 0)
                if pj == 0:
                    continue
                dij = np.full(m, float(ei) * float(pj) * coeff)
                for l, el in enumerate(expo):
                    p = el - (1 if l == i else 0) - (1 if l == j else 0)
                    if p:
                        dij = dij * u[:, l] ** p
                hess[:, i, j] += dij
    return val, grad, hess


def _rho_extension(spec: DomainSpec, x: np.ndarray):
    """Value/grad/Hess of rho(x/|x|), the 0-homogeneous extension."""
    r = np.linalg.norm(x, axis=1)
    u = x / r[:, None]
    val, pg, ph = _poly_eval(spec, u)
    n = x.shape[1]
    proj = np.eye(n)[None, :, :] - u[:, :, None] * u[:, None, :]
    pgrad_t = np.einsum("qij,qj->qi", proj, pg)       # P grad_p
    grad = pgrad_t / r[:, None]
    php = np.einsum("qij,qjk,qlk->qil", proj, ph, proj)
    udotg = np.einsum("qi,qi->q", u, pg)
    hess = (
        php
        - pgrad_t[:, :, None] * u[:, None, :]
        - u[:, :, None] * pgrad_t[:, None, :]
        - udotg[:, None, None] * proj
    ) / (r * r)[:, None, None]
    return val, grad, hess


def implicit_value(spec: DomainSpec, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if spec.family == "ball":
        return 0.5 * (np.sum(x * x, axis=1) - spec.radius**2)
    if spec.family == "ellipsoid":
        a2 = np.array(spec.axes) ** 2
        return 0.5 * (np.sum(x * x / a2, axis=1) - 1.0)
    rho, _, _ = _rho_extension(spec, x)
    return np.linalg.norm(x, axis=1) - rho


def implicit_grad(spec: DomainSpec, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if spec.family == "ball":
        return x.copy()
    if spec.family == "ellipsoid":
        a2 = np.array(spec.axes) ** 2
        return x / a2
    r = np.linalg.norm(x, axis=1)
    _, rho_grad, _ = _rho_extension(spec, x)
    return x / r[:, None] - rho_grad


def implicit_hess(spec: DomainSpec, x: np.ndarray):
    """Hessian of F, returned as ('scalar', c) / ('diag', v) / ('full', H).

    The compact kinds let callers skip frame conjugations that reduce to
    scalar multiples of the identity (exact algebra, not approximation).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if spec.family == "ball":
        return ("scalar", np.ones(x.shape[0]))
    if spec.family == "ellipsoid":
        a2 = np.array(spec.axes) ** 2
        return ("diag", 1.0 / a2)
    r = np.linalg.norm(x, axis=1)
    n = x.shape[1]
    u = x / r[:, None]
    proj = np.eye(n)[None, :, :] - u[:, :, None] * u[:, None, :]
    _, _, rho_hess = _rho_extension(spec, x)
    return ("full", proj / r[:, None, None] - rho_hess)


def radial_function(spec: DomainSpec, u: np.ndarray) -> np.ndarray:
    """Boundary radius R(u) along unit directions u."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if spec.family == "ball":
        return np.full(u.shape[0], float(spec.radius))
    if spec.family == "ellipsoid":
        a2 = np.array(spec.axes) ** 2
        return 1.0 / np.sqrt(np.sum(u * u / a2, axis=1))
    val, _, _ = _poly_eval(spec, u)
    if np.any(val <= 0):
        raise InvalidDomainError("radial function non-positive on the sphere")
    return val


# ---------------------------------------------------------------------------
# Sphere product grid and boundary quadrature
# ---------------------------------------------------------------------------


@lru_cache(maxsize=8)
def _sphere_grid(n: int, order: int):
    """Unit-sphere nodes and weights; exactness degree ~order for smooth f."""
    m_polar = max(2, (order + 2) // 2)
    n_phi = 2 * m_polar
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    w_phi = np.full(n_phi, 2.0 * math.pi / n_phi)
    if n == 2:
        u = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return u, w_phi.copy()
    t, wt = np.polynomial.legendre.leggauss(m_polar)
    theta = 0.5 * math.pi * (t + 1.0)
    w_theta = 0.5 * math.pi * wt
    axes_nodes = [theta] * (n - 2) + [phi]
    mesh = np.meshgrid(*axes_nodes, indexing="ij")
    flat = [g.ravel() for g in mesh]
    m = flat[0].size
    u = np.empty((m, n))
    sin_prod = np.ones(m)
    w = np.ones(m)
    for j in range(n - 2):
        ang = flat[j]
        u[:, j] = np.cos(ang) * sin_prod
        sin_prod = sin_prod * np.sin(ang)
        idx = np.unravel_index(np.arange(m), tuple(len(a) for a in axes_nodes))
        # weight: GL weight times sin^(n-1-j) factor
        w = w * (w_theta[idx[j]] * np.sin(ang) ** (n - 1 - (j + 1)))
    u[:, n - 2] = np.cos(flat[n - 2]) * sin_prod
    u[:, n - 1] = np.sin(flat[n - 2]) * sin_prod
    w = w * w_phi[0]
    return u, w


def _tangent_frames(normals: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal frames of nu-perp via a Householder column trick."""
    m, n = normals.shape
    sgn = np.where(normals[:, -1] >= 0.0, 1.0, -1.0)
    v = normals.copy()
    v[:, -1] += sgn
    v2 = np.einsum("qi,qi->q", v, v)
    frames = -(2.0 * v[:, : n - 1] / v2[:, None])[:, :, None] * v[:, None, :]
    idx = np.arange(n - 1)
    frames[:, idx, idx] += 1.0
    return frames


@lru_cache(maxsize=8)
def _ball_frames(n: int, order: int) -> np.ndarray:
    """Tangent frames on the unit sphere grid; shared by balls of all radii."""
    u, _ = _sphere_grid(n, order)
    return _tangent_frames(u)


@dataclass(frozen=True)
class QuadratureGrid:
    """Boundary nodes with exact local geometry and surface weights."""

    spec: DomainSpec
    order: int
    points: np.ndarray      # (m, n)
    normals: np.ndarray     # (m, n) outward unit
    frames: np.ndarray      # (m, n-1, n) orthonormal tangent frames
    shape_ops: np.ndarray   # (m, n-1, n-1) second fundamental form in the frame
    weights: np.ndarray     # (m,) surface measure weights

    def __len__(self) -> int:
        return self.points.shape[0]

    def section(self, lo: int, hi: int) -> "QuadratureGrid":
        """Cheap view of a node range, for chunked accumulation."""
        return QuadratureGrid(
            spec=self.spec, order=self.order,
            points=self.points[lo:hi], normals=self.normals[lo:hi],
            frames=self.frames[lo:hi], shape_ops=self.shape_ops[lo:hi],
            weights=self.weights[lo:hi],
        )


@lru_cache(maxsize=12)
def boundary_quadrature(spec: DomainSpec, order: int,
                        force_generic: bool = False) -> QuadratureGrid:
    """Quadrature grid over the boundary of the domain.

    Shape operators are P (Hess F) P / |grad F| restricted to the tangent
    frame; for scalar/diagonal Hessians the conjugation is evaluated in its
    algebraically simplified form unless force_generic is set (tests compare
    both paths).
    """
    if order < 4:
        raise InvalidDomainError("quadrature order must be >= 4")
    n = spec.dim
    u, w_sigma = _sphere_grid(n, order)
    rad = radial_function(spec, u)
    x = rad[:, None] * u
    grad = implicit_grad(spec, x)
    grad_norm = np.linalg.norm(grad, axis=1)
    if np.any(grad_norm <= 0):
        raise InvalidDomainError("vanishing level-set gradient on boundary")
    nu = grad / grad_norm[:, None]
    u_dot_nu = np.einsum("qi,qi->q", u, nu)
    if np.any(u_dot_nu <= 1e-12):
        raise InvalidDomainError("boundary not transversal to rays from origin")
    weights = rad ** (n - 1) / u_dot_nu * w_sigma
    if spec.family == "ball" and not force_generic:
        frames = _ball_frames(n, order)
    else:
        frames = _tangent_frames(nu)
    kind, hess = implicit_hess(spec, x)
    if force_generic:
        if kind == "scalar":
            hess = hess[:, None, None] * np.eye(n)[None, :, :]
        elif kind == "diag":
            hess = np.broadcast_to(np.diag(hess), (len(rad), n, n)).copy()
        kind = "full"
    if kind == "scalar":
        c = hess / grad_norm
        if np.ptp(c) == 0.0:
            # constant curvature: a zero-copy broadcast view is exact
            shape = np.broadcast_to(np.eye(n - 1) * c[0],
                                    (len(rad), n - 1, n - 1))
        else:
            shape = np.eye(n - 1)[None, :, :] * c[:, None, None]
    else:
        if kind == "diag":
            shape = np.einsum("qai,i,qbi->qab", frames, hess, frames) \
                / grad_norm[:, None, None]
        else:
            shape = np.einsum("qai,qij,qbj->qab", frames, hess, frames) \
                / grad_norm[:, None, None]
        shape = symfun.symmetrize(np.ascontiguousarray(shape))
    return QuadratureGrid(spec=spec, order=order, points=x, normals=nu,
                          frames=frames, shape_ops=shape, weights=weights)


def area(grid: QuadratureGrid) -> float:
    return float(np.sum(grid.weights))


def volume(spec: DomainSpec, order: int = 32) -> float:
    """Enclosed volume by the divergence theorem: (1/n) integral x . nu."""
    grid = boundary_quadrature(spec, order)
    xn = np.einsum("qi,qi->q", grid.points, grid.normals)
    return float(np.sum(grid.weights * xn) / spec.dim)


def reference_volume(spec: DomainSpec, order: int = 48) -> float:
    """Exact volume for closed-form families, high-order quadrature otherwise."""
    if spec.family == "ball":
        return unit_ball_volume(spec.dim) * spec.radius**spec.dim
    if spec.family == "ellipsoid":
        return unit_ball_volume(spec.dim) * float(np.prod(spec.axes))
    return volume(spec, order)


def quermassintegral(spec: DomainSpec, k: int, order: int = 32) -> float:
    """Cross-sectional measure V_k, k = 0..n, via boundary curvature integrals.

    V_0 = 1, V_n = volume, and for 1 <= k <= n-1
        V_k = k! (n-k-1)! / n! * (omega_k / omega_n)
              * integral sigma_(n-k-1)(shape) d(surface).
    For a unit ball every V_k equals omega_k.
    """
    n = spec.dim
    if not 0 <= k <= n:
        raise InvalidDomainError(f"quermassintegral index {k} outside [0, {n}]")
    if k == 0:
        return 1.0
    if k == n:
        return volume(spec, order)
    grid = boundary_quadrature(spec, order)
    deg = n - k - 1
    sig = symfun.batched_elementary(grid.shape_ops, deg)[deg]
    integral = float(np.sum(grid.weights * sig))
    const = (math.factorial(k) * math.factorial(n - k - 1) / math.factorial(n)) \
        * (unit_ball_volume(k) / unit_ball_volume(n))
    return const * integral


def ricci_from_gauss(shape_op: np.ndarray) -> np.ndarray:
    """Intrinsic Ricci tensor of the boundary from its shape operator.

    For a hypersurface of flat space, Ric = T_1(L) L (symmetric because L
    commutes with T_1(L)).
    """
    L = np.asarray(shape_op, dtype=float)
    tr = np.einsum("...ii->...", L)
    ric = tr[..., None, None] * L - L @ L
    return symfun.symmetrize(ric)


def min_cone_margins(grid: QuadratureGrid, kmax: int, chunk: int = 1 << 17):
    """min over nodes of sigma_j(shape), j = 1..kmax; strict-positivity margins."""
    d = grid.shape_ops.shape[-1]
    kmax = min(kmax, d)
    mins = np.full(kmax, np.inf)
    for lo in range(0, len(grid), chunk):
        sig = symfun.batched_elementary(grid.shape_ops[lo:lo + chunk], kmax)
        mins = np.minimum(mins, sig[1:].min(axis=1))
    return mins


# ---------------------------------------------------------------------------
# Interior quadrature (radial x sphere product), used by transport checks
# ---------------------------------------------------------------------------


def interior_quadrature(spec: DomainSpec, order: int = 32,
                        radial_nodes: int | None = None):
    """Volume quadrature points and weights for the enclosed domain."""
    n = spec.dim
    u, w_sigma = _sphere_grid(n, order)
    rad = radial_function(spec, u)
    m_r = radial_nodes or max(2, (order + 2) // 2)
    t, wt = np.polynomial.legendre.leggauss(m_r)
    tau = 0.5 * (t + 1.0)
    w_tau = 0.5 * wt
    pts = tau[:, None, None] * (rad[:, None] * u)[None, :, :]
    wts = (w_tau * tau ** (n - 1))[:, None] * (w_sigma * rad**n)[None, :]
    return pts.reshape(-1, n), wts.ravel()


def interior_sample_points(spec: DomainSpec, count: int, seed: int) -> np.ndarray:
    """Deterministic rejection sample of interior points (Philox stream)."""
    n = spec.dim
    gen = np.random.Generator(np.random.Philox(key=seed))
    half = _bounding_halfwidths(spec)
    out = np.empty((count, n))
    got = 0
    while got < count:
        cand = gen.uniform(-half, half, size=(4 * count, n))
        inside = implicit_value(spec, cand) < 0.0
        take = cand[inside][: count - got]
        out[got : got + take.shape[0]] = take
        got += take.shape[0]
    return out


# ---------------------------------------------------------------------------
# Distances to convex bodies and Steiner (outer parallel body) volumes
# ---------------------------------------------------------------------------


def _bounding_halfwidths(spec: DomainSpec) -> np.ndarray:
    if spec.family == "ball":
        return np.full(spec.dim, spec.radius)
    if spec.family == "ellipsoid":
        return np.array(spec.axes)
    bound = spec.rho_const + sum(abs(c) for c, _ in spec.rho_terms)
    return np.full(spec.dim, bound)


def _ellipsoid_distance(axes, pts: np.ndarray) -> np.ndarray:
    """Euclidean distance to the solid ellipsoid, safeguarded Newton on the
    projection multiplier, tolerance 1e-12."""
    a2 = np.array(axes) ** 2
    q = np.sum(pts * pts / a2, axis=1)
    dist = np.zeros(pts.shape[0])
    out = q > 1.0
    if not np.any(out):
        return dist
    p = pts[out]
    pa2 = p * p * a2
    lo = np.zeros(p.shape[0])
    hi = np.sqrt(a2.max()) * np.linalg.norm(p, axis=1)
    lam = 0.5 * hi
    for _ in range(200):
        denom = a2 + lam[:, None]
        g = np.sum(pa2 / denom**2, axis=1) - 1.0
        lo = np.where(g > 0, lam, lo)
        hi = np.where(g < 0, lam, hi)
        gp = -2.0 * np.sum(pa2 / denom**3, axis=1)
        step = g / gp
        nxt = lam - step
        bad = (nxt <= lo) | (nxt >= hi)
        nxt = np.where(bad, 0.5 * (lo + hi), nxt)
        if np.all(np.abs(nxt - lam) <= 1e-12 * (1.0 + np.abs(lam))):
            lam = nxt
            break
        lam = nxt
    proj = p * a2 / (a2 + lam[:, None])
    dist[out] = np.linalg.norm(p - proj, axis=1)
    return dist


def _convex_graph_distance(spec: DomainSpec, pts: np.ndarray,
                           iters: int = 120) -> np.ndarray:
    """Distance to a convexity-certified radial graph.

    Alternating supporting-hyperplane projection: walk the boundary point in
    the direction of the query's projection onto the current supporting
    hyperplane; for smooth convex bodies the gap between the hyperplane
    lower bound and the chord upper bound contracts geometrically.
    """
    r = np.linalg.norm(pts, axis=1)
    r = np.where(r == 0.0, 1e-300, r)
    u = pts / r[:, None]
    inside = r <= radial_function(spec, np.atleast_2d(u))
    dist = np.zeros(pts.shape[0])
    sel = ~inside
    if not np.any(sel):
        return dist
    p = pts[sel]
    u = u[sel]
    upper = np.full(p.shape[0], np.inf)
    for _ in range(iters):
        x = radial_function(spec, u)[:, None] * u
        g = implicit_grad(spec, x)
        nu = g / np.linalg.norm(g, axis=1)[:, None]
        gap = np.einsum("qi,qi->q", nu, p - x)
        upper = np.minimum(upper, np.linalg.norm(p - x, axis=1))
        if np.all(upper - gap <= 1e-11 * (1.0 + upper)):
            break
        foot = p - gap[:, None] * nu
        norm = np.linalg.norm(foot, axis=1)
        keep = norm < 1e-12
        foot[keep] = u[keep]
        u = foot / np.maximum(norm, 1e-12)[:, None]
    dist[sel] = upper
    return dist


def distance_to_domain(spec: DomainSpec, pts: np.ndarray) -> np.ndarray:
    """Euclidean distance to the solid domain (0 inside); convex bodies only."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if spec.family == "ball":
        return np.maximum(np.linalg.norm(pts, axis=1) - spec.radius, 0.0)
    if spec.family == "ellipsoid":
        return _ellipsoid_distance(spec.axes, pts)
    if not spec.convexity_certificate:
        raise UnsupportedDomainError(
            "distance oracle requires a convexity certificate for radial graphs"
        )
    return _convex_graph_distance(spec, pts)


@dataclass(frozen=True)
class SteinerSample:
    t: float
    value: float
    stderr: float
    n_samples: int


def steiner_volume(spec: DomainSpec, t: float, n_samples: int = 1_000_000,
                   seed: int = 0, _gen=None) -> SteinerSample:
    """Monte-Carlo volume of the outer parallel body {dist(x, domain) <= t}."""
    if t < 0:
        raise InvalidDomainError("offset t must be >= 0")
    if not spec.convexity_certificate:
        raise UnsupportedDomainError("Steiner volumes require a convex domain")
    n = spec.dim
    half = _bounding_halfwidths(spec) + t
    box_vol = float(np.prod(2.0 * half))
    gen = _gen or np.random.Generator(np.random.Philox(key=seed))
    hits = 0
    chunk = 250_000
    done = 0
    while done < n_samples:
        take = min(chunk, n_samples - done)
        pts = gen.uniform(-half, half, size=(take, n))
        hits += int(np.count_nonzero(distance_to_domain(spec, pts) <= t))
        done += take
    p_hat = hits / n_samples
    value = box_vol * p_hat
    stderr = box_vol * math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / n_samples)
    return SteinerSample(t=float(t), value=value, stderr=stderr, n_samples=n_samples)


@dataclass(frozen=True)
class SteinerFit:
    """Least-squares fit of vol(domain + t ball) = sum_k binom(n,k) W_k t^k."""

    coefficients: np.ndarray   # W_0..W_n
    stderr: np.ndarray         # propagated MC standard errors
    samples: tuple


def steiner_fit(spec: DomainSpec, t_values, n_samples: int = 1_000_000,
                seed: int = 0) -> SteinerFit:
    n = spec.dim
    t_values = [float(t) for t in t_values]
    if len(t_values) < n + 1:
        raise InvalidDomainError(f"need at least {n + 1} offsets, got {len(t_values)}")
    if len(set(t_values)) != len(t_values):
        raise InvalidDomainError("offsets must be distinct")
    gen = np.random.Generator(np.random.Philox(key=seed))
    samples = tuple(
        steiner_volume(spec, t, n_samples=n_samples, seed=seed, _gen=gen)
        for t in t_values
    )
    design = np.array(
        [[math.comb(n, k) * t**k for k in range(n + 1)] for t in t_values]
    )
    y = np.array([s.value for s in samples])
    sig = np.array([max(s.stderr, 1e-300) for s in samples])
    dw = design / sig[:, None]
    yw = y / sig
    gram = dw.T @ dw
    cov = np.linalg.inv(gram)
    coeff = cov @ (dw.T @ yw)
    return SteinerFit(coefficients=coeff, stderr=np.sqrt(np.diag(cov)),
                      samples=samples)


def steiner_coefficients_from_quermass(spec: DomainSpec, order: int = 32) -> np.ndarray:
    """W_0..W_n implied by the boundary-integral quermassintegrals."""
    n = spec.dim
    wn = unit_ball_volume(n)
    return np.array([
        wn / unit_ball_volume(n - m) * quermassintegral(spec, n - m, order)
        for m in range(n + 1)
    ])
