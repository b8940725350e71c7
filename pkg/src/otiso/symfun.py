"""Symmetric-function calculus on small symmetric matrices.

Elementary symmetric functions of eigenvalues, the Newton transformation
tensors T_k built from them, the bilinear polarization of sigma_2, and
positivity-cone classification.  Everything is a pure function of dense
numpy arrays and sized for matrices of dimension <= 16; the vectorized
`batched_*` variants act on stacks (m, d, d) and are the workhorses of
the boundary-integral pipelines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations, product

import numpy as np

MAX_DIM = 16


@dataclass(frozen=True)
class ConeLabel:
    """Largest k with sigma_1, ..., sigma_k all strictly positive (0 if none)."""

    max_k: int


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    """Exactly symmetric average (M + M^T)/2."""
    matrix = np.asarray(matrix, dtype=float)
    return (matrix + matrix.swapaxes(-1, -2)) / 2.0


def _as_sym(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
    d = matrix.shape[0]
    if not 1 <= d <= MAX_DIM:
        raise ValueError(f"dimension {d} outside [1, {MAX_DIM}]")
    if not np.array_equal(matrix, matrix.T):
        raise ValueError("matrix entries are not exactly symmetric")
    return matrix


def _elementary_from_values(values: np.ndarray, kmax: int) -> np.ndarray:
    """e_0..e_kmax of the given values, by stable coefficient accumulation."""
    e = np.zeros(kmax + 1)
    e[0] = 1.0
    for lam in values:
        upper = min(kmax, len(values))
        e[1 : upper + 1] = e[1 : upper + 1] + lam * e[0:upper]
    return e


def elementary_symmetric(matrix: np.ndarray, k: int) -> float:
    """sigma_k of the eigenvalues of a symmetric matrix; sigma_0 = 1."""
    matrix = _as_sym(matrix)
    d = matrix.shape[0]
    if not 0 <= k <= d:
        raise ValueError(f"k={k} outside [0, {d}]")
    if k == 0:
        return 1.0
    eig = np.linalg.eigvalsh(matrix)
    return float(_elementary_from_values(eig, k)[k])


def elementary_symmetric_all(matrix: np.ndarray) -> np.ndarray:
    """All sigma_0..sigma_d at once (single eigendecomposition)."""
    matrix = _as_sym(matrix)
    eig = np.linalg.eigvalsh(matrix)
    return _elementary_from_values(eig, matrix.shape[0])


def newton_tensor(matrix: np.ndarray, k: int) -> np.ndarray:
    """Newton transformation T_k(M) via T_k = sigma_k(M) I - T_(k-1) M.

    T_0 = I.  Each step is resymmetrized; T_k is a polynomial in M so the
    product commutes and the symmetrization only removes roundoff.
    """
    matrix = _as_sym(matrix)
    d = matrix.shape[0]
    if not 0 <= k <= d - 1:
        raise ValueError(f"k={k} outside [0, {d - 1}]")
    sigma = elementary_symmetric_all(matrix)
    tensor = np.eye(d)
    for j in range(1, k + 1):
        tensor = sigma[j] * np.eye(d) - tensor @ matrix
        tensor = symmetrize(tensor)
    return tensor


def sigma2_polarization(a: np.ndarray, b: np.ndarray) -> float:
    """Bilinear form with Sigma_2(A, A) = 2 sigma_2(A): tr(A)tr(B) - tr(AB)."""
    a = _as_sym(a)
    b = _as_sym(b)
    if a.shape != b.shape:
        raise ValueError("matrix dimensions differ")
    return float(np.trace(a) * np.trace(b) - np.trace(a @ b))


def newton_tensor_mixed(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Symmetric bilinear T_2 with [T_2](A, A) = T_2(A).

    2 [T_2](A,B) = Sigma_2(A,B) I - T_1(A) B - T_1(B) A.
    """
    a = _as_sym(a)
    b = _as_sym(b)
    if a.shape != b.shape:
        raise ValueError("matrix dimensions differ")
    d = a.shape[0]
    t1a = np.trace(a) * np.eye(d) - a
    t1b = np.trace(b) * np.eye(d) - b
    mixed = 0.5 * (sigma2_polarization(a, b) * np.eye(d) - t1a @ b - t1b @ a)
    return symmetrize(mixed)


def cone_membership(matrix: np.ndarray) -> ConeLabel:
    """Largest k with sigma_j(M) > 0 for all j <= k (strict signs, no tolerance)."""
    matrix = _as_sym(matrix)
    sigma = elementary_symmetric_all(matrix)
    max_k = 0
    for j in range(1, matrix.shape[0] + 1):
        if sigma[j] > 0.0:
            max_k = j
        else:
            break
    return ConeLabel(max_k=max_k)


def _generalized_delta(upper: tuple, lower: tuple) -> float:
    """det of the Kronecker-delta matrix [delta(upper_a, lower_b)]."""
    r = len(upper)
    total = 0.0
    for perm in permutations(range(r)):
        sign = 1.0
        # permutation sign by counting inversions
        inv = sum(
            1 for i in range(r) for j in range(i + 1, r) if perm[i] > perm[j]
        )
        sign = -1.0 if inv % 2 else 1.0
        term = 1.0
        for a in range(r):
            if upper[a] != lower[perm[a]]:
                term = 0.0
                break
        total += sign * term
    return total


def newton_tensor_multilinear(matrices: list) -> np.ndarray:
    """Generalized-delta evaluation of the multilinear Newton tensor.

    [T_k]_(i,j)(A_1..A_k) = (1/k!) delta^(i,i_1..i_k)_(j,j_1..j_k)
                            prod_a (A_a)_(i_a, j_a).
    Cross-check oracle only: cost grows like d^(2k) (k+1)!, so it is
    restricted to d <= 4 and k <= 2.
    """
    k = len(matrices)
    if k > 2:
        raise ValueError("multilinear delta form implemented for k <= 2 only")
    mats = [_as_sym(m) for m in matrices]
    d = mats[0].shape[0] if mats else 0
    if k == 0:
        raise ValueError("pass the dimension explicitly via newton_tensor_delta for k=0")
    if d > 4:
        raise ValueError("multilinear delta form implemented for d <= 4 only")
    for m in mats:
        if m.shape[0] != d:
            raise ValueError("matrix dimensions differ")
    out = np.zeros((d, d))
    norm = 1.0 / math.factorial(k)
    idx_tuples = list(product(range(d), repeat=k))
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for ivec in idx_tuples:
                for jvec in idx_tuples:
                    delta = _generalized_delta((i, *ivec), (j, *jvec))
                    if delta == 0.0:
                        continue
                    term = delta
                    for a in range(k):
                        term *= mats[a][ivec[a], jvec[a]]
                    acc += term
            out[i, j] = norm * acc
    return out


def newton_tensor_delta(matrix: np.ndarray, k: int) -> np.ndarray:
    """T_k(M) via the generalized-delta formula (oracle for d <= 4, k <= 2)."""
    matrix = _as_sym(matrix)
    if k == 0:
        return np.eye(matrix.shape[0])
    return newton_tensor_multilinear([matrix] * k)


# ---------------------------------------------------------------------------
# Batched variants on stacks of shape (m, d, d).  sigma_k comes from Newton's
# power-sum identities (trace polynomials): per-node eigendecompositions of
# ~1e6 small matrices do not fit the runtime budget of the boundary pipelines.
# ---------------------------------------------------------------------------


def batched_trace(stack: np.ndarray) -> np.ndarray:
    return np.einsum("...ii->...", stack)


def batched_elementary(stack: np.ndarray, kmax: int) -> np.ndarray:
    """e_0..e_kmax for each matrix in the stack, shape (kmax+1, m)."""
    stack = np.asarray(stack, dtype=float)
    d = stack.shape[-1]
    if not 0 <= kmax <= d:
        raise ValueError(f"kmax={kmax} outside [0, {d}]")
    m = stack.shape[0]
    power = stack
    psums = np.empty((kmax + 1, m))
    psums[0] = float(d)
    for r in range(1, kmax + 1):
        psums[r] = batched_trace(power)
        if r < kmax:
            power = power @ stack
    elem = np.empty((kmax + 1, m))
    elem[0] = 1.0
    for r in range(1, kmax + 1):
        acc = np.zeros(m)
        sign = 1.0
        for i in range(1, r + 1):
            acc += sign * elem[r - i] * psums[i]
            sign = -sign
        elem[r] = acc / r
    return elem


def batched_sigma2(stack: np.ndarray) -> np.ndarray:
    tr = batched_trace(stack)
    tr2 = np.einsum("...ij,...ji->...", stack, stack)
    return 0.5 * (tr * tr - tr2)


def batched_t1(stack: np.ndarray) -> np.ndarray:
    """T_1 on each matrix: tr(M) I - M."""
    d = stack.shape[-1]
    eye = np.eye(d)
    return batched_trace(stack)[..., None, None] * eye - stack


def batched_t2(stack: np.ndarray) -> np.ndarray:
    """T_2 on each matrix: sigma_2(M) I - T_1(M) M."""
    d = stack.shape[-1]
    eye = np.eye(d)
    out = batched_sigma2(stack)[..., None, None] * eye - batched_t1(stack) @ stack
    return symmetrize(out)


def batched_sigma2_polarization(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return batched_trace(a) * batched_trace(b) - np.einsum("...ij,...ji->...", a, b)


def batched_t2_mixed(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Bilinear T_2 on stacks; [T_2](A,A) agrees with batched_t2(A)."""
    d = a.shape[-1]
    eye = np.eye(d)
    mixed = 0.5 * (
        batched_sigma2_polarization(a, b)[..., None, None] * eye
        - batched_t1(a) @ b
        - batched_t1(b) @ a
    )
    return symmetrize(mixed)
