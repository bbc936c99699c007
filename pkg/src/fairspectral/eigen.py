"""Symmetric eigensolvers: sparse top-K by magnitude, and a dense reference.

Two independent routes to the same quantities:

``top_k_eigenpairs``
    Lanczos iteration with full reorthogonalization and thick restarts.
    Builds a Krylov basis, projects, solves the small problem, keeps the
    best Ritz pairs plus the residual direction, and continues until the
    wanted pairs have residual norm below tolerance.  Intended for large
    sparse operators where only a few extremal pairs are needed.

``full_dense_eigendecomposition``
    Classical dense path: Householder reduction to tridiagonal form with
    accumulation of the orthogonal transform, then implicit-shift QL on
    the tridiagonal matrix.  Quadratic storage, cubic time, all n pairs.
    Serves as the reference the sparse route is checked against, and as
    the small-problem solver inside the Lanczos restarts.

Both routes order eigenpairs by decreasing |lambda|, breaking exact-magnitude
ties toward the positive eigenvalue, and canonicalize eigenvector signs so
that each column's entry of largest absolute value is non-negative (ties on
the magnitude broken by lowest row index).
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .sparse import CsrMatrix

DENSE_LIMIT_DEFAULT = 2000

_FSB_MAGIC = b"FSB1"


class EigenError(Exception):
    """Base class for eigensolver failures."""


class NoConvergenceError(EigenError):
    """Raised when the iteration budget is exhausted.

    Carries the best basis found so far in ``basis`` so callers can inspect
    residuals.
    """

    def __init__(self, message: str, basis: "SpectralBasis"):
        super().__init__(message)
        self.basis = basis


class DenseLimitError(EigenError):
    """Raised when a dense decomposition is requested above the size guard."""


@dataclass(frozen=True)
class SpectralBasis:
    """Top-K eigenpairs of a symmetric operator.

    eigenvalues: shape (K,), sorted by decreasing magnitude, exact-magnitude
    ties positive-first.  eigenvectors: shape (n, K), orthonormal columns in
    canonical sign.  residuals: shape (K,), the two-norms ||S p - lambda p||,
    or None for bases loaded from disk without their operator.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "eigenvalues", np.ascontiguousarray(self.eigenvalues, dtype=np.float64))
        object.__setattr__(self, "eigenvectors", np.ascontiguousarray(self.eigenvectors, dtype=np.float64))
        if self.eigenvectors.ndim != 2 or self.eigenvalues.ndim != 1:
            raise ValueError("eigenvalues must be a vector and eigenvectors a matrix")
        if self.eigenvectors.shape[1] != self.eigenvalues.shape[0]:
            raise ValueError("eigenvector count must match eigenvalue count")
        if self.residuals is not None:
            object.__setattr__(self, "residuals", np.ascontiguousarray(self.residuals, dtype=np.float64))
            if self.residuals.shape != self.eigenvalues.shape:
                raise ValueError("residuals must match eigenvalue count")

    @property
    def n(self) -> int:
        return int(self.eigenvectors.shape[0])

    @property
    def k(self) -> int:
        return int(self.eigenvalues.shape[0])


def canonical_sign(p: np.ndarray) -> np.ndarray:
    """Flip column signs so the entry of largest |value| is non-negative.

    np.argmax returns the first maximal position, which implements the
    lowest-index tie break.
    """
    p = np.asarray(p, dtype=np.float64)
    lead = np.argmax(np.abs(p), axis=0)
    signs = np.where(p[lead, np.arange(p.shape[1])] < 0.0, -1.0, 1.0)
    return p * signs


def magnitude_order(eigenvalues: np.ndarray, tie_tol: float = 1e-12) -> np.ndarray:
    """Indices sorting eigenvalues by decreasing |value|, positive first on
    magnitude ties.

    Computed eigenvalues of an exactly tied pair (such as +1/-1 of an
    exchange matrix) land an ulp apart, so the tie rule also fires when two
    adjacent magnitudes differ by at most tie_tol relative and the signs
    straddle zero.
    """
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    order = np.lexsort((-eigenvalues, -np.abs(eigenvalues)))
    for i in range(order.shape[0] - 1):
        a, b = eigenvalues[order[i]], eigenvalues[order[i + 1]]
        near = abs(abs(a) - abs(b)) <= tie_tol * max(abs(a), 1.0)
        if a < 0.0 <= b and near:
            order[i], order[i + 1] = order[i + 1], order[i]
    return order


def _tridiagonalize(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Householder reduction of a symmetric matrix to tridiagonal form.

    Returns (d, e, q): diagonal, subdiagonal (e[0] unused), and the
    accumulated orthogonal matrix with q.T @ a @ q tridiagonal.  Classical
    tred2 with the inner loops replaced by rank-2 BLAS updates; the
    Householder vectors are parked in the rows/columns of the workspace
    exactly as in the textbook formulation so that the accumulation pass can
    replay them in reverse.
    """
    z = np.array(a, dtype=np.float64, copy=True)
    n = z.shape[0]
    d = np.zeros(n)
    e = np.zeros(n)
    scratch = np.empty((n, n))
    lhs = np.empty((n, 2))
    rhs = np.empty((2, n))
    for i in range(n - 1, 0, -1):
        l = i - 1
        h = 0.0
        if l > 0:
            scale = float(np.sum(np.abs(z[i, :i])))
            if scale == 0.0:
                e[i] = z[i, l]
            else:
                z[i, :i] /= scale
                u = z[i, :i]
                h = float(u @ u)
                f = u[l]
                g = -np.copysign(np.sqrt(h), f)
                e[i] = scale * g
                h -= f * g
                z[i, l] = f - g
                u = z[i, :i]
                z[:i, i] = u / h
                p = (z[:i, :i] @ u) / h
                k = float(u @ p) / (2.0 * h)
                q = p - k * u
                # Rank-2 update as one GEMM into scratch to avoid the
                # temporaries np.outer would allocate each step.
                lhs[:i, 0] = q
                lhs[:i, 1] = u
                rhs[0, :i] = u
                rhs[1, :i] = q
                np.matmul(lhs[:i], rhs[:, :i], out=scratch[:i, :i])
                z[:i, :i] -= scratch[:i, :i]
        else:
            e[i] = z[i, l]
        d[i] = h
    d[0] = 0.0
    e[0] = 0.0
    for i in range(n):
        if d[i] != 0.0:
            g = z[i, :i] @ z[:i, :i]
            np.multiply(z[:i, i, None], g[None, :], out=scratch[:i, :i])
            z[:i, :i] -= scratch[:i, :i]
        d[i] = z[i, i]
        z[i, i] = 1.0
        if i > 0:
            z[i, :i] = 0.0
            z[:i, i] = 0.0
    return d, e, z


def _tql2(d: np.ndarray, e: np.ndarray, z: np.ndarray, max_sweeps: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Implicit-shift QL on a symmetric tridiagonal matrix.

    d is the diagonal, e the subdiagonal in e[1:], z the transform the
    rotations are accumulated into (columns become eigenvectors).  Standard
    tql2 scheme: for each eigenvalue, split off the trailing converged block,
    compute a Wilkinson-style shift from the leading 2x2, and chase the bulge
    with Givens rotations while applying each rotation to the columns of z.

    The rotation count grows quadratically with n, so the accumulation runs
    on the transposed matrix (row slices are contiguous) with preallocated
    scratch buffers; the per-rotation work is pure BLAS-1.
    """
    n = d.shape[0]
    d = d.copy()
    e = e.copy()
    eps = np.finfo(np.float64).eps
    e[:-1] = e[1:]
    e[-1] = 0.0
    zt = np.ascontiguousarray(z.T)
    rot = np.empty((2, 2))
    buf = np.empty((2, n))
    for l in range(n):
        sweeps = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            sweeps += 1
            if sweeps > max_sweeps:
                raise NoConvergenceError(
                    f"tridiagonal QL failed to deflate index {l} after {max_sweeps} sweeps",
                    SpectralBasis(d, np.ascontiguousarray(zt.T), None),
                )
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + np.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = np.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                rot[0, 0] = c
                rot[0, 1] = -s
                rot[1, 0] = s
                rot[1, 1] = c
                block = zt[i : i + 2]
                np.dot(rot, block, out=buf)
                block[:] = buf
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d, np.ascontiguousarray(zt.T)


def dense_symmetric_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs of a dense symmetric matrix, unordered.

    Returns (eigenvalues, eigenvectors-as-columns).  The two-phase classical
    scheme; no use of library eigensolvers.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    n = a.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    if n == 1:
        return a[0].copy(), np.ones((1, 1))
    d, e, z = _tridiagonalize(a)
    return _tql2(d, e, z)


def full_dense_eigendecomposition(
    a: np.ndarray, dense_limit: int = DENSE_LIMIT_DEFAULT
) -> SpectralBasis:
    """All n eigenpairs of a dense symmetric matrix, magnitude-ordered.

    Guards against accidental cubic blowups: refuses n above dense_limit.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    n = a.shape[0]
    if n > dense_limit:
        raise DenseLimitError(
            f"dense decomposition refused for n={n} above the limit {dense_limit}"
        )
    w, v = dense_symmetric_eig(a)
    order = magnitude_order(w)
    w = w[order]
    v = canonical_sign(v[:, order])
    resid = np.linalg.norm(a @ v - v * w, axis=0)
    return SpectralBasis(w, v, resid)


def _as_csr(op) -> CsrMatrix:
    if isinstance(op, CsrMatrix):
        return op
    matrix = getattr(op, "matrix", None)
    if isinstance(matrix, CsrMatrix):
        return matrix
    raise TypeError(f"expected a CsrMatrix or an operator wrapping one, got {type(op)!r}")


def _orthogonalize_twice(w: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Remove the components of w along the columns of basis, twice.

    One pass of classical Gram-Schmidt loses orthogonality when w is nearly
    inside span(basis); the second pass restores it to machine precision.
    """
    for _ in range(2):
        w = w - basis @ (basis.T @ w)
    return w


def top_k_eigenpairs(
    op,
    k: int,
    tol: float = 1e-10,
    max_iter: int = 10000,
    seed: int = 0,
) -> SpectralBasis:
    """Top-k eigenpairs by |lambda| of a symmetric sparse operator.

    Thick-restart Lanczos with full reorthogonalization.  Each cycle extends
    the basis to m vectors, solves the projected problem with the dense
    reference solver, and restarts from the leading Ritz vectors plus the
    residual direction.  A Ritz pair counts as converged once its residual
    estimate drops below tol times max(|theta|, spectral scale floor).

    max_iter bounds the total number of operator applications; exhausting it
    raises NoConvergenceError carrying the best basis and its residuals.
    Deterministic for fixed (op, k, tol, seed).
    """
    a = _as_csr(op)
    n = a.n
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(seed)

    m = min(n, max(2 * k + 10, 20))
    v = np.zeros((n, m + 1))
    t = np.zeros((m + 1, m + 1))

    v0 = rng.standard_normal(n)
    v0 /= np.linalg.norm(v0)
    v[:, 0] = v0

    locked = 0          # Ritz vectors kept across the last restart
    j = 0               # current basis size
    matvecs = 0
    scale_floor = 0.0   # running estimate of the spectral scale

    def small_eig(size: int) -> tuple[np.ndarray, np.ndarray]:
        w, s = dense_symmetric_eig(t[:size, :size])
        order = magnitude_order(w)
        return w[order], s[:, order]

    def finalize(theta: np.ndarray, s: np.ndarray, size: int) -> SpectralBasis:
        take = min(k, size)
        x = v[:, :size] @ s[:, :take]
        # Gram-Schmidt cleanup; columns are near-orthonormal already.
        for c in range(take):
            x[:, c] = _orthogonalize_twice(x[:, c], x[:, :c])
            nrm = np.linalg.norm(x[:, c])
            if nrm > 0:
                x[:, c] /= nrm
        x = canonical_sign(x)
        lam = theta[:take].copy()
        resid = np.linalg.norm(a.matmat(x) - x * lam, axis=0)
        return SpectralBasis(lam, x, resid)

    while True:
        # Extend the basis from j to m vectors.
        while j < m:
            u = a.matvec(v[:, j])
            matvecs += 1
            if j == locked and locked > 0:
                # First step after a restart couples to every kept Ritz vector.
                u -= v[:, :locked] @ t[:locked, j]
            elif j > 0:
                u -= t[j - 1, j] * v[:, j - 1]
            alpha = float(v[:, j] @ u)
            t[j, j] = alpha
            u -= alpha * v[:, j]
            u = _orthogonalize_twice(u, v[:, : j + 1])
            beta = float(np.linalg.norm(u))
            tiny = np.finfo(np.float64).eps * max(1.0, abs(alpha), scale_floor) * n
            if beta <= tiny:
                # Invariant subspace hit; continue in a fresh random direction
                # decoupled from the current block.
                t[j, j + 1] = 0.0
                t[j + 1, j] = 0.0
                fresh = rng.standard_normal(n)
                fresh = _orthogonalize_twice(fresh, v[:, : j + 1])
                nrm = np.linalg.norm(fresh)
                j += 1
                if nrm <= np.sqrt(np.finfo(np.float64).eps):
                    # The basis already spans the whole space.
                    break
                v[:, j] = fresh / nrm
            else:
                v[:, j + 1] = u / beta
                t[j, j + 1] = beta
                t[j + 1, j] = beta
                j += 1
            if matvecs >= max_iter:
                break

        theta, s = small_eig(j)
        scale_floor = max(scale_floor, float(np.abs(theta).max(initial=0.0)))
        beta_last = t[j, j - 1] if j > 0 else 0.0
        res_est = np.abs(beta_last * s[j - 1, :])
        floor = min(1.0, scale_floor) if scale_floor > 0.0 else 1.0
        wanted = min(k, j)
        converged = res_est[:wanted] <= tol * np.maximum(np.abs(theta[:wanted]), floor * 1e-3)

        if (wanted == k and bool(np.all(converged))) or j >= n:
            return finalize(theta, s, j)
        if matvecs >= max_iter:
            basis = finalize(theta, s, j)
            raise NoConvergenceError(
                f"no convergence after {matvecs} operator applications; "
                f"best residuals {basis.residuals}",
                basis,
            )

        # Thick restart: keep the leading Ritz vectors, append the residual
        # direction, and rebuild the projected matrix as diagonal + arrow.
        keep = min(j - 1, max(k + min(k, 10), k + 2))
        y = v[:, :j] @ s[:, :keep]
        r_next = v[:, j].copy()
        v[:, :keep] = y
        v[:, keep] = r_next
        t[: m + 1, : m + 1] = 0.0
        t[np.arange(keep), np.arange(keep)] = theta[:keep]
        coup = beta_last * s[j - 1, :keep]
        t[keep, :keep] = coup
        t[:keep, keep] = coup
        locked = keep
        j = keep


def top_k_from_dense(a: np.ndarray, k: int, dense_limit: int = DENSE_LIMIT_DEFAULT) -> SpectralBasis:
    """Truncate the full dense decomposition to its leading k pairs."""
    basis = full_dense_eigendecomposition(a, dense_limit=dense_limit)
    if not 1 <= k <= basis.n:
        raise ValueError(f"k must be in [1, {basis.n}], got {k}")
    return SpectralBasis(
        basis.eigenvalues[:k], basis.eigenvectors[:, :k], basis.residuals[:k]
    )


def save_basis(basis: SpectralBasis, path) -> None:
    """Write a basis in the FSB1 container.

    Layout: 4 magic bytes "FSB1"; little-endian uint64 n and K; K little-endian
    float64 eigenvalues; then the eigenvector matrix in column-major order as
    n*K little-endian float64 values.
    """
    with open(path, "wb") as fh:
        fh.write(_FSB_MAGIC)
        fh.write(struct.pack("<QQ", basis.n, basis.k))
        fh.write(basis.eigenvalues.astype("<f8").tobytes())
        fh.write(basis.eigenvectors.astype("<f8").flatten(order="F").tobytes())


def load_basis(path) -> SpectralBasis:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _FSB_MAGIC:
            raise ValueError(f"not an FSB1 file: magic {magic!r}")
        header = fh.read(16)
        if len(header) != 16:
            raise ValueError("truncated FSB1 header")
        n, k = struct.unpack("<QQ", header)
        payload = fh.read()
    need = 8 * (k + n * k)
    if len(payload) != need:
        raise ValueError(f"FSB1 payload has {len(payload)} bytes, expected {need}")
    eigenvalues = np.frombuffer(payload[: 8 * k], dtype="<f8").copy()
    vec = np.frombuffer(payload[8 * k :], dtype="<f8")
    eigenvectors = vec.reshape((n, k), order="F").copy()
    return SpectralBasis(eigenvalues, eigenvectors, None)


def basis_to_json(basis: SpectralBasis) -> str:
    """Readable JSON export, meant for small instances."""
    doc = {
        "n": basis.n,
        "k": basis.k,
        "eigenvalues": basis.eigenvalues.tolist(),
        "eigenvectors": basis.eigenvectors.tolist(),
        "residuals": None if basis.residuals is None else basis.residuals.tolist(),
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def basis_from_json(text: str) -> SpectralBasis:
    doc = json.loads(text)
    resid = doc.get("residuals")
    return SpectralBasis(
        np.asarray(doc["eigenvalues"], dtype=np.float64),
        np.asarray(doc["eigenvectors"], dtype=np.float64),
        None if resid is None else np.asarray(resid, dtype=np.float64),
    )
