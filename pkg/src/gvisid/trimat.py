"""Square-root matrix kernels: half-vectorization, triangularization and
lower-triangular matrix exponentials.

All covariance-like quantities in this package are carried as lower
triangular Cholesky-style factors.  Free (unconstrained) covariance
parameters are stored as the half-vectorized matrix logarithm of the
factor, reconstructed with :func:`expm_tril`.  Everything here is a pure
function of its inputs and safe to call from multiple threads.
"""

from functools import lru_cache

import numpy as np
import scipy.linalg


@lru_cache(maxsize=None)
def _vech_indices(n: int):
    """(rows, cols) index arrays of the lower triangle in column-major order."""
    rows = np.concatenate([np.arange(j, n) for j in range(n)])
    cols = np.concatenate([np.full(n - j, j) for j in range(n)])
    return rows, cols


def vech_len(n: int) -> int:
    """Number of free entries of an n-by-n lower triangle."""
    return n * (n + 1) // 2


def vech_dim(m: int) -> int:
    """Matrix size n with n(n+1)/2 == m, or raise if m is not triangular."""
    n = int(round((np.sqrt(8 * m + 1) - 1) / 2))
    if vech_len(n) != m:
        raise ValueError(f"vector of length {m} is not a stacked lower triangle")
    return n


def vech(L) -> np.ndarray:
    """Stack the lower triangle of a square matrix column by column.

    Entries above the main diagonal are ignored (they are structurally
    zero for the triangular factors this package manipulates).
    """
    L = np.asarray(L, dtype=float)
    if L.ndim < 2 or L.shape[-1] != L.shape[-2]:
        raise ValueError(f"vech expects a square matrix, got shape {L.shape}")
    rows, cols = _vech_indices(L.shape[-1])
    return L[..., rows, cols]


def matl(v) -> np.ndarray:
    """Inverse of :func:`vech`: rebuild the square lower-triangular matrix."""
    v = np.asarray(v, dtype=float)
    m = v.shape[-1]
    n = int(round((np.sqrt(8 * m + 1) - 1) / 2))
    if vech_len(n) != m:
        raise ValueError(f"vector of length {m} is not a stacked lower triangle")
    rows, cols = _vech_indices(n)
    L = np.zeros(v.shape[:-1] + (n, n), dtype=float)
    L[..., rows, cols] = v
    return L


def tria(M) -> np.ndarray:
    """Triangularize a wide matrix: lower-triangular S with S@S.T == M@M.T.

    Computed from the transposed triangular factor of the reduced QR
    decomposition of ``M.T``; column signs are flipped so the diagonal of
    S is nonnegative, which makes the result unique and deterministic.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("tria expects a 2-D matrix")
    n, m = M.shape
    if n > m:
        raise ValueError(f"tria needs rows <= cols, got shape {M.shape}")
    R = np.linalg.qr(M.T, mode="r")
    S = R.T.copy()
    signs = np.sign(np.diagonal(S)).copy()
    signs[signs == 0.0] = 1.0
    S *= signs
    return S


# ---------------------------------------------------------------------------
# batched matrix exponential (scaling and squaring, Pade order 13)
# ---------------------------------------------------------------------------

_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
    33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


def _expm(A: np.ndarray) -> np.ndarray:
    """exp(A) for a stack of square matrices (..., n, n)."""
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    norm = np.abs(A).sum(axis=-2).max(axis=-1)
    with np.errstate(divide="ignore"):
        s = np.ceil(np.log2(norm / _THETA13))
    s = np.where(np.isfinite(s), np.maximum(s, 0.0), 0.0).astype(int)
    A = A / (2.0 ** s)[..., None, None]

    ident = np.broadcast_to(np.eye(n), A.shape)
    b = _PADE13
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A2 @ A4
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    E = np.linalg.solve(V - U, V + U)

    smax = int(s.max()) if s.size else 0
    for step in range(smax):
        todo = s > step
        if todo.all():
            E = E @ E
        else:
            E[todo] = E[todo] @ E[todo]
    return E


def expm_tril(L) -> np.ndarray:
    """Matrix exponential of (a stack of) lower-triangular matrices.

    The result is again lower triangular with diagonal exp(L_ii) > 0 and
    det(exp L) = exp(tr L).  Rounding noise above the diagonal is projected
    away so the triangular structure is exact.
    """
    L = np.asarray(L, dtype=float)
    return np.tril(_expm(np.tril(L)))


def expm_tril_vjp(L, Ebar) -> np.ndarray:
    """Adjoint of :func:`expm_tril`.

    Given the gradient ``Ebar`` of a scalar loss with respect to
    ``expm_tril(L)``, return the gradient with respect to the lower
    triangle of L.  Uses the block-matrix identity for the Frechet
    derivative: exp([[A, E], [0, A]]) has the directional derivative in
    its upper-right block, applied at A = L.T to get the adjoint map.
    """
    L = np.asarray(L, dtype=float)
    Ebar = np.asarray(Ebar, dtype=float)
    n = L.shape[-1]
    At = np.swapaxes(np.tril(L), -1, -2)
    block = np.zeros(L.shape[:-2] + (2 * n, 2 * n), dtype=float)
    block[..., :n, :n] = At
    block[..., n:, n:] = At
    block[..., :n, n:] = np.tril(Ebar)
    F = _expm(block)
    return np.tril(F[..., :n, n:])


def logm_tril(S) -> np.ndarray:
    """Real matrix logarithm of a lower-triangular matrix with positive diagonal.

    Inverse of :func:`expm_tril`; used to build the unconstrained parameter
    vector of an already-factored covariance.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim == 2:
        if np.any(np.diagonal(S) <= 0):
            raise ValueError("logm_tril needs a strictly positive diagonal")
        out = scipy.linalg.logm(S)
        return np.tril(np.real(out))
    return np.stack([logm_tril(Si) for Si in S])


def chol_vjp(L, Lbar) -> np.ndarray:
    """Adjoint of the Cholesky factorization, batched.

    Given L = chol(Sigma) and the gradient ``Lbar`` with respect to L,
    return the symmetric gradient with respect to Sigma.
    """
    L = np.asarray(L, dtype=float)
    Lbar = np.tril(np.asarray(Lbar, dtype=float))
    n = L.shape[-1]
    M = np.swapaxes(L, -1, -2) @ Lbar
    P = np.tril(M)
    idx = np.arange(n)
    P[..., idx, idx] *= 0.5
    X = P + np.swapaxes(P, -1, -2)
    Lt = np.swapaxes(L, -1, -2)
    Z = np.linalg.solve(Lt, X)                      # L^{-T} X
    Sbar = 0.5 * np.swapaxes(np.linalg.solve(Lt, np.swapaxes(Z, -1, -2)), -1, -2)
    return 0.5 * (Sbar + np.swapaxes(Sbar, -1, -2))
