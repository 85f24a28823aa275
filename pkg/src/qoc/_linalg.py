"""Small dense linear-algebra helpers shared by the numerical modules."""

import numpy as np

JITTER_START = 1e-12
JITTER_MAX = 1e-6


class FactorizationError(np.linalg.LinAlgError):
    pass


def symmetrize(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def chol_psd(a):
    """Lower Cholesky factor of a PSD matrix.

    Coordinates with exactly zero variance get a zero row, so degenerate laws
    are reproduced exactly.  The remaining block is factored directly and, on
    failure, with diagonal jitter growing from 1e-12 up to 1e-6.
    """
    a = symmetrize(np.atleast_2d(a))
    d = a.shape[0]
    live = np.flatnonzero(np.diag(a) != 0.0)
    out = np.zeros((d, d))
    if live.size == 0:
        return out
    sub = a[np.ix_(live, live)]
    jitter = 0.0
    while True:
        try:
            l = np.linalg.cholesky(sub + jitter * np.eye(live.size))
            break
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX:
                raise FactorizationError("matrix is not positive semi-definite within the jitter budget")
    out[np.ix_(live, live)] = l
    return out


def inv_spd(a):
    """Inverse of an SPD matrix via its Cholesky factor."""
    a = symmetrize(np.atleast_2d(a))
    d = a.shape[0]
    jitter = 0.0
    while True:
        try:
            l = np.linalg.cholesky(a + jitter * np.eye(d))
            break
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX:
                raise FactorizationError("matrix is singular or not positive definite")
    linv = np.linalg.solve(l, np.eye(d))
    return symmetrize(linv.T @ linv)


def psd_sqrt_batch(a):
    """Batched symmetric factor ``F`` with ``F @ F.T == a`` for PSD stacks.

    Uses an eigendecomposition so rank-deficient matrices are fine.
    """
    w, q = np.linalg.eigh(symmetrize(a))
    return q * np.sqrt(np.clip(w, 0.0, None))[..., None, :]
