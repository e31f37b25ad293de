"""Hot kernels for interpolation-weight computation.

Each kernel exists twice: a numba ``@njit`` version that loops point by point
and a pure-numpy version vectorized over the batch axis. Both implement the
same algorithm (assemble the local moment matrix, LDL^T-factorize it without
pivoting, solve against e_1, contract with the basis rows), so they agree to
rounding. :func:`pattern_weights` dispatches on :data:`lpigrad._accel.USE_NUMBA`.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

# Relative pivot threshold below which a moment matrix is declared singular.
PIVOT_RTOL = 1e-12


@njit(cache=True)
def ldl_solve(A, b, rtol):
    """Solve ``A x = b`` for symmetric positive (semi)definite ``A`` via LDL^T.

    Returns ``(x, ok)``; ``ok`` is False when a pivot falls below
    ``rtol * ||A||_inf``, in which case ``x`` is garbage.
    """
    M = A.shape[0]
    norm = 0.0
    for i in range(M):
        s = 0.0
        for j in range(M):
            s += abs(A[i, j])
        if s > norm:
            norm = s
    thresh = rtol * norm
    L = np.eye(M)
    D = np.zeros(M)
    x = np.zeros(M)
    if norm == 0.0:
        return x, False
    for j in range(M):
        dj = A[j, j]
        for k in range(j):
            dj -= L[j, k] * L[j, k] * D[k]
        if dj <= thresh:
            return x, False
        D[j] = dj
        for i in range(j + 1, M):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k] * D[k]
            L[i, j] = s / dj
    for i in range(M):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * x[k]
        x[i] = s
    for i in range(M):
        x[i] /= D[i]
    for i in range(M - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, M):
            s -= L[k, i] * x[k]
        x[i] = s
    return x, True


def ldl_solve_batch(A, b, rtol=PIVOT_RTOL):
    """Batched LDL^T solve, vectorized over the leading axis of ``A``.

    Parameters
    ----------
    A : ndarray, shape (P, M, M)
    b : ndarray, shape (M,)

    Returns
    -------
    x : ndarray, shape (P, M)
    ok : ndarray of bool, shape (P,)
    """
    A = np.asarray(A, dtype=np.float64)
    P, M, _ = A.shape
    norm = np.abs(A).sum(axis=2).max(axis=1) if M else np.zeros(P)
    thresh = rtol * norm
    ok = norm > 0.0
    L = np.broadcast_to(np.eye(M), (P, M, M)).copy()
    D = np.ones((P, M))
    for j in range(M):
        dj = A[:, j, j] - np.einsum("pk,pk,pk->p", L[:, j, :j], L[:, j, :j], D[:, :j])
        ok &= dj > thresh
        dj = np.where(ok, dj, 1.0)
        D[:, j] = dj
        if j + 1 < M:
            s = A[:, j + 1 :, j] - np.einsum("pik,pk,pk->pi", L[:, j + 1 :, :j], L[:, j, :j], D[:, :j])
            L[:, j + 1 :, j] = s / dj[:, None]
    x = np.zeros((P, M))
    for i in range(M):
        x[:, i] = b[i] - np.einsum("pk,pk->p", L[:, i, :i], x[:, :i])
    x /= D
    for i in range(M - 1, -1, -1):
        x[:, i] -= np.einsum("pk,pk->p", L[:, i + 1 :, i], x[:, i + 1 :])
    return x, ok


@njit(cache=True)
def _pattern_weights_jit(offsets, kvals, counts, exps, inv_fact, scale, ridge, rtol):
    P, d, W = offsets.shape
    M = exps.shape[0]
    total = W**d
    out = np.zeros((P, total))
    ok = np.ones(P, dtype=np.bool_)
    B = np.empty((M, M))
    Ubuf = np.empty((total, M))
    Kbuf = np.empty(total)
    flatbuf = np.empty(total, dtype=np.int64)
    idx = np.zeros(d, dtype=np.int64)
    e1 = np.zeros(M)
    e1[0] = 1.0
    for p in range(P):
        n_active = 1
        for a in range(d):
            n_active *= counts[p, a]
        for a in range(d):
            idx[a] = 0
        B[:, :] = 0.0
        for t in range(n_active):
            kprod = scale
            flat = 0
            for a in range(d):
                kprod *= kvals[p, a, idx[a]]
                flat = flat * W + idx[a]
            for r in range(M):
                val = inv_fact[r]
                for a in range(d):
                    e = exps[r, a]
                    if e > 0:
                        val *= offsets[p, a, idx[a]] ** e
                Ubuf[t, r] = val
            for r in range(M):
                ur = kprod * Ubuf[t, r]
                for c in range(r + 1):
                    B[r, c] += ur * Ubuf[t, c]
            Kbuf[t] = kprod
            flatbuf[t] = flat
            # advance the row-major multi-index over the active window
            a = d - 1
            while a >= 0:
                idx[a] += 1
                if idx[a] < counts[p, a]:
                    break
                idx[a] = 0
                a -= 1
        for r in range(M):
            for c in range(r):
                B[c, r] = B[r, c]
            B[r, r] += ridge
        v, good = ldl_solve(B, e1, rtol)
        if not good:
            ok[p] = False
            continue
        for t in range(n_active):
            s = 0.0
            for r in range(M):
                s += Ubuf[t, r] * v[r]
            out[p, flatbuf[t]] = Kbuf[t] * s
    return out, ok


def _pattern_weights_numpy(offsets, kvals, counts, exps, inv_fact, scale, ridge, rtol):
    P, d, W = offsets.shape
    M = exps.shape[0]
    K = np.full((P,) + (1,) * d, scale)
    shaped_u = []
    for a in range(d):
        shape = (P,) + (1,) * a + (W,) + (1,) * (d - 1 - a)
        K = K * kvals[:, a, :].reshape(shape)
        shaped_u.append(offsets[:, a, :].reshape(shape))
    K = np.broadcast_to(K, (P,) + (W,) * d).reshape(P, -1)
    cols = []
    for r in range(M):
        col = np.full((P,) + (1,) * d, inv_fact[r])
        for a in range(d):
            if exps[r, a]:
                col = col * shaped_u[a] ** exps[r, a]
        cols.append(np.broadcast_to(col, (P,) + (W,) * d).reshape(P, -1))
    U = np.stack(cols, axis=-1)
    B = np.einsum("pk,pki,pkj->pij", K, U, U)
    B += ridge * np.eye(M)
    e1 = np.zeros(M)
    e1[0] = 1.0
    v, ok = ldl_solve_batch(B, e1, rtol)
    out = K * np.einsum("pkr,pr->pk", U, v)
    out[~ok] = 0.0
    return out, ok


def pattern_weights(offsets, kvals, counts, exps, inv_fact, scale, ridge, rtol=PIVOT_RTOL, use_numba=None):
    """Interpolation weights for a batch of window patterns.

    Parameters
    ----------
    offsets : ndarray, shape (P, d, W)
        Per-axis scaled offsets ``(y_j - x_j) / h`` of the in-window grid
        points, left-aligned and zero-padded to width ``W``.
    kvals : ndarray, shape (P, d, W)
        Per-axis kernel values at those offsets, zero on padding.
    counts : ndarray of int, shape (P, d)
        Number of active entries per axis.
    exps : ndarray of int, shape (M, d)
        Multi-index exponents, zero tuple first.
    inv_fact : ndarray, shape (M,)
        ``1 / s!`` per multi-index.
    scale : float
        ``1 / (m h)^d``.
    ridge : float
        Added to the diagonal of the moment matrix.

    Returns
    -------
    values : ndarray, shape (P, W**d)
        Level weights over the padded product window in row-major order.
    ok : ndarray of bool, shape (P,)
        False where the moment matrix was singular.
    """
    if use_numba is None:
        use_numba = USE_NUMBA
    args = (
        np.ascontiguousarray(offsets, dtype=np.float64),
        np.ascontiguousarray(kvals, dtype=np.float64),
        np.ascontiguousarray(counts, dtype=np.int64),
        np.ascontiguousarray(exps, dtype=np.int64),
        np.ascontiguousarray(inv_fact, dtype=np.float64),
        float(scale),
        float(ridge),
        float(rtol),
    )
    if use_numba:
        return _pattern_weights_jit(*args)
    return _pattern_weights_numpy(*args)
