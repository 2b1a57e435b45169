"""Hot loops of the factorization objective and its gradient.

Two interchangeable backends operate on the same flat arrays:

* ``rows, cols, vals``  observed ratings (COO)
* ``prow, pcol, pw``    ordered user pairs with closeness weights

The numba backend walks the arrays in a fixed order; the numpy backend uses
sparse matrix products. Both are deterministic run-to-run but do not agree
bit-for-bit with each other (different summation order).

Gradients are *half* gradients, ``0.5 * dJ/dU`` and ``0.5 * dJ/dV``.
"""
import numpy as np
import scipy.sparse as sp

from ._accel import USE_NUMBA, njit


# ---------------------------------------------------------------- numba ----

@njit
def _terms_nb(U, V, rows, cols, vals, prow, pcol, pw):
    d = U.shape[1]
    sse = 0.0
    for t in range(rows.shape[0]):
        i = rows[t]
        j = cols[t]
        pred = 0.0
        for f in range(d):
            pred += U[i, f] * V[j, f]
        e = vals[t] - pred
        sse += e * e
    close = 0.0
    for t in range(prow.shape[0]):
        a = prow[t]
        b = pcol[t]
        s = 0.0
        for f in range(d):
            diff = U[a, f] - U[b, f]
            s += diff * diff
        close += pw[t] * s
    reg = 0.0
    for i in range(U.shape[0]):
        for f in range(d):
            reg += U[i, f] * U[i, f]
    for j in range(V.shape[0]):
        for f in range(d):
            reg += V[j, f] * V[j, f]
    return sse, close, reg


@njit
def _half_gradient_nb(U, V, rows, cols, vals, prow, pcol, pw, lam, gamma, full):
    d = U.shape[1]
    dU = lam * U
    dV = lam * V
    for t in range(rows.shape[0]):
        i = rows[t]
        j = cols[t]
        pred = 0.0
        for f in range(d):
            pred += U[i, f] * V[j, f]
        e = vals[t] - pred
        for f in range(d):
            dU[i, f] -= e * V[j, f]
            dV[j, f] -= e * U[i, f]
    if gamma != 0.0:
        for t in range(prow.shape[0]):
            a = prow[t]
            b = pcol[t]
            w = gamma * pw[t]
            for f in range(d):
                diff = U[a, f] - U[b, f]
                dU[a, f] += w * diff
                if full:
                    dU[b, f] -= w * diff
    return dU, dV


@njit
def _sq_errors_nb(U, V, rows, cols, vals):
    d = U.shape[1]
    out = np.empty(rows.shape[0])
    for t in range(rows.shape[0]):
        pred = 0.0
        for f in range(d):
            pred += U[rows[t], f] * V[cols[t], f]
        out[t] = vals[t] - pred
    return out


# ---------------------------------------------------------------- numpy ----

def _terms_np(U, V, rows, cols, vals, prow, pcol, pw):
    e = vals - np.einsum("ij,ij->i", U[rows], V[cols])
    diff = U[prow] - U[pcol]
    close = float(pw @ np.einsum("ij,ij->i", diff, diff)) if len(pw) else 0.0
    return float(e @ e), close, float(np.sum(U * U) + np.sum(V * V))


def _half_gradient_np(U, V, rows, cols, vals, prow, pcol, pw, lam, gamma, full):
    n, m = U.shape[0], V.shape[0]
    e = vals - np.einsum("ij,ij->i", U[rows], V[cols])
    E = sp.csr_matrix((e, (rows, cols)), shape=(n, m))
    dU = lam * U - E @ V
    dV = lam * V - E.T @ U
    if gamma != 0.0 and len(pw):
        W = sp.csr_matrix((gamma * pw, (prow, pcol)), shape=(n, n))
        out_w = np.asarray(W.sum(axis=1)).ravel()
        dU += out_w[:, None] * U - W @ U
        if full:
            in_w = np.asarray(W.sum(axis=0)).ravel()
            dU += in_w[:, None] * U - W.T @ U
    return dU, dV


def _sq_errors_np(U, V, rows, cols, vals):
    return vals - np.einsum("ij,ij->i", U[rows], V[cols])


# -------------------------------------------------------------- dispatch ----

BACKENDS = {
    "numpy": (_terms_np, _half_gradient_np, _sq_errors_np),
    "numba": (_terms_nb, _half_gradient_nb, _sq_errors_nb),
}
DEFAULT_BACKEND = "numba" if USE_NUMBA else "numpy"


def _get(backend):
    return BACKENDS[backend or DEFAULT_BACKEND]


def objective_terms(U, V, rows, cols, vals, prow, pcol, pw, backend=None):
    """``(sum of squared residuals, weighted closeness sum, ||U||^2 + ||V||^2)``."""
    sse, close, reg = _get(backend)[0](U, V, rows, cols, vals, prow, pcol, pw)
    return float(sse), float(close), float(reg)


def half_gradient(U, V, rows, cols, vals, prow, pcol, pw, lam, gamma, full=True, backend=None):
    return _get(backend)[1](U, V, rows, cols, vals, prow, pcol, pw, float(lam), float(gamma), bool(full))


def residuals(U, V, rows, cols, vals, backend=None):
    """``vals - <U[rows], V[cols]>`` entry by entry."""
    return _get(backend)[2](U, V, rows, cols, vals)
