"""Compiled coordinate-descent kernels for the graphical lasso.

The column subproblem for column ``j`` is

    min_beta  1/2 beta' W11 beta - beta' s12 + sum_k pen_k |beta_k|

where ``W11`` is ``W`` without row/column ``j``.  Instead of copying ``W11``
the kernels index the full ``W`` and skip ``j``.  ``wb`` holds ``W[:, -j] @ beta``
and is updated incrementally, one column of ``W`` per nonzero coordinate step.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _soft(x, t):
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


@njit(cache=True)
def _kkt_violation(s, pen, beta, wb, j):
    """Largest subgradient violation of the column-``j`` lasso problem."""
    p = s.shape[0]
    worst = 0.0
    for k in range(p):
        if k == j:
            continue
        g = wb[k] - s[k]
        if beta[k] != 0.0:
            v = abs(g + pen[k] * np.sign(beta[k]))
        else:
            v = abs(g) - pen[k]
            if v < 0.0:
                v = 0.0
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def column_lasso(W, s, pen, beta, wb, j, cd_tol, max_iter):
    """Cyclical coordinate descent, in place on ``beta`` and ``wb``.

    Stops once the subgradient conditions hold to ``cd_tol``.  Returns the
    number of passes and the final violation.
    """
    p = W.shape[0]
    viol = _kkt_violation(s, pen, beta, wb, j)
    it = 0
    while viol > cd_tol and it < max_iter:
        for k in range(p):
            if k == j:
                continue
            wkk = W[k, k]
            r = s[k] - (wb[k] - wkk * beta[k])
            new = _soft(r, pen[k]) / wkk
            delta = new - beta[k]
            if delta != 0.0:
                beta[k] = new
                for i in range(p):
                    wb[i] += delta * W[i, k]
        it += 1
        viol = _kkt_violation(s, pen, beta, wb, j)
    return it, viol


@njit(cache=True)
def _fill_wb(W, beta, j, wb):
    p = W.shape[0]
    for i in range(p):
        wb[i] = 0.0
    for l in range(p):
        if l != j and beta[l] != 0.0:
            b = beta[l]
            for i in range(p):
                wb[i] += b * W[i, l]


@njit(cache=True)
def glasso_sweep(W, S, P, Beta, cd_tol, max_cd_iter):
    """One pass over all columns (j = 0..p-1).

    ``Beta[:, j]`` holds the warm-start coefficients of column ``j``.  Returns
    the worst final subproblem violation seen in the sweep.
    """
    p = W.shape[0]
    wb = np.empty(p)
    worst = 0.0
    for j in range(p):
        beta = Beta[:, j].copy()
        beta[j] = 0.0
        _fill_wb(W, beta, j, wb)
        _, viol = column_lasso(W, S[:, j], P[:, j], beta, wb, j, cd_tol, max_cd_iter)
        if viol > worst:
            worst = viol
        for i in range(p):
            Beta[i, j] = beta[i]
            if i != j:
                W[i, j] = wb[i]
                W[j, i] = wb[i]
    return worst


@njit(cache=True)
def recover_precision(W, Beta):
    """Final cycle: ``1/theta22 = w22 - beta'w12`` and ``theta12 = -theta22 beta``."""
    p = W.shape[0]
    Theta = np.zeros((p, p))
    for j in range(p):
        acc = 0.0
        for i in range(p):
            if i != j:
                acc += Beta[i, j] * W[i, j]
        t22 = 1.0 / (W[j, j] - acc)
        Theta[j, j] = t22
        for i in range(p):
            if i != j:
                Theta[i, j] = -t22 * Beta[i, j]
    return Theta
