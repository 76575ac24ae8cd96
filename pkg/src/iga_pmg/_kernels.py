"""Compiled CSR kernels. Inputs are assumed canonical (sorted, no duplicates)."""
import numpy as np
from numba import njit

# status codes returned by ilut_kernel
OK = 0
ZERO_PIVOT = 1


@njit(cache=True)
def gauss_seidel_kernel(indptr, indices, data, diag, u, f):
    n = u.size
    for i in range(n):
        s = f[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j != i:
                s -= data[k] * u[j]
        u[i] = s / diag[i]


@njit(cache=True)
def lower_unit_solve(indptr, indices, data, b):
    n = b.size
    x = b.copy()
    for i in range(n):
        s = x[i]
        for k in range(indptr[i], indptr[i + 1]):
            s -= data[k] * x[indices[k]]
        x[i] = s
    return x


@njit(cache=True)
def upper_solve(indptr, indices, data, diag, b):
    n = b.size
    x = b.copy()
    for i in range(n - 1, -1, -1):
        s = x[i]
        for k in range(indptr[i], indptr[i + 1]):
            s -= data[k] * x[indices[k]]
        x[i] = s / diag[i]
    return x


@njit(cache=True)
def _keep_largest(cols, vals, count, keep):
    """Indices (into cols/vals) of the ``keep`` largest |vals|, sorted by column."""
    if count <= keep:
        order = np.argsort(cols[:count], kind="mergesort")
        return order
    mags = np.empty(count)
    for t in range(count):
        mags[t] = -abs(vals[t])
    order = np.argsort(mags, kind="mergesort")[:keep]
    sub = np.empty(keep, dtype=np.int64)
    for t in range(keep):
        sub[t] = cols[order[t]]
    return order[np.argsort(sub, kind="mergesort")]


@njit(cache=True)
def ilut_kernel(indptr, indices, data, n, tau, max_keep):
    """Row-wise IKJ ILUT with dual dropping.

    Returns (status, bad_row, L_indptr, L_indices, L_data, U_indptr,
    U_indices, U_data, U_diag); U excludes the diagonal.
    """
    cap = n * max_keep
    l_ptr = np.zeros(n + 1, dtype=np.int64)
    u_ptr = np.zeros(n + 1, dtype=np.int64)
    l_idx = np.empty(cap, dtype=np.int32)
    l_val = np.empty(cap)
    u_idx = np.empty(cap, dtype=np.int32)
    u_val = np.empty(cap)
    u_diag = np.zeros(n)

    w = np.zeros(n)
    mark = np.zeros(n, dtype=np.bool_)
    ucols = np.empty(n, dtype=np.int64)
    lcols = np.empty(n, dtype=np.int64)
    lvals = np.empty(n)
    uvals = np.empty(n)

    for i in range(n):
        start, stop = indptr[i], indptr[i + 1]
        rowsum = 0.0
        cnt = 0
        lmin = i
        nu = 0
        for k in range(start, stop):
            j = indices[k]
            v = data[k]
            if v != 0.0:
                rowsum += abs(v)
                cnt += 1
            w[j] = v
            mark[j] = True
            if j < lmin:
                lmin = j
            if j > i:
                ucols[nu] = j
                nu += 1
        thresh = tau * rowsum / cnt if cnt > 0 else 0.0
        diag_marked = mark[i]

        nl = 0
        for k in range(lmin, i):
            if not mark[k]:
                continue
            mark[k] = False
            fact = w[k] / u_diag[k]
            w[k] = 0.0
            if abs(fact) <= thresh:
                continue
            lcols[nl] = k
            lvals[nl] = fact
            nl += 1
            for t in range(u_ptr[k], u_ptr[k + 1]):
                j = u_idx[t]
                if not mark[j]:
                    mark[j] = True
                    w[j] = 0.0
                    if j > i:
                        ucols[nu] = j
                        nu += 1
                    elif j == i:
                        diag_marked = True
                w[j] -= fact * u_val[t]

        piv = w[i] if diag_marked else 0.0
        mark[i] = False
        w[i] = 0.0

        # gather surviving upper entries (drop rule 1)
        m = 0
        for t in range(nu):
            j = ucols[t]
            v = w[j]
            mark[j] = False
            w[j] = 0.0
            if abs(v) > thresh:
                ucols[m] = j
                uvals[m] = v
                m += 1

        if piv == 0.0:
            return ZERO_PIVOT, i, l_ptr, l_idx, l_val, u_ptr, u_idx, u_val, u_diag

        # drop rule 2
        sel = _keep_largest(lcols, lvals, nl, max_keep)
        pos = l_ptr[i]
        for t in range(sel.size):
            l_idx[pos] = lcols[sel[t]]
            l_val[pos] = lvals[sel[t]]
            pos += 1
        l_ptr[i + 1] = pos

        sel = _keep_largest(ucols, uvals, m, max_keep)
        pos = u_ptr[i]
        for t in range(sel.size):
            u_idx[pos] = ucols[sel[t]]
            u_val[pos] = uvals[sel[t]]
            pos += 1
        u_ptr[i + 1] = pos
        u_diag[i] = piv

    return OK, -1, l_ptr, l_idx, l_val, u_ptr, u_idx, u_val, u_diag
