"""Hot numeric kernels with interchangeable numba and numpy backends.

The public names (``dense_rows``, ``sq_dists``, ``bin_counts``, ``midranks``,
``rbf_gram``, ``fw_capped_simplex``) resolve to one backend per process, see
:mod:`qkdad._accel`. The ``*_numba`` and ``*_numpy`` variants stay importable so
the benchmark and the cross-backend tests can call both.

Row-wise kernels compute each output row with a reduction order that does not
depend on how many rows are in the batch, so scoring one vector and scoring it
inside a batch give bitwise-equal results within a backend.
"""
import numpy as np

from ._accel import njit, pick

# Bounds the temporary (rows, out, in) block of the numpy dense kernel.
_CHUNK_ELEMS = 1 << 21


# -- dense layer ---------------------------------------------------------------

@njit
def dense_rows_numba(x, w, slope, activate):
    n, d_in = x.shape
    d_out = w.shape[0]
    out = np.empty((n, d_out))
    for i in range(n):
        for j in range(d_out):
            acc = 0.0
            for k in range(d_in):
                acc += x[i, k] * w[j, k]
            if activate and acc < 0.0:
                acc = acc * slope
            out[i, j] = acc
    return out


def dense_rows_numpy(x, w, slope, activate):
    n = x.shape[0]
    d_out, d_in = w.shape
    out = np.empty((n, d_out))
    step = max(1, _CHUNK_ELEMS // max(1, d_out * d_in))
    for start in range(0, n, step):
        block = x[start:start + step, None, :] * w[None, :, :]
        out[start:start + step] = block.sum(axis=2)
    if activate:
        np.multiply(out, slope, out=out, where=out < 0.0)
    return out


# -- squared distance to a centre ---------------------------------------------

@njit
def sq_dists_numba(z, c):
    n, p = z.shape
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(p):
            diff = z[i, j] - c[j]
            acc += diff * diff
        out[i] = acc
    return out


def sq_dists_numpy(z, c):
    diff = z - c
    return (diff * diff).sum(axis=1)


# -- histogram -------------------------------------------------------------------

@njit
def bin_counts_numba(values, width, n_bins):
    counts = np.zeros(n_bins, dtype=np.int64)
    for v in values:
        k = int(np.floor(v / width))
        # float edges are k * width; nudge k so that edge[k] <= v < edge[k+1]
        if k * width > v:
            k -= 1
        elif (k + 1) * width <= v:
            k += 1
        if k < 0:
            k = 0
        elif k >= n_bins:
            k = n_bins - 1
        counts[k] += 1
    return counts


def bin_counts_numpy(values, width, n_bins):
    values = np.asarray(values, dtype=np.float64)
    k = np.floor(values / width).astype(np.int64)
    k -= (k * width > values)
    k += ((k + 1) * width <= values)
    np.clip(k, 0, n_bins - 1, out=k)
    return np.bincount(k, minlength=n_bins).astype(np.int64)


# -- midranks --------------------------------------------------------------------

@njit
def midranks_numba(values):
    n = values.shape[0]
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        r = 0.5 * (i + j) + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = r
        i = j + 1
    return ranks


def midranks_numpy(values):
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    order = np.argsort(values, kind="mergesort")
    ordered = values[order]
    new_group = np.empty(n, dtype=bool)
    if n:
        new_group[0] = True
        new_group[1:] = ordered[1:] != ordered[:-1]
    starts = np.flatnonzero(new_group)
    ends = np.append(starts[1:], n) - 1
    group_rank = 0.5 * (starts + ends) + 1.0
    ranks = np.empty(n)
    ranks[order] = np.repeat(group_rank, ends - starts + 1)
    return ranks


# -- rbf gram matrix ---------------------------------------------------------------

@njit
def rbf_gram_numba(x, y, gamma):
    n, d = x.shape
    m = y.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                diff = x[i, k] - y[j, k]
                acc += diff * diff
            out[i, j] = np.exp(-gamma * acc)
    return out


def rbf_gram_numpy(x, y, gamma):
    diff = x[:, None, :] - y[None, :, :]
    return np.exp(-gamma * (diff * diff).sum(axis=2))


# -- Frank-Wolfe on the capped simplex -------------------------------------------

def _fw_capped_simplex(kmat, cap, alpha, max_iter, tol, refresh):
    """Maximise ``a.diag(K) - a'Ka`` over ``{0 <= a <= cap, sum(a) = 1}``.

    Each iteration computes the Frank-Wolfe vertex (greedy fill of the cap by
    descending gradient) and the pairwise direction ``e_i - e_j`` between the
    best coordinate that can grow and the worst one that can shrink, then
    takes whichever has the larger directional derivative with an exact line
    search. A step whose exactly evaluated objective would decrease is
    rejected and the solve stops. Returns ``(alpha, objective_trace, gap)``.

    Written against the numba-supported numpy subset so it runs both
    compiled and as plain numpy.
    """
    n = kmat.shape[0]
    diag = np.empty(n)
    for i in range(n):
        diag[i] = kmat[i, i]
    alpha = alpha.copy()
    ka = kmat @ alpha
    obj = alpha @ diag - alpha @ ka
    trace = np.empty(max_iter + 1)
    trace[0] = obj
    n_rec = 1
    gap = np.inf
    s = np.zeros(n)
    for it in range(max_iter):
        grad = diag - 2.0 * ka
        # Frank-Wolfe vertex of the capped simplex
        order = np.argsort(-grad, kind="mergesort")
        s[:] = 0.0
        mass = 1.0
        for t in range(n):
            idx = order[t]
            take = cap if cap < mass else mass
            s[idx] = take
            mass -= take
            if mass <= 0.0:
                break
        d_fw = s - alpha
        gap = grad @ d_fw
        if gap <= tol:
            break
        # pairwise candidate
        best_i = -1
        worst_j = -1
        for t in range(n):
            if alpha[t] < cap and (best_i < 0 or grad[t] > grad[best_i]):
                best_i = t
            if alpha[t] > 0.0 and (worst_j < 0 or grad[t] < grad[worst_j]):
                worst_j = t
        pw_gain = -np.inf
        if best_i >= 0 and worst_j >= 0 and best_i != worst_j:
            pw_gain = grad[best_i] - grad[worst_j]
        if pw_gain > gap:
            gmax = min(cap - alpha[best_i], alpha[worst_j])
            kd = kmat[:, best_i] - kmat[:, worst_j]
            curv = kmat[best_i, best_i] + kmat[worst_j, worst_j] - 2.0 * kmat[best_i, worst_j]
            slope = pw_gain
        else:
            gmax = 1.0
            kd = kmat @ s - ka
            curv = d_fw @ kd
            slope = gap
        if curv > 0.0:
            step = slope / (2.0 * curv)
            if step > gmax:
                step = gmax
        else:
            step = gmax
        if step <= 0.0:
            break
        if pw_gain > gap:
            new_alpha = alpha.copy()
            new_alpha[best_i] += step
            new_alpha[worst_j] -= step
            if new_alpha[worst_j] < 0.0:
                new_alpha[worst_j] = 0.0
            if new_alpha[best_i] > cap:
                new_alpha[best_i] = cap
        else:
            new_alpha = alpha + step * d_fw
        if (it + 1) % refresh == 0:
            new_ka = kmat @ new_alpha
        else:
            new_ka = ka + step * kd
        new_obj = new_alpha @ diag - new_alpha @ new_ka
        if new_obj < obj:
            break
        alpha = new_alpha
        ka = new_ka
        obj = new_obj
        trace[n_rec] = obj
        n_rec += 1
    return alpha, trace[:n_rec].copy(), gap


fw_capped_simplex_numba = njit(_fw_capped_simplex)
fw_capped_simplex_numpy = _fw_capped_simplex


dense_rows = pick(dense_rows_numba, dense_rows_numpy)
sq_dists = pick(sq_dists_numba, sq_dists_numpy)
bin_counts = pick(bin_counts_numba, bin_counts_numpy)
midranks = pick(midranks_numba, midranks_numpy)
rbf_gram = pick(rbf_gram_numba, rbf_gram_numpy)
fw_capped_simplex = pick(fw_capped_simplex_numba, fw_capped_simplex_numpy)
