# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loop of the per-block coordinate descent cycle."""


def cd_cycle(const long long[::1] indptr,
             const long long[::1] rows,
             const double[::1] vals,
             const double[::1] g,
             const double[::1] w,
             const double[::1] beta,
             double[::1] delta,
             double[::1] d,
             double mu, double nu, double lam1, double lam2,
             Py_ssize_t start, Py_ssize_t count,
             const signed char[::1] stop_flag):
    """Visit up to ``count`` coordinates cyclically from ``start``.

    Updates ``delta`` (total step per coordinate) and ``d`` (block margin
    delta) in place. Returns (visited, next_index); stops early as soon as
    ``stop_flag[0]`` is set, checked once per coordinate.
    """
    cdef Py_ssize_t F = beta.shape[0]
    cdef Py_ssize_t visited = 0
    cdef Py_ssize_t j = start
    cdef Py_ssize_t k, lo, hi, i
    cdef double s1, s2, x, bj, num, den, shrunk, new_total, step

    while visited < count:
        if stop_flag[0]:
            break
        lo = indptr[j]
        hi = indptr[j + 1]
        s1 = 0.0
        s2 = 0.0
        for k in range(lo, hi):
            i = rows[k]
            x = vals[k]
            s1 += x * (-g[i] - mu * w[i] * d[i])
            s2 += w[i] * x * x
        bj = beta[j] + delta[j]
        num = s1 + mu * s2 * bj + nu * beta[j]
        den = mu * s2 + lam2 + nu
        if num > lam1:
            shrunk = num - lam1
        elif num < -lam1:
            shrunk = num + lam1
        else:
            shrunk = 0.0
        new_total = shrunk / den - beta[j]
        step = new_total - delta[j]
        if step != 0.0:
            delta[j] = new_total
            for k in range(lo, hi):
                d[rows[k]] += step * vals[k]
        visited += 1
        j += 1
        if j == F:
            j = 0
    return visited, j
