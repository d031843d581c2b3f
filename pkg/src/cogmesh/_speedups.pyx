# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot numeric kernels (see _kernels_py for the
reference semantics)."""

from libc.math cimport atan

COMPILED = True


cpdef double reward(double delta_q, double a, double b, double c):
    cdef double r = (atan(a * delta_q) + b) / c
    if r < 0.0:
        return 0.0
    if r > 1.0:
        return 1.0
    return r


cpdef int quantize(double q_raw, double q_max, int stages):
    cdef int s = <int>(stages * q_raw / q_max)
    if s >= stages:
        return stages - 1
    if s < 0:
        return 0
    return s


cpdef dict hello_reinforce(dict weights, int master, double r):
    cdef double decay = 1.0 - r
    cdef dict out = {}
    cdef double w
    for ch, wv in weights.items():
        w = wv
        if ch == master:
            out[ch] = w + r * (1.0 - w)
        else:
            out[ch] = w * decay
    return out


cpdef dict blend_refresh(dict weights, dict target, double alpha):
    cdef double keep = 1.0 - alpha
    cdef dict out = {}
    cdef double w
    for ch, wv in weights.items():
        w = wv
        out[ch] = keep * w + alpha * <double>target[ch]
    return out


cpdef int largest_same_master_component(list neighbors, list masters):
    cdef int n = len(masters)
    cdef bytearray seen = bytearray(n)
    cdef list stack = []
    cdef int best = 0, size, start, u, v, m
    for start in range(n):
        if seen[start] or <int>masters[start] < 0:
            continue
        m = masters[start]
        seen[start] = 1
        stack.append(start)
        size = 0
        while stack:
            u = stack.pop()
            size += 1
            for vv in neighbors[u]:
                v = vv
                if not seen[v] and <int>masters[v] == m:
                    seen[v] = 1
                    stack.append(v)
        if size > best:
            best = size
    return best
