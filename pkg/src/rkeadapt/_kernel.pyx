# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled event-loop kernel; must match ``_kernel_py`` bit for bit."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t, int8_t, uint8_t

cnp.import_array()

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double _INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def run_segment(object key, int64_t start, int64_t n, int64_t last_unmapped,
                int64_t hop_increment,
                const uint8_t[::1] enabled, const double[::1] probs,
                int8_t[:, ::1] marks, int64_t[::1] head, int64_t[::1] filled,
                int64_t[::1] win_ok, int64_t[::1] total_ok, int64_t[::1] total_err,
                int64_t[::1] out_channel, uint8_t[::1] out_success,
                double[::1] out_latest, double[::1] out_total):
    cdef uint64_t k = <uint64_t>(int(key) & 0xFFFFFFFFFFFFFFFF)
    cdef int64_t w = marks.shape[1]
    cdef int64_t used[37]
    cdef int64_t n_used = 0
    cdef int64_t c, i, e, h, unmapped = last_unmapped
    cdef int64_t pooled_ok = 0, pooled_n = 0, sum_ok = 0, sum_all = 0
    cdef double u
    cdef bint ok

    for c in range(37):
        if enabled[c]:
            used[n_used] = c
            n_used += 1
            pooled_ok += win_ok[c]
            pooled_n += filled[c]
        sum_ok += total_ok[c]
        sum_all += total_ok[c] + total_err[c]
    if n_used == 0:
        raise RuntimeError("channel map has no enabled channels")

    with nogil:
        for i in range(n):
            e = start + i
            unmapped = (unmapped + hop_increment) % 37
            if enabled[unmapped]:
                c = unmapped
            else:
                c = used[unmapped % n_used]
            u = <double>(_mix64(k + <uint64_t>(e + 1) * _GOLDEN) >> 11) * _INV53
            ok = u < probs[c]

            h = head[c]
            if filled[c] == w:
                if marks[c, h] == 1:
                    win_ok[c] -= 1
                    pooled_ok -= 1
            else:
                filled[c] += 1
                pooled_n += 1
            if ok:
                marks[c, h] = 1
                win_ok[c] += 1
                pooled_ok += 1
                total_ok[c] += 1
                sum_ok += 1
            else:
                marks[c, h] = -1
                total_err[c] += 1
            sum_all += 1
            head[c] = (h + 1) % w

            out_channel[i] = c
            out_success[i] = 1 if ok else 0
            if pooled_n:
                out_latest[i] = 100.0 * pooled_ok / pooled_n
            else:
                out_latest[i] = 100.0
            out_total[i] = 100.0 * sum_ok / sum_all
    return unmapped
