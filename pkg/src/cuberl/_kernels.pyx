# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled cube hot loops: ranking, unranking and the breadth-first sweep."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint8_t, int16_t

cnp.import_array()

cdef enum:
    N_ORI = 729
    N_STATES = 3674160
    UNREACHED = 255

cdef int64_t[7] FACT = [720, 120, 24, 6, 2, 1, 1]
cdef int64_t[6] POW3 = [243, 81, 27, 9, 3, 1]


def rank_states(const uint8_t[:, ::1] states, const cnp.intp_t[:, ::1] slot_stickers,
                const int16_t[::1] lookup):
    cdef Py_ssize_t n = states.shape[0], r, j, k
    cdef int64_t[::1] out = np.empty(n, dtype=np.int64)
    cdef int perm[8]
    cdef int ori[8]
    cdef int seen, code, twist, lehmer
    cdef int64_t prank, orank
    with nogil:
        for r in range(n):
            seen = 0
            twist = 0
            code = 0
            for j in range(8):
                code = lookup[states[r, slot_stickers[j, 0]] * 36
                              + states[r, slot_stickers[j, 1]] * 6
                              + states[r, slot_stickers[j, 2]]]
                if code < 0:
                    break
                perm[j] = code // 3
                ori[j] = code % 3
                seen |= 1 << perm[j]
            if code < 0 or seen != 255 or perm[7] != 7 or ori[7] != 0:
                out[r] = -1
                continue
            for j in range(7):
                twist += ori[j]
            if twist % 3 != 0:
                out[r] = -1
                continue
            prank = 0
            for j in range(7):
                lehmer = 0
                for k in range(j + 1, 7):
                    if perm[k] < perm[j]:
                        lehmer += 1
                prank += lehmer * FACT[j]
            orank = 0
            for j in range(6):
                orank += ori[j] * POW3[j]
            out[r] = prank * N_ORI + orank
    return np.asarray(out)


def unrank_states(const int64_t[::1] indices, const cnp.intp_t[:, ::1] slot_stickers,
                  const uint8_t[:, ::1] cubie_colors):
    cdef Py_ssize_t n = indices.shape[0], r, j, k, m
    cdef uint8_t[:, ::1] out = np.empty((n, 24), dtype=np.uint8)
    cdef int perm[8]
    cdef int ori[8]
    cdef int avail[7]
    cdef int64_t prank, orank, d
    cdef int twist
    with nogil:
        for r in range(n):
            prank = indices[r] // N_ORI
            orank = indices[r] % N_ORI
            for j in range(7):
                avail[j] = j
            for j in range(7):
                d = prank // FACT[j]
                prank = prank % FACT[j]
                perm[j] = avail[d]
                for m in range(d, 6 - j):
                    avail[m] = avail[m + 1]
            perm[7] = 7
            twist = 0
            for j in range(6):
                ori[j] = orank // POW3[j]
                orank = orank % POW3[j]
                twist += ori[j]
            ori[6] = (3 - twist % 3) % 3
            ori[7] = 0
            for j in range(8):
                for k in range(3):
                    out[r, slot_stickers[j, (k + ori[j]) % 3]] = cubie_colors[perm[j], k]
    return np.asarray(out)


def bfs_depths(perm_table, ori_table):
    cdef int64_t[:, ::1] pt = np.ascontiguousarray(perm_table, dtype=np.int64)
    cdef int64_t[:, ::1] ot = np.ascontiguousarray(ori_table, dtype=np.int64)
    depth_arr = np.full(N_STATES, UNREACHED, dtype=np.uint8)
    cdef uint8_t[::1] depth = depth_arr
    cdef int64_t[::1] queue = np.empty(N_STATES, dtype=np.int64)
    cdef Py_ssize_t head = 0, tail = 1, m
    cdef int64_t cur, p, o, nxt
    n_moves = pt.shape[1]
    cdef Py_ssize_t nm = n_moves
    queue[0] = 0
    depth[0] = 0
    with nogil:
        while head < tail:
            cur = queue[head]
            head += 1
            p = cur // N_ORI
            o = cur % N_ORI
            for m in range(nm):
                nxt = pt[p, m] * N_ORI + ot[o, m]
                if depth[nxt] == UNREACHED:
                    depth[nxt] = depth[cur] + 1
                    queue[tail] = nxt
                    tail += 1
    return depth_arr
