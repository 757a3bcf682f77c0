"""Vectorised numpy versions of the cube hot loops.

Used when the compiled ``_kernels`` extension is unavailable; both modules
expose the same three functions with identical results.
"""
import numpy as np

N_ORI = 729
N_STATES = 5040 * 729
UNREACHED = 255

_FACT = np.array([720, 120, 24, 6, 2, 1, 1], dtype=np.int64)
_POW3 = np.array([243, 81, 27, 9, 3, 1], dtype=np.int64)


def rank_states(states, slot_stickers, lookup):
    """Dense index per row of ``states``; -1 for rows that are not valid states."""
    states = np.asarray(states)
    trip = states[:, slot_stickers].astype(np.int64)
    code = lookup[trip[..., 0] * 36 + trip[..., 1] * 6 + trip[..., 2]].astype(np.int64)
    valid = (code >= 0).all(axis=1)
    code = np.where(code >= 0, code, 0)
    perm, ori = code // 3, code % 3

    # the fixed corner in place and untwisted, every cubie exactly once
    valid &= (perm[:, 7] == 7) & (ori[:, 7] == 0)
    valid &= (np.sort(perm, axis=1) == np.arange(8)).all(axis=1)
    valid &= ori[:, :7].sum(axis=1) % 3 == 0

    p = perm[:, :7]
    smaller_after = (p[:, None, :] < p[:, :, None]) & np.triu(np.ones((7, 7), bool), 1)
    lehmer = smaller_after.sum(axis=2)
    prank = lehmer @ _FACT
    orank = ori[:, :6] @ _POW3
    return np.where(valid, prank * N_ORI + orank, -1)


def unrank_states(indices, slot_stickers, cubie_colors):
    indices = np.asarray(indices, dtype=np.int64)
    n = indices.shape[0]
    prank, orank = np.divmod(indices, N_ORI)

    perm = np.empty((n, 8), dtype=np.int64)
    perm[:, 7] = 7
    avail = np.tile(np.arange(7), (n, 1))
    rows = np.arange(n)
    for j in range(7):
        d, prank = np.divmod(prank, _FACT[j])
        perm[:, j] = avail[rows, d]
        # drop the chosen entry, keeping the rest in order
        keep = np.arange(7 - j)[None, :] != d[:, None]
        avail = avail[keep].reshape(n, 6 - j) if j < 6 else avail

    ori = np.zeros((n, 8), dtype=np.int64)
    for j in range(6):
        ori[:, j], orank = np.divmod(orank, _POW3[j])
    ori[:, 6] = (-ori[:, :6].sum(axis=1)) % 3

    out = np.empty((n, 24), dtype=np.uint8)
    for j in range(8):
        for k in range(3):
            out[rows, slot_stickers[j][(k + ori[:, j]) % 3]] = cubie_colors[perm[:, j], k]
    return out


def bfs_depths(perm_table, ori_table):
    """Breadth-first depth of every index from index 0 (the solved state)."""
    perm_table = np.asarray(perm_table, dtype=np.int64)
    ori_table = np.asarray(ori_table, dtype=np.int64)
    depth = np.full(N_STATES, UNREACHED, dtype=np.uint8)
    depth[0] = 0
    frontier = np.array([0], dtype=np.int64)
    d = 0
    while frontier.size:
        p, o = np.divmod(frontier, N_ORI)
        nbrs = (perm_table[p] * N_ORI + ori_table[o]).ravel()
        nbrs = nbrs[depth[nbrs] == UNREACHED]
        frontier = np.unique(nbrs)
        d += 1
        depth[frontier] = d
    return depth
