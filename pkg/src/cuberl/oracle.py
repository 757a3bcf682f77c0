"""Exact cost-to-go for every state, by breadth-first search from solved.

The table is indexed by :func:`cuberl.cube.state_index` and persisted as::

    b"CUBE2ORC"             8-byte magic
    u8   version            currently 1
    u8[3674160] depths
    u32  n_bins             little-endian
    u32[n_bins] histogram   states per depth, little-endian
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cube, kernels

log = logging.getLogger(__name__)

MAGIC = b"CUBE2ORC"
VERSION = 1
UNREACHED = 255


class OracleFormatError(ValueError):
    pass


def coordinate_tables() -> tuple[np.ndarray, np.ndarray]:
    """Move tables on the permutation (5040) and twist (729) coordinates.

    Ranking is separable, ``index = perm_rank * 729 + twist_rank``, and each
    generator acts on the two coordinates independently.
    """
    # representatives: identity-twist states for every permutation rank and
    # identity-permutation states for every twist rank
    p_states = cube.index_to_state_batch(np.arange(cube.N_PERM) * cube.N_ORI)
    o_states = cube.index_to_state_batch(np.arange(cube.N_ORI))
    perm_table = np.empty((cube.N_PERM, cube.N_ACTIONS), dtype=np.int64)
    ori_table = np.empty((cube.N_ORI, cube.N_ACTIONS), dtype=np.int64)
    for a in range(cube.N_ACTIONS):
        perm_table[:, a] = cube.state_index_batch(cube.step_batch(p_states, np.full(cube.N_PERM, a))) // cube.N_ORI
        ori_table[:, a] = cube.state_index_batch(cube.step_batch(o_states, np.full(cube.N_ORI, a))) % cube.N_ORI
    return perm_table, ori_table


@dataclass
class OracleTable:
    costs: np.ndarray  # uint8, one depth per state index
    histogram: np.ndarray  # int64, states per depth

    @property
    def diameter(self) -> int:
        return len(self.histogram) - 1

    def cost(self, s: cube.CubeState) -> int:
        return int(self.costs[cube.state_index(s)])

    def costs_of(self, states: np.ndarray) -> np.ndarray:
        return self.costs[cube.state_index_batch(states)].astype(np.int64)

    def pair_costs(self, starts: np.ndarray, targets: np.ndarray) -> np.ndarray:
        return self.costs_of(cube.relative_states(starts, targets))

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<B", VERSION))
            fh.write(self.costs.astype(np.uint8).tobytes())
            fh.write(struct.pack("<I", len(self.histogram)))
            fh.write(self.histogram.astype("<u4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "OracleTable":
        raw = Path(path).read_bytes()
        head = len(MAGIC) + 1
        if raw[: len(MAGIC)] != MAGIC:
            raise OracleFormatError(f"{path}: bad magic")
        if raw[len(MAGIC)] != VERSION:
            raise OracleFormatError(f"{path}: unsupported version {raw[len(MAGIC)]}")
        end = head + cube.N_STATES
        if len(raw) < end + 4:
            raise OracleFormatError(f"{path}: truncated")
        costs = np.frombuffer(raw, dtype=np.uint8, count=cube.N_STATES, offset=head).copy()
        (n_bins,) = struct.unpack_from("<I", raw, end)
        if len(raw) != end + 4 + 4 * n_bins:
            raise OracleFormatError(f"{path}: histogram footer length mismatch")
        hist = np.frombuffer(raw, dtype="<u4", count=n_bins, offset=end + 4).astype(np.int64)
        table = cls(costs, hist)
        if not np.array_equal(np.bincount(costs, minlength=n_bins)[:n_bins], hist):
            raise OracleFormatError(f"{path}: histogram does not match depths")
        return table


def build_oracle() -> OracleTable:
    perm_table, ori_table = coordinate_tables()
    costs = kernels.bfs_depths(perm_table, ori_table)
    if (costs == UNREACHED).any():
        raise RuntimeError(f"{int((costs == UNREACHED).sum())} states unreached by BFS")
    hist = np.bincount(costs).astype(np.int64)
    log.info("oracle built: %d states, diameter %d", costs.size, len(hist) - 1)
    return OracleTable(costs, hist)


def load_or_build(path: str | Path) -> OracleTable:
    path = Path(path)
    if path.exists():
        try:
            return OracleTable.load(path)
        except OracleFormatError as exc:
            log.warning("rebuilding oracle: %s", exc)
    table = build_oracle()
    table.save(path)
    return table


def oracle_cost(t: OracleTable, s: cube.CubeState) -> int:
    return t.cost(s)


def oracle_pair_cost(t: OracleTable, s_s: cube.CubeState, s_t: cube.CubeState) -> int:
    return int(t.pair_costs(s_s.array[None], s_t.array[None])[0])


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks, ties sharing the mean of the positions they span."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    run_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(run_rank, ends - starts)
    return ranks


def spearman(xs, ys) -> float:
    """Rank correlation with average ranks for ties.

    Returns 0.0 when either side is constant (no ordering information).
    """
    xs = np.asarray(xs, dtype=np.float64).ravel()
    ys = np.asarray(ys, dtype=np.float64).ravel()
    if xs.shape != ys.shape:
        raise ValueError(f"length mismatch: {xs.size} vs {ys.size}")
    if xs.size < 2:
        raise ValueError("need at least two observations")
    rx, ry = average_ranks(xs), average_ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0:
        return 0.0
    return float(np.clip((rx * ry).sum() / denom, -1.0, 1.0))
