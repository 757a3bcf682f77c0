"""Exact algebra of the 2x2x2 cube.

Stickers are numbered face by face in the order U, D, F, B, L, R, four per
face, row-major as seen from outside the cube with the usual net layout:

    U: back row first, left to right        F: top row first, left to right
    D: front row first, left to right       B: top row first, right to left
    L: top row first, back to front         R: top row first, front to back

Sticker colours are the index of their home face, so the solved state is
``[0,0,0,0, 1,1,1,1, ..., 5,5,5,5]``.

Only U, F and R quarter turns (and their inverses) are generated.  None of
them touches the down-left-back corner, which therefore stays put and fixes
the orientation of the whole cube.  This leaves 7! * 3^6 = 3,674,160 states,
each addressed by a dense :func:`state_index`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from math import factorial
from typing import Iterable

import numpy as np

from . import kernels

N_STICKERS = 24
N_COLORS = 6
N_ACTIONS = 6
N_PERM = factorial(7)  # 5040
N_ORI = 3**6  # 729
N_STATES = N_PERM * N_ORI  # 3,674,160

FACES = "UDFBLR"
_NORMALS = {
    "U": (0, 1, 0),
    "D": (0, -1, 0),
    "F": (0, 0, 1),
    "B": (0, 0, -1),
    "L": (-1, 0, 0),
    "R": (1, 0, 0),
}


def _face_cells(face: str) -> list[tuple[int, int, int]]:
    # cubie centres (x, y, z) in +-1 coordinates, in row-major reading order
    v = (1, -1)
    cells = {
        "U": [(x, 1, z) for z in (-1, 1) for x in (-1, 1)],
        "D": [(x, -1, z) for z in (1, -1) for x in (-1, 1)],
        "F": [(x, y, 1) for y in v for x in (-1, 1)],
        "B": [(x, y, -1) for y in v for x in (1, -1)],
        "L": [(-1, y, z) for y in v for z in (-1, 1)],
        "R": [(1, y, z) for y in v for z in (1, -1)],
    }
    return cells[face]


# (position, normal) for each sticker index
STICKER_GEOMETRY: tuple[tuple[tuple[int, int, int], tuple[int, int, int]], ...] = tuple(
    (cell, _NORMALS[f]) for f in FACES for cell in _face_cells(f)
)
_GEOMETRY_INDEX = {g: i for i, g in enumerate(STICKER_GEOMETRY)}


def _rotation(axis: str) -> np.ndarray:
    # clockwise quarter turn seen from the positive end of the axis
    if axis == "y":
        return np.array([[0, 0, -1], [0, 1, 0], [1, 0, 0]])
    if axis == "z":
        return np.array([[0, 1, 0], [-1, 0, 0], [0, 0, 1]])
    return np.array([[1, 0, 0], [0, 0, 1], [0, -1, 0]])


def _turn_perm(axis: str) -> np.ndarray:
    """Permutation ``p`` with ``new = old[p]`` for a clockwise layer turn."""
    k = "xyz".index(axis)
    rot = _rotation(axis)
    perm = np.arange(N_STICKERS)
    for i, (pos, normal) in enumerate(STICKER_GEOMETRY):
        if pos[k] != 1:
            continue
        dest = (tuple(int(c) for c in rot @ pos), tuple(int(c) for c in rot @ normal))
        perm[_GEOMETRY_INDEX[dest]] = i
    return perm


def _invert(perm: np.ndarray) -> np.ndarray:
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return inv


_U, _F, _R = _turn_perm("y"), _turn_perm("z"), _turn_perm("x")
ACTION_PERMS = np.stack([_U, _invert(_U), _F, _invert(_F), _R, _invert(_R)]).astype(np.intp)
ACTION_PERMS.setflags(write=False)


class Action(enum.IntEnum):
    """The six quarter-turn generators; ``a ^ 1`` is the inverse turn."""

    U = 0
    Ui = 1
    F = 2
    Fi = 3
    R = 4
    Ri = 5

    @property
    def perm(self) -> np.ndarray:
        return ACTION_PERMS[self]

    @property
    def notation(self) -> str:
        return self.name[0] + ("'" if self.name.endswith("i") else "")

    @classmethod
    def parse(cls, token: str) -> "Action":
        try:
            return cls[token[0] + ("i" if token.endswith("'") else "")]
        except KeyError:
            raise ValueError(f"unknown move {token!r}") from None


def inverse(a: Action) -> Action:
    return Action(a ^ 1)


# ---------------------------------------------------------------- corners
# Slots URF UFL ULB UBR DFR DLF DBL DRB; DBL (the DLB corner) is last and fixed.
_SLOT_CENTRES = [
    (1, 1, 1), (-1, 1, 1), (-1, 1, -1), (1, 1, -1),
    (1, -1, 1), (-1, -1, 1), (-1, -1, -1), (1, -1, -1),
]
_SLOT_ORDER = [0, 1, 2, 3, 4, 5, 7, 6]  # free slots 0..6, DLB slot last
FIXED_SLOT = 7


def _slot_stickers(centre) -> list[int]:
    """Sticker indices of a corner, U/D sticker first, then clockwise."""
    mine = [i for i, (pos, _) in enumerate(STICKER_GEOMETRY) if pos == centre]
    ud = next(i for i in mine if STICKER_GEOMETRY[i][1][1] != 0)
    a, b = (i for i in mine if i != ud)
    n0, na, nb = (np.array(STICKER_GEOMETRY[i][1]) for i in (ud, a, b))
    if np.linalg.det(np.stack([n0, na, nb])) < 0:
        a, b = b, a
    return [ud, a, b]


SLOT_STICKERS = np.array(
    [_slot_stickers(_SLOT_CENTRES[j]) for j in _SLOT_ORDER], dtype=np.intp
)
SLOT_STICKERS.setflags(write=False)

SOLVED = np.repeat(np.arange(N_COLORS, dtype=np.uint8), 4)
SOLVED.setflags(write=False)

# colour triples of each cubie in its home slot, in slot sticker order
CUBIE_COLORS = SOLVED[SLOT_STICKERS]

# (c0*36 + c1*6 + c2) -> cubie*3 + twist, -1 where no cubie has that reading
COLOR_LOOKUP = np.full(N_COLORS**3, -1, dtype=np.int16)
for _c in range(8):
    for _o in range(3):
        _cols = [0, 0, 0]
        for _k in range(3):
            _cols[(_k + _o) % 3] = CUBIE_COLORS[_c, _k]
        COLOR_LOOKUP[_cols[0] * 36 + _cols[1] * 6 + _cols[2]] = _c * 3 + _o
COLOR_LOOKUP.setflags(write=False)


# ----------------------------------------------------------------- states
@dataclass(frozen=True)
class CubeState:
    """An immutable 24-sticker colour vector."""

    stickers: tuple[int, ...]

    def __post_init__(self):
        if len(self.stickers) != N_STICKERS:
            raise ValueError(f"expected {N_STICKERS} stickers, got {len(self.stickers)}")
        if any(not 0 <= c < N_COLORS for c in self.stickers):
            raise ValueError("sticker colours must lie in 0..5")

    @classmethod
    def from_array(cls, arr: Iterable[int]) -> "CubeState":
        return cls(tuple(int(c) for c in arr))

    @classmethod
    def parse(cls, text: str) -> "CubeState":
        digits = [ch for ch in text if not ch.isspace()]
        return cls(tuple(int(ch) for ch in digits))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.stickers, dtype=np.uint8)

    def __str__(self) -> str:
        s = "".join(map(str, self.stickers))
        return " ".join(s[i:i + 4] for i in range(0, N_STICKERS, 4))


@dataclass(frozen=True)
class ScrambleSequence:
    actions: tuple[Action, ...]
    resulting_state: CubeState

    @property
    def notation(self) -> str:
        return format_moves(self.actions)


def format_moves(actions: Iterable[Action]) -> str:
    return " ".join(Action(a).notation for a in actions)


def parse_moves(text: str) -> list[Action]:
    return [Action.parse(tok) for tok in text.split()]


def solved_state() -> CubeState:
    return CubeState.from_array(SOLVED)


def is_solved(s: CubeState) -> bool:
    return s.stickers == _SOLVED_TUPLE


_SOLVED_TUPLE = tuple(int(c) for c in SOLVED)


def apply_action(s: CubeState, a: Action) -> CubeState:
    return CubeState.from_array(s.array[ACTION_PERMS[a]])


def apply_moves(s: CubeState, actions: Iterable[Action]) -> CubeState:
    arr = s.array
    for a in actions:
        arr = arr[ACTION_PERMS[a]]
    return CubeState.from_array(arr)


def step_batch(states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Apply one action per row of an ``(n, 24)`` sticker array."""
    return np.take_along_axis(states, ACTION_PERMS[actions], axis=1)


def sample_actions(rng: np.random.Generator, history: np.ndarray) -> np.ndarray:
    """Draw one uniform action per row, rejecting a fourth identical turn.

    ``history`` is an ``(n, 3)`` array of the last three actions per row
    (``-1`` where the trajectory is shorter).
    """
    n = history.shape[0]
    out = rng.integers(0, N_ACTIONS, size=n)
    banned = np.where(
        (history[:, 0] == history[:, 1]) & (history[:, 1] == history[:, 2]),
        history[:, 2],
        -1,
    )
    bad = out == banned
    while bad.any():
        out[bad] = rng.integers(0, N_ACTIONS, size=int(bad.sum()))
        bad = out == banned
    return out


def random_scramble(
    rng: np.random.Generator, k: int, start: CubeState | None = None
) -> ScrambleSequence:
    """``k`` uniform turns with no turn repeated more than three times in a row."""
    if k < 0:
        raise ValueError("twist count must be non-negative")
    arr = (start.array if start is not None else SOLVED.copy())[None, :]
    hist = np.full((1, 3), -1, dtype=np.int64)
    moves = []
    for _ in range(k):
        a = sample_actions(rng, hist)
        arr = step_batch(arr, a)
        hist = np.concatenate([hist[:, 1:], a[:, None]], axis=1)
        moves.append(Action(int(a[0])))
    return ScrambleSequence(tuple(moves), CubeState.from_array(arr[0]))


def random_walks(
    rng: np.random.Generator, starts: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Constrained random walks from each row of ``starts``.

    Returns ``(states, actions)`` shaped ``(n, k, 24)`` and ``(n, k)``;
    ``states[:, i]`` is the state after ``i + 1`` twists.
    """
    n = starts.shape[0]
    states = np.empty((n, k, N_STICKERS), dtype=np.uint8)
    actions = np.empty((n, k), dtype=np.int64)
    hist = np.full((n, 3), -1, dtype=np.int64)
    cur = starts
    for i in range(k):
        a = sample_actions(rng, hist)
        cur = step_batch(cur, a)
        states[:, i] = cur
        actions[:, i] = a
        hist[:, :2] = hist[:, 1:]
        hist[:, 2] = a
    return states, actions


# --------------------------------------------------------------- indexing
def state_index_batch(states: np.ndarray) -> np.ndarray:
    """Dense indices for an ``(n, 24)`` array; raises on non-canonical rows."""
    states = np.ascontiguousarray(states, dtype=np.uint8).reshape(-1, N_STICKERS)
    idx = kernels.rank_states(states, SLOT_STICKERS, COLOR_LOOKUP)
    if (idx < 0).any():
        bad = int(np.flatnonzero(idx < 0)[0])
        raise ValueError(f"row {bad} is not a reachable canonical state")
    return idx


def index_to_state_batch(indices: np.ndarray) -> np.ndarray:
    indices = np.ascontiguousarray(indices, dtype=np.int64).reshape(-1)
    if indices.size and (indices.min() < 0 or indices.max() >= N_STATES):
        raise ValueError(f"state index out of range [0, {N_STATES})")
    return kernels.unrank_states(indices, SLOT_STICKERS, CUBIE_COLORS)


def state_index(s: CubeState) -> int:
    return int(state_index_batch(s.array[None, :])[0])


def index_to_state(i: int) -> CubeState:
    return CubeState.from_array(index_to_state_batch(np.array([i]))[0])


def random_states(rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` states drawn uniformly from the whole reachable set."""
    return index_to_state_batch(rng.integers(0, N_STATES, size=n))


# ---------------------------------------------------------- cubie algebra
def cubies(states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Corner permutation and twist per slot, each ``(n, 8)``.  No validation."""
    trip = states[:, SLOT_STICKERS].astype(np.int64)
    code = COLOR_LOOKUP[trip[..., 0] * 36 + trip[..., 1] * 6 + trip[..., 2]].astype(np.int64)
    return code // 3, code % 3


def sticker_perms(states: np.ndarray) -> np.ndarray:
    """The unique permutation ``g`` per row with ``state = SOLVED[g]``."""
    perm, ori = cubies(states)
    n = states.shape[0]
    g = np.empty((n, N_STICKERS), dtype=np.intp)
    for k in range(3):
        # sticker k of each slot shows the cubie's colour number (k - twist)
        src = SLOT_STICKERS[perm, (k - ori) % 3]
        g[:, SLOT_STICKERS[:, k]] = src
    return g



def relative_states(starts: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """The state ``w`` with ``dist(start, target) = dist(w, solved)``.

    With ``start = SOLVED[gs]`` and ``target = SOLVED[gt]`` every path from
    start to target is a word ``gs^-1 gt``; the returned state is that word
    applied to the solved cube.
    """
    gs = sticker_perms(starts)
    gt = sticker_perms(targets)
    inv = np.empty_like(gs)
    np.put_along_axis(inv, gs, np.broadcast_to(np.arange(N_STICKERS), gs.shape), axis=1)
    w = np.take_along_axis(inv, gt, axis=1)
    return SOLVED[w]


def is_valid(s: CubeState) -> bool:
    try:
        state_index(s)
    except ValueError:
        return False
    return True
