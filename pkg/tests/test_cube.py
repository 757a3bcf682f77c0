import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cuberl import cube
from cuberl.cube import Action, CubeState

moves = st.lists(st.sampled_from(list(Action)), max_size=40)


def test_constants():
    assert cube.N_STATES == 3_674_160
    assert cube.SOLVED.tolist() == [c for c in range(6) for _ in range(4)]
    assert cube.state_index(cube.solved_state()) == 0


@pytest.mark.parametrize("a", list(Action))
def test_generator_has_order_four(a):
    s = cube.solved_state()
    seen = [s]
    for _ in range(4):
        s = cube.apply_action(s, a)
        seen.append(s)
    assert seen[4] == seen[0]
    assert len(set(seen[:4])) == 4


@pytest.mark.parametrize("a", list(Action))
def test_inverse_undoes(a):
    s = cube.apply_moves(cube.solved_state(), cube.parse_moves("R U F' R'"))
    assert cube.apply_action(cube.apply_action(s, a), cube.inverse(a)) == s
    assert int(cube.inverse(a)) == int(a) ^ 1


def test_fixed_corner_never_moves():
    fixed = cube.SLOT_STICKERS[cube.FIXED_SLOT]
    for perm in cube.ACTION_PERMS:
        assert set(perm[fixed]) == set(fixed)
        assert (perm[fixed] == fixed).all()


def test_parse_and_print_round_trip():
    s = cube.apply_moves(cube.solved_state(), cube.parse_moves("U R' F"))
    assert CubeState.parse(str(s)) == s
    assert cube.format_moves(cube.parse_moves("U R' F")) == "U R' F"
    with pytest.raises(ValueError):
        Action.parse("X")


def test_state_validation():
    with pytest.raises(ValueError):
        CubeState(tuple(range(23)))
    with pytest.raises(ValueError):
        CubeState((7,) + (0,) * 23)


@settings(max_examples=60, deadline=None)
@given(moves)
def test_reachable_states_are_valid_and_rank_round_trip(ms):
    s = cube.apply_moves(cube.solved_state(), ms)
    assert cube.is_valid(s)
    i = cube.state_index(s)
    assert 0 <= i < cube.N_STATES
    assert cube.index_to_state(i) == s


def test_index_is_a_bijection_on_samples(rng):
    idx = rng.choice(cube.N_STATES, size=20_000, replace=False)
    states = cube.index_to_state_batch(idx)
    assert np.array_equal(cube.state_index_batch(states), idx)
    assert len(np.unique(states, axis=0)) == len(idx)


def test_invalid_states_rejected():
    bad = cube.SOLVED.copy()
    bad[0], bad[4] = bad[4], bad[0]  # swap a U and a D sticker: breaks the cubies
    with pytest.raises(ValueError):
        cube.state_index_batch(bad[None])
    assert not cube.is_valid(CubeState.from_array(bad))
    with pytest.raises(ValueError):
        cube.index_to_state_batch(np.array([cube.N_STATES]))


def test_step_batch_matches_single(rng):
    states = cube.random_states(rng, 50)
    acts = rng.integers(0, 6, size=50)
    out = cube.step_batch(states, acts)
    for s, a, o in zip(states, acts, out):
        assert np.array_equal(cube.apply_action(CubeState.from_array(s), Action(int(a))).array, o)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 60))
def test_scramble_never_repeats_four_times(seed, k):
    seq = cube.random_scramble(np.random.default_rng(seed), k)
    assert len(seq.actions) == k
    for i in range(3, k):
        assert len(set(seq.actions[i - 3:i + 1])) > 1
    assert cube.apply_moves(cube.solved_state(), seq.actions) == seq.resulting_state


def test_random_walks_shapes_and_constraint(rng):
    starts = cube.random_states(rng, 200)
    states, acts = cube.random_walks(rng, starts, 12)
    assert states.shape == (200, 12, 24) and acts.shape == (200, 12)
    runs = (acts[:, 3:] == acts[:, 2:-1]) & (acts[:, 2:-1] == acts[:, 1:-2]) & (acts[:, 1:-2] == acts[:, :-3])
    assert not runs.any()
    assert np.array_equal(states[:, 0], cube.step_batch(starts, acts[:, 0]))


def test_random_states_are_spread(rng):
    idx = cube.state_index_batch(cube.random_states(rng, 5000))
    assert len(np.unique(idx)) > 4990


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), moves)
def test_relative_state_is_move_translation(seed, ms):
    s = cube.random_states(np.random.default_rng(seed), 1)[0]
    t = cube.apply_moves(CubeState.from_array(s), ms).array
    rel = cube.relative_states(s[None], t[None])[0]
    assert np.array_equal(rel, cube.apply_moves(cube.solved_state(), ms).array)
