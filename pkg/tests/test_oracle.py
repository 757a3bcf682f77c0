import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from cuberl import cube, oracle
from cuberl.cube import Action

GOLDEN = [1, 6, 27, 120, 534, 2256, 8969, 33058, 114149, 360508, 930588, 1350852, 782536, 90280, 276]


def test_histogram_is_golden(table):
    assert table.histogram.tolist() == GOLDEN
    assert int(table.histogram.sum()) == cube.N_STATES == 5040 * 729
    assert table.diameter == 14


def test_solved_and_depth_one(table):
    assert oracle.oracle_cost(table, cube.solved_state()) == 0
    for a in Action:
        assert table.cost(cube.apply_action(cube.solved_state(), a)) == 1
    assert int((table.costs == 1).sum()) == 6


def test_edge_lipschitz(table, rng):
    states = cube.random_states(rng, 100_000)
    acts = rng.integers(0, 6, size=len(states))
    d0 = table.costs_of(states)
    d1 = table.costs_of(cube.step_batch(states, acts))
    assert np.abs(d0 - d1).max() <= 1
    # every non-solved state has a strictly closer neighbour
    nbr = np.stack([table.costs_of(cube.step_batch(states[:2000], np.full(2000, a))) for a in range(6)])
    assert (nbr.min(axis=0) == d0[:2000] - 1).all()


def test_pair_cost_symmetric_and_translation(table, rng):
    s = cube.random_states(rng, 500)
    t = cube.random_states(rng, 500)
    assert np.array_equal(table.pair_costs(s, t), table.pair_costs(t, s))
    assert (table.pair_costs(s, s) == 0).all()
    a, b = cube.CubeState.from_array(s[0]), cube.CubeState.from_array(t[0])
    assert oracle.oracle_pair_cost(table, a, b) == table.pair_costs(s[:1], t[:1])[0]


def test_save_load_round_trip(table, tmp_path):
    p = tmp_path / "o.bin"
    table.save(p)
    raw = p.read_bytes()
    assert raw[:8] == oracle.MAGIC
    assert len(raw) == 8 + 1 + cube.N_STATES + 4 + 4 * 15
    back = oracle.OracleTable.load(p)
    assert np.array_equal(back.costs, table.costs)
    assert np.array_equal(back.histogram, table.histogram)


@pytest.mark.parametrize("damage", ["magic", "version", "truncate", "footer", "depth"])
def test_corrupt_files_rejected(table, tmp_path, damage):
    p = tmp_path / "o.bin"
    table.save(p)
    raw = bytearray(p.read_bytes())
    if damage == "magic":
        raw[0] ^= 0xFF
    elif damage == "version":
        raw[8] = 9
    elif damage == "truncate":
        raw = raw[:1000]
    elif damage == "footer":
        raw = raw[:-4]
    else:
        raw[9 + 5] ^= 1  # change one depth: histogram no longer matches
    p.write_bytes(bytes(raw))
    with pytest.raises(oracle.OracleFormatError):
        oracle.OracleTable.load(p)


def test_load_or_build_rebuilds_corrupt(table, tmp_path):
    p = tmp_path / "o.bin"
    p.write_bytes(b"junk")
    rebuilt = oracle.load_or_build(p)
    assert rebuilt.histogram.tolist() == GOLDEN
    assert oracle.OracleTable.load(p).histogram.tolist() == GOLDEN


def test_spearman_known_values():
    assert oracle.spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert oracle.spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    assert oracle.spearman([5, 5, 5], [1, 2, 3]) == 0.0
    with pytest.raises(ValueError):
        oracle.spearman([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        oracle.spearman([1], [1])


def test_average_ranks_ties():
    assert oracle.average_ranks([10, 20, 20, 30]).tolist() == [1, 2.5, 2.5, 4]


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.floats(-5, 5, allow_nan=False)), min_size=3, max_size=60))
def test_spearman_matches_scipy(pairs):
    x, y = map(np.array, zip(*pairs))
    ours = oracle.spearman(x, y)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        assert ours == 0.0
    else:
        assert ours == pytest.approx(stats.spearmanr(x, y).statistic, abs=1e-9)
