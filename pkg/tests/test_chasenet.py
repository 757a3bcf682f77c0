import numpy as np
import pytest

from cuberl import chasenet, cube
from cuberl.chasenet import ChaseNetConfig, PairSample, WarmupConfig
from cuberl.nn.gradcheck import finite_difference_check
from cuberl.nn import tensor as T

SMALL_FC = ChaseNetConfig(variant="fc", head_width=16, trunk=(32, 16))
SMALL_ATT = ChaseNetConfig(variant="attention", d_model=8, n_heads=2, n_layers=1, d_ff=16)


def test_encodings(rng):
    s = cube.CubeState.from_array(cube.random_states(rng, 1)[0])
    g = cube.solved_state()
    x = chasenet.encode_pair(s, g, "fc")
    assert x.shape == (288,) and x.sum() == 48
    assert (x.reshape(48, 6).sum(axis=1) == 1).all()
    tok = chasenet.encode_pair(s, g, "attention")
    assert tok.shape == (48,)
    assert (tok[:24] < 6).all() and (tok[24:] >= 6).all()
    assert np.array_equal(tok[24:] - 6, g.array)


def test_config_validation():
    with pytest.raises(ValueError):
        ChaseNetConfig(variant="cnn")


@pytest.mark.parametrize("cfg", [SMALL_FC, SMALL_ATT], ids=["fc", "attention"])
def test_predictions_positive_and_batched(cfg, rng):
    m = chasenet.make_cost_model(cfg, seed=1)
    s, t = cube.random_states(rng, 300), cube.random_states(rng, 300)
    p = m.predict(s, t, batch=64)
    assert p.shape == (300,) and (p >= chasenet.COST_FLOOR).all()
    assert np.allclose(p[:5], m.predict(s[:5], t[:5]), rtol=1e-5)
    single = chasenet.predict_cost(m, cube.CubeState.from_array(s[0]), cube.CubeState.from_array(t[0]))
    assert single == pytest.approx(p[0], rel=1e-5)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("cfg", [SMALL_FC, SMALL_ATT], ids=["fc", "attention"])
def test_full_model_gradients(cfg, seed):
    rng = np.random.default_rng(seed)
    m = chasenet.make_cost_model(cfg, seed=seed, dtype=np.float64)
    s, t = cube.random_states(rng, 6), cube.random_states(rng, 6)
    y = rng.integers(1, 15, size=6)
    err = finite_difference_check(lambda: chasenet.regression_loss(m(s, t), y), m.parameters(),
                                  n_coords=8, rng=rng)
    assert err < 1e-4, err


def test_regression_loss():
    assert float(chasenet.regression_loss([1.0, 2.0], [1.0, 4.0]).data) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        chasenet.regression_loss([1.0, 2.0], [1.0])


def test_label_audit_small(table, rng):
    """Every trajectory label bounds the exact pair cost from above."""
    data = chasenet.warmup_dataset(rng, 2000, 20)
    assert len(data) >= 2000
    assert (data.cost >= table.pair_costs(data.start, data.target)).all()
    assert set(np.unique(data.cost)) == set(range(1, 21))


def test_held_out_pairs_shape(rng):
    p = chasenet.held_out_pairs(rng, 500, 20)
    assert len(p) == 500 and p.cost.min() >= 1 and p.cost.max() <= 20


def test_pair_sample_concat():
    a = PairSample(np.zeros((2, 24), np.uint8), np.zeros((2, 24), np.uint8), np.array([1, 2]))
    both = PairSample.concat([a, PairSample.empty(), a])
    assert len(both) == 4
    assert len(PairSample.concat([])) == 0


def test_warmup_is_deterministic_and_learns():
    cfg = WarmupConfig(iterations=30, dataset_size=512, max_twists=8, batch_size=128)
    a = chasenet.warmup(SMALL_FC, cfg, seed=7)
    b = chasenet.warmup(SMALL_FC, cfg, seed=7)
    assert a.losses == b.losses
    assert np.mean(a.losses[-5:]) < np.mean(a.losses[:5])
    with pytest.raises(ValueError):
        chasenet.warmup(SMALL_FC, WarmupConfig(iterations=0), seed=0)


def test_save_load_round_trip(tmp_path, rng):
    for cfg in (SMALL_FC, SMALL_ATT):
        m = chasenet.make_cost_model(cfg, seed=3)
        m.save(tmp_path / "m.ckpt")
        back = chasenet.load_cost_model(tmp_path / "m.ckpt")
        assert back.config == cfg
        s, t = cube.random_states(rng, 20), cube.random_states(rng, 20)
        assert np.array_equal(m.predict(s, t), back.predict(s, t))


def test_finetune_moves_predictions_towards_labels(rng):
    m = chasenet.make_cost_model(SMALL_FC, seed=0)
    data = chasenet.warmup_dataset(rng, 256, 4)
    before = float(chasenet.regression_loss(m.predict(data.start, data.target), data.cost).data)
    tuner = chasenet.FineTuner(m, lr=1e-3, batch_size=64, seed=0)
    for _ in range(20):
        tuner(data)
    after = float(chasenet.regression_loss(m.predict(data.start, data.target), data.cost).data)
    assert after < before
    assert np.isnan(tuner(PairSample.empty()))


def test_warmup_cosine_schedule_endpoints():
    cfg = WarmupConfig(iterations=11, lr=1e-3, lr_final=1e-5)
    lrs = [cfg.lr_at(j) for j in range(11)]
    assert lrs[0] == pytest.approx(1e-3) and lrs[-1] == pytest.approx(1e-5)
    assert lrs[5] == pytest.approx(0.5 * (1e-3 + 1e-5))
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    assert WarmupConfig(lr=3e-4).lr_at(500) == 3e-4
