import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cuberl import actor, chasenet, cube
from cuberl.actor import ActorConfig, RolloutBuffer
from cuberl.cube import Action
from cuberl.env import EnvConfig
from cuberl.nn import tensor as T
from cuberl.nn.gradcheck import finite_difference_check
from cuberl.nn.tensor import Tensor

TINY = ActorConfig(hidden=(32,), n_envs=8, buffer_size=64, minibatch=32, epochs=2)
TINY_COST = chasenet.ChaseNetConfig(head_width=8, trunk=(16,))


# ------------------------------------------------------------ objective
def test_ppo_objective_examples():
    assert actor.ppo_objective(1.0, 2.0, 0.2) == 2.0
    assert actor.ppo_objective(2.0, 1.0, 0.2) == pytest.approx(1.2)
    assert actor.ppo_objective(0.5, -1.0, 0.2) == pytest.approx(-0.8)
    assert actor.clip_target(0.2, 2.0) == pytest.approx(2.4)
    with pytest.raises(ValueError):
        actor.ppo_objective(0.0, 1.0, 0.2)


def test_ratio_one_identity_vectorised(rng):
    A = rng.normal(0, 10, size=1_000_000)
    assert np.array_equal(actor.ppo_objective(np.ones_like(A), A, 0.2), A)


@settings(max_examples=200)
@given(st.floats(1e-3, 10), st.floats(-100, 100), st.floats(-100, 100), st.floats(0.01, 0.99))
def test_objective_monotone_in_advantage(ratio, a1, a2, eps):
    lo, hi = min(a1, a2), max(a1, a2)
    assert actor.ppo_objective(ratio, lo, eps) <= actor.ppo_objective(ratio, hi, eps) + 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_surrogate_gradient(seed):
    rng = np.random.default_rng(seed)
    logits = Tensor(rng.normal(size=(16, 6)), requires_grad=True)
    acts = rng.integers(0, 6, size=16)
    old = rng.normal(-1.8, 0.3, size=16)
    A = rng.normal(size=16)

    def f():
        ratio = T.exp(T.pick(T.log_softmax(logits), acts) - old)
        return T.mean(actor.surrogate(ratio, A, 0.2))

    # keep probes away from the clip kinks
    with T.no_grad():
        ratio = np.exp(T.pick(T.log_softmax(logits), acts).data - old)
    A[np.abs(np.abs(ratio - 1) - 0.2) < 0.01] = 0.0
    assert finite_difference_check(f, {"logits": logits}, rng=rng) < 1e-5


# ------------------------------------------------------------------ GAE
def naive_gae(rewards, values, dones, last, gamma, lam):
    """Direct double sum: A_t = sum_l (gamma*lam)^l delta_{t+l} within the episode."""
    n = len(rewards)
    deltas = np.empty(n)
    for t in range(n):
        nv = last[t] if dones[t] else values[t + 1]
        deltas[t] = rewards[t] + gamma * nv - values[t]
    adv = np.zeros(n)
    for t in range(n):
        for k in range(t, n):
            adv[t] += (gamma * lam) ** (k - t) * deltas[k]
            if dones[k]:
                break
    return adv


def test_gae_single_step():
    adv, ret = actor.gae(np.array([3.5]), np.zeros(1), np.array([True]), np.zeros(1), 1.0, 1.0)
    assert adv.tolist() == [3.5] and ret.tolist() == [3.5]


def test_gae_zero_for_exact_values():
    gamma = 0.9
    r = np.array([1.0, -2.0, 0.5, 4.0])
    dones = np.array([False, False, False, True])
    v = np.array([sum(gamma**(k - t) * r[k] for k in range(t, 4)) for t in range(4)])
    adv, ret = actor.gae(r, v, dones, np.zeros(4), gamma, 0.95)
    assert np.allclose(adv, 0.0, atol=1e-12)
    assert np.allclose(ret, v)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 1.0), st.floats(0.0, 1.0))
def test_gae_matches_naive(seed, gamma, lam):
    rng = np.random.default_rng(seed)
    lengths = rng.integers(1, 8, size=rng.integers(1, 5))
    n = int(lengths.sum())
    dones = np.zeros(n, bool)
    dones[np.cumsum(lengths) - 1] = True
    r, v = rng.normal(size=n), rng.normal(size=n)
    last = np.where(rng.random(n) < 0.5, rng.normal(size=n), 0.0) * dones
    adv, ret = actor.gae(r, v, dones, last, gamma, lam)
    assert np.allclose(adv, naive_gae(r, v, dones, last, gamma, lam), atol=1e-10)
    assert np.allclose(ret, adv + v)


def test_gae_rejects_incomplete_episode(rng):
    with pytest.raises(ValueError):
        actor.gae(np.ones(3), np.zeros(3), np.array([False, True, False]), np.zeros(3), 0.99, 0.95)
    buf = RolloutBuffer()
    buf.add_episode(np.zeros((2, 24)), [0, 1], [1.0, 2.0], [0.0, 0.0], np.zeros((2, 24)), False, complete=False)
    phi = actor.CriticModel((8,), rng, np.float64)
    with pytest.raises(ValueError):
        actor.gae_advantages(buf, phi)
    with pytest.raises(ValueError):
        actor.gae_advantages(RolloutBuffer(), phi)


def test_gae_bootstraps_only_capped_episodes(rng):
    phi = actor.CriticModel((8,), rng, np.float64, zero_last=False)
    s = cube.random_states(rng, 4)
    buf = RolloutBuffer()
    buf.add_episode(s[:2], [0, 1], [1.0, 100.0], [0, 0], s[1:3], solved=True)
    buf.add_episode(s[2:3], [2], [-3.0], [0], s[3:4], solved=False)
    adv, ret = actor.gae_advantages(buf, phi, 0.9, 1.0)
    v = phi.values(s[:3])
    assert adv[1] == pytest.approx(100.0 - v[1])
    assert adv[2] == pytest.approx(-3.0 + 0.9 * phi.values(s[3:4])[0] - v[2])


# --------------------------------------------------------------- models
def test_policy_starts_uniform(rng):
    theta = actor.PolicyModel((16, 8), rng)
    p = actor.policy_forward(theta, cube.solved_state())
    assert p.shape == (6,) and np.allclose(p, 1 / 6)
    batch = actor.policy_forward(theta, cube.random_states(rng, 10))
    assert batch.shape == (10, 6)


def test_policy_distribution_valid_after_updates(rng):
    m = chasenet.make_cost_model(TINY_COST, seed=0)
    seen = []

    def cb(rec, res):
        probs = actor.policy_forward(res.policy, cube.random_states(rng, 50))
        seen.append(np.abs(probs.sum(axis=1) - 1).max())
        assert (probs >= 0).all()

    actor.train(m, 4, cfg=ActorConfig(**{**TINY.__dict__}), env_cfg=EnvConfig(depth_range=(1, 4), max_steps=6),
                seed=3, callback=cb)
    assert max(seen) < 1e-6


def test_buffer_invariants_across_updates(rng):
    """After every update the buffer is empty; stored log-probs come from the pre-update policy."""
    cfg = ActorConfig(hidden=(16,), n_envs=4, buffer_size=8, minibatch=8, epochs=1)
    env_cfg = EnvConfig(depth_range=(1, 3), max_steps=4)
    m = chasenet.make_cost_model(TINY_COST, seed=0)
    theta, phi = actor.make_actor(cfg, seed=1)
    pi_opt, v_opt = actor.Adam(theta.parameters(), lr=1e-2), actor.Adam(phi.parameters(), lr=1e-2)
    buf = RolloutBuffer()
    updates = 0
    while updates < 100:
        batch = actor.collect_episodes(rng, theta, m, env_cfg, cfg.n_envs)
        t, e = np.nonzero(batch.mask)
        probs = theta.probs(batch.states[t, e])
        assert np.allclose(np.log(probs[np.arange(len(t)), batch.actions[t, e]]), batch.log_probs[t, e])
        buf.add_batch(batch)
        a = buf.arrays()
        assert a["dones"][-1] and a["dones"].sum() == len(buf.actions)
        if len(buf) > cfg.buffer_size:
            actor.ppo_update(theta, phi, pi_opt, v_opt, buf, cfg, rng)
            updates += 1
            assert len(buf) == 0 and buf.advantages is None


def test_collect_episodes_bookkeeping(rng):
    m = chasenet.make_cost_model(TINY_COST, seed=0)
    theta, _ = actor.make_actor(TINY, seed=0)
    env_cfg = EnvConfig(depth_range=(1, 3), max_steps=5)
    b = actor.collect_episodes(rng, theta, m, env_cfg, 16)
    assert (b.lengths >= 1).all() and (b.lengths <= 5).all()
    # masks are prefixes: once an episode ends it stays ended
    assert (np.diff(b.mask.astype(int), axis=0) <= 0).all()
    for i in range(16):
        n = b.lengths[i]
        assert not (b.starts[i] == cube.SOLVED).all()
        if b.solved[:, i].any():
            assert b.solved[n - 1, i] and b.rewards[n - 1, i] == 100.0
        else:
            assert n == 5
        assert np.array_equal(b.next_states[0, i], cube.step_batch(b.starts[i][None], b.actions[0, i:i + 1])[0])
    pairs = b.pair_samples()
    assert len(pairs) == b.n_transitions and pairs.cost.min() == 1


def test_train_is_deterministic():
    runs = []
    for _ in range(2):
        m = chasenet.make_cost_model(TINY_COST, seed=0)
        res = actor.train(m, 3, cfg=ActorConfig(**{**TINY.__dict__}), env_cfg=EnvConfig(max_steps=8), seed=11)
        runs.append([(r.mean_reward, r.success_rate) for r in res.history])
    assert runs[0] == runs[1]


def test_train_overrides():
    m = chasenet.make_cost_model(TINY_COST, seed=0)
    res = actor.train(m, 1, buffer_size=10_000, eps=0.1, cfg=ActorConfig(**{**TINY.__dict__}), seed=0)
    assert not res.history[0].updated
    with pytest.raises(ValueError):
        ActorConfig(eps=1.5)


# ------------------------------------------------------------ inference
def test_greedy_rollout_basics(rng):
    theta = actor.PolicyModel((8,), rng)
    assert actor.greedy_rollout(theta, cube.solved_state()) == (True, [])
    s = cube.apply_action(cube.solved_state(), Action.R)
    solved, moves = actor.greedy_rollout(theta, s, cap=7)
    # uniform policy ties break to the lowest index: U forever
    assert not solved and moves == [Action.U] * 7
    with pytest.raises(ValueError):
        actor.greedy_rollout(theta, s, cap=0)


def test_greedy_batch_matches_single(rng):
    theta = actor.PolicyModel((16,), rng, zero_last=False)
    starts = cube.random_states(rng, 20)
    starts[3] = cube.SOLVED
    solved, n = actor.greedy_rollout_batch(theta, starts, cap=10)
    for i, s in enumerate(starts):
        ok, moves = actor.greedy_rollout(theta, cube.CubeState.from_array(s), cap=10)
        assert ok == solved[i] and len(moves) == n[i] <= 10


def test_actor_checkpoint_round_trip(tmp_path, rng):
    theta, phi = actor.make_actor(TINY, seed=4)
    theta.net.layers[-1].W.data[...] = rng.normal(size=theta.net.layers[-1].W.shape)
    actor.save_actor(tmp_path / "a.ckpt", theta, phi, TINY)
    t2, p2, cfg = actor.load_actor(tmp_path / "a.ckpt")
    s = cube.random_states(rng, 5)
    assert np.array_equal(t2.probs(s), theta.probs(s))
    assert cfg.hidden == TINY.hidden
    chasenet.make_cost_model(TINY_COST).save(tmp_path / "c.ckpt")
    with pytest.raises(ValueError):
        actor.load_actor(tmp_path / "c.ckpt")


def test_linear_lr_decay_schedule():
    cfg = ActorConfig(final_lr_scale=0.1)
    assert cfg.lr_scale(0, 11) == 1.0
    assert cfg.lr_scale(10, 11) == pytest.approx(0.1)
    assert cfg.lr_scale(5, 11) == pytest.approx(0.55)
    assert ActorConfig().lr_scale(7, 11) == 1.0
    with pytest.raises(ValueError):
        ActorConfig(final_lr_scale=0.0)
