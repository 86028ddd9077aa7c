from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import build_store
from treebandit import (
    ContextStream,
    ContextStreamConfig,
    RewardModel,
    RewardModelConfig,
    oracle_best,
)
from treebandit.errors import InvalidConfigError, NoItemsError


def test_config_validation():
    with pytest.raises(InvalidConfigError):
        RewardModelConfig(sigma=0.5)
    with pytest.raises(InvalidConfigError):
        RewardModelConfig(sigma=-0.1)
    with pytest.raises(InvalidConfigError):
        RewardModelConfig(sharpness=0.0)
    with pytest.raises(InvalidConfigError):
        RewardModelConfig(family="nope")
    with pytest.raises(InvalidConfigError):
        RewardModelConfig(alpha=0.0)
    RewardModelConfig(sigma=0.0, alpha=0.5)


def test_peak_and_range():
    model = RewardModel(RewardModelConfig(sigma=0.1, seed=3))
    x = [0.3, 0.8]
    g = model.ideal_point(x)
    assert model.mean_reward(x, g) == pytest.approx(0.9)  # 1 - sigma at the peak
    far = np.ones(3) * 2.0  # clipped distance saturates at the floor
    assert model.mean_reward(x, far) == pytest.approx(0.1)
    rng = np.random.default_rng(0)
    for _ in range(200):
        c = rng.random(3)
        v = model.mean_reward(rng.random(2), c)
        assert 0.1 - 1e-12 <= v <= 0.9 + 1e-12


def test_mean_formula_recomputed_independently():
    cfg = RewardModelConfig(sigma=0.2, sharpness=1.7, seed=11)
    model = RewardModel(cfg)
    rng = np.random.default_rng(5)
    for _ in range(50):
        x, c = rng.random(2), rng.random(3)
        dist = math.sqrt(sum((ci - gi) ** 2
                             for ci, gi in zip(c, model.ideal_point(x))))
        by_hand = (1 - 2 * 0.2) * (1 - min(1.0, 1.7 * dist)) + 0.2
        assert model.mean_reward(x, c) == pytest.approx(by_hand, abs=1e-12)


def test_batch_matches_scalar():
    model = RewardModel(RewardModelConfig(seed=7))
    rng = np.random.default_rng(8)
    feats = rng.random((40, 3))
    x = rng.random(2)
    batch = model.mean_reward_batch(x, feats)
    for i in range(40):
        assert batch[i] == pytest.approx(model.mean_reward(x, feats[i]), abs=1e-12)


def test_noiseless_sampling_is_exact():
    model = RewardModel(RewardModelConfig(sigma=0.0, seed=2))
    rng = np.random.default_rng(1)
    x, c = [0.4, 0.6], [0.5, 0.5, 0.5]
    assert model.sample_reward(x, c, rng) == model.mean_reward(x, c)


def test_noise_is_bounded_and_centered():
    model = RewardModel(RewardModelConfig(sigma=0.1, seed=2))
    rng = np.random.default_rng(4)
    x, c = [0.4, 0.6], [0.5, 0.5, 0.5]
    mean = model.mean_reward(x, c)
    draws = np.array([model.sample_reward(x, c, rng) for _ in range(100_000)])
    assert np.all(np.abs(draws - mean) <= 0.1)
    assert np.all((0.0 <= draws) & (draws <= 1.0))
    # uniform(-0.1, 0.1) has sd 0.0577, so the mean of 1e5 draws sits
    # within about 5 standard errors of the target at tolerance 0.001
    assert abs(draws.mean() - mean) < 0.001


def test_context_smoothness_audit():
    for alpha, l_x in ((1.0, 1.0), (0.5, 0.8), (1.0, 2.0)):
        cfg = RewardModelConfig(sigma=0.1, sharpness=2.0, seed=13,
                                l_x=l_x, alpha=alpha)
        model = RewardModel(cfg)
        rng = np.random.default_rng(99)
        for _ in range(10_000):
            x1, x2 = rng.random(2), rng.random(2)
            c = rng.random(3)
            gap = abs(model.mean_reward(x1, c) - model.mean_reward(x2, c))
            budget = l_x * float(np.linalg.norm(x1 - x2)) ** alpha
            assert gap <= budget + 1e-9


def test_oracle_matches_linear_scan():
    model = RewardModel(RewardModelConfig(seed=21))
    rng = np.random.default_rng(22)
    store = build_store(rng.random((30, 3)).tolist())
    for _ in range(25):
        x = rng.random(2)
        row, item_id, value = oracle_best(model, x, store)
        vals = [model.mean_reward(x, store.features[r]) for r in range(30)]
        assert value == pytest.approx(max(vals), abs=1e-12)
        assert row == int(np.argmax(vals))
        assert item_id == row + 1


def test_oracle_tie_breaks_to_lowest_id():
    model = RewardModel(RewardModelConfig(sigma=0.0, seed=1))
    g = model.ideal_point([0.5, 0.5])
    # two exact copies of the peak point tie at value 1.0
    store = build_store([list(np.clip(g + 0.3, 0, 1)), list(g), list(g)])
    row, item_id, value = oracle_best(model, [0.5, 0.5], store)
    assert item_id == 2 and value == pytest.approx(1.0)
    with pytest.raises(NoItemsError):
        oracle_best(model, [0.5, 0.5], build_store([], d_c=3))


def test_context_free_family_is_flat():
    model = RewardModel(RewardModelConfig(family="context-free", seed=5))
    rng = np.random.default_rng(6)
    c = rng.random(3)
    ref = model.mean_reward(rng.random(2), c)
    for _ in range(50):
        assert model.mean_reward(rng.random(2), c) == pytest.approx(ref, abs=1e-15)


def test_uniform_context_stream():
    stream = ContextStream(ContextStreamConfig(kind="uniform", d_x=3))
    rng = np.random.default_rng(7)
    draws = np.array([stream.draw(rng) for _ in range(2000)])
    assert draws.shape == (2000, 3)
    assert np.all((0.0 <= draws) & (draws < 1.0))
    assert abs(draws.mean() - 0.5) < 0.02


def test_mixture_stream_respects_weights():
    cfg = ContextStreamConfig(kind="mixture-of-cells", d_x=1, grid=4,
                              weights=(0.0, 1.0, 0.0, 3.0))
    stream = ContextStream(cfg)
    rng = np.random.default_rng(8)
    draws = np.array([stream.draw(rng)[0] for _ in range(4000)])
    cells = np.floor(draws * 4).astype(int)
    counts = np.bincount(cells, minlength=4)
    assert counts[0] == 0 and counts[2] == 0
    assert abs(counts[3] / 4000 - 0.75) < 0.03
    # draws cover the full width of each selected cell
    assert draws[cells == 1].min() < 0.27 and draws[cells == 1].max() > 0.48


def test_mixture_stream_validation():
    with pytest.raises(InvalidConfigError):
        ContextStreamConfig(kind="mixture-of-cells", d_x=1, grid=2,
                            weights=(1.0, -0.5))
    with pytest.raises(InvalidConfigError):
        ContextStreamConfig(kind="mixture-of-cells", d_x=2, grid=2,
                            weights=(1.0, 1.0))  # needs 4 entries
    with pytest.raises(InvalidConfigError):
        ContextStreamConfig(kind="bogus")
