"""Config validation and the optimizer."""

import numpy as np
import pytest

from conftest import make_mini
from rlprune.config import (REWARD_PRESETS, DistillConfig, RewardSpec,
                            SearchConfig, search_config_from_dict)
from rlprune.errors import ConfigError
from rlprune.graph import model_hash
from rlprune.optim import SGD


def test_defaults_are_valid():
    cfg = SearchConfig()
    assert cfg.noise_variance == 0.04
    assert cfg.step_size == 0.1
    assert cfg.discount == 0.9
    assert cfg.samples_per_stage == 10
    assert cfg.stages_per_step == 10
    assert cfg.clip == 0.2
    assert cfg.epsilon0 == 0.4
    assert cfg.decay == "cosine"
    assert cfg.distill.tau == 0.75
    assert cfg.calib_size == 100


def test_reward_presets():
    assert REWARD_PRESETS == {"accuracy": (0.0, 0.0), "flops": (0.25, 0.0),
                              "params": (0.0, 0.25)}
    assert RewardSpec.preset("flops").alpha == 0.25
    with pytest.raises(ConfigError):
        RewardSpec.preset("latency")


@pytest.mark.parametrize("bad", [
    {"target_sparsity": 0.0},
    {"target_sparsity": 1.0},
    {"steps": 0},
    {"noise_variance": 0.0},
    {"clip": 0.0},
    {"clip": 1.0},
    {"epsilon0": 1.5},
    {"decay": "exponential"},
    {"policy_floor": 0.0},
    {"threads": 0},
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        SearchConfig(**bad)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown config keys"):
        search_config_from_dict({"sparsity": 0.3})
    with pytest.raises(ConfigError, match="unknown reward config keys"):
        search_config_from_dict({"reward": {"gamma": 1.0}})
    with pytest.raises(ConfigError, match="unknown distill config keys"):
        search_config_from_dict({"distill": {"temperature": 2.0}})


def test_from_dict_nested():
    cfg = search_config_from_dict({"target_sparsity": 0.5,
                                   "reward": {"alpha": 0.25},
                                   "distill": {"tau": 0.5}})
    assert cfg.target_sparsity == 0.5
    assert cfg.reward.alpha == 0.25
    assert cfg.distill.tau == 0.5


def test_bad_tau():
    with pytest.raises(ConfigError):
        DistillConfig(tau=1.5)


def test_sgd_zero_lr_leaves_weights_unchanged():
    m = make_mini("se-mini")
    before = model_hash(m)
    opt = SGD(0.0, 0.9)
    grads = {n.id: {k: np.ones_like(v) for k, v in n.weights.items()
                    if k in ("weight", "bias", "gamma", "beta")}
             for n in m.nodes if n.weights}
    opt.step(m, grads)
    assert model_hash(m) == before


def test_sgd_negative_lr_rejected():
    with pytest.raises(ConfigError):
        SGD(-0.1, 0.9)


def test_sgd_momentum_accumulates():
    m = make_mini("se-mini")
    w0 = m.nodes[0].weights["weight"].copy()
    opt = SGD(0.1, 0.9)
    g = {m.nodes[0].id: {"weight": np.ones_like(w0)}}
    opt.step(m, g)
    step1 = w0 - m.nodes[0].weights["weight"]
    opt.step(m, g)
    step2 = (w0 - m.nodes[0].weights["weight"]) - step1
    # second step is larger: v = 0.9 * v + g
    assert step2.mean() == pytest.approx(1.9 * step1.mean(), rel=1e-5)
