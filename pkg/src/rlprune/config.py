"""Validated hyperparameter records for search, reward and distillation."""

from dataclasses import dataclass, field, fields

from .errors import ConfigError

REWARD_PRESETS = {
    "accuracy": (0.0, 0.0),
    "flops": (0.25, 0.0),
    "params": (0.0, 0.25),
}

DECAY_STRATEGIES = ("constant", "linear", "cosine")


@dataclass
class RewardSpec:
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("reward weights must be non-negative")

    @classmethod
    def preset(cls, name):
        if name not in REWARD_PRESETS:
            raise ConfigError(f"unknown reward strategy {name!r}; "
                              f"have {sorted(REWARD_PRESETS)}")
        a, b = REWARD_PRESETS[name]
        return cls(a, b)


@dataclass
class DistillConfig:
    tau: float = 0.75
    epochs: int = 1
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must be in [0,1], got {self.tau}")
        if self.epochs < 0 or self.lr < 0 or self.batch_size < 1:
            raise ConfigError("bad distillation config")


@dataclass
class SearchConfig:
    target_sparsity: float = 0.3
    steps: int = 20
    stages_per_step: int = 10
    noise_variance: float = 0.04
    step_size: float = 0.1         # lambda
    discount: float = 0.9          # gamma
    sample_steps: int = 1          # T
    samples_per_stage: int = 10    # N_S
    clip: float = 0.2              # delta
    epsilon0: float = 0.4
    decay: str = "cosine"
    decay_window: float = 0.10     # fraction of steps over which epsilon decays
    rollout_depth: int = 1         # D
    inner_samples: int = 3         # N_inner
    reward: RewardSpec = field(default_factory=RewardSpec)
    calib_size: int = 100
    reward_eval_size: int = 1000
    post_train_every: int = 0      # pruning steps between distillation runs; 0 = off
    distill: DistillConfig = field(default_factory=DistillConfig)
    buffer_capacity: int = 32
    policy_floor: float = 1e-4     # p_min
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not 0.0 < self.target_sparsity < 1.0:
            raise ConfigError("target sparsity must be in (0,1)")
        if self.steps < 1 or self.stages_per_step < 1 or self.samples_per_stage < 1:
            raise ConfigError("steps, stages_per_step, samples_per_stage must be >= 1")
        if self.noise_variance <= 0:
            raise ConfigError("noise variance must be positive")
        if self.step_size < 0 or not 0.0 <= self.discount <= 1.0:
            raise ConfigError("bad step size / discount")
        if self.sample_steps < 1 or self.inner_samples < 1 or self.rollout_depth < 0:
            raise ConfigError("bad rollout settings")
        if not 0.0 < self.clip < 1.0:
            raise ConfigError("clip delta must be in (0,1)")
        if not 0.0 <= self.epsilon0 <= 1.0:
            raise ConfigError("epsilon0 must be in [0,1]")
        if self.decay not in DECAY_STRATEGIES:
            raise ConfigError(f"decay must be one of {DECAY_STRATEGIES}")
        if not 0.0 < self.decay_window <= 1.0:
            raise ConfigError("decay window must be in (0,1]")
        if self.calib_size < 1 or self.reward_eval_size < 1:
            raise ConfigError("calibration / reward-eval sizes must be >= 1")
        if self.buffer_capacity < 1 or self.threads < 1:
            raise ConfigError("buffer capacity and threads must be >= 1")
        if not 0.0 < self.policy_floor < 1.0:
            raise ConfigError("policy floor must be in (0,1)")


_NESTED = {"reward": RewardSpec, "distill": DistillConfig}


def search_config_from_dict(data: dict) -> SearchConfig:
    """Build a SearchConfig from a plain dict, rejecting unknown keys."""
    known = {f.name for f in fields(SearchConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(data)
    for key, cls in _NESTED.items():
        if key in kwargs and isinstance(kwargs[key], dict):
            sub_known = {f.name for f in fields(cls)}
            sub_unknown = set(kwargs[key]) - sub_known
            if sub_unknown:
                raise ConfigError(f"unknown {key} config keys: {sorted(sub_unknown)}")
            kwargs[key] = cls(**kwargs[key])
    try:
        return SearchConfig(**kwargs)
    except TypeError as e:
        raise ConfigError(str(e)) from None
