"""Sparsity-distribution search: noisy action sampling, Q estimation with
shallow rollouts, a per-step replay buffer, epsilon-greedy selection and a
ratio-clipped policy update, orchestrated over multiple pruning steps."""

import copy
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dependency, distill
from .config import SearchConfig
from .errors import BudgetUnplaceable, ConfigError, StateError
from .graph import ModelGraph, count_flops, count_params, deep_clone, run_forward
from .pruning import CalibrationSet, prune_with_action

NEG_INF = float("-inf")


# ------------------------------------------------------------------ policy


@dataclass
class PruningPolicy:
    """Simplex distribution over coupled groups (entries >= floor, sum 1)."""

    pd: np.ndarray
    floor: float = 1e-4

    @classmethod
    def from_group_channels(cls, channels, floor=1e-4):
        pd = np.asarray(channels, dtype=np.float64)
        return cls(_project(pd, floor), floor)

    def updated(self, pd):
        return PruningPolicy(_project(pd, self.floor), self.floor)


def _project(pd, floor):
    """Nearest simplex point with every coordinate >= floor: keep the mass
    above the floor proportional, so the floor survives normalization."""
    pd = np.maximum(np.asarray(pd, dtype=np.float64), floor)
    n = pd.size
    spare = 1.0 - n * floor
    if spare <= 0:
        return np.full(n, 1.0 / n)
    above = pd - floor
    total = above.sum()
    if total <= 0:
        return np.full(n, 1.0 / n)
    return floor + above * (spare / total)


def sample_action(policy: PruningPolicy, variance: float, rng) -> np.ndarray:
    """policy + N(0, v) noise, negatives clamped, renormalized to the simplex."""
    if variance <= 0:
        raise ConfigError("noise variance must be positive")
    std = math.sqrt(variance)
    for _ in range(10):
        a = policy.pd + rng.normal(0.0, std, policy.pd.shape)
        a = np.maximum(a, 0.0)
        s = a.sum()
        if s > 0:
            return a / s
    raise StateError("action collapsed to zero after 10 resamples")


def update_policy(policy: PruningPolicy, a_star, step_size: float,
                  clip: float) -> PruningPolicy:
    """pd + lambda*a*, per-coordinate ratio clipped to [1-delta, 1+delta],
    then floored and renormalized."""
    pd = policy.pd
    pd_new = pd + step_size * np.asarray(a_star, dtype=np.float64)
    ratio = np.clip(pd_new / pd, 1.0 - clip, 1.0 + clip)
    return policy.updated(ratio * pd)


def epsilon_at(step: int, config: SearchConfig) -> float:
    if config.decay == "constant":
        return config.epsilon0
    window = config.decay_window * config.steps
    if step >= window:
        return 0.0
    if config.decay == "linear":
        return config.epsilon0 * (1.0 - step / window)
    return config.epsilon0 * (1.0 + math.cos(math.pi * step / window)) / 2.0


# ------------------------------------------------------------ replay buffer


@dataclass
class BufferEntry:
    action: np.ndarray
    q: float
    candidate: object  # pruned ModelGraph for the action's first rollout
    order: int  # insertion counter, breaks argmax ties


@dataclass
class ReplayBuffer:
    capacity: int = 32
    entries: list = field(default_factory=list)
    _counter: int = 0

    def insert(self, action, q, candidate):
        """Keep the top-capacity actions by Q; ignore non-finite Q."""
        if not math.isfinite(q):
            return False
        entry = BufferEntry(np.asarray(action), float(q), candidate, self._counter)
        self._counter += 1
        if len(self.entries) < self.capacity:
            self.entries.append(entry)
            return True
        worst = min(range(len(self.entries)), key=lambda i: (self.entries[i].q,
                                                             -self.entries[i].order))
        if q <= self.entries[worst].q:
            return False
        self.entries[worst] = entry
        return True

    def best(self) -> BufferEntry:
        if not self.entries:
            raise StateError("replay buffer is empty")
        return max(self.entries, key=lambda e: (e.q, -e.order))

    def select(self, epsilon: float, rng) -> BufferEntry:
        """epsilon-greedy: random entry with probability epsilon, else max-Q."""
        if not self.entries:
            raise StateError("replay buffer is empty")
        if epsilon > 0 and rng.random() < epsilon:
            return self.entries[int(rng.integers(len(self.entries)))]
        return self.best()


def update_replay(buffer: ReplayBuffer, action, q, candidate=None) -> ReplayBuffer:
    buffer.insert(action, q, candidate)
    return buffer


def select_action(buffer: ReplayBuffer, epsilon: float, rng):
    return buffer.select(epsilon, rng).action


# ------------------------------------------------------------------ reward


def evaluate_accuracy(model: ModelGraph, images, labels, batch_size=256) -> float:
    correct = 0
    for i in range(0, len(images), batch_size):
        logits, _ = run_forward(model, images[i:i + batch_size], mode="eval")
        correct += int((logits.argmax(axis=1) == labels[i:i + batch_size]).sum())
    return correct / len(images)


def compute_reward(candidate: ModelGraph, base_flops: int, base_params: int,
                   eval_images, eval_labels, alpha: float, beta: float) -> float:
    """accuracy + alpha * (1 - FLOPs ratio) + beta * (1 - params ratio)."""
    if len(eval_images) == 0:
        raise ConfigError("reward evaluation split is empty")
    acc = evaluate_accuracy(candidate, eval_images, eval_labels)
    r = acc
    if alpha:
        r += alpha * (1.0 - count_flops(candidate)[1] / base_flops)
    if beta:
        r += beta * (1.0 - count_params(candidate)[1] / base_params)
    return float(r)


# ---------------------------------------------------------------- Q values


def _clone_dg(dg):
    return copy.deepcopy(dg)


def estimate_q(model: ModelGraph, dg, action, policy: PruningPolicy,
               config: SearchConfig, rng, calib: CalibrationSet, budget: int,
               reward_fn):
    """Mean over T rollouts of r + gamma * max inner reward (depth-truncated).

    Returns (q, candidate model, candidate dg); q is -inf with no candidate
    when the budget cannot be placed.
    """

    def rollout(state, state_dg, act, depth):
        cand = deep_clone(state)
        cand_dg = _clone_dg(state_dg)
        prune_with_action(cand, cand_dg, act, budget, calib)
        r = reward_fn(cand)
        if depth <= 0 or config.discount == 0.0:
            return r, cand, cand_dg
        inner = []
        for _ in range(config.inner_samples):
            a2 = sample_action(policy, config.noise_variance, rng)
            try:
                v2, _, _ = rollout(cand, cand_dg, a2, depth - 1)
            except BudgetUnplaceable:
                continue
            inner.append(v2)
        if not inner:
            return r, cand, cand_dg  # terminal: all inner budgets unplaceable
        return r + config.discount * max(inner), cand, cand_dg

    values = []
    first_candidate = None
    first_dg = None
    for t in range(config.sample_steps):
        try:
            v, cand, cand_dg = rollout(model, dg, action, config.rollout_depth)
        except BudgetUnplaceable:
            return NEG_INF, None, None
        values.append(v)
        if t == 0:
            first_candidate, first_dg = cand, cand_dg
    return float(np.mean(values)), first_candidate, first_dg


# -------------------------------------------------------------- orchestrator


@dataclass
class HistoryRow:
    step: int
    group_id: int
    group_sparsity: float
    epsilon: float
    best_q: float
    reward: float
    accuracy: float
    flops_ratio: float
    params_ratio: float


HISTORY_COLUMNS = ("step", "group_id", "group_sparsity", "epsilon", "best_q",
                   "reward", "accuracy", "flops_ratio", "params_ratio")


def _sample_rng(seed, step, stage, i):
    return np.random.default_rng([seed, 1000003 + step, 2000029 + stage, i])


def run_pruning_search(model: ModelGraph, dataset, config: SearchConfig,
                       log=None):
    """The full multi-step loop of the search; returns (model, history rows).

    `dataset` must expose train/reward arrays (see dataio.Dataset).  The
    live model is mutated; pass a clone to keep the original.
    """
    log = log or (lambda msg: None)
    rng = np.random.default_rng(config.seed)
    dg = dependency.build(model)
    groups = dg.groups.groups
    orig_channels = {g.members: g.channels for g in groups}
    total_orig = sum(orig_channels.values())
    target_removed = round(total_orig * config.target_sparsity)
    budget = round(total_orig * config.target_sparsity / config.steps)
    policy = PruningPolicy.from_group_channels([g.channels for g in groups],
                                               config.policy_floor)

    calib_idx = rng.choice(len(dataset.train_x),
                           size=min(config.calib_size, len(dataset.train_x)),
                           replace=False)
    calib = CalibrationSet(dataset.train_x[calib_idx], dataset.train_y[calib_idx])
    n_eval = min(config.reward_eval_size, len(dataset.reward_x))
    eval_x, eval_y = dataset.reward_x[:n_eval], dataset.reward_y[:n_eval]

    base_flops = count_flops(model)[1]
    base_params = count_params(model)[1]
    alpha, beta = config.reward.alpha, config.reward.beta

    def reward_fn(candidate):
        return compute_reward(candidate, base_flops, base_params,
                              eval_x, eval_y, alpha, beta)

    baseline_acc = evaluate_accuracy(model, eval_x, eval_y)
    teacher_state = distill.TeacherState(deep_clone(model), baseline_acc)
    history = []
    removed_total = 0
    shortfall_total = 0

    for step in range(config.steps):
        if removed_total >= target_removed or budget < 1:
            break
        eps = epsilon_at(step, config)
        buffer = ReplayBuffer(config.buffer_capacity)
        final_policy = policy

        for stage in range(config.stages_per_step):
            def one_sample(i, _policy=final_policy):
                srng = _sample_rng(config.seed, step, stage, i)
                action = sample_action(_policy, config.noise_variance, srng)
                q, cand, cand_dg = estimate_q(model, dg, action, _policy, config,
                                              srng, calib, budget, reward_fn)
                return action, q, cand, cand_dg

            n = config.samples_per_stage
            if config.threads > 1:
                with ThreadPoolExecutor(max_workers=config.threads) as pool:
                    results = list(pool.map(one_sample, range(n)))
            else:
                results = [one_sample(i) for i in range(n)]
            for action, q, cand, cand_dg in results:
                if cand is not None:
                    buffer.insert(action, q, (cand, cand_dg))
            if not buffer.entries:
                raise BudgetUnplaceable(f"step {step}: no sample could place "
                                        f"the budget of {budget}")
            sel_rng = _sample_rng(config.seed, step, stage, 999983)
            a_star = buffer.select(eps, sel_rng).action
            final_policy = update_policy(final_policy, a_star,
                                         config.step_size, config.clip)
        policy = final_policy

        best = buffer.best()
        best_model, best_dg = best.candidate
        removed = sum(orig_channels[g.members] for g in groups) - \
            sum(g.channels for g in best_dg.groups.groups)
        step_removed = removed - (total_orig - sum(g.channels for g in dg.groups.groups))
        shortfall_total += max(budget - step_removed, 0)
        removed_total = removed
        model = best_model
        dg = dependency.build(model)  # rebuild; groups keep their topology
        groups = dg.groups.groups

        if (config.post_train_every > 0
                and (step + 1) % config.post_train_every == 0
                and config.distill.epochs > 0):
            model = distill.post_train(model, teacher_state.teacher,
                                       dataset.train_x, dataset.train_y,
                                       config.distill, seed=config.seed + step)
            acc = evaluate_accuracy(model, eval_x, eval_y)
            distill.update_teacher(teacher_state, model, acc)

        acc = evaluate_accuracy(model, eval_x, eval_y)
        flops_ratio = 1.0 - count_flops(model)[1] / base_flops
        params_ratio = 1.0 - count_params(model)[1] / base_params
        reward = acc + alpha * flops_ratio + beta * params_ratio
        for g in groups:
            orig = orig_channels[g.members]
            history.append(HistoryRow(step, g.id, 1.0 - g.channels / orig, eps,
                                      best.q, reward, acc, flops_ratio,
                                      params_ratio))
        log(f"step {step}: removed {removed_total}/{target_removed} channels, "
            f"acc {acc:.4f}, best_q {best.q:.4f}, eps {eps:.3f}")

    return model, {
        "history": history,
        "policy": policy,
        "removed": removed_total,
        "target_removed": target_removed,
        "shortfall": shortfall_total,
        "baseline_accuracy": baseline_acc,
        "teacher": teacher_state,
    }


def run_uniform_pruning(model: ModelGraph, dataset, config: SearchConfig,
                        log=None):
    """Non-search baseline: each step prunes the same per-step budget with a
    channel-proportional allocation, with the same post-training cadence."""
    log = log or (lambda msg: None)
    rng = np.random.default_rng(config.seed)
    dg = dependency.build(model)
    groups = dg.groups.groups
    orig_channels = {g.members: g.channels for g in groups}
    total_orig = sum(orig_channels.values())
    target_removed = round(total_orig * config.target_sparsity)
    budget = round(total_orig * config.target_sparsity / config.steps)

    calib_idx = rng.choice(len(dataset.train_x),
                           size=min(config.calib_size, len(dataset.train_x)),
                           replace=False)
    calib = CalibrationSet(dataset.train_x[calib_idx], dataset.train_y[calib_idx])
    n_eval = min(config.reward_eval_size, len(dataset.reward_x))
    eval_x, eval_y = dataset.reward_x[:n_eval], dataset.reward_y[:n_eval]

    base_flops = count_flops(model)[1]
    base_params = count_params(model)[1]
    alpha, beta = config.reward.alpha, config.reward.beta
    baseline_acc = evaluate_accuracy(model, eval_x, eval_y)
    teacher_state = distill.TeacherState(deep_clone(model), baseline_acc)
    history = []
    removed_total = 0
    shortfall_total = 0

    for step in range(config.steps):
        if removed_total >= target_removed or budget < 1:
            break
        action = _project(np.array([g.channels for g in groups], dtype=np.float64),
                          config.policy_floor)
        before = sum(g.channels for g in dg.groups.groups)
        try:
            prune_with_action(model, dg, action, budget, calib)
        except BudgetUnplaceable:
            break
        step_removed = before - sum(g.channels for g in dg.groups.groups)
        shortfall_total += max(budget - step_removed, 0)
        removed_total += step_removed
        dg = dependency.build(model)
        groups = dg.groups.groups

        if (config.post_train_every > 0
                and (step + 1) % config.post_train_every == 0
                and config.distill.epochs > 0):
            model = distill.post_train(model, teacher_state.teacher,
                                       dataset.train_x, dataset.train_y,
                                       config.distill, seed=config.seed + step)
            acc = evaluate_accuracy(model, eval_x, eval_y)
            distill.update_teacher(teacher_state, model, acc)

        acc = evaluate_accuracy(model, eval_x, eval_y)
        flops_ratio = 1.0 - count_flops(model)[1] / base_flops
        params_ratio = 1.0 - count_params(model)[1] / base_params
        reward = acc + alpha * flops_ratio + beta * params_ratio
        for g in groups:
            orig = orig_channels[g.members]
            history.append(HistoryRow(step, g.id, 1.0 - g.channels / orig, 0.0,
                                      reward, reward, acc, flops_ratio,
                                      params_ratio))
        log(f"step {step}: removed {removed_total}/{target_removed} channels, "
            f"acc {acc:.4f} (uniform)")

    return model, {
        "history": history,
        "policy": None,
        "removed": removed_total,
        "target_removed": target_removed,
        "shortfall": shortfall_total,
        "baseline_accuracy": baseline_acc,
        "teacher": teacher_state,
    }
