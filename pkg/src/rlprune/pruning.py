"""Taylor-criterion channel scoring and dependency-respecting removal."""

import dataclasses
from dataclasses import dataclass

import numpy as np

from .dependency import ChannelMap, DependencyGraph, INPUT_PRODUCER
from .errors import BudgetUnplaceable, ConfigError, ValidationError
from .graph import ModelGraph, backward, out_channels, run_forward
from .layers import BatchNorm, Conv2d, Linear
from .losses import cross_entropy

MIN_CHANNELS = 1  # hard floor: a coupled group is never pruned to zero


@dataclass
class CalibrationSet:
    """Small training-split sample used only for importance gradients."""
    images: np.ndarray  # (N, C, H, W)
    labels: np.ndarray  # (N,)

    def __post_init__(self):
        if len(self.images) == 0:
            raise ConfigError("calibration set is empty")
        self.labels = np.asarray(self.labels)

    @property
    def size(self):
        return len(self.images)


@dataclass(frozen=True)
class ChannelScore:
    group: int
    channel: int
    score: float


def taylor_scores(model: ModelGraph, calib: CalibrationSet, groups) -> list:
    """First-order importance |sum(grad * weight)| per (group, channel).

    One taped forward/backward over the whole calibration batch (eval-mode
    batchnorm, no weight update).  Per member layer the channel-k slice is
    its weight rows plus bias entry; the group score is the sum of the
    members' absolute contributions.
    """
    logits, _, tape = run_forward(model, calib.images, mode="eval", want_tape=True)
    _, dlogits = cross_entropy(logits, calib.labels)
    grads = backward(model, tape, dlogits)
    scores = []
    for g in groups.groups:
        per_channel = np.zeros(g.channels, dtype=np.float64)
        for m in g.members:
            node = model.node(m)
            gw = grads[node.id]
            contrib = (gw["weight"].astype(np.float64)
                       * node.weights["weight"].astype(np.float64))
            contrib = contrib.reshape(g.channels, -1).sum(axis=1)
            if "bias" in node.weights:
                contrib += (gw["bias"].astype(np.float64)
                            * node.weights["bias"].astype(np.float64))
            per_channel += np.abs(contrib)
        scores.extend(ChannelScore(g.id, k, float(per_channel[k]))
                      for k in range(g.channels))
    return scores


def least_important(scores, group_id, count) -> list:
    """The `count` lowest-scoring live channels of a group (ties: lower index)."""
    chs = sorted((s for s in scores if s.group == group_id),
                 key=lambda s: (s.score, s.channel))
    return [s.channel for s in chs[:count]]


def allocate_prune_counts(action, budget: int, live_counts,
                          min_channels: int = MIN_CHANNELS):
    """Largest-remainder apportionment of an integer budget by action mass.

    Each group is capped at live - min_channels; capped-off mass spills to
    the next-largest remainders.  Returns integer counts (sum <= budget;
    equal when feasible).  Raises BudgetUnplaceable if no channel anywhere
    can be pruned.
    """
    action = np.asarray(action, dtype=np.float64)
    live = np.asarray(live_counts, dtype=np.int64)
    if budget < 1:
        raise ConfigError(f"budget must be >= 1, got {budget}")
    caps = np.maximum(live - min_channels, 0)
    if caps.sum() == 0:
        raise BudgetUnplaceable("every coupled group is at the channel floor")
    quotas = action * budget
    counts = np.minimum(np.floor(quotas).astype(np.int64), caps)
    remaining = budget - int(counts.sum())
    while remaining > 0:
        open_idx = np.flatnonzero(counts < caps)
        if open_idx.size == 0:
            break  # shortfall: caller logs budget - sum(counts)
        rem = quotas[open_idx] - counts[open_idx]
        best = open_idx[np.lexsort((open_idx, -rem))[0]]
        counts[best] += 1
        remaining -= 1
    return counts.tolist()


def apply_pruning(model: ModelGraph, dg: DependencyGraph, group_id: int,
                  channels) -> ModelGraph:
    """Remove output channels `channels` from every member of a group.

    Mutates the model in place: output rows (weight, bias, attached
    batchnorm state) go in all members; the mapped input columns go in all
    consumers; sibling edge offsets and group counts are updated so the
    DependencyGraph stays consistent.  Returns the model.
    """
    group = dg.groups.by_id(group_id)
    channels = sorted(set(int(c) for c in channels))
    if not channels:
        return model
    if any(c < 0 or c >= group.channels for c in channels):
        raise ConfigError(f"channel index out of range for group {group_id} "
                          f"(live {group.channels})")
    if group.channels - len(channels) < MIN_CHANNELS:
        raise ConfigError(f"refusing to prune group {group_id} below "
                          f"{MIN_CHANNELS} channel(s)")
    keep = np.array([k for k in range(group.channels) if k not in set(channels)])
    members = set(group.members)

    for m in group.members:
        node = model.node(m)
        node.weights["weight"] = np.ascontiguousarray(node.weights["weight"][keep])
        if "bias" in node.weights:
            node.weights["bias"] = node.weights["bias"][keep].copy()
        node.kind = _shrink_out(node.kind, len(keep))
        for bn_id in dg.bn_attachments.get(m, ()):
            bn = model.node(bn_id)
            for name in ("gamma", "beta", "running_mean", "running_var"):
                bn.weights[name] = bn.weights[name][keep].copy()
            bn.kind = dataclasses.replace(bn.kind, channels=len(keep))

    # consumer side: drop the mapped input columns once per consumer
    consumers = {}
    for e in dg.edges:
        if e.producer in members:
            consumers.setdefault(e.consumer, []).append(e)
    for cid, ces in consumers.items():
        removed = set()
        for e in ces:
            for k in channels:
                removed.update(e.mapping.columns(k))
        node = model.node(cid)
        width = node.weights["weight"].shape[1]
        if any(c >= width for c in removed):
            raise ValidationError(f"node {cid}: stale dependency edge "
                                  f"(column >= {width})")
        keep_cols = np.array([c for c in range(width) if c not in removed])
        node.weights["weight"] = np.ascontiguousarray(node.weights["weight"][:, keep_cols])
        node.kind = _shrink_in(node.kind, len(keep_cols))
        removed_sorted = np.array(sorted(removed))
        for e in dg.edges:
            if e.consumer != cid:
                continue
            shift = int(np.searchsorted(removed_sorted, e.mapping.offset))
            e.mapping = ChannelMap(e.mapping.offset - shift, e.mapping.block)

    for e in dg.edges:
        if e.producer in members:
            e.channels = len(keep)
    group.channels = len(keep)
    return model


def _shrink_out(kind, n):
    if isinstance(kind, Conv2d):
        return dataclasses.replace(kind, out_channels=n)
    if isinstance(kind, Linear):
        return dataclasses.replace(kind, out_features=n)
    raise ValidationError(f"{kind!r} is not prunable")


def _shrink_in(kind, n):
    if isinstance(kind, Conv2d):
        return dataclasses.replace(kind, in_channels=n)
    if isinstance(kind, Linear):
        return dataclasses.replace(kind, in_features=n)
    raise ValidationError(f"{kind!r} is not a prunable consumer")


def prune_with_action(model: ModelGraph, dg: DependencyGraph, action,
                      budget: int, calib: CalibrationSet):
    """Score once, apportion the budget, prune each group's worst channels.

    Returns (channels actually removed, per-group counts).
    """
    live = [g.channels for g in dg.groups.groups]
    counts = allocate_prune_counts(action, budget, live)
    scores = taylor_scores(model, calib, dg.groups)
    removed = 0
    for g in dg.groups.groups:
        c = counts[g.id]
        if c <= 0:
            continue
        apply_pruning(model, dg, g.id, least_important(scores, g.id, c))
        removed += c
    return removed, counts
