"""Inter-layer channel dependency extraction and coupled-group partitioning.

A single traced forward pass (batch 1, seed-fixed uniform(-1,1) input) gives
every node's output tensor.  Producer/consumer matching is by tensor id;
tensor values are used only to locate concat offsets (bitwise slice
equality, which the noise input makes unambiguous).

Channel mappings are (offset, block): pruning output channel k of the
producer removes consumer input columns [offset + k*block, offset +
(k+1)*block).  offset=0, block=1 is the identity map; offset>0 comes from
concat; block>1 from flattening a spatial map of area block.

Layers joined by Add/Mul (residual connections, squeeze-excitation gates)
must share output-channel structure; union-find over those couplings yields
the disjoint coupled groups that are pruned together.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ValidationError
from .graph import INPUT_ID, ModelGraph, Trace, out_channels, run_forward
from .layers import (Add, BatchNorm, Concat, Flatten, Mul, PASSTHROUGH_KINDS,
                     PRUNABLE_KINDS)

INPUT_PRODUCER = -1  # pseudo producer: channels fed by the model input


@dataclass(frozen=True)
class ChannelMap:
    offset: int = 0
    block: int = 1

    @property
    def kind(self) -> str:
        if self.block > 1:
            return "flatten_block" if self.offset == 0 else "offset_flatten_block"
        return "identity" if self.offset == 0 else "offset"

    def columns(self, k: int) -> range:
        return range(self.offset + k * self.block, self.offset + (k + 1) * self.block)


@dataclass
class DependencyEdge:
    producer: int  # node id, INPUT_PRODUCER for model-input channels
    consumer: int
    mapping: ChannelMap
    channels: int  # producer output channels covered by this edge


@dataclass
class CoupledGroup:
    id: int
    members: tuple  # prunable node ids, sorted
    channels: int  # shared live output-channel count


@dataclass
class CoupledGroupSet:
    groups: list

    def by_id(self, gid) -> CoupledGroup:
        return self.groups[gid]

    def group_of(self) -> dict:
        return {m: g.id for g in self.groups for m in g.members}


@dataclass
class DependencyGraph:
    edges: list
    groups: CoupledGroupSet
    bn_attachments: dict  # producer node id -> [batchnorm node ids]
    classifier_ids: set  # prunable nodes excluded from pruning (class outputs)
    couplings: list  # raw (node a, node b) constraints from Add/Mul

    def edges_from(self, producer):
        return [e for e in self.edges if e.producer == producer]

    def edges_into(self, consumer):
        return [e for e in self.edges if e.consumer == consumer]


# --------------------------------------------------------------- tracing


def trace_input(model: ModelGraph, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, (1,) + tuple(model.input_shape)).astype(np.float32)


def trace_execution(model: ModelGraph, example_input: np.ndarray | None = None) -> Trace:
    """Run the model once (eval mode, batch 1) and record all tensors."""
    if example_input is None:
        example_input = trace_input(model)
    _, trace = run_forward(model, example_input, mode="eval")
    return trace


# -------------------------------------------------------------- resolution

# A resolution describes where a tensor's channels come from: a list of
# segments (producer id, producer channel count, dest offset, block).


def _concat_offset(operand_value, concat_value, where):
    """Locate the operand inside the concat output by bitwise slice equality."""
    cb = operand_value.shape[1]
    ct = concat_value.shape[1]
    for i in range(ct - cb + 1):
        if np.array_equal(concat_value[:, i:i + cb], operand_value):
            return i
    raise DataError(f"unresolved dependency: concat operand not found at {where}")


def _resolve(model, trace, memo, node_id):
    if node_id in memo:
        return memo[node_id]
    by_node = trace.by_node()
    if node_id == INPUT_ID:
        c = model.input_shape[0]
        res = ([(INPUT_PRODUCER, c, 0, 1)], [])
        memo[node_id] = res
        return res
    node = model.node(node_id)
    kind = node.kind
    if isinstance(kind, PRUNABLE_KINDS):
        res = ([(node_id, out_channels(kind), 0, 1)], [])
    elif isinstance(kind, PASSTHROUGH_KINDS):
        res = _resolve(model, trace, memo, node.inputs[0])
    elif isinstance(kind, Flatten):
        segs, cons = _resolve(model, trace, memo, node.inputs[0])
        src_entry = by_node[node.inputs[0]] if node.inputs[0] != INPUT_ID else None
        if src_entry is None:
            raise DataError(f"unresolved dependency: flatten of model input at {node.label()}")
        shape = src_entry.output_value.shape
        area = int(np.prod(shape[2:])) if len(shape) > 2 else 1
        res = ([(p, n, off * area, blk * area) for (p, n, off, blk) in segs], list(cons))
    elif isinstance(kind, Concat):
        out_val = by_node[node_id].output_value
        segs, cons = [], []
        for src in node.inputs:
            s_segs, s_cons = _resolve(model, trace, memo, src)
            src_val = by_node[src].output_value
            ib = _concat_offset(src_val, out_val, node.label())
            segs.extend((p, n, ib + off, blk) for (p, n, off, blk) in s_segs)
            cons.extend(s_cons)
        res = (segs, cons)
    elif isinstance(kind, (Add, Mul)):
        ra, ca = _resolve(model, trace, memo, node.inputs[0])
        rb, cb = _resolve(model, trace, memo, node.inputs[1])
        cons = list(ca) + list(cb)
        # channel-aligned coupling between the two operand covers
        pa = sorted({p for p, *_ in ra if p != INPUT_PRODUCER})
        pb = sorted({p for p, *_ in rb if p != INPUT_PRODUCER})
        for a in pa:
            for b in pb:
                if a != b:
                    cons.append((a, b))
        if not pa or not pb:
            raise DataError(f"unresolved dependency: {node.label()} operand "
                            "has no prunable producer")
        # Mul may broadcast a (B,C,1,1) gate; the covers share channel layout
        res = (ra + [s for s in rb if s not in ra], cons)
    else:
        raise DataError(f"unresolved dependency at {node.label()}")
    memo[node_id] = res
    return res


def build_dependency_graph(trace: Trace, model: ModelGraph) -> DependencyGraph:
    """Edges, coupled groups and batchnorm attachments for one model."""
    memo = {}
    edges = []
    couplings = []
    bn_attach = {}
    for node in model.nodes:
        if isinstance(node.kind, BatchNorm):
            segs, _ = _resolve(model, trace, memo, node.inputs[0])
            for p, *_ in segs:
                if p != INPUT_PRODUCER:
                    bn_attach.setdefault(p, []).append(node.id)
        if not isinstance(node.kind, PRUNABLE_KINDS):
            continue
        segs, cons = _resolve(model, trace, memo, node.inputs[0])
        couplings.extend(cons)
        for p, n, off, blk in segs:
            edges.append(DependencyEdge(p, node.id, ChannelMap(off, blk), n))
    # constraints reachable only through the output (e.g. trailing Add)
    _, cons = _resolve(model, trace, memo, model.output_id)
    couplings.extend(cons)
    classifier_segs, _ = _resolve(model, trace, memo, model.output_id)
    classifier_ids = {p for p, *_ in classifier_segs if p != INPUT_PRODUCER}
    couplings = sorted(set(couplings))
    groups = partition_coupled_groups(model, couplings, classifier_ids)
    dg = DependencyGraph(edges, groups, bn_attach, classifier_ids, couplings)
    check_coverage(dg, model)
    return dg


def build(model: ModelGraph, seed: int = 0) -> DependencyGraph:
    """Trace and build in one call."""
    return build_dependency_graph(trace_execution(model, trace_input(model, seed)), model)


# ------------------------------------------------------------- partitioning


def partition_coupled_groups(model: ModelGraph, couplings, classifier_ids) -> CoupledGroupSet:
    """Union-find closure over Add/Mul couplings; classifier layers excluded."""
    prunable = model.prunable_ids()
    parent = {p: p for p in prunable}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in couplings:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    sets = {}
    for p in prunable:
        sets.setdefault(find(p), []).append(p)
    excluded_roots = {find(c) for c in classifier_ids if c in parent}
    groups = []
    for root in sorted(sets):
        if root in excluded_roots:
            continue
        members = tuple(sorted(sets[root]))
        counts = {out_channels(model.node(m).kind) for m in members}
        if len(counts) != 1:
            raise ValidationError(f"coupled group {members} has unequal output "
                                  f"channel counts {sorted(counts)}")
        groups.append(CoupledGroup(len(groups), members, counts.pop()))
    return CoupledGroupSet(groups)


# ---------------------------------------------------------------- coverage


def _consumer_in_width(kind):
    from .layers import Conv2d, Linear
    if isinstance(kind, Conv2d):
        return kind.in_channels
    if isinstance(kind, Linear):
        return kind.in_features
    raise ValidationError(f"{kind!r} is not a prunable consumer")


def check_coverage(dg: DependencyGraph, model: ModelGraph):
    """Edges into each prunable consumer must tile [0, N_in) exactly once.

    Edges from members of one coupled group map to the same columns (they
    are pruned together), so coverage is counted per source group.
    """
    group_of = dg.groups.group_of()
    consumers = {}
    for e in dg.edges:
        consumers.setdefault(e.consumer, []).append(e)
    for cid, ces in consumers.items():
        width = _consumer_in_width(model.node(cid).kind)
        seen = np.zeros(width, dtype=np.int32)
        per_source = {}
        for e in ces:
            key = ("g", group_of[e.producer]) if e.producer in group_of else ("n", e.producer)
            cols = set()
            for k in range(e.channels):
                cols.update(e.mapping.columns(k))
            prev = per_source.get(key)
            if prev is None:
                per_source[key] = cols
            elif prev != cols:
                raise ValidationError(f"node {cid}: edges from source {key} "
                                      "disagree on column sets")
        for cols in per_source.values():
            for c in cols:
                if c >= width:
                    raise ValidationError(f"node {cid}: column {c} >= N_in {width}")
                seen[c] += 1
        bad = np.flatnonzero(seen != 1)
        if bad.size:
            raise ValidationError(f"node {cid}: input channels {bad[:8].tolist()}... "
                                  "not covered exactly once")


# ------------------------------------------------------------------ report


def format_report(dg: DependencyGraph, model: ModelGraph) -> str:
    """Human-readable trace report: edges, mapping kinds, group membership."""
    lines = ["# dependency report", "## edges"]
    for e in dg.edges:
        src = "input" if e.producer == INPUT_PRODUCER else f"node {e.producer}"
        lines.append(f"{src} -> node {e.consumer}  {e.mapping.kind} "
                     f"offset={e.mapping.offset} block={e.mapping.block} "
                     f"channels={e.channels}")
    lines.append("## coupled groups")
    for g in dg.groups.groups:
        members = ", ".join(model.node(m).label() for m in g.members)
        lines.append(f"group {g.id} ({g.channels} ch): {members}")
    lines.append("## classifier (not pruned)")
    for c in sorted(dg.classifier_ids):
        lines.append(model.node(c).label())
    return "\n".join(lines) + "\n"
