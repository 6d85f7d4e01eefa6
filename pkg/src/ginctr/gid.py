"""Graph intention discovery: multi-hop diffusion, attention aggregation, readout.

Per hop ``k`` a node ``v`` in frontier S^(k) is updated from its own
previous state and the previous states of its selected neighbors::

    alpha_uv = softmax_v(ReLU(z . [W h_u || W h_v]))
    n_u      = sum_v alpha_uv * ReLU(M h_v + m)
    h_u'     = ReLU(B [h_u || n_u] + b)

and the user intention vector is the ad-attended sum of the hop-K click
states, scored by scaled dot product.

Two paths are provided. The vector functions (:func:`neighbor_attention`,
:func:`aggregate`, :func:`score`) follow the formulas one node at a time.
:func:`intention_batch` computes the same thing for a whole mini-batch in a
handful of array ops: since ``h^(k)_v`` depends only on ``v`` and the graph,
each hop is evaluated once over the union of every sample's frontier.

Accumulation order: every neighbor list is sorted by item row index before
use, so sums over neighbors run in a fixed order and the output does not
depend on how the neighbor-select function orders its results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Segments, Tensor
from .cograph import CoGraph, NeighborSelect, topn_selector

HOP_FIELDS = ("W", "z", "M", "m", "B", "b")


def hop_shapes(d: int) -> dict[str, tuple[int, ...]]:
    return {"W": (d, d), "z": (2 * d,), "M": (d, d), "m": (d,), "B": (d, 2 * d), "b": (d,)}


@dataclass
class HopParams:
    """Parameters of one AGGREGATE hop (arrays or tape leaves)."""

    W: Tensor
    z: Tensor
    M: Tensor
    m: Tensor
    B: Tensor
    b: Tensor

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "HopParams":
        return cls(**{f: values[f] for f in HOP_FIELDS})


@dataclass
class GidParams:
    """One independent :class:`HopParams` per hop, ``hops[k - 1]`` for hop ``k``."""

    hops: list[HopParams]

    @property
    def depth(self) -> int:
        return len(self.hops)


# ---------------------------------------------------------------- per node


def neighbor_attention(h_u: Tensor, H: Sequence[Tensor], W: Tensor, z: Tensor) -> Tensor:
    """Attention weights of ``h_u`` over its neighbor states ``H``."""
    if not H:
        raise ValueError("neighbor_attention needs at least one neighbor")
    r = len(H)
    Wu = ad.affine(W, h_u)
    Wv = ad.affine(W, ad.stack(list(H)))
    rows = ad.concat([ad.gather(ad.stack([Wu]), np.zeros(r, dtype=np.intp)), Wv], axis=1)
    logits = ad.rowdot(rows, ad.gather(ad.stack([z]), np.zeros(r, dtype=np.intp)))
    return ad.softmax(ad.relu(logits))


def aggregate(h_u: Tensor, H: Sequence[Tensor], hop: HopParams) -> Tensor:
    """One AGGREGATE step for a single node; ``H`` may be empty."""
    h_u = ad._as_tensor(h_u)
    d = h_u.shape[0]
    if ad._as_tensor(hop.B).shape != (d, 2 * d):
        raise ad.ShapeError(f"aggregate: B has shape {ad._as_tensor(hop.B).shape}, expected {(d, 2 * d)}")
    if H:
        alpha = neighbor_attention(h_u, H, hop.W, hop.z)
        Q = ad.relu(ad.affine(hop.M, ad.stack(list(H)), hop.m))
        pooled = ad.segment_sum(ad.scale_rows(Q, alpha), Segments(np.zeros(len(H), dtype=np.intp), 1))
        n_u = ad.gather(pooled, 0)
    else:
        n_u = ad.constant(np.zeros(d))
    return ad.relu(ad.affine(hop.B, ad.concat([h_u, n_u]), hop.b))


def score(h_ad: Tensor, h_c: Tensor) -> Tensor:
    """Scaled dot product ``h_ad . h_c / sqrt(d)``."""
    h_ad, h_c = ad._as_tensor(h_ad), ad._as_tensor(h_c)
    if h_ad.shape != h_c.shape or h_ad.value.ndim != 1:
        raise ad.ShapeError(f"score: {h_ad.shape} vs {h_c.shape}")
    return ad.scale(ad.dot(h_ad, h_c), 1.0 / math.sqrt(h_ad.shape[0]))


# ---------------------------------------------------------------- batched


@dataclass(frozen=True)
class NeighborIndex:
    """Selected neighbor lists in item-row space, as CSR arrays.

    Row ``r``'s neighbors are ``idx[ptr[r]:ptr[r + 1]]``, sorted ascending.
    Rows beyond the graph (including the UNK row 0) have no neighbors.
    """

    ptr: np.ndarray
    idx: np.ndarray

    @classmethod
    def build(
        cls,
        g: CoGraph,
        rows: Mapping[str, int],
        num_rows: int,
        n: int = 10,
        select: NeighborSelect | None = None,
    ) -> "NeighborIndex":
        """Neighbor lists for every item in ``rows``.

        Neighbors missing from ``rows`` collapse onto the UNK row.
        """
        select = select or topn_selector(g, n)
        lists: list[np.ndarray] = [np.zeros(0, dtype=np.intp)] * num_rows
        for item, r in rows.items():
            if r == 0 or item not in g.adjacency:
                continue
            nb = {rows.get(v, 0) for v in select(item)}
            lists[r] = np.array(sorted(nb), dtype=np.intp)
        lengths = np.fromiter((len(x) for x in lists), dtype=np.intp, count=num_rows)
        ptr = np.concatenate([[0], np.cumsum(lengths)]).astype(np.intp)
        idx = np.concatenate(lists).astype(np.intp) if num_rows else np.zeros(0, np.intp)
        return cls(ptr, idx)

    def expand(self, nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Concatenated neighbor rows of ``nodes`` and the per-node counts."""
        starts = self.ptr[nodes]
        lengths = self.ptr[nodes + 1] - starts
        total = int(lengths.sum())
        offsets = np.arange(total) - np.repeat(np.cumsum(lengths) - lengths, lengths)
        return self.idx[np.repeat(starts, lengths) + offsets], lengths


@dataclass(frozen=True)
class HopPlan:
    self_pos: np.ndarray  # position of each S^(k) node within S^(k-1)
    nbr_pos: np.ndarray  # position of each edge's neighbor within S^(k-1)
    edges: Segments  # edge -> owning S^(k) node


@dataclass(frozen=True)
class BatchPlan:
    """Index arrays for one mini-batch; ``levels[k]`` holds S^(k) as sorted rows."""

    levels: tuple[np.ndarray, ...]
    hops: tuple[HopPlan, ...]
    click_pos: np.ndarray  # each click slot's position within S^(K)
    clicks: Segments  # click slot -> sample

    @property
    def depth(self) -> int:
        return len(self.hops)


def plan_batch(click_rows: Sequence[np.ndarray], depth: int, neighbors: NeighborIndex | None) -> BatchPlan:
    """Diffusion frontiers and gather indices for a batch of click-row lists.

    Duplicate clicks share one node in the frontiers but keep their own
    readout slot.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if depth > 0 and neighbors is None:
        raise ValueError("depth > 0 needs a neighbor index")
    lengths = np.fromiter((len(c) for c in click_rows), dtype=np.intp, count=len(click_rows))
    flat = np.concatenate([np.asarray(c, dtype=np.intp) for c in click_rows]) if len(click_rows) else np.zeros(0, np.intp)
    levels: list[np.ndarray] = [np.zeros(0, np.intp)] * (depth + 1)
    levels[depth] = np.unique(flat)
    expanded = {}
    for k in range(depth, 0, -1):
        nb, counts = neighbors.expand(levels[k])
        expanded[k] = (nb, counts)
        levels[k - 1] = np.union1d(levels[k], nb)
    hops = []
    for k in range(1, depth + 1):
        nb, counts = expanded[k]
        prev = levels[k - 1]
        hops.append(
            HopPlan(
                self_pos=np.searchsorted(prev, levels[k]),
                nbr_pos=np.searchsorted(prev, nb),
                edges=Segments.from_lengths(counts),
            )
        )
    return BatchPlan(
        levels=tuple(levels),
        hops=tuple(hops),
        click_pos=np.searchsorted(levels[depth], flat),
        clicks=Segments.from_lengths(lengths),
    )


@dataclass
class GidOutput:
    uii: Tensor  # [batch, d]
    attention: Tensor  # readout weight per click slot, grouped by plan.clicks


def _hop(h: Tensor, hp: HopParams, plan: HopPlan, d: int) -> Tensor:
    z_self = ad.gather(hp.z, np.arange(d))
    z_nbr = ad.gather(hp.z, np.arange(d, 2 * d))
    P = ad.affine(hp.W, h)
    logit_self = ad.affine(P, z_self)
    logit_nbr = ad.affine(P, z_nbr)
    logits = ad.add(ad.gather(logit_self, plan.self_pos[plan.edges.ids]), ad.gather(logit_nbr, plan.nbr_pos))
    alpha = ad.segment_softmax(ad.relu(logits), plan.edges)
    Q = ad.relu(ad.affine(hp.M, h, hp.m))
    n_u = ad.segment_sum(ad.scale_rows(ad.gather(Q, plan.nbr_pos), alpha), plan.edges)
    h_self = ad.gather(h, plan.self_pos)
    return ad.relu(ad.affine(hp.B, ad.concat([h_self, n_u], axis=1), hp.b))


def intention_batch(item_table: Tensor, params: GidParams, plan: BatchPlan, h_ad: Tensor) -> GidOutput:
    """Intention vectors for a batch; ``h_ad`` holds one ad embedding per sample.

    Samples without clicks get a zero intention vector.
    """
    if params.depth < plan.depth:
        raise ValueError(f"plan needs {plan.depth} hops, params provide {params.depth}")
    d = ad._as_tensor(item_table).shape[1]
    h = ad.gather(item_table, plan.levels[0])
    for k, hop_plan in enumerate(plan.hops):
        h = _hop(h, params.hops[k], hop_plan, d)
    H = ad.gather(h, plan.click_pos)
    A = ad.gather(h_ad, plan.clicks.ids)
    scores = ad.scale(ad.rowdot(A, H), 1.0 / math.sqrt(d))
    attn = ad.segment_softmax(scores, plan.clicks)
    uii = ad.segment_sum(ad.scale_rows(H, attn), plan.clicks)
    return GidOutput(uii, attn)


def sumpool_batch(item_table: Tensor, click_rows: Sequence[np.ndarray]) -> Tensor:
    """Sum of raw click embeddings per sample (the pooled baseline)."""
    lengths = [len(c) for c in click_rows]
    flat = np.concatenate([np.asarray(c, dtype=np.intp) for c in click_rows]) if click_rows else np.zeros(0, np.intp)
    return ad.segment_sum(ad.gather(item_table, flat), Segments.from_lengths(lengths))


def gid_forward(
    ad_item: str,
    pre_clicks: Sequence[str],
    depth: int,
    g: CoGraph,
    n: int,
    item_table: Tensor,
    item_rows: Mapping[str, int],
    params: GidParams,
    select: NeighborSelect | None = None,
    neighbors: NeighborIndex | None = None,
) -> GidOutput:
    """User intention vector ``[d]`` for a single (ad, click history) pair.

    ``item_rows`` maps item ids to rows of ``item_table``; unknown ids use
    row 0. ``neighbors`` may be passed to reuse a prebuilt index.
    """
    table = ad._as_tensor(item_table)
    if neighbors is None and depth > 0:
        neighbors = NeighborIndex.build(g, item_rows, table.shape[0], n, select)
    rows = np.fromiter((item_rows.get(c, 0) for c in pre_clicks), dtype=np.intp, count=len(pre_clicks))
    plan = plan_batch([rows], depth, neighbors)
    h_ad = ad.embed_lookup(table, [ad_item], item_rows)
    out = intention_batch(table, params, plan, h_ad)
    return GidOutput(ad.gather(out.uii, 0), out.attention)
