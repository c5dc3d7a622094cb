"""Combine K predictions of one image into a single prediction.

Hard combination is per-pixel majority voting over label maps: each of the K
predictors casts one vote per pixel and the class with the most votes wins.
Ties are broken by predictor priority: among the tied classes, the vote cast
by the highest-priority predictor decides. Priority is a rank ordering of the
input positions, defaulting to input order, so listing the strongest predictor
first makes it dominant exactly where voting alone cannot decide.

Soft combination is a weighted per-element mean of probability maps; it is
also the reduction primitive reused by tile and test-time-augmentation fusion.

Both functions are pure and deterministic: accumulation follows input list
order, and the vote result depends only on which physical predictor holds
which rank, never on how the call happens to order its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import LabelMap, ProbMap
from .errors import DimMismatch, EmptyInput, PriorityMismatch, ZeroWeight


@dataclass(frozen=True)
class VoteConfig:
    """Voting rule configuration.

    ``priority`` ranks the inputs for tie-breaking: a tuple of input positions,
    highest priority first, and must be a permutation of ``range(K)``. ``None``
    means input order. With ``treat_ignore_as_abstain`` set, votes equal to
    the ignore sentinel are dropped instead of counted, and pixels where every
    predictor abstains come out as ignore.
    """

    priority: tuple[int, ...] | None = None
    treat_ignore_as_abstain: bool = False


def priority_from_ids(input_ids: Sequence[str], ranked_ids: Sequence[str]) -> tuple[int, ...]:
    """Turn a rank ordering by predictor id into a positional priority tuple.

    ``input_ids`` names the predictions in input order; ``ranked_ids`` lists
    the same ids from highest to lowest priority.
    """
    if len(set(input_ids)) != len(input_ids):
        raise PriorityMismatch(f"duplicate input ids: {list(input_ids)}")
    pos = {pid: i for i, pid in enumerate(input_ids)}
    if sorted(ranked_ids) != sorted(input_ids):
        raise PriorityMismatch(
            f"priority ids {list(ranked_ids)} are not a permutation of input ids {list(input_ids)}"
        )
    return tuple(pos[pid] for pid in ranked_ids)


def _check_priority(priority: tuple[int, ...] | None, k: int) -> tuple[int, ...]:
    if priority is None:
        return tuple(range(k))
    if len(priority) != k:
        raise PriorityMismatch(f"priority has {len(priority)} entries for {k} inputs")
    if sorted(priority) != list(range(k)):
        raise PriorityMismatch(f"priority {priority} is not a permutation of 0..{k - 1}")
    return tuple(priority)


def majority_vote(preds: Sequence[LabelMap], cfg: VoteConfig | None = None) -> LabelMap:
    """Per-pixel majority vote over K label maps.

    The winning class at a pixel is the one with the most votes; among tied
    classes the vote of the highest-priority predictor voting for any tied
    class wins. See :class:`VoteConfig` for the abstention rule.
    """
    if len(preds) == 0:
        raise EmptyInput("majority_vote needs at least one prediction")
    cfg = cfg or VoteConfig()
    first = preds[0]
    for p in preds[1:]:
        if (p.width, p.height) != (first.width, first.height):
            raise DimMismatch(
                f"prediction dims {p.width}x{p.height} != {first.width}x{first.height}"
            )
        if p.ignore_index != first.ignore_index:
            raise DimMismatch(
                f"prediction ignore_index {p.ignore_index} != {first.ignore_index}"
            )
    rank = _check_priority(cfg.priority, len(preds))
    ignore = first.ignore_index

    stack = np.stack([np.asarray(p.data) for p in preds]).reshape(len(preds), -1)
    n = stack.shape[1]
    present = np.unique(stack)
    if cfg.treat_ignore_as_abstain:
        present = present[present != ignore]

    out = np.full(n, ignore, dtype=stack.dtype)
    if present.size > 0:
        counts = np.empty((present.size, n), dtype=np.int32)
        for i, c in enumerate(present):
            counts[i] = (stack == c).sum(axis=0, dtype=np.int32)
        top = counts.max(axis=0)

        lut = np.zeros(int(present.max()) + 1, dtype=np.intp)
        lut[present] = np.arange(present.size)
        unset = np.ones(n, dtype=bool)
        for src in rank:
            if not unset.any():
                break
            cand = stack[src]
            open_idx = np.flatnonzero(
                unset & (cand != ignore) if cfg.treat_ignore_as_abstain else unset
            )
            if open_idx.size == 0:
                continue
            cand_open = cand[open_idx]
            hit = counts[lut[cand_open], open_idx] == top[open_idx]
            won = open_idx[hit]
            out[won] = cand_open[hit]
            unset[won] = False

    return LabelMap(out.reshape(first.height, first.width), ignore_index=ignore)


def soft_average(probs: Sequence[ProbMap], weights: Sequence[float] | None = None) -> ProbMap:
    """Weighted per-element mean of probability maps.

    Weights are normalized to sum to one; accumulation runs in input list
    order, in float32, so repeated calls are bit-identical.
    """
    if len(probs) == 0:
        raise EmptyInput("soft_average needs at least one input")
    first = probs[0]
    for p in probs[1:]:
        if p.data.shape != first.data.shape:
            raise DimMismatch(f"prob map shape {p.data.shape} != {first.data.shape}")
    if weights is None:
        weights = [1.0] * len(probs)
    if len(weights) != len(probs):
        raise DimMismatch(f"{len(weights)} weights for {len(probs)} maps")
    if any(w < 0 for w in weights):
        raise ZeroWeight(f"weights must be non-negative, got {list(weights)}")
    total = float(sum(weights))
    if total <= 0.0:
        raise ZeroWeight("weights must sum to a positive value")

    acc = first.data * np.float32(weights[0] / total)
    for p, w in zip(probs[1:], weights[1:]):
        acc += p.data * np.float32(w / total)
    return ProbMap(acc)
