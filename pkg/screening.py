"""
Screening Stage Module
======================

Stage 1 of DART2: walk the aggregation tree from the leaves to the top layer,
testing node-level hypotheses with Stouffer statistics against data-driven
thresholds, and collect the screened-out node set.

Threshold search works on the z scale. The estimated FDP
    sum|S| * Phi_bar(c) / max(sum|S| * 1{T_S > c}, 1)
only changes its denominator at the observed T_S values, so the infimum is
found by an exact scan over those breakpoints, solving
Phi_bar(c) = alpha * count / sum|S| analytically inside each interval.
If no interval holds a solution below Phi_bar^-1(alpha_m), the layer keeps
that upper bound as its recorded threshold and screens no node.

Author: DART2 Toolkit
Date: 2026-10-17
Version: 1.0.0
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from aggregation_tree import AggregationTree
from core import (
    Dart2Config,
    InputDomainError,
    InvariantViolation,
    StatisticVector,
    std_normal_sf_inv,
)
from logger_config import LogContext


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LayerState:
    """
    Audit record of one screened layer.

    Attributes:
        layer (int): Layer index l (1-based)
        nodes (Tuple[int, ...]): Tree node indices of the qualified set B(l)
        members (Tuple[Tuple[int, ...], ...]): Surviving hypotheses of each qualified node
        node_stats (Tuple[float, ...]): Stouffer statistic T_S of each qualified node
        threshold (float): c_hat(l); +inf when the layer was skipped
        alpha_level (float): Layer-level alpha(l)
        screened (Tuple[int, ...]): Tree node indices with T_S > c_hat(l)
        skipped (bool): True when B(l) was empty or alpha(l) <= alpha_m
        feasible (bool): False when no threshold in range met the bound; such
            a layer records the upper bound and screens nothing
    """
    layer: int
    nodes: Tuple[int, ...]
    members: Tuple[Tuple[int, ...], ...]
    node_stats: Tuple[float, ...]
    threshold: float
    alpha_level: float
    screened: Tuple[int, ...]
    skipped: bool = False
    feasible: bool = True


@dataclass(frozen=True)
class ScreenedNode:
    """A node in the screened-out set R_node, with its surviving members."""
    layer: int
    node: int
    members: Tuple[int, ...]
    statistic: float
    threshold: float


@dataclass(frozen=True)
class ScreeningResult:
    """Per-layer thresholds, the screened-out node set and the layer-1 rejections."""
    m: int
    alpha_floor: float
    layers: Tuple[LayerState, ...]
    screened_nodes: Tuple[ScreenedNode, ...]
    layer1_rejections: frozenset


def _values(T) -> np.ndarray:
    return T.values if isinstance(T, StatisticVector) else StatisticVector(T).values


def node_statistic(T, S: Sequence[int]) -> float:
    """
    Stouffer aggregation T_S = sum_{i in S} T_i / sqrt(|S|).

    Raises:
        InputDomainError: If S is empty or holds an invalid index
    """
    values = _values(T)
    idx = list(S)
    if not idx:
        raise InputDomainError("node_statistic: node must not be empty")
    for i in idx:
        if not 0 <= int(i) < values.size:
            raise InputDomainError(f"node_statistic: hypothesis index {i} out of range 0..{values.size - 1}")
    return float(np.sum(values[idx]) / math.sqrt(len(idx)))


def layer_alpha(alpha: float, qualified, rule: str = "scaled") -> float:
    """
    Layer-level alpha.

    The scaled rule divides alpha by the largest qualified node size; the
    constant rule returns alpha unchanged.

    Args:
        alpha (float): Target FDR level
        qualified: Qualified node sets B(l) (collections of hypothesis indices)
        rule (str): "scaled" or "constant"
    """
    if rule == "constant":
        return float(alpha)
    if rule != "scaled":
        raise InputDomainError(f"unknown layer alpha rule {rule!r}")
    sizes = [len(S) for S in qualified]
    if not sizes:
        raise InputDomainError("layer_alpha: qualified node set is empty")
    return float(alpha) / max(sizes)


def _threshold_scan(stats: np.ndarray, sizes: np.ndarray, alpha_level: float,
                    alpha_floor: float) -> Tuple[float, bool]:
    """Exact infimum search; returns (c_hat, feasible)."""
    lower = std_normal_sf_inv(alpha_level)
    upper = std_normal_sf_inv(alpha_floor)
    total = int(sizes.sum())

    distinct, inverse = np.unique(stats, return_inverse=True)
    weight_at = np.bincount(inverse, weights=sizes, minlength=distinct.size).astype(np.int64)
    # count(c) on [a_j, b_j): total weight of statistics strictly above a_j
    counts = np.concatenate(([total], total - np.cumsum(weight_at)))
    left = np.concatenate(([-np.inf], distinct))
    right = np.concatenate((distinct, [np.inf]))

    required = std_normal_sf_inv(alpha_level * np.maximum(counts, 1) / total)
    candidate = np.maximum(np.maximum(left, lower), required)
    feasible = (candidate < right) & (candidate <= upper)
    hits = np.flatnonzero(feasible)
    if hits.size == 0:
        return float(upper), False
    return float(candidate[hits[0]]), True


def layer_threshold(node_stats, alpha_level: float, alpha_floor: float) -> float:
    """
    Node screening threshold c_hat.

    c_hat = inf{ c in [Phi_bar^-1(alpha_level), Phi_bar^-1(alpha_m)] :
                 sum|S| Phi_bar(c) / max(sum|S| 1{T_S > c}, 1) <= alpha_level }

    When no c in the range satisfies the inequality the upper bound
    Phi_bar^-1(alpha_m) is returned.

    Args:
        node_stats: Sequence of (T_S, |S|) pairs
        alpha_level (float): Layer-level alpha
        alpha_floor (float): alpha_m, with 0 < alpha_m < alpha_level < 1

    Raises:
        InputDomainError: On an empty node list or out-of-order alphas
    """
    pairs = list(node_stats)
    if not pairs:
        raise InputDomainError("layer_threshold: node list is empty")
    if not 0.0 < alpha_floor < alpha_level < 1.0:
        raise InputDomainError(
            f"layer_threshold: need 0 < alpha_m < alpha_level < 1, got alpha_m={alpha_floor}, "
            f"alpha_level={alpha_level}"
        )
    stats = np.array([p[0] for p in pairs], dtype=float)
    sizes = np.array([p[1] for p in pairs], dtype=np.int64)
    if not np.all(np.isfinite(stats)):
        raise InputDomainError("layer_threshold: node statistics must be finite")
    if np.any(sizes < 1):
        raise InputDomainError("layer_threshold: node sizes must be positive")
    c_hat, _ = _threshold_scan(stats, sizes, alpha_level, alpha_floor)
    return c_hat


def screening_stage(T: StatisticVector, tree: AggregationTree,
                    cfg: Dart2Config) -> ScreeningResult:
    """
    Run the screening loop over every layer of the tree.

    Layer 1 thresholds the individual statistics. On each later layer the
    hypotheses already screened are removed from every node, nodes keeping at
    least two non-empty children form B(l), their Stouffer statistics are
    thresholded, and nodes with T_S > c_hat(l) join R_node. A layer with no
    feasible threshold screens nothing.

    Returns:
        ScreeningResult: Full per-layer audit trail

    Raises:
        InputDomainError: If the tree and the statistics disagree on m
    """
    values = _values(T)
    m = values.size
    if tree.m != m:
        raise InputDomainError(f"tree covers {tree.m} hypotheses but {m} statistics were given")

    alpha_floor = Dart2Config.alpha_floor(m)
    screened = np.zeros(m, dtype=bool)
    states: List[LayerState] = []
    screened_nodes: List[ScreenedNode] = []

    def mark(level, node, members, statistic, threshold):
        if np.any(screened[list(members)]):
            raise InvariantViolation(f"layer {level} node {node} overlaps an earlier screened node")
        screened[list(members)] = True
        screened_nodes.append(ScreenedNode(level, node, tuple(members), float(statistic), threshold))

    for level in range(1, tree.num_layers + 1):
        with LogContext(f"Screening layer {level}", logger, level=logging.DEBUG):
            if level == 1:
                qualified = np.arange(m)
                members = tuple((i,) for i in range(m))
                stats = values.copy()
                sizes = np.ones(m, dtype=np.int64)
            else:
                alive = (~screened).astype(float)
                assign = tree.assignments(level)
                prev_assign = tree.assignments(level - 1)
                parent = tree.parents(level)
                n_nodes = len(tree.layer(level))

                child_alive = np.bincount(prev_assign, weights=alive, minlength=parent.size) > 0
                child_count = np.bincount(parent, weights=child_alive, minlength=n_nodes)
                qualified = np.flatnonzero(child_count >= 2)

                node_sizes = np.bincount(assign, weights=alive, minlength=n_nodes).astype(np.int64)
                node_sums = np.bincount(assign, weights=alive * values, minlength=n_nodes)
                sizes = node_sizes[qualified]
                stats = node_sums[qualified] / np.sqrt(sizes)
                members = tuple(tree.node_members(level, int(k), exclude=screened) for k in qualified)

            if qualified.size == 0:
                logger.debug(f"Layer {level}: no qualified nodes")
                states.append(LayerState(level, (), (), (), math.inf, math.nan, (), skipped=True))
                continue

            alpha_level = layer_alpha(cfg.alpha, members, cfg.layer_alpha_rule)
            if alpha_level <= alpha_floor:
                logger.warning(
                    f"Layer {level}: alpha level {alpha_level:.4g} does not exceed alpha_m "
                    f"{alpha_floor:.4g}; layer skipped"
                )
                states.append(LayerState(level, tuple(int(k) for k in qualified), members,
                                         tuple(float(s) for s in stats), math.inf, alpha_level,
                                         (), skipped=True))
                continue

            c_hat, feasible = _threshold_scan(stats, sizes, alpha_level, alpha_floor)
            if feasible:
                hit = np.flatnonzero(stats > c_hat)
            else:
                logger.debug(f"Layer {level}: no feasible threshold below {c_hat:.4f}; nothing screened")
                hit = np.array([], dtype=np.int64)
            for pos in hit:
                mark(level, int(qualified[pos]), members[pos], stats[pos], c_hat)

            states.append(LayerState(
                layer=level,
                nodes=tuple(int(k) for k in qualified),
                members=members,
                node_stats=tuple(float(s) for s in stats),
                threshold=c_hat,
                alpha_level=alpha_level,
                screened=tuple(int(qualified[pos]) for pos in hit),
                feasible=feasible,
            ))
            logger.debug(
                f"Layer {level}: |B|={qualified.size}, c_hat={c_hat:.4f}, screened {hit.size} nodes"
            )

    layer1 = frozenset(node.node for node in screened_nodes if node.layer == 1)
    logger.debug(
        f"Screening done: {len(screened_nodes)} nodes screened over {tree.num_layers} layers "
        f"({len(layer1)} at layer 1)"
    )
    return ScreeningResult(
        m=m,
        alpha_floor=alpha_floor,
        layers=tuple(states),
        screened_nodes=tuple(screened_nodes),
        layer1_rejections=layer1,
    )
