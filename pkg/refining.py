"""
Refining Stage Module
=====================

Stage 2 of DART2: per-hypothesis thresholds inside every screened-out node,
and the end-to-end dart2() composition.

Screening compares with a strict inequality (T_S > c_hat) while refining
keeps members with T_i >= t_S; the robust threshold's second component is
the node maximum, which relies on the non-strict comparison.

Author: DART2 Toolkit
Date: 2026-10-17
Version: 1.0.0
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from aggregation_tree import AggregationTree
from core import (
    Dart2Config,
    InputDomainError,
    InvariantViolation,
    LayerSummary,
    RefineRecord,
    RejectionReport,
    StatisticVector,
    std_normal_sf_inv,
)
from logger_config import log_function_call
from screening import ScreeningResult, screening_stage


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RobustThreshold:
    """Components of the robust refining threshold t_S = min(t_floor, t_max)."""
    t_star: float
    t_floor: float
    t_max: float

    @property
    def threshold(self) -> float:
        return min(self.t_floor, self.t_max)


def naive_threshold(c_hat: float, node_size: int) -> float:
    """Naive refining threshold t*_S = c_hat / sqrt(|S|)."""
    if node_size < 1:
        raise InputDomainError(f"node size must be positive, got {node_size}")
    return float(c_hat) / math.sqrt(node_size)


def robust_threshold(t_star: float, alpha: float, member_stats: Sequence[float]) -> RobustThreshold:
    """
    Robust refining threshold.

    t_S,1 = max(t*_S, Phi_bar^-1(alpha)) floors the naive threshold, and
    t_S,2 = max_i T_i caps it so at least one member is rejected.

    Raises:
        InputDomainError: If member_stats is empty or alpha is outside (0, 1)
    """
    stats = np.asarray(member_stats, dtype=float).reshape(-1)
    if stats.size == 0:
        raise InputDomainError("robust_threshold: member statistics must not be empty")
    if not 0.0 < alpha < 1.0:
        raise InputDomainError(f"robust_threshold: alpha must lie in (0, 1), got {alpha}")
    floor = std_normal_sf_inv(alpha)
    return RobustThreshold(
        t_star=float(t_star),
        t_floor=max(float(t_star), floor),
        t_max=float(stats.max()),
    )


def refining_stage(screen: ScreeningResult, T: StatisticVector, cfg: Dart2Config) -> RejectionReport:
    """
    Refine every screened node and assemble the final rejection set.

    Layer-1 singletons go through the same code path; their threshold never
    exceeds their own statistic, so they are always kept.

    Returns:
        RejectionReport: Rejections with per-node provenance

    Raises:
        InputDomainError: If the screening result was built for another m
        InvariantViolation: If a layer-1 rejection is lost during refining
    """
    values = T.values if isinstance(T, StatisticVector) else StatisticVector(T).values
    if screen.m != values.size:
        raise InputDomainError(
            f"screening result covers {screen.m} hypotheses but {values.size} statistics were given"
        )

    records: List[RefineRecord] = []
    for node in sorted(screen.screened_nodes, key=lambda n: (n.layer, n.node)):
        members = np.array(node.members, dtype=np.int64)
        member_stats = values[members]
        t_star = naive_threshold(node.threshold, members.size)
        robust = robust_threshold(t_star, cfg.alpha, member_stats)
        threshold = robust.threshold if cfg.mode == "robust" else t_star
        rejected = tuple(int(i) for i in members[member_stats >= threshold])

        if cfg.mode == "robust" and not rejected:
            raise InvariantViolation(f"robust refining rejected nothing in layer {node.layer} node {node.node}")

        records.append(RefineRecord(
            layer=node.layer,
            node=node.node,
            members=node.members,
            screening_threshold=node.threshold,
            t_star=t_star,
            t_floor=robust.t_floor,
            t_max=robust.t_max,
            threshold=threshold,
            rejected=rejected,
        ))

    rejected = frozenset(i for record in records for i in record.rejected)
    if not screen.layer1_rejections <= rejected:
        raise InvariantViolation("refining dropped a layer-1 rejection")

    per_layer = tuple(
        LayerSummary(
            layer=state.layer,
            threshold=state.threshold,
            alpha_level=state.alpha_level,
            qualified_nodes=len(state.nodes),
            screened_nodes=state.screened,
            skipped=state.skipped,
            feasible=state.feasible,
        )
        for state in screen.layers
    )
    logger.debug(f"Refining ({cfg.mode}) kept {len(rejected)} rejections from {len(records)} screened nodes")
    return RejectionReport(
        rejected=rejected,
        per_layer=per_layer,
        records=tuple(records),
        mode=cfg.mode,
        m=screen.m,
    )


@log_function_call
def dart2(T: StatisticVector, tree: AggregationTree, cfg: Dart2Config) -> RejectionReport:
    """
    The DART2 procedure: screening over the aggregation tree, then refining.

    Args:
        T (StatisticVector): z-scale statistics
        tree (AggregationTree): Tree over the same m hypotheses
        cfg (Dart2Config): alpha, refining mode and layer alpha rule

    Returns:
        RejectionReport: Deterministic function of the inputs
    """
    if not isinstance(T, StatisticVector):
        T = StatisticVector(T)
    screen = screening_stage(T, tree, cfg)
    return refining_stage(screen, T, cfg)
