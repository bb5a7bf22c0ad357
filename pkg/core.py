"""
DART2 Core Types Module
=======================

Domain types shared by every stage of the DART2 procedure, the standard
normal utilities and the p-value to z-statistic transform.

The survival function and its inverse are the Cephes rational
approximations exposed by scipy.special (ndtr / ndtri). Both are documented
to a relative error of roughly 1e-16 / 1e-15 over the double range; no table
lookups are involved.

Author: DART2 Toolkit
Date: 2026-10-17
Version: 1.0.0
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import special


logger = logging.getLogger(__name__)

MODES = ("naive", "robust")
LAYER_ALPHA_RULES = ("constant", "scaled")


class InputDomainError(ValueError):
    """Raised when an input violates a documented precondition."""


class InvariantViolation(RuntimeError):
    """Raised when an internal invariant does not hold."""


def _as_float_array(values, name: str) -> np.ndarray:
    try:
        arr = np.array(values, dtype=float).reshape(-1)
    except (TypeError, ValueError) as e:
        raise InputDomainError(f"{name}: values must be real numbers ({e})")
    return arr


@dataclass(frozen=True)
class StatisticVector:
    """
    Per-hypothesis z-scale test statistics T_1..T_m.

    Attributes:
        values (np.ndarray): Read-only float array of length m >= 1, all finite
    """
    values: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.values, "StatisticVector")
        if arr.size < 1:
            raise InputDomainError("StatisticVector: at least one statistic is required")
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise InputDomainError(
                f"StatisticVector: non-finite statistic at index {int(bad[0])} ({arr[bad[0]]})"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def m(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.m

    @classmethod
    def from_pvalues(cls, p) -> "StatisticVector":
        return pvalue_to_z(p if isinstance(p, PValueVector) else PValueVector(p))


@dataclass(frozen=True)
class PValueVector:
    """Per-hypothesis p-values, every entry strictly inside (0, 1)."""
    values: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.values, "PValueVector")
        if arr.size < 1:
            raise InputDomainError("PValueVector: at least one p-value is required")
        # NaN fails both comparisons and is caught here too
        bad = np.flatnonzero(~((arr > 0.0) & (arr < 1.0)))
        if bad.size:
            raise InputDomainError(
                f"PValueVector: p-value at index {int(bad[0])} is {arr[bad[0]]}, "
                "expected strictly inside (0, 1); pre-clip boundary values"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def m(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.m


@dataclass(frozen=True)
class Dart2Config:
    """
    Tuning of one DART2 run.

    Attributes:
        alpha (float): Target FDR level in (0, 1)
        mode (str): Refining mode, "naive" or "robust"
        layer_alpha_rule (str): "scaled" (alpha / largest qualified node) or "constant"
    """
    alpha: float = 0.05
    mode: str = "robust"
    layer_alpha_rule: str = "scaled"

    def __post_init__(self):
        if not (isinstance(self.alpha, (int, float)) and 0.0 < float(self.alpha) < 1.0):
            raise InputDomainError(f"alpha must lie in the open interval (0, 1), got {self.alpha}")
        if self.mode not in MODES:
            raise InputDomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.layer_alpha_rule not in LAYER_ALPHA_RULES:
            raise InputDomainError(
                f"layer_alpha_rule must be one of {LAYER_ALPHA_RULES}, got {self.layer_alpha_rule!r}"
            )
        object.__setattr__(self, "alpha", float(self.alpha))

    @staticmethod
    def alpha_floor(m: int) -> float:
        """alpha_m = (m ln m)^-1; 1.0 for m < 2 where the formula is undefined."""
        if m < 2:
            return 1.0
        return 1.0 / (m * math.log(m))


@dataclass(frozen=True)
class RefineRecord:
    """
    Refining outcome for one screened node.

    Attributes:
        layer (int): Layer the node was screened at (1-based)
        node (int): Node index within that layer (0-based)
        members (Tuple[int, ...]): Surviving hypothesis indices (0-based)
        screening_threshold (float): c_hat of the originating layer
        t_star (float): Naive threshold c_hat / sqrt(|S|)
        t_floor (float): max(t_star, isf(alpha)) (robust component 1)
        t_max (float): Largest member statistic (robust component 2)
        threshold (float): Threshold applied in the run's mode
        rejected (Tuple[int, ...]): Members with T_i >= threshold
    """
    layer: int
    node: int
    members: Tuple[int, ...]
    screening_threshold: float
    t_star: float
    t_floor: float
    t_max: float
    threshold: float
    rejected: Tuple[int, ...]

    @property
    def robust_threshold(self) -> float:
        return min(self.t_floor, self.t_max)


@dataclass(frozen=True)
class LayerSummary:
    """Per-layer audit line of a rejection report."""
    layer: int
    threshold: float
    alpha_level: float
    qualified_nodes: int
    screened_nodes: Tuple[int, ...]
    skipped: bool = False
    feasible: bool = True


@dataclass(frozen=True)
class RejectionReport:
    """
    Final rejection set with per-hypothesis provenance.

    Attributes:
        rejected (frozenset): Rejected hypothesis indices (0-based)
        per_layer (Tuple[LayerSummary, ...]): Threshold, |B|, screened nodes per layer
        records (Tuple[RefineRecord, ...]): One record per screened node
        mode (str): Refining mode used
        m (int): Number of hypotheses
    """
    rejected: frozenset
    per_layer: Tuple[LayerSummary, ...]
    records: Tuple[RefineRecord, ...]
    mode: str
    m: int
    _provenance: Dict[int, Tuple[int, int, float]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        provenance = {}
        for record in self.records:
            for i in record.rejected:
                if i in provenance:
                    raise InvariantViolation(f"hypothesis {i} rejected by two screened nodes")
                provenance[i] = (record.layer, record.node, record.threshold)
        if set(provenance) != set(self.rejected):
            raise InvariantViolation("rejection set differs from the union of node rejections")
        object.__setattr__(self, "_provenance", provenance)

    def provenance(self, i: int) -> Optional[Tuple[int, int, float]]:
        """(layer, node index, threshold) that rejected hypothesis i, or None."""
        return self._provenance.get(i)

    def sorted_rejections(self) -> List[int]:
        return sorted(self.rejected)

    def to_frame(self) -> pd.DataFrame:
        """Rejections table with 1-based ids: hypothesis_id, rejected_at_layer, node_id, threshold."""
        rows = []
        for i in self.sorted_rejections():
            layer, node, threshold = self._provenance[i]
            rows.append({
                "hypothesis_id": i + 1,
                "rejected_at_layer": layer,
                "node_id": node + 1,
                "threshold": threshold,
            })
        return pd.DataFrame(rows, columns=["hypothesis_id", "rejected_at_layer", "node_id", "threshold"])

    def layers_frame(self) -> pd.DataFrame:
        """Per-layer report: threshold, alpha level, |B|, screened node ids."""
        rows = []
        for summary in self.per_layer:
            rows.append({
                "layer": summary.layer,
                "threshold": summary.threshold,
                "alpha_level": summary.alpha_level,
                "qualified_nodes": summary.qualified_nodes,
                "screened_nodes": len(summary.screened_nodes),
                "screened_node_ids": " ".join(str(n + 1) for n in summary.screened_nodes),
                "skipped": summary.skipped,
                "feasible": summary.feasible,
                "rejections": sum(len(r.rejected) for r in self.records if r.layer == summary.layer),
            })
        return pd.DataFrame(rows)


def std_normal_sf(c):
    """
    Standard normal survival function, Phi_bar(c) = 1 - Phi(c).

    Evaluated as ndtr(-c) so the upper tail keeps full relative precision.
    Accepts scalars or arrays.

    Raises:
        InputDomainError: If any argument is NaN or infinite
    """
    arr = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputDomainError(f"std_normal_sf: argument must be finite, got {c}")
    out = special.ndtr(-arr)
    return float(out) if out.ndim == 0 else out


def std_normal_sf_inv(q):
    """
    Inverse survival function, Phi_bar^-1(q) = -Phi^-1(q).

    Raises:
        InputDomainError: If any q lies outside the open interval (0, 1)
    """
    arr = np.asarray(q, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise InputDomainError(f"std_normal_sf_inv: q must lie in (0, 1), got {q}")
    out = -special.ndtri(arr)
    return float(out) if out.ndim == 0 else out


def pvalue_to_z(p: PValueVector) -> StatisticVector:
    """
    Transform p-values to z-scale statistics, T_i = Phi^-1(1 - p_i).

    Computed as Phi_bar^-1(p_i), which is the same quantity without forming
    1 - p_i, so small p-values keep their precision. Order is preserved.

    Args:
        p (PValueVector): P-values strictly inside (0, 1)

    Returns:
        StatisticVector: The corresponding z statistics

    Raises:
        InputDomainError: If p is not a valid PValueVector
    """
    if not isinstance(p, PValueVector):
        p = PValueVector(p)
    return StatisticVector(-special.ndtri(p.values))


def z_to_pvalue(T: Sequence[float]) -> np.ndarray:
    """
    One-sided p-values Phi_bar(T_i), clipped into the open unit interval.

    Statistics far in either tail would otherwise produce exact 0 or 1,
    which PValueVector rejects.
    """
    p = special.ndtr(-np.asarray(T, dtype=float))
    return np.clip(p, np.finfo(float).tiny, np.nextafter(1.0, 0.0))
