"""
Baseline Procedures Module
==========================

The Benjamini-Hochberg step-up procedure used as the reference method in
every comparison.

Author: DART2 Toolkit
Date: 2026-10-17
Version: 1.0.0
"""

import logging

import numpy as np

from core import InputDomainError, PValueVector, z_to_pvalue


logger = logging.getLogger(__name__)


def bh_procedure(p: PValueVector, alpha: float) -> frozenset:
    """
    Benjamini-Hochberg step-up procedure.

    Rejects the k* smallest p-values, k* = max{k : p_(k) <= k * alpha / m}.
    The rule depends only on the values, so every p-value tied with p_(k*)
    is rejected as well.

    Args:
        p (PValueVector): P-values strictly inside (0, 1)
        alpha (float): FDR level in (0, 1)

    Returns:
        frozenset: Rejected hypothesis indices (0-based)

    Raises:
        InputDomainError: If alpha or the p-values are invalid
    """
    if not 0.0 < alpha < 1.0:
        raise InputDomainError(f"alpha must lie in the open interval (0, 1), got {alpha}")
    if not isinstance(p, PValueVector):
        p = PValueVector(p)

    values = p.values
    m = values.size
    order = np.argsort(values, kind="stable")
    critical = alpha * np.arange(1, m + 1) / m
    passing = np.flatnonzero(values[order] <= critical)
    if passing.size == 0:
        return frozenset()
    cutoff = values[order[passing[-1]]]
    rejected = frozenset(int(i) for i in np.flatnonzero(values <= cutoff))
    logger.debug(f"BH at alpha={alpha}: {len(rejected)} of {m} rejected")
    return rejected


def bh_procedure_z(T, alpha: float) -> frozenset:
    """BH on one-sided p-values Phi_bar(T_i), clipped to the open unit interval."""
    values = T.values if hasattr(T, "values") else T
    return bh_procedure(PValueVector(z_to_pvalue(values)), alpha)
