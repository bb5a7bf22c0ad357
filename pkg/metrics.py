"""
Evaluation Metrics Module
=========================

False discovery proportion, sensitivity, precision / F1 against a benchmark
list, and the mean plus 5% / 95% quantile summaries used for reporting.

Quantiles use the linear-interpolation definition (type 7, numpy's
default "linear" method): q(p) interpolates between the order statistics at
positions floor(h) and ceil(h) with h = (n - 1) p.

Author: DART2 Toolkit
Date: 2026-10-17
Version: 1.0.0
"""

from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np
import pandas as pd

from core import InputDomainError


@dataclass(frozen=True)
class MetricSummary:
    """Mean, 5% and 95% quantiles and count of a metric over repetitions."""
    mean: float
    q05: float
    q95: float
    count: int


def fdp(rejected: Iterable[int], omega0: Iterable[int]) -> float:
    """|R n Omega_0| / max(|R|, 1); 0 when nothing is rejected."""
    R = set(rejected)
    return len(R & set(omega0)) / max(len(R), 1)


def sensitivity(rejected: Iterable[int], omega1: Iterable[int]) -> float:
    """
    |R n Omega_1| / |Omega_1|.

    Raises:
        InputDomainError: If Omega_1 is empty
    """
    alternatives = set(omega1)
    if not alternatives:
        raise InputDomainError("sensitivity: the alternative set is empty")
    return len(set(rejected) & alternatives) / len(alternatives)


def precision_f1(rejected: Iterable[int], benchmark: Iterable[int]) -> Tuple[float, float, float]:
    """
    Precision, sensitivity and F1 of a rejection set against a benchmark list.

    Precision is 0 when nothing is rejected; F1 is the harmonic mean of
    precision and sensitivity, 0 when both are 0.

    Raises:
        InputDomainError: If the benchmark is empty
    """
    R = set(rejected)
    bench = set(benchmark)
    if not bench:
        raise InputDomainError("precision_f1: the benchmark set is empty")
    hits = len(R & bench)
    precision = hits / len(R) if R else 0.0
    recall = hits / len(bench)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def summarize(values: Iterable[float]) -> MetricSummary:
    """
    Mean and type-7 5% / 95% quantiles.

    Raises:
        InputDomainError: If values is empty
    """
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise InputDomainError("summarize: no values")
    q05, q95 = np.quantile(arr, [0.05, 0.95], method="linear")
    return MetricSummary(mean=float(arr.mean()), q05=float(q05), q95=float(q95), count=int(arr.size))


def summarize_table(results: pd.DataFrame) -> pd.DataFrame:
    """
    Summary rows per (procedure, alpha, tau) for FDP and sensitivity.

    Args:
        results (pd.DataFrame): Long table with procedure, alpha, tau, fdp, sensitivity

    Returns:
        pd.DataFrame: One row per group with mean / q05 / q95 per metric and the count
    """
    rows = []
    for (procedure, alpha, tau), group in results.groupby(["procedure", "alpha", "tau"], sort=True):
        row = {"procedure": procedure, "alpha": alpha, "tau": tau}
        for metric in ("fdp", "sensitivity"):
            summary = summarize(group[metric])
            row[f"{metric}_mean"] = summary.mean
            row[f"{metric}_q05"] = summary.q05
            row[f"{metric}_q95"] = summary.q95
        row["count"] = int(len(group))
        rows.append(row)
    return pd.DataFrame(rows)
