"""
Simulation Harness Module
=========================

Synthetic experiments for DART2: a 2-D spatial signal field eta, random
label switching at misleading level tau, the SE1 (Gaussian) and SE2
(linear-model Wald) statistic generators, and a seeded replication runner
comparing DART2 variants with Benjamini-Hochberg.

Seeding: repetition k of a run with master seed s draws its label swaps from
SeedSequence(s, spawn_key=(k, 0)) and its statistics from
SeedSequence(s, spawn_key=(k, 1)), so any repetition can be reproduced on
its own and every procedure, alpha and tau sees the same noise.

Author: DART2 Toolkit
Date: 2026-10-17
Version: 1.0.0
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from aggregation_tree import (
    AggregationTree,
    build_tree_from_distances,
    distances_from_locations,
    published_thresholds,
)
from baselines import bh_procedure_z
from core import Dart2Config, InputDomainError, InvariantViolation, StatisticVector
from logger_config import LogContext, log_function_call
from metrics import fdp, sensitivity
from refining import dart2


logger = logging.getLogger(__name__)

NUM_HYPOTHESES = 1000
TARGET_ALTERNATIVES = 216
LOCATION_SEED = 20240
LOCATION_SIDE = 5.0
MAX_CALIBRATION_TRIES = 100000

# Hypotheses 156 and 800 (1-based) anchor the two alternative clusters
DEFAULT_CENTERS = (155, 799)
PHI2_VARIANCE = 0.1

COEFFICIENTS: Dict[str, Tuple[float, float, float, float]] = {
    "main": (3.4, 0.6, 3.0, 0.1),
    "appendix": (5.1, 0.9, 4.5, 0.1),
}

SETTINGS = ("se1", "se2")

OLS_RESIDUAL_TOLERANCE = 1e-10


@dataclass(frozen=True)
class SignalField:
    """
    Hypothesis locations and signal strengths.

    Attributes:
        locations (np.ndarray): m x 2 coordinates
        eta (np.ndarray): Nonnegative signal strength; eta_i = 0 marks a null
    """
    locations: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        eta = np.array(self.eta, dtype=float)
        locations = np.array(self.locations, dtype=float)
        if np.any(eta < 0) or not np.all(np.isfinite(eta)):
            raise InputDomainError("eta must be finite and nonnegative")
        if locations.shape[0] != eta.size:
            raise InputDomainError(f"{locations.shape[0]} locations for {eta.size} signal strengths")
        eta.setflags(write=False)
        locations.setflags(write=False)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "locations", locations)

    @property
    def m(self) -> int:
        return int(self.eta.size)

    @property
    def alternatives(self) -> np.ndarray:
        return np.flatnonzero(self.eta > 0)

    @property
    def nulls(self) -> np.ndarray:
        return np.flatnonzero(self.eta == 0)


@dataclass(frozen=True)
class SimScenario:
    """One simulation cell: field, misleading level, generator and replication plan."""
    field: SignalField
    tau: float
    setting: str = "se1"
    n: int = 300
    alphas: Tuple[float, ...] = (0.05,)
    reps: int = 200
    seed: int = 2024

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise InputDomainError(f"tau must lie in [0, 1], got {self.tau}")
        if self.setting not in SETTINGS:
            raise InputDomainError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if self.n < 1 or (self.setting == "se2" and self.n < 4):
            raise InputDomainError(f"sample size {self.n} too small for {self.setting}")
        if self.reps < 1:
            raise InputDomainError(f"reps must be positive, got {self.reps}")
        if not self.alphas or any(not 0.0 < a < 1.0 for a in self.alphas):
            raise InputDomainError(f"alphas must lie in (0, 1), got {self.alphas}")


@dataclass(frozen=True)
class ProcedureSpec:
    """A procedure arm: DART2 with a given depth and mode, or BH."""
    kind: str = "dart2"
    layers: int = 7
    mode: str = "robust"
    layer_alpha_rule: str = "scaled"

    def __post_init__(self):
        if self.kind not in ("dart2", "bh"):
            raise InputDomainError(f"unknown procedure kind {self.kind!r}")
        if self.kind == "dart2":
            Dart2Config(mode=self.mode, layer_alpha_rule=self.layer_alpha_rule)
            if self.layers < 1:
                raise InputDomainError(f"layers must be positive, got {self.layers}")

    @property
    def name(self) -> str:
        if self.kind == "bh":
            return "bh"
        suffix = "" if self.layer_alpha_rule == "scaled" else f"_{self.layer_alpha_rule}"
        return f"dart2_L{self.layers}_{self.mode}{suffix}"


def eta_field(locations, coeffs: Sequence[float] = COEFFICIENTS["main"],
              centers: Tuple[int, int] = DEFAULT_CENTERS,
              phi2_variance: float = PHI2_VARIANCE) -> SignalField:
    """
    Signal field eta_i = {[a1 phi1(d1_i) - b1] v 0 + a2 phi2(d2_i) - b2} v 0.

    phi1 is the N(0, 1) density, phi2 the N(0, phi2_variance) density, and
    d1_i, d2_i are Euclidean distances from location i to the two center
    hypotheses.

    Args:
        locations: m x 2 coordinates
        coeffs: (a1, b1, a2, b2)
        centers: 0-based indices of the two center hypotheses

    Raises:
        InputDomainError: If a center index is out of range
    """
    loc = np.asarray(locations, dtype=float)
    m = loc.shape[0]
    for c in centers:
        if not 0 <= c < m:
            raise InputDomainError(f"center index {c} out of range for {m} locations")
    a1, b1, a2, b2 = (float(x) for x in coeffs)
    d1 = np.linalg.norm(loc - loc[centers[0]], axis=1)
    d2 = np.linalg.norm(loc - loc[centers[1]], axis=1)
    first = np.maximum(a1 * stats.norm.pdf(d1) - b1, 0.0)
    second = a2 * stats.norm.pdf(d2, scale=math.sqrt(phi2_variance)) - b2
    return SignalField(locations=loc, eta=np.maximum(first + second, 0.0))


@lru_cache(maxsize=4)
def calibrated_locations(target: int = TARGET_ALTERNATIVES, m: int = NUM_HYPOTHESES,
                         side: float = LOCATION_SIDE) -> Tuple[np.ndarray, int]:
    """
    Frozen simulation locations with exactly `target` alternatives.

    Draws m points uniformly on [0, side]^2 from seeds LOCATION_SEED,
    LOCATION_SEED + 1, ... and keeps the first draw whose main-coefficient
    field has `target` alternatives. The search is deterministic.

    Returns:
        Tuple[np.ndarray, int]: (read-only m x 2 locations, seed used)
    """
    with LogContext(f"Calibrating locations for {target} alternatives", logger):
        for k in range(MAX_CALIBRATION_TRIES):
            seed = LOCATION_SEED + k
            loc = np.random.default_rng(seed).uniform(0.0, side, size=(m, 2))
            count = eta_field(loc).alternatives.size
            if count == target:
                logger.info(f"Location seed {seed} gives {count} alternatives")
                loc.setflags(write=False)
                return loc, seed
    raise InvariantViolation(f"no location seed in {MAX_CALIBRATION_TRIES} tries gives {target} alternatives")


def default_field(coeffs: str = "main", locations=None) -> SignalField:
    """The simulation field on the calibrated locations, or on `locations` when given."""
    if coeffs not in COEFFICIENTS:
        raise InputDomainError(f"coeffs must be one of {tuple(COEFFICIENTS)}, got {coeffs!r}")
    if locations is None:
        locations, _ = calibrated_locations()
    else:
        locations = np.asarray(locations, dtype=float)
        if locations.ndim != 2 or locations.shape[1] != 2:
            raise InputDomainError(f"locations must be an m x 2 array, got shape {locations.shape}")
    return eta_field(locations, COEFFICIENTS[coeffs])


def apply_misleading(field: SignalField, tau: float, seed) -> SignalField:
    """
    Switch ceil(tau * m1) uniformly chosen alternatives with as many nulls.

    The eta values (hence labels) are exchanged; locations never move, so the
    distance information becomes misleading. The number of alternatives is
    unchanged.

    Raises:
        InputDomainError: If tau is outside [0, 1] or there are too few nulls
    """
    if not 0.0 <= tau <= 1.0:
        raise InputDomainError(f"tau must lie in [0, 1], got {tau}")
    alternatives = field.alternatives
    nulls = field.nulls
    count = math.ceil(round(tau * alternatives.size, 9))
    if count == 0:
        return field
    if count > nulls.size:
        raise InputDomainError(f"cannot switch {count} alternatives with only {nulls.size} nulls")

    rng = np.random.default_rng(seed)
    chosen_alt = rng.choice(alternatives, size=count, replace=False)
    chosen_null = rng.choice(nulls, size=count, replace=False)
    eta = field.eta.copy()
    eta[chosen_alt], eta[chosen_null] = field.eta[chosen_null], field.eta[chosen_alt]
    return SignalField(locations=field.locations, eta=eta)


def gen_se1(field: SignalField, n: int, seed) -> StatisticVector:
    """SE1: T_i ~ N(sqrt(n) * eta_i / 5, 1), independent."""
    if n < 1:
        raise InputDomainError(f"sample size must be positive, got {n}")
    rng = np.random.default_rng(seed)
    return StatisticVector(math.sqrt(n) * field.eta / 5.0 + rng.standard_normal(field.m))


def ols_fit(X, y) -> Tuple[np.ndarray, np.ndarray]:
    """
    Ordinary least squares through a QR factorization.

    Works on a single design (X: n x p, y: n) or a stack of designs
    (X: B x n x p, y: B x n).

    Returns:
        Tuple[np.ndarray, np.ndarray]: Coefficients and their standard errors

    Raises:
        InputDomainError: On mismatched shapes or too few observations
        InvariantViolation: If the normal-equations residual exceeds 1e-10 (relative)
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape[-2], X.shape[-1]
    if y.shape != X.shape[:-1]:
        raise InputDomainError(f"design shape {X.shape} does not match response shape {y.shape}")
    if n <= p:
        raise InputDomainError(f"need more observations ({n}) than coefficients ({p})")

    Q, R = np.linalg.qr(X)
    qty = np.einsum("...np,...n->...p", Q, y)
    coef = np.linalg.solve(R, qty[..., None])[..., 0]
    resid = y - np.einsum("...np,...p->...n", X, coef)

    normal = np.abs(np.einsum("...np,...n->...p", X, resid))
    scale = np.abs(X).sum(axis=-2) * np.abs(y).max(axis=-1, keepdims=True) + 1.0
    if np.any(normal > OLS_RESIDUAL_TOLERANCE * scale):
        raise InvariantViolation("least-squares normal equations not satisfied to tolerance")

    sigma2 = np.asarray(np.einsum("...n,...n->...", resid, resid) / (n - p))
    r_inv = np.linalg.inv(R)
    var = np.einsum("...ij,...ij->...i", r_inv, r_inv) * sigma2[..., None]
    return coef, np.sqrt(var)


def gen_se2(field: SignalField, n: int, seed) -> StatisticVector:
    """
    SE2: Wald statistics of theta_1 in Y = theta_0 + theta_1 W1 + theta_2 W2 + eps.

    W1 ~ Bernoulli(0.5), W2 ~ Uniform(0.1, 0.5), eps ~ N(0, 1),
    theta_0 = theta_2 = 0.1 and theta_1 = eta_i / 3, with n rows per
    hypothesis.

    Raises:
        InputDomainError: If n < 4, or a design stays singular after one redraw
    """
    if n < 4:
        raise InputDomainError(f"SE2 needs at least 4 observations per hypothesis, got {n}")
    rng = np.random.default_rng(seed)
    m = field.m
    w1 = rng.binomial(1, 0.5, size=(m, n)).astype(float)
    w2 = rng.uniform(0.1, 0.5, size=(m, n))
    eps = rng.standard_normal((m, n))

    singular = np.flatnonzero(w1.min(axis=1) == w1.max(axis=1))
    if singular.size:
        logger.warning(f"Redrawing W1 for {singular.size} singular designs")
        w1[singular] = rng.binomial(1, 0.5, size=(singular.size, n))
        if np.any(w1[singular].min(axis=1) == w1[singular].max(axis=1)):
            raise InputDomainError("SE2 design still singular after redrawing W1")

    theta1 = field.eta / 3.0
    y = 0.1 + theta1[:, None] * w1 + 0.1 * w2 + eps
    X = np.stack([np.ones_like(w1), w1, w2], axis=-1)
    coef, se = ols_fit(X, y)
    return StatisticVector(coef[:, 1] / se[:, 1])


GENERATORS = {"se1": gen_se1, "se2": gen_se2}


def simulation_tree(field: SignalField, num_layers: int, max_children: int = 2,
                    thresholds: Optional[Sequence[float]] = None) -> AggregationTree:
    """Aggregation tree over the field's locations (published thresholds by default)."""
    if thresholds is None:
        thresholds = published_thresholds(num_layers)
    d = distances_from_locations(field.locations)
    return build_tree_from_distances(d, max_children, num_layers, thresholds)


def replication_seeds(master_seed: int, rep: int) -> Tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """(label-switch seed, statistics seed) of repetition `rep`."""
    return (np.random.SeedSequence(master_seed, spawn_key=(rep, 0)),
            np.random.SeedSequence(master_seed, spawn_key=(rep, 1)))


@log_function_call
def run_replications(scenario: SimScenario, procedures: Sequence[ProcedureSpec],
                     tree: Optional[AggregationTree] = None, threads: int = 1) -> pd.DataFrame:
    """
    Run every procedure on `scenario.reps` seeded repetitions.

    Each repetition switches labels at level tau, draws statistics, and
    applies every (procedure, alpha) pair. The tree depends on the locations
    only, so it is built once and truncated per DART2 depth.

    Args:
        scenario (SimScenario): Field, tau, generator and replication plan
        procedures (Sequence[ProcedureSpec]): Arms to compare
        tree (AggregationTree, optional): Prebuilt tree at least as deep as every arm
        threads (int): Worker threads; results do not depend on it

    Returns:
        pd.DataFrame: rep, procedure, alpha, tau, fdp, sensitivity, rejections;
            ordered by repetition, then procedure and alpha as given
    """
    if not procedures:
        raise InputDomainError("at least one procedure is required")
    depth = max((p.layers for p in procedures if p.kind == "dart2"), default=1)
    if tree is None:
        tree = simulation_tree(scenario.field, depth)
    elif tree.num_layers < depth:
        raise InputDomainError(f"tree has {tree.num_layers} layers, procedures need {depth}")
    if tree.m != scenario.field.m:
        raise InputDomainError(f"tree covers {tree.m} hypotheses, field has {scenario.field.m}")

    trees = {p.layers: tree.truncate(p.layers) for p in procedures if p.kind == "dart2"}
    generator = GENERATORS[scenario.setting]

    def run_one(rep: int) -> List[dict]:
        swap_seed, stat_seed = replication_seeds(scenario.seed, rep)
        field = apply_misleading(scenario.field, scenario.tau, swap_seed)
        T = generator(field, scenario.n, stat_seed)
        omega0, omega1 = field.nulls, field.alternatives
        rows = []
        for proc in procedures:
            for alpha in scenario.alphas:
                if proc.kind == "bh":
                    rejected = bh_procedure_z(T, alpha)
                else:
                    cfg = Dart2Config(alpha=alpha, mode=proc.mode, layer_alpha_rule=proc.layer_alpha_rule)
                    rejected = dart2(T, trees[proc.layers], cfg).rejected
                rows.append({
                    "rep": rep,
                    "procedure": proc.name,
                    "alpha": alpha,
                    "tau": scenario.tau,
                    "fdp": fdp(rejected, omega0),
                    "sensitivity": sensitivity(rejected, omega1),
                    "rejections": len(rejected),
                })
        return rows

    with LogContext(
        f"{scenario.reps} repetitions of {scenario.setting.upper()} at tau={scenario.tau} "
        f"({len(procedures)} procedures, {threads} threads)", logger
    ):
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                chunks = list(pool.map(run_one, range(scenario.reps)))
        else:
            chunks = [run_one(rep) for rep in range(scenario.reps)]

    return pd.DataFrame([row for chunk in chunks for row in chunk],
                        columns=["rep", "procedure", "alpha", "tau", "fdp", "sensitivity", "rejections"])
