"""
Aggregation Tree Module
=======================

Builds, validates and truncates the layered aggregation tree that carries the
ancillary information for DART2. Layer 1 holds the m singleton nodes; every
node on layer l >= 2 groups between 1 and M nodes of layer l-1. Nodes with a
single child are pass-through parents, so every hypothesis reaches every
layer.

Trees come from a distance matrix (greedy average-linkage merging under a
per-layer distance threshold) or from a 1-D ordering of the hypotheses
(consecutive rank blocks).

Author: DART2 Toolkit
Date: 2026-10-17
Version: 1.0.0
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import pdist, squareform

from core import InputDomainError
from logger_config import LogContext, log_function_call


logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-12

# Distance thresholds g(2)..g(13) used for the published simulation tree
PUBLISHED_THRESHOLDS = (1.33, 1.56, 1.90, 2.10, 2.60, 3.93, 4.13, 4.96, 5.40, 6.96, 9.58, 12.12)


@dataclass(frozen=True)
class TreeNode:
    """
    One node of the aggregation tree.

    Attributes:
        members (Tuple[int, ...]): Sorted hypothesis indices (0-based)
        children (Tuple[int, ...]): Indices into the previous layer; empty on layer 1
    """
    members: Tuple[int, ...]
    children: Tuple[int, ...] = ()

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class AggregationTree:
    """
    Layered node structure A(1)..A(L).

    The constructor does not validate; use validate_tree() or the builders,
    which always return valid trees.
    """
    m: int
    max_children: int
    layers: Tuple[Tuple[TreeNode, ...], ...]

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def layer(self, level: int) -> Tuple[TreeNode, ...]:
        """Nodes of layer `level` (1-based, as in the algorithm)."""
        return self.layers[level - 1]

    def node_members(self, level: int, node: int, exclude=None) -> Tuple[int, ...]:
        """
        Hypotheses of one node.

        Args:
            level (int): Layer (1-based)
            node (int): Node index on that layer
            exclude: Optional boolean mask over the m hypotheses; flagged
                members are left out

        Raises:
            InputDomainError: On an unknown layer or node
        """
        if not 1 <= level <= self.num_layers:
            raise InputDomainError(f"layer {level} outside 1..{self.num_layers}")
        nodes = self.layer(level)
        if not 0 <= node < len(nodes):
            raise InputDomainError(f"layer {level} has no node {node}")
        members = nodes[node].members
        if exclude is None:
            return members
        return tuple(i for i in members if not exclude[i])

    def assignments(self, level: int) -> np.ndarray:
        """Array mapping each hypothesis to its node index on `level`."""
        assign = np.full(self.m, -1, dtype=np.int64)
        for k, node in enumerate(self.layer(level)):
            assign[list(node.members)] = k
        return assign

    def parents(self, level: int) -> np.ndarray:
        """Array mapping each node of layer `level - 1` to its parent on `level`."""
        parent = np.full(len(self.layer(level - 1)), -1, dtype=np.int64)
        for k, node in enumerate(self.layer(level)):
            parent[list(node.children)] = k
        return parent

    def truncate(self, num_layers: int) -> "AggregationTree":
        """Tree made of the first `num_layers` layers."""
        if not 1 <= num_layers <= self.num_layers:
            raise InputDomainError(
                f"cannot truncate a {self.num_layers}-layer tree to {num_layers} layers"
            )
        return AggregationTree(self.m, self.max_children, self.layers[:num_layers])


@dataclass(frozen=True)
class TreeViolation:
    """A broken tree invariant. `kind` is one of the VIOLATION_KINDS."""
    kind: str
    layer: int
    message: str

    def __str__(self):
        return f"layer {self.layer}: [{self.kind}] {self.message}"


VIOLATION_KINDS = ("structure", "disjointness", "partition", "coverage", "children", "parent", "size")


def max_layers(m: int, max_children: int, cm: int) -> int:
    """
    Number of layers L = max(1, floor(log_M(m / c_m))).

    Computed with integer arithmetic (largest k with c_m * M**k <= m) so exact
    powers such as m = 1024, M = 2 do not fall victim to log rounding.

    Args:
        m (int): Number of hypotheses
        max_children (int): M, at least 2
        cm (int): Preferred number of nodes on the top layer, 1 <= c_m <= m

    Returns:
        int: The number of layers

    Raises:
        InputDomainError: If c_m > m or any argument is out of range
    """
    if max_children < 2:
        raise InputDomainError(f"max_children must be at least 2, got {max_children}")
    if cm < 1 or m < 1:
        raise InputDomainError(f"m and c_m must be positive, got m={m}, c_m={cm}")
    if cm > m:
        raise InputDomainError(f"c_m ({cm}) exceeds the number of hypotheses ({m})")

    k = 0
    while cm * max_children ** (k + 1) <= m:
        k += 1
    return max(1, k)


def distances_from_locations(points) -> np.ndarray:
    """Euclidean distance matrix between hypothesis locations (m x d array)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[0] < 1:
        raise InputDomainError("at least one location is required")
    if pts.shape[0] == 1:
        return np.zeros((1, 1))
    return squareform(pdist(pts, metric="euclidean"))


def validate_distance_matrix(d) -> np.ndarray:
    """
    Check a distance matrix and return it as a float array.

    Raises:
        InputDomainError: If the matrix is not square, finite, nonnegative,
            symmetric to 1e-12 with a zero diagonal
    """
    arr = np.asarray(d, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise InputDomainError(f"distance matrix must be square and non-empty, got shape {arr.shape}")
    bad = np.argwhere(~np.isfinite(arr))
    if bad.size:
        r, c = bad[0]
        raise InputDomainError(f"distance matrix entry ({r + 1}, {c + 1}) is not finite")
    bad = np.argwhere(arr < 0)
    if bad.size:
        r, c = bad[0]
        raise InputDomainError(f"distance matrix entry ({r + 1}, {c + 1}) is negative")
    bad = np.argwhere(np.abs(arr - arr.T) > SYMMETRY_TOLERANCE)
    if bad.size:
        r, c = bad[0]
        raise InputDomainError(f"distance matrix is not symmetric at ({r + 1}, {c + 1})")
    diag = np.flatnonzero(np.abs(np.diag(arr)) > SYMMETRY_TOLERANCE)
    if diag.size:
        raise InputDomainError(f"distance matrix diagonal entry {diag[0] + 1} is not zero")
    return arr


def default_thresholds(d: np.ndarray, num_layers: int) -> List[float]:
    """
    Default merge thresholds g(2)..g(L).

    g(l) is the empirical quantile of the pairwise distances at level
    1 - 2**-(l-1): the median for layer 2, the upper quartile for layer 3,
    and so on. Override with explicit thresholds for tuned trees.
    """
    m = d.shape[0]
    if num_layers < 2:
        return []
    if m < 2:
        return [1.0] * (num_layers - 1)
    upper = d[np.triu_indices(m, k=1)]
    levels = [1.0 - 2.0 ** -(level - 1) for level in range(2, num_layers + 1)]
    return [float(g) for g in np.quantile(upper, levels)]


def published_thresholds(num_layers: int) -> List[float]:
    """The published thresholds g(2)..g(L), for L up to 13."""
    if num_layers - 1 > len(PUBLISHED_THRESHOLDS):
        raise InputDomainError(
            f"published thresholds cover at most {len(PUBLISHED_THRESHOLDS) + 1} layers, got {num_layers}"
        )
    return list(PUBLISHED_THRESHOLDS[:max(num_layers - 1, 0)])


def _check_thresholds(thresholds: Sequence[float], num_layers: int) -> List[float]:
    g = [float(x) for x in thresholds]
    if len(g) < num_layers - 1:
        raise InputDomainError(
            f"{num_layers} layers need {num_layers - 1} thresholds, got {len(g)}"
        )
    g = g[:num_layers - 1]
    if any(not np.isfinite(x) or x <= 0 for x in g):
        raise InputDomainError(f"thresholds must be positive and finite, got {g}")
    if any(b < a for a, b in zip(g, g[1:])):
        raise InputDomainError(f"thresholds must be nondecreasing, got {g}")
    return g


def _merge_layer(prev: Tuple[TreeNode, ...], sums: np.ndarray, max_children: int,
                 threshold: float) -> Tuple[Tuple[TreeNode, ...], np.ndarray]:
    """
    Greedy average-linkage merging of one layer.

    `sums[a, b]` holds the total hypothesis-to-hypothesis distance between
    nodes a and b, so the average linkage is sums / (size_a * size_b). Rows
    are ordered by each node's smallest member, and a merged group keeps the
    row of its first node, so the first minimum in row-major order is the
    lexicographically smallest (min-index, min-index) pair among ties.
    """
    n = len(prev)
    sizes = np.array([node.size for node in prev], dtype=float)
    n_children = np.ones(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    groups = [[k] for k in range(n)]
    sums = sums.copy()

    linkage = sums / np.outer(sizes, sizes)
    np.fill_diagonal(linkage, np.inf)
    if max_children < 2:
        linkage[:] = np.inf

    while True:
        flat = int(np.argmin(linkage))
        a, b = divmod(flat, n)
        if not linkage[a, b] <= threshold:
            break
        a, b = min(a, b), max(a, b)

        sums[a, :] += sums[b, :]
        sums[:, a] += sums[:, b]
        sizes[a] += sizes[b]
        n_children[a] += n_children[b]
        groups[a].extend(groups[b])
        active[b] = False

        linkage[b, :] = np.inf
        linkage[:, b] = np.inf
        row = sums[a, :] / (sizes[a] * sizes)
        row[~active] = np.inf
        row[n_children[a] + n_children > max_children] = np.inf
        row[a] = np.inf
        linkage[a, :] = row
        linkage[:, a] = row

    keep = np.flatnonzero(active)
    nodes = []
    for k in keep:
        children = tuple(sorted(groups[k]))
        members = tuple(sorted(i for c in children for i in prev[c].members))
        nodes.append(TreeNode(members=members, children=children))
    return tuple(nodes), sums[np.ix_(keep, keep)]


@log_function_call
def build_tree_from_distances(d, max_children: int, num_layers: int,
                              thresholds: Optional[Sequence[float]] = None) -> AggregationTree:
    """
    Build an aggregation tree from a distance matrix.

    On layer l, two layer-(l-1) nodes merge only if their average-linkage
    distance is at most g(l) and the merged node has at most M children.
    Merging is greedy, closest eligible pair first; nodes left unmerged pass
    through as single-child parents.

    Args:
        d: m x m distance matrix
        max_children (int): M
        num_layers (int): L >= 1
        thresholds (Sequence[float], optional): g(2)..g(L), nondecreasing and
            positive; extra trailing values are ignored. Defaults to
            default_thresholds().

    Returns:
        AggregationTree: A valid tree with num_layers layers

    Raises:
        InputDomainError: On an invalid matrix, thresholds or layer count
    """
    d = validate_distance_matrix(d)
    if num_layers < 1:
        raise InputDomainError(f"num_layers must be at least 1, got {num_layers}")
    if max_children < 1:
        raise InputDomainError(f"max_children must be positive, got {max_children}")
    m = d.shape[0]

    if thresholds is None:
        g = default_thresholds(d, num_layers)
        logger.info(f"Using default quantile thresholds: {[round(x, 4) for x in g]}")
    else:
        g = _check_thresholds(thresholds, num_layers)

    layers = [tuple(TreeNode(members=(i,)) for i in range(m))]
    sums = d
    for level in range(2, num_layers + 1):
        with LogContext(f"Merging layer {level} (g={g[level - 2]:.4g})", logger, level=logging.DEBUG):
            nodes, sums = _merge_layer(layers[-1], sums, max_children, g[level - 2])
        logger.debug(f"Layer {level}: {len(nodes)} nodes from {len(layers[-1])}")
        layers.append(nodes)

    tree = AggregationTree(m=m, max_children=max_children, layers=tuple(layers))
    logger.info(f"Built {num_layers}-layer tree over {m} hypotheses (M={max_children})")
    return tree


def build_tree_from_ordering(ranks, max_children: int, num_layers: int) -> AggregationTree:
    """
    Build an aggregation tree from a 1-D ordering of the hypotheses.

    `ranks[i]` is the rank (1..m) of hypothesis i. Each layer groups runs of
    M consecutive nodes of the previous layer in rank order, so layer l holds
    consecutive rank blocks of at most M**(l-1) hypotheses; a short final run
    becomes a smaller node (possibly a single-child pass-through).

    Raises:
        InputDomainError: If ranks is not a permutation of 1..m
    """
    r = np.asarray(ranks)
    if r.ndim != 1 or r.size < 1:
        raise InputDomainError("ranks must be a non-empty 1-D sequence")
    if not np.issubdtype(r.dtype, np.integer):
        as_float = np.asarray(r, dtype=float)
        if not np.all(np.isfinite(as_float)) or np.any(as_float != np.round(as_float)):
            raise InputDomainError("ranks must be integers")
        r = as_float.astype(np.int64)
    m = r.size
    if not np.array_equal(np.sort(r), np.arange(1, m + 1)):
        seen = np.zeros(m + 1, dtype=bool)
        for pos, value in enumerate(r):
            if value < 1 or value > m or seen[value]:
                raise InputDomainError(
                    f"ranks must be a permutation of 1..{m}; offending value {value} at index {pos}"
                )
            seen[value] = True
    if num_layers < 1:
        raise InputDomainError(f"num_layers must be at least 1, got {num_layers}")
    if max_children < 1:
        raise InputDomainError(f"max_children must be positive, got {max_children}")

    layers = [tuple(TreeNode(members=(i,)) for i in range(m))]
    # previous-layer node indices in rank order
    sequence = [int(i) for i in np.argsort(r, kind="stable")]
    for _ in range(2, num_layers + 1):
        prev = layers[-1]
        nodes = []
        for start in range(0, len(sequence), max_children):
            children = tuple(sequence[start:start + max_children])
            members = tuple(sorted(i for c in children for i in prev[c].members))
            nodes.append(TreeNode(members=members, children=children))
        layers.append(tuple(nodes))
        sequence = list(range(len(nodes)))

    logger.info(f"Built {num_layers}-layer ordering tree over {m} hypotheses (M={max_children})")
    return AggregationTree(m=m, max_children=max_children, layers=tuple(layers))


def validate_tree(tree: AggregationTree) -> List[TreeViolation]:
    """
    Check every AggregationTree invariant.

    Returns:
        List[TreeViolation]: Empty when the tree is valid
    """
    violations: List[TreeViolation] = []

    def report(kind, level, message):
        violations.append(TreeViolation(kind, level, message))

    m = tree.m
    if m < 1:
        report("structure", 0, f"m must be positive, got {m}")
        return violations
    if tree.max_children < 1:
        report("structure", 0, f"max_children must be positive, got {tree.max_children}")
    if tree.num_layers < 1:
        report("structure", 0, "tree has no layers")
        return violations

    first = tree.layer(1)
    if len(first) != m or any(node.members != (k,) or node.children for k, node in enumerate(first)):
        report("structure", 1, "layer 1 must be the singletons {1}..{m} without children")

    for level in range(1, tree.num_layers + 1):
        nodes = tree.layer(level)
        owner = {}
        for k, node in enumerate(nodes):
            if not node.members:
                report("structure", level, f"node {k + 1} is empty")
            out_of_range = [i for i in node.members if not 0 <= i < m]
            if out_of_range:
                report("structure", level, f"node {k + 1} has unknown hypotheses {out_of_range}")
            for i in node.members:
                if i in owner and owner[i] != k:
                    report("disjointness", level,
                           f"nodes {owner[i] + 1} and {k + 1} share hypothesis {i + 1}")
                    break
            for i in node.members:
                owner.setdefault(i, k)
            limit = tree.max_children ** (level - 1)
            if tree.max_children >= 1 and node.size > limit:
                report("size", level, f"node {k + 1} has {node.size} hypotheses, above M^(l-1) = {limit}")
        missing = sorted(set(range(m)) - set(owner))
        if missing:
            report("partition", level,
                   f"hypotheses {[i + 1 for i in missing[:10]]} are not covered by any node")

        if level == 1:
            continue
        prev = tree.layer(level - 1)
        parent_count = np.zeros(len(prev), dtype=np.int64)
        for k, node in enumerate(nodes):
            if not 1 <= len(node.children) <= tree.max_children:
                report("children", level,
                       f"node {k + 1} has {len(node.children)} children, expected 1..{tree.max_children}")
            bad = [c for c in node.children if not 0 <= c < len(prev)]
            if bad:
                report("structure", level, f"node {k + 1} refers to unknown children {[c + 1 for c in bad]}")
                continue
            union = set()
            for c in node.children:
                union.update(prev[c].members)
                parent_count[c] += 1
            if union != set(node.members):
                report("coverage", level,
                       f"node {k + 1} does not equal the union of its children's hypotheses")
        for c in np.flatnonzero(parent_count != 1):
            report("parent", level,
                   f"layer {level - 1} node {c + 1} has {parent_count[c]} parents, expected exactly 1")

    return violations
