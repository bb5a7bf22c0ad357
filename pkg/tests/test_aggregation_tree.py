"""Tests for aggregation tree construction and validation."""

import numpy as np
import pytest

from aggregation_tree import (
    PUBLISHED_THRESHOLDS,
    AggregationTree,
    TreeNode,
    build_tree_from_distances,
    build_tree_from_ordering,
    default_thresholds,
    distances_from_locations,
    max_layers,
    published_thresholds,
    validate_distance_matrix,
    validate_tree,
)
from core import InputDomainError


def member_sets(tree, level):
    """Layer `level` as a set of 1-based hypothesis sets."""
    return {frozenset(i + 1 for i in node.members) for node in tree.layer(level)}


class TestMaxLayers:
    @pytest.mark.parametrize("m, M, cm, expected", [
        (1000, 2, 5, 7),
        (1000, 2, 1000, 1),
        (1024, 2, 1, 10),
        (10, 3, 1, 2),
    ])
    def test_values(self, m, M, cm, expected):
        assert max_layers(m, M, cm) == expected

    def test_cm_above_m(self):
        with pytest.raises(InputDomainError):
            max_layers(10, 2, 11)

    def test_single_child_limit(self):
        with pytest.raises(InputDomainError):
            max_layers(10, 1, 1)


class TestBuildFromDistances:
    def test_pairs_close_points(self):
        d = distances_from_locations(np.array([0.0, 1.0, 10.0, 11.0]))
        tree = build_tree_from_distances(d, 2, 2, [2.0])
        assert member_sets(tree, 2) == {frozenset({1, 2}), frozenset({3, 4})}
        assert validate_tree(tree) == []

    def test_single_layer(self, rng):
        d = distances_from_locations(rng.uniform(size=(6, 2)))
        tree = build_tree_from_distances(d, 2, 1)
        assert tree.num_layers == 1
        assert [node.members for node in tree.layer(1)] == [(i,) for i in range(6)]

    def test_far_points_pass_through(self):
        d = distances_from_locations(np.array([0.0, 100.0, 200.0, 300.0]))
        tree = build_tree_from_distances(d, 2, 2, [1.0])
        assert [node.children for node in tree.layer(2)] == [(0,), (1,), (2,), (3,)]

    def test_children_cap_respected(self):
        # five points close together, M=2: nobody gets more than two children
        d = distances_from_locations(np.array([0.0, 0.1, 0.2, 0.3, 0.4]))
        tree = build_tree_from_distances(d, 2, 3, [1.0, 1.0])
        for level in (2, 3):
            assert all(1 <= len(node.children) <= 2 for node in tree.layer(level))
        assert validate_tree(tree) == []

    def test_tie_breaks_on_smallest_pair(self):
        # equally spaced points: every adjacent pair ties, the lowest-index pair merges first
        d = distances_from_locations(np.array([0.0, 1.0, 2.0]))
        tree = build_tree_from_distances(d, 2, 2, [1.5])
        assert member_sets(tree, 2) == {frozenset({1, 2}), frozenset({3})}

    def test_average_linkage(self):
        # layer 3 joins {1,2} with {3,4} only when their average distance fits
        d = distances_from_locations(np.array([0.0, 1.0, 4.0, 5.0]))
        joined = build_tree_from_distances(d, 2, 3, [1.0, 4.0])
        apart = build_tree_from_distances(d, 2, 3, [1.0, 3.9])
        assert len(joined.layer(3)) == 1
        assert len(apart.layer(3)) == 2

    def test_random_trees_valid(self, rng):
        for _ in range(20):
            m = int(rng.integers(2, 40))
            d = distances_from_locations(rng.uniform(0, 5, size=(m, 2)))
            L = int(rng.integers(1, 6))
            tree = build_tree_from_distances(d, 2, L, published_thresholds(L))
            assert validate_tree(tree) == []

    def test_permutation_equivariant(self, rng):
        thresholds = [0.5, 0.9, 1.4, 2.0]
        for _ in range(10):
            d = distances_from_locations(rng.uniform(0, 5, size=(60, 2)))
            perm = rng.permutation(60)
            tree = build_tree_from_distances(d, 2, 5, thresholds)
            relabelled = build_tree_from_distances(d[np.ix_(perm, perm)], 2, 5, thresholds)
            for level in range(1, 6):
                # hypothesis j of the relabelled problem is hypothesis perm[j] of the original
                mapped = {frozenset(int(perm[j]) for j in node.members) for node in relabelled.layer(level)}
                assert mapped == {frozenset(node.members) for node in tree.layer(level)}

    def test_default_thresholds_nondecreasing(self, rng):
        d = distances_from_locations(rng.uniform(size=(30, 2)))
        g = default_thresholds(d, 5)
        assert len(g) == 4 and all(a <= b for a, b in zip(g, g[1:]))

    def test_decreasing_thresholds_rejected(self):
        d = distances_from_locations(np.arange(4.0))
        with pytest.raises(InputDomainError):
            build_tree_from_distances(d, 2, 3, [2.0, 1.0])

    def test_too_few_thresholds(self):
        d = distances_from_locations(np.arange(4.0))
        with pytest.raises(InputDomainError):
            build_tree_from_distances(d, 2, 4, [1.0])

    @pytest.mark.parametrize("matrix", [
        [[0.0, 1.0], [2.0, 0.0]],
        [[0.0, -1.0], [-1.0, 0.0]],
        [[1.0, 1.0], [1.0, 0.0]],
        [[0.0, 1.0, 2.0], [1.0, 0.0, 1.0]],
        [[0.0, float("nan")], [float("nan"), 0.0]],
    ])
    def test_invalid_matrices(self, matrix):
        with pytest.raises(InputDomainError):
            validate_distance_matrix(matrix)


class TestPublishedThresholds:
    def test_prefix(self):
        assert published_thresholds(3) == [1.33, 1.56]
        assert published_thresholds(1) == []
        assert published_thresholds(13) == list(PUBLISHED_THRESHOLDS)

    def test_too_deep(self):
        with pytest.raises(InputDomainError):
            published_thresholds(14)


class TestBuildFromOrdering:
    def test_adjacent_pairs(self):
        tree = build_tree_from_ordering([1, 2, 3, 4], 2, 2)
        assert member_sets(tree, 2) == {frozenset({1, 2}), frozenset({3, 4})}

    def test_pairs_follow_ranks(self):
        tree = build_tree_from_ordering([2, 1, 4, 3], 2, 2)
        assert member_sets(tree, 2) == {frozenset({1, 2}), frozenset({3, 4})}

    def test_interleaved_ranks(self):
        tree = build_tree_from_ordering([1, 3, 2, 4], 2, 2)
        assert member_sets(tree, 2) == {frozenset({1, 3}), frozenset({2, 4})}

    def test_odd_count_pass_through(self):
        tree = build_tree_from_ordering([1, 2, 3, 4, 5], 2, 2)
        assert len(tree.layer(2)) == 3
        assert tree.layer(2)[-1].children == (4,)

    def test_published_scale(self, rng):
        ranks = rng.permutation(1000) + 1
        L = max_layers(1000, 2, 5)
        tree = build_tree_from_ordering(ranks, 2, L)
        assert tree.num_layers == 7
        assert validate_tree(tree) == []
        assert max(node.size for node in tree.layer(7)) == 64

    @pytest.mark.parametrize("ranks", [[1, 1, 2], [0, 1, 2], [1, 2, 4], [1.5, 2, 3]])
    def test_non_permutation(self, ranks):
        with pytest.raises(InputDomainError):
            build_tree_from_ordering(ranks, 2, 2)


class TestValidateTree:
    def test_seven_tree_valid(self, seven_tree):
        assert validate_tree(seven_tree) == []
        assert seven_tree.num_layers == 3

    def _singletons(self, m):
        return tuple(TreeNode(members=(i,)) for i in range(m))

    def test_overlap_reported_as_disjointness(self):
        layer2 = (TreeNode((0, 1), (0, 1)), TreeNode((1, 2), (1, 2)))
        tree = AggregationTree(3, 2, (self._singletons(3), layer2))
        kinds = [v.kind for v in validate_tree(tree)]
        assert kinds.count("disjointness") == 1

    def test_coverage_violation(self):
        layer2 = (TreeNode((0, 1, 2), (0, 1)), TreeNode((2,), (2,)))
        tree = AggregationTree(3, 2, (self._singletons(3), layer2))
        kinds = [v.kind for v in validate_tree(tree)]
        assert "coverage" in kinds

    def test_too_many_children(self):
        layer2 = (TreeNode((0, 1, 2), (0, 1, 2)),)
        tree = AggregationTree(3, 2, (self._singletons(3), layer2))
        kinds = {v.kind for v in validate_tree(tree)}
        assert "children" in kinds


class TestTreeHelpers:
    def test_assignments_and_parents(self, seven_tree):
        assert seven_tree.assignments(2).tolist() == [0, 0, 1, 1, 2, 2, 3]
        assert seven_tree.parents(3).tolist() == [0, 0, 1, 1]

    def test_truncate(self, seven_tree):
        short = seven_tree.truncate(2)
        assert short.num_layers == 2
        assert short.layer(2) == seven_tree.layer(2)
        with pytest.raises(InputDomainError):
            seven_tree.truncate(4)

    def test_node_members(self, seven_tree):
        assert seven_tree.node_members(3, 1) == (4, 5, 6)
        screened = np.zeros(7, dtype=bool)
        screened[4] = True
        assert seven_tree.node_members(3, 1, exclude=screened) == (5, 6)
        assert seven_tree.node_members(2, 0, exclude=screened) == (0, 1)

    @pytest.mark.parametrize("level, node", [(0, 0), (4, 0), (2, 4), (3, -1)])
    def test_node_members_unknown_node(self, seven_tree, level, node):
        with pytest.raises(InputDomainError):
            seven_tree.node_members(level, node)
