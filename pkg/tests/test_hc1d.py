import numpy as np
import pytest

from ghist.core import sort_sample
from ghist.errors import DomainError
from ghist.hc1d import cluster, descend_active, tree_height


def test_complete_linkage_small_example():
    tree = cluster(sort_sample([10.0, 0.0, 1.0]))
    first, second = tree.nodes
    assert (first.left, first.right, first.height) == (0, 1, 1.0)
    assert (second.left, second.right, second.height) == (3, 2, 10.0)
    assert tree_height(tree) == 10.0


def test_grid_heights_are_diameters():
    sample = sort_sample(np.arange(10.0))
    tree = cluster(sample)
    assert tree_height(tree) == 9.0
    for node in tree.internal_ids():
        lo, hi = tree.span(node)
        assert tree.height(node) == sample.values[hi] - sample.values[lo]


@pytest.mark.parametrize("linkage", ["complete", "average", "ward"])
def test_nodes_cover_consecutive_positions(linkage):
    rng = np.random.default_rng(4)
    sample = sort_sample(np.concatenate((rng.normal(0, 1, 60), rng.normal(6, 0.5, 40))))
    tree = cluster(sample, linkage)
    assert tree.n_leaves == sample.n
    assert tree.span(tree.root) == (0, sample.n - 1)
    for node in tree.internal_ids():
        assert tree.is_contiguous(node)
        for child in tree.children(node):
            assert tree.height(child) <= tree.height(node)


def test_cluster_rejects_unknown_linkage():
    with pytest.raises(DomainError):
        cluster(sort_sample([1.0, 2.0]), "single")


def test_single_value_tree():
    tree = cluster(sort_sample([3.0]))
    assert tree.n_leaves == 1
    assert tree.nodes == ()
    with pytest.raises(DomainError):
        tree_height(tree)


def test_descent_visits_in_height_order():
    tree = cluster(sort_sample([0.0, 1.0, 3.0, 7.0, 15.0, 31.0]))
    heights = [tree.height(node) for node in descend_active(tree)]
    assert heights == [31.0, 15.0, 7.0, 3.0, 1.0]


def test_descent_stop_prunes_subtree():
    tree = cluster(sort_sample([0.0, 1.0, 3.0, 7.0, 15.0, 31.0]))
    walk = descend_active(tree)
    visited = []
    for node in walk:
        visited.append(node)
        walk.stop(node)
    assert visited == [tree.root]


def test_descent_stop_only_current_node():
    tree = cluster(sort_sample([0.0, 1.0, 3.0]))
    walk = descend_active(tree)
    next(walk)
    with pytest.raises(DomainError):
        walk.stop(0)


def test_rounding_noise_does_not_break_leftmost_ties():
    sample = sort_sample([4.3, 4.4, 4.5, 4.6, 4.7, 4.8, 4.9, 5.0])
    tree = cluster(sample)
    pairs = [tree.leaves(node) for node in tree.internal_ids()[:4]]
    assert pairs == [(0, 1), (2, 3), (4, 5), (6, 7)]
    first = tree.nodes[0]
    assert first.height == sample.values[1] - sample.values[0]
