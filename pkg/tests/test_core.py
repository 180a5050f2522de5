import json

import numpy as np
import pytest

from ghist.builder import build_histogram
from ghist.core import (
    Bin,
    DendroNode,
    DendroTree,
    GapMark,
    GappedHistogram,
    SortedSample,
    TreatmentMatrix,
    dumps,
    sort_sample,
    standardize,
)
from ghist.errors import DegenerateScaleError, DomainError, RejectedInputError


def test_sort_sample_keeps_permutation():
    s = sort_sample([3.0, 1.0, 2.0])
    assert s.values.tolist() == [1.0, 2.0, 3.0]
    assert s.perm.tolist() == [1, 2, 0]
    assert s.n == 3


def test_sort_sample_is_stable_on_ties():
    s = sort_sample([2.0, 1.0, 2.0, 1.0], labels=["a", "b", "c", "d"])
    assert s.perm.tolist() == [1, 3, 0, 2]
    assert s.sorted_labels == ("b", "d", "a", "c")
    # labels stay in input order
    assert s.labels == ("a", "b", "c", "d")


def test_sort_sample_puts_events_before_censorings_at_ties():
    s = sort_sample([2.0, 2.0, 1.0], status=[0, 1, 1])
    assert s.perm.tolist() == [2, 1, 0]
    assert s.sorted_status.tolist() == [1, 1, 0]


@pytest.mark.parametrize("raw", [[], [1.0, float("nan")], [float("inf")]])
def test_sort_sample_rejects_bad_input(raw):
    with pytest.raises(RejectedInputError):
        sort_sample(raw)


def test_sort_sample_rejects_bad_status():
    with pytest.raises(DomainError):
        sort_sample([1.0, 2.0], status=[1, 2])


def test_sorted_sample_arrays_are_frozen():
    s = sort_sample([1.0, 2.0])
    with pytest.raises(ValueError):
        s.values[0] = 5.0


def test_standardize():
    s = standardize(sort_sample([1.0, 2.0, 3.0, 4.0, 10.0]))
    assert s.values.mean() == pytest.approx(0.0, abs=1e-12)
    assert s.values.std(ddof=1) == pytest.approx(1.0)
    again = standardize(s)
    assert np.allclose(again.values, s.values)


def test_standardize_constant_sample():
    with pytest.raises(DegenerateScaleError):
        standardize(sort_sample([4.0, 4.0, 4.0]))


def test_subset_keeps_labels_aligned():
    s = sort_sample([5.0, 1.0, 3.0, 2.0], labels=["w", "x", "y", "z"], status=[1, 0, 1, 1])
    sub = s.subset(s.sorted_status == 1)
    assert sub.values.tolist() == [2.0, 3.0, 5.0]
    assert sub.sorted_labels == ("z", "y", "w")
    assert sub.sorted_status.tolist() == [1, 1, 1]
    with pytest.raises(RejectedInputError):
        s.subset(np.zeros(4, dtype=bool))


def _bin(a, b, start, stop, left=GapMark.BOUNDARY, right=GapMark.BOUNDARY):
    return Bin(a, b, start, stop, 0.1, left, right)


def test_histogram_edges_and_gaps():
    hist = GappedHistogram(
        (_bin(0.0, 1.0, 0, 3, right=GapMark.GAP), _bin(2.0, 3.0, 3, 5, left=GapMark.GAP)),
        l0=0.5, band=(0.5, 1.5), linkage="complete",
    )
    assert hist.k == 2
    assert hist.n == 5
    assert hist.edges.tolist() == [0.0, 1.0, 3.0]
    assert hist.n_gaps == 1
    assert hist.bin_of(0) == 0
    assert hist.bin_of(3) == 1
    assert hist.segments() == [(0, 3), (3, 5)]
    back = GappedHistogram.from_dict(json.loads(dumps(hist.to_dict())))
    assert back.edges.tolist() == hist.edges.tolist()
    assert back.n_gaps == 1


def test_histogram_rejects_overlap_and_holes():
    with pytest.raises(DomainError):
        GappedHistogram((_bin(0.0, 2.0, 0, 3, right=GapMark.NONE), _bin(1.0, 3.0, 3, 5, left=GapMark.NONE)),
                        0.5, (0.5, 1.5), "complete")
    with pytest.raises(DomainError):
        GappedHistogram((_bin(0.0, 1.0, 0, 2, right=GapMark.NONE), _bin(1.0, 3.0, 3, 5, left=GapMark.NONE)),
                        0.5, (0.5, 1.5), "complete")


def test_bin_validation():
    with pytest.raises(DomainError):
        Bin(1.0, 0.0, 0, 1, 0.0)
    with pytest.raises(DomainError):
        Bin(0.0, 1.0, 2, 2, 0.0)
    assert Bin(1.0, 1.0, 0, 2, 0.0).width == 0.0


def _chain_tree():
    # ((0, 1), 2) then with 3
    return DendroTree(4, (
        DendroNode(1.0, 0, 1, 2),
        DendroNode(2.0, 4, 2, 3),
        DendroNode(5.0, 5, 3, 4),
    ))


def test_dendro_tree_navigation():
    tree = _chain_tree()
    assert tree.root == 6
    assert tree.span(5) == (0, 2)
    assert tree.size(5) == 3
    assert tree.is_contiguous(5)
    assert tree.parent_of(4) == 5
    assert tree.parent_of(6) is None
    assert tree.leaves(5) == (0, 1, 2)
    assert tree.children(6) == (5, 3)
    back = DendroTree.from_linkage(tree.to_linkage(), 4)
    assert [n.height for n in back.nodes] == [1.0, 2.0, 5.0]


def test_dendro_tree_rejects_bad_structure():
    with pytest.raises(DomainError):
        DendroTree(3, (DendroNode(1.0, 0, 1, 2), DendroNode(0.5, 3, 2, 3)))
    with pytest.raises(DomainError):
        DendroTree(3, (DendroNode(1.0, 0, 1, 2), DendroNode(2.0, 0, 2, 2)))
    with pytest.raises(DomainError):
        DendroTree(3, (DendroNode(1.0, 0, 1, 2),))


def test_treatment_matrix_row_sums():
    T = TreatmentMatrix(np.array([[1, 2], [3, 0]]), ("a", "b"), np.array([3, 3]), np.array([0.0, 1.0, 2.0]))
    assert T.shape == (2, 2)
    assert T.column_sums.tolist() == [4, 2]
    assert T.total == 6
    with pytest.raises(DomainError):
        TreatmentMatrix(np.array([[1, 2]]), ("a",), np.array([4]), np.array([0.0, 1.0, 2.0]))
    with pytest.raises(DomainError):
        TreatmentMatrix(np.array([[1, 2]]), ("a",), np.array([3]), np.array([0.0, 1.0]))


def test_dumps_is_deterministic():
    assert dumps({"b": 1, "a": [1.5]}) == dumps({"a": [1.5], "b": 1})
    with pytest.raises(ValueError):
        dumps({"x": float("nan")})


def _through_json(obj):
    return json.loads(dumps(obj.to_dict()))


def test_sorted_sample_survives_json():
    sample = sort_sample([3.0, 1.0, 2.0, 1.0], labels=["a", "b", "c", "a"], status=[1, 0, 1, 1])
    back = SortedSample.from_dict(_through_json(sample))
    assert back.values.tolist() == sample.values.tolist()
    assert back.perm.tolist() == sample.perm.tolist()
    assert back.labels == sample.labels
    assert back.status.tolist() == sample.status.tolist()
    assert back.sorted_labels == sample.sorted_labels
    bare = SortedSample.from_dict(_through_json(sort_sample([2.0, 1.0])))
    assert bare.labels is None and bare.status is None


def test_bin_survives_json():
    full = Bin(0.0, 1.5, 2, 6, 0.25, GapMark.GAP, GapMark.BOUNDARY, mass=0.4, ahat=0.1, bhat=1.4)
    assert Bin.from_dict(_through_json(full)) == full
    plain = _bin(0.0, 1.0, 0, 3)
    assert Bin.from_dict(_through_json(plain)) == plain
    assert "ahat" not in plain.to_dict()
    assert full.reference_dess == pytest.approx(1.3 ** 2 / 3)
    assert plain.reference_dess == pytest.approx(1 / 3)
    with pytest.raises(DomainError):
        Bin(0.0, 1.0, 0, 2, 0.1, ahat=0.0)


def test_dendro_tree_survives_json():
    tree = _chain_tree()
    back = DendroTree.from_dict(_through_json(tree))
    assert back.n_leaves == tree.n_leaves
    assert back.nodes == tree.nodes
    assert back.to_dict() == tree.to_dict()


def test_treatment_matrix_survives_json():
    T = TreatmentMatrix(np.array([[1, 2], [3, 0]]), ("a", "b"), np.array([3, 3]), np.array([0.0, 1.0, 2.0]))
    back = TreatmentMatrix.from_dict(_through_json(T))
    assert back.counts.tolist() == T.counts.tolist()
    assert back.treatment_names == T.treatment_names
    assert back.n_j.tolist() == T.n_j.tolist()
    assert back.edges.tolist() == T.edges.tolist()


def test_built_histogram_survives_json(two_clouds, small_bands):
    hist = build_histogram(two_clouds, band=small_bands)
    back = GappedHistogram.from_dict(_through_json(hist))
    assert back.to_dict() == hist.to_dict()
    assert back.segments() == hist.segments()
    assert back.edges.tolist() == hist.edges.tolist()
    assert all(b.ahat is not None for b in back.bins)
