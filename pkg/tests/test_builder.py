import numpy as np
import pytest

from ghist.builder import (
    L0Spec,
    assemble,
    brute_force_optimum,
    build_histogram,
    check_gap_boundaries,
    check_gap_midpoint,
    ecdf_polyline,
    ensemble_size,
    extension_edges,
    hamiltonian,
    intrinsic_dess,
    is_uniform_part,
    near_optimality,
    refine,
    segmentation_count,
)
from ghist.core import MIDPOINT_DESS, GapMark, sort_sample, standardize
from ghist.errors import DegenerateScaleError, DomainError, ExponentialGuardError
from ghist.hc1d import cluster
from ghist.ingest import ingest_csv


def test_extension_edges():
    assert extension_edges([0.0, 1.0, 2.0]) == pytest.approx((-0.5, 2.5))
    assert extension_edges([4.0]) == (4.0, 4.0)
    assert intrinsic_dess([4.0]) == 0.0


def test_gap_by_boundary_extension():
    left = np.linspace(0.0, 1.0, 9)
    right = np.linspace(2.0, 3.0, 9)
    decision = check_gap_boundaries(left, right)
    assert decision.left_bhat == pytest.approx(1.1)
    assert decision.right_ahat == pytest.approx(1.9)
    assert decision.is_gap
    assert not decision.low_confidence


def test_gap_by_boundary_extension_is_shift_invariant():
    left = np.array([0.0, 0.3, 0.4])
    right = np.array([0.6, 0.9, 1.7])
    base = check_gap_boundaries(left, right).is_gap
    assert check_gap_boundaries(left + 100.0, right + 100.0).is_gap == base


def test_gap_with_single_value_bin_is_low_confidence():
    decision = check_gap_boundaries([0.0, 0.1, 0.2], [5.0])
    assert decision.is_gap
    assert decision.low_confidence


def test_gap_check_rejects_overlapping_bins():
    with pytest.raises(DomainError):
        check_gap_boundaries([0.0, 2.0], [1.0, 3.0])


def test_midpoint_gap_between_far_clouds(small_bands, rng):
    left = np.sort(rng.uniform(0, 1, 100))
    right = np.sort(rng.uniform(9, 10, 100))
    decision = check_gap_midpoint(left, right, small_bands)
    assert decision.is_gap
    assert decision.left_bhat == decision.right_ahat


def test_midpoint_no_gap_inside_one_cloud(small_bands):
    no_gap = 0
    for seed in range(20):
        u = np.sort(np.random.default_rng(seed).uniform(0, 1, 200))
        no_gap += not check_gap_midpoint(u[:100], u[100:], small_bands).is_gap
    assert no_gap >= 12


def test_midpoint_duplicate_clusters(small_bands):
    assert not check_gap_midpoint([1.0, 1.0, 1.0], [1.0, 1.0, 1.0], small_bands).is_gap


def test_is_uniform_part(small_bands, rng):
    assert is_uniform_part([2.0], small_bands)
    bimodal = np.sort(np.concatenate((rng.uniform(0, 1, 100), rng.uniform(9, 10, 100))))
    assert not is_uniform_part(bimodal, small_bands)


def test_iris_petal_length_isolates_setosa(iris_petal_length):
    sample = standardize(iris_petal_length)
    hist = build_histogram(sample)
    first = hist.bins[0]
    assert (first.start, first.stop) == (0, 50)
    assert set(sample.sorted_labels[:50]) == {"setosa"}
    assert first.right_gap == GapMark.GAP
    assert hist.n_gaps >= 1
    hist.check_sample(sample)


def test_iris_petal_width_gap_after_setosa(iris_csv):
    sample = standardize(ingest_csv(iris_csv, "petal_width", "species"))
    hist = build_histogram(sample)
    assert set(sample.sorted_labels[:50]) == {"setosa"}
    ends = [b.stop for b in hist.bins]
    assert 50 in ends
    assert hist.bins[ends.index(50)].right_gap == GapMark.GAP
    hist.check_sample(sample)


def test_two_clouds_give_two_gapped_bins(two_clouds, small_bands):
    for method in ("boundary-extension", "midpoint-dess"):
        hist = build_histogram(two_clouds, band=small_bands, gap_method=method)
        assert hist.k == 2
        assert hist.n_gaps == 1
        assert hist.segments() == [(0, 200), (200, 400)]
        assert hist.bins[0].b < hist.bins[1].a


def test_uniform_sample_is_mostly_one_bin(small_bands):
    single = 0
    for seed in range(20):
        sample = sort_sample(np.random.default_rng(100 + seed).uniform(0, 1, 300))
        single += build_histogram(sample, band=small_bands).k == 1
    assert single >= 15


def test_histogram_bins_partition_and_stop_rule(small_bands, rng):
    sample = sort_sample(np.concatenate((rng.normal(0, 1, 150), rng.exponential(2.0, 150) + 5)))
    tree = cluster(sample)
    hist = build_histogram(sample, L0Spec(fraction=0.05), band=small_bands, tree=tree)
    assert sum(b.count for b in hist.bins) == sample.n
    assert hist.l0 == pytest.approx(0.05 * tree.height(tree.root))
    hist.check_sample(sample)
    for b in hist.bins:
        part = sample.values[b.start:b.stop]
        assert intrinsic_dess(part) < hist.l0 or is_uniform_part(part, small_bands)
    for left, right in zip(hist.bins, hist.bins[1:]):
        assert left.b <= right.a


def test_build_rejects_degenerate_input():
    with pytest.raises(DomainError):
        build_histogram(sort_sample([1.0]))
    with pytest.raises(DegenerateScaleError):
        build_histogram(sort_sample([2.0, 2.0, 2.0]))


def test_l0_spec():
    tree = cluster(sort_sample([0.0, 1.0, 10.0]))
    assert L0Spec(fraction=0.5).resolve(tree) == 5.0
    assert L0Spec(fraction=0.5, absolute=0.2).resolve(tree) == 0.2
    with pytest.raises(DomainError):
        L0Spec(fraction=0.0)
    with pytest.raises(DomainError):
        L0Spec(absolute=-1.0)


def test_hamiltonian_counts_gapped_junctions_twice(small_bands):
    sample = sort_sample([0.0, 0.1, 0.2, 5.0, 5.1, 5.2, 5.3])
    hist = assemble(sample, [(0, 3), (3, 7)], 0.5, bands=small_bands)
    assert hist.n_gaps == 1
    h = hamiltonian(hist)
    assert h.n_boundaries == 2
    assert h.value == pytest.approx(hist.total_dess + 2 * 0.5)
    whole = assemble(sample, [(0, 7)], 0.5, bands=small_bands)
    assert hamiltonian(whole).value == pytest.approx(whole.total_dess)


def test_assemble_gapped_edges_stay_inside_midpoint(small_bands):
    sample = sort_sample([0.0, 1.0, 2.0, 10.0, 11.0, 12.0])
    hist = assemble(sample, [(0, 3), (3, 6)], 0.1, bands=small_bands)
    left, right = hist.bins
    assert left.b == pytest.approx(2.5)
    assert right.a == pytest.approx(9.5)
    assert left.right_gap == GapMark.GAP
    assert hist.edges[0] == pytest.approx(-0.5)
    assert hist.edges[-1] == pytest.approx(12.5)


def test_assemble_contiguous_junction_uses_midpoint(small_bands):
    sample = sort_sample([0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
    hist = assemble(sample, [(0, 3), (3, 6)], 0.1, bands=small_bands)
    assert hist.n_gaps == 0
    assert hist.bins[0].b == hist.bins[1].a == pytest.approx(2.5)


def test_counts():
    assert segmentation_count(3) == 4
    assert ensemble_size(3) == 9
    assert ensemble_size(1) == 1


def test_brute_force_single_bin_for_large_l0(small_bands):
    hist, h = brute_force_optimum(sort_sample([0.0, 1.0, 2.0]), 100.0, small_bands)
    assert hist.k == 1
    assert h.n_boundaries == 0


def test_brute_force_isolates_outlier(small_bands):
    hist, h = brute_force_optimum(sort_sample([0.0, 0.01, 10.0]), 0.01, small_bands)
    assert hist.segments() == [(0, 2), (2, 3)]
    assert hist.n_gaps == 1
    assert h.value == pytest.approx(hist.total_dess + 0.02)


def test_brute_force_cap():
    with pytest.raises(ExponentialGuardError):
        brute_force_optimum(sort_sample(np.arange(15.0)), 0.1)


def test_builder_never_beats_the_optimum(small_bands):
    for seed in range(30):
        sample = sort_sample(np.random.default_rng(seed).normal(size=9))
        hist = build_histogram(sample, band=small_bands)
        _, best = brute_force_optimum(sample, hist.l0, small_bands)
        assert hamiltonian(hist).value >= best.value - 1e-12


def test_brute_force_same_under_workers(small_bands):
    sample = sort_sample(np.random.default_rng(8).normal(size=9))
    one, h1 = brute_force_optimum(sample, 0.2, small_bands, workers=1)
    four, h4 = brute_force_optimum(sample, 0.2, small_bands, workers=4)
    assert one.segments() == four.segments()
    assert h1.value == h4.value


def test_near_optimality_ratios(small_bands):
    samples = [sort_sample(np.random.default_rng(s).normal(size=8)) for s in range(10)]
    report = near_optimality(samples, bands=small_bands)
    assert report.ratios.shape == (10,)
    assert np.all(report.ratios >= 1 - 1e-12)
    assert report.median <= report.worst


def test_refine_keeps_singletons():
    sample = sort_sample([0.0, 5.0, 20.0])
    tree = cluster(sample)
    hist = assemble(sample, [(0, 1), (1, 2), (2, 3)], 0.1)
    assert refine(hist, tree, sample) is hist


def test_refine_splits_with_small_l0(small_bands):
    sample = sort_sample(np.random.default_rng(1).uniform(0, 1, 1000))
    tree = cluster(sample)
    coarse = assemble(sample, [(0, sample.n)], 1e-6, bands=small_bands, cross_check=False)
    fine = refine(coarse, tree, sample, bands=small_bands)
    assert fine.k > 1
    assert fine.total_dess < coarse.total_dess
    fine.check_sample(sample)


def test_refine_rejects_bins_off_the_tree(small_bands):
    sample = sort_sample([0.0, 1.0, 3.0, 7.0])
    tree = cluster(sample)
    hist = assemble(sample, [(0, 2), (2, 3), (3, 4)], 0.1, bands=small_bands)
    odd = assemble(sample, [(0, 1), (1, 3), (3, 4)], 0.1, bands=small_bands)
    assert refine(hist, tree, sample, bands=small_bands).n == 4
    with pytest.raises(DomainError):
        refine(odd, tree, sample, bands=small_bands)


def test_ecdf_polyline(two_clouds, small_bands):
    hist = build_histogram(two_clouds, band=small_bands)
    xs, ys = ecdf_polyline(two_clouds, hist)
    assert ys[0] == 0.0
    assert ys[-1] == pytest.approx(1.0)
    assert np.all(np.diff(xs) >= 0)
    assert np.all(np.diff(ys) >= 0)
    # flat across the gap
    assert ys[1] == ys[2]


def test_midpoint_method_histogram(two_clouds, small_bands):
    hist = build_histogram(two_clouds, band=small_bands, gap_method=MIDPOINT_DESS)
    assert all(g.method == MIDPOINT_DESS for g in hist.gaps)


def _three_part_mixture(seed):
    rng = np.random.default_rng(seed)
    return sort_sample(np.concatenate((rng.uniform(0, 1, 60), rng.uniform(1.5, 4, 60), rng.normal(8, 0.5, 60))))


@pytest.mark.parametrize("seed", range(20))
def test_reported_bins_pass_the_stop_rule(small_bands, seed):
    sample = _three_part_mixture(seed)
    hist = build_histogram(sample, band=small_bands)
    for b in hist.bins:
        part = sample.values[b.start:b.stop]
        assert (b.ahat, b.bhat) == extension_edges(part)
        assert b.dess == intrinsic_dess(part)
        assert b.dess < hist.l0 or is_uniform_part(part, small_bands)


def test_brute_force_never_splits_equal_values(small_bands):
    sample = sort_sample([0.0, 0.0, 1.0, 5.0, 5.0, 5.0])
    for l0 in (1e-4, 0.01, 1.0):
        hist, _ = brute_force_optimum(sample, l0, small_bands)
        for start, _ in hist.segments()[1:]:
            assert sample.values[start - 1] != sample.values[start]


def _uniform_mixture(rng, n=10):
    parts = int(rng.integers(1, 4))
    sizes = np.bincount(rng.integers(0, parts, n - parts), minlength=parts) + 1
    chunks = []
    for size in sizes:
        lo = rng.uniform(0, 10)
        chunks.append(rng.uniform(lo, lo + rng.uniform(0.2, 3.0), size))
    return sort_sample(np.concatenate(chunks))


def test_builder_is_nearly_optimal_on_small_mixtures(small_bands, record_property):
    rng = np.random.default_rng(2024)
    ratios = []
    for _ in range(100):
        sample = _uniform_mixture(rng)
        hist = build_histogram(sample, L0Spec(absolute=float(rng.uniform(0.01, 1.0))), band=small_bands)
        _, best = brute_force_optimum(sample, hist.l0, small_bands)
        built = hamiltonian(hist).value
        assert built >= best.value - 1e-12
        ratios.append(built / best.value)
    record_property("max_ratio", max(ratios))
    assert np.median(ratios) <= 1.1
