import numpy as np
import pytest

from pwshed.grid import Connectivity, Scheme
from pwshed.oracle import (
    boundary_min_heights,
    compare_partitions,
    follow_to_root,
    labels_identical,
    longest_chain,
    plateau_distance_map,
    reduction_bound,
    sequential_watershed,
)

LINE = Connectivity(Scheme.VON_NEUMANN, 1)


def test_two_minima_example():
    img = np.array([75] + [89] * 10 + [81], np.uint8)
    assert len(np.unique(sequential_watershed(img, LINE))) == 2


def test_constant_image_single_region():
    assert len(np.unique(sequential_watershed(np.full((6, 5), 3, np.uint8)))) == 1


def test_plateau_distances_1d():
    img = np.array([75] + [89] * 12 + [81], np.uint8)
    # the plateau pixels next to 75 and 81 descend directly (distance 0);
    # the ten between them are fed from both ends
    assert plateau_distance_map(img, LINE).tolist() == [-1, 0, 1, 2, 3, 4, 5, 5, 4, 3, 2, 1, 0, -1]


def test_plateau_distances_without_plateaux():
    img = np.array([[1, 2, 3], [4, 5, 6]], np.uint8)
    dist = plateau_distance_map(img)
    assert dist[0, 0] == -1  # the minimum
    assert (dist.reshape(-1)[1:] == 0).all()


def test_compare_partitions_examples():
    a = np.array([0, 0, 2, 2, 4])
    assert compare_partitions(a, a).partitions_equal
    permuted = np.array([9, 9, 1, 1, 5])
    assert compare_partitions(a, permuted).partitions_equal
    assert compare_partitions(permuted, a).partitions_equal
    report = compare_partitions(np.array([0, 0, 2, 2]), np.array([0, 0, 0, 0]))
    assert not report.partitions_equal
    assert report.first_mismatch == 2
    assert report.region_counts == (2, 1)
    with pytest.raises(ValueError):
        compare_partitions(a, a[:3])


def test_labels_identical():
    assert labels_identical([1, 2], np.array([[1, 2]]))
    assert not labels_identical([1, 2], [2, 1])


def test_chain_helpers():
    labels = np.array([0, 0, 1, 2, 4, 4], np.int32)
    assert follow_to_root(labels).tolist() == [0, 0, 0, 0, 4, 4]
    assert longest_chain(labels) == 3
    assert reduction_bound(22, 2) == 3
    assert reduction_bound(27, 2) == 3
    assert reduction_bound(28, 2) == 4
    assert reduction_bound(1, 6) == 0


def test_sequential_watershed_visit_order_independent():
    rng = np.random.default_rng(4)
    img = rng.integers(0, 3, (9, 13)).astype(np.uint8)
    a = sequential_watershed(img)
    for seed in range(5):
        assert labels_identical(a, sequential_watershed(img, visit_seed=seed))


def test_boundary_min_heights_example():
    img = np.array([75, 89, 89, 81], np.uint8)
    labels = np.array([0, 0, 3, 3])
    assert boundary_min_heights(img, labels, LINE) == {0: 89, 3: 89}
