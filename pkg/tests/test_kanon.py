import numpy as np
import pytest

from privforget import accel
from privforget.data import (
    AttributeSchema,
    DataError,
    Provenance,
    TabularDataset,
    encode,
)
from privforget.kanon import (
    Clustering,
    centroid_replace,
    k_anonymize,
    mdav,
    mdav_labels,
    qi_feature_matrix,
    verify_k_anonymity,
)

BACKENDS = ["numpy"] + (["numba"] if accel.NUMBA_ENABLED else [])


def cluster_sets(clustering):
    return sorted(tuple(sorted(c.tolist())) for c in clustering.clusters)


@pytest.mark.parametrize("backend", BACKENDS)
def test_hand_worked_1d_example(backend):
    # points 0,1 | 10,11 | 20,21 with k=2.
    # centroid 10.5; rows 0 and 5 tie for farthest, lowest index wins -> row 0
    # seeds cluster {0,1}; farthest from row 0 is row 5, seeding {4,5};
    # the remaining pair {2,3} becomes the final cluster.
    x = np.array([[0.0], [1.0], [10.0], [11.0], [20.0], [21.0]])
    got = mdav(x, 2, backend=backend)
    assert cluster_sets(got) == [(0, 1), (2, 3), (4, 5)]


@pytest.mark.parametrize("backend", BACKENDS)
def test_cluster_size_edge_counts(backend):
    rng = np.random.default_rng(5)
    for k in (2, 3, 5):
        for n, expected_sizes in (
            (k, [k]),
            (2 * k, [k, k]),
            (3 * k + 1, sorted([k, k, k + 1])),
        ):
            x = rng.integers(0, 100, size=(n, 3)).astype(float)
            got = mdav(x, k, backend=backend)
            assert sorted(len(c) for c in got.clusters) == sorted(expected_sizes)


@pytest.mark.parametrize("backend", BACKENDS)
def test_partition_properties_random(backend):
    rng = np.random.default_rng(17)
    for trial in range(25):
        k = int(rng.choice([2, 3, 5, 10]))
        n = int(rng.integers(k, 400))
        d = int(rng.integers(1, 8))
        x = rng.normal(size=(n, d))
        got = mdav(x, k, backend=backend)
        sizes = [len(c) for c in got.clusters]
        assert all(k <= s <= 2 * k - 1 for s in sizes)
        all_idx = np.concatenate(got.clusters)
        assert len(all_idx) == n and len(np.unique(all_idx)) == n


@pytest.mark.skipif(not accel.NUMBA_ENABLED, reason="numba unavailable or disabled")
def test_backends_agree_on_exact_data():
    rng = np.random.default_rng(3)
    for trial in range(10):
        k = int(rng.choice([2, 3, 7]))
        n = int(rng.integers(3 * k, 300))
        x = rng.integers(0, 40, size=(n, 5)).astype(float)
        la, na = mdav_labels(x, k, backend="numba")
        lb, nb = mdav_labels(x, k, backend="numpy")
        assert na == nb
        assert np.array_equal(la, lb)


def test_mdav_input_validation():
    x = np.zeros((5, 2))
    with pytest.raises(DataError, match="k >= 2"):
        mdav(x, 1)
    with pytest.raises(DataError, match="at least k"):
        mdav(np.zeros((3, 2)), 4)
    with pytest.raises(DataError, match="2-d"):
        mdav(np.zeros(5), 2)


def test_clustering_invariants_enforced():
    with pytest.raises(DataError, match="size"):
        Clustering(4, 2, (np.array([0]), np.array([1, 2, 3])))
    with pytest.raises(DataError, match="overlap"):
        Clustering(4, 2, (np.array([0, 1]), np.array([1, 2, 3])))
    with pytest.raises(DataError, match="cover"):
        Clustering(5, 2, (np.array([0, 1]), np.array([2, 3])))


SCHEMA = (
    AttributeSchema("a", "numeric", "quasi_identifier", observed_range=(0.0, 8.0)),
    AttributeSchema("b", "numeric", "other", observed_range=(0.0, 8.0)),
    AttributeSchema("c", "categorical", "quasi_identifier", categories=("p", "q", "r")),
    AttributeSchema("label", "categorical", "class", categories=("n", "y")),
)


def test_centroid_replace_mean_mode_and_tie():
    rows = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [2.0, 2.0, 0.0, 1.0],
            [4.0, 3.0, 1.0, 0.0],
            [8.0, 4.0, 1.0, 1.0],
        ]
    )
    ds = TabularDataset(SCHEMA, rows, Provenance.raw())
    clustering = Clustering(4, 2, (np.array([0, 1]), np.array([2, 3])))
    out = centroid_replace(ds, clustering)
    # numeric QI becomes the cluster mean
    assert out.rows[:, 0].tolist() == [1.0, 1.0, 6.0, 6.0]
    # non-QI numeric and the class stay untouched
    assert np.array_equal(out.rows[:, 1], rows[:, 1])
    assert np.array_equal(out.rows[:, 3], rows[:, 3])
    assert out.provenance.kind == "k_anonymized" and out.provenance.param == 2.0

    # categorical mode with a tie: cluster {0,1} has categories {0,0} -> 0;
    # make a tied cluster and check the lowest category index wins
    rows2 = np.array(
        [
            [0.0, 0.0, 2.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 2.0, 0.0],
        ]
    )
    ds2 = TabularDataset(SCHEMA, rows2, Provenance.raw())
    out2 = centroid_replace(ds2, Clustering(4, 4, (np.arange(4),)))
    assert out2.rows[:, 2].tolist() == [1.0, 1.0, 1.0, 1.0]


def test_verify_k_anonymity_pass_and_fail():
    rows = np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 5.0, 0.0, 1.0],
            [1.0, 0.0, 0.0, 0.0],
            [2.0, 0.0, 1.0, 1.0],
        ]
    )
    ds = TabularDataset(SCHEMA, rows, Provenance.raw())
    report = verify_k_anonymity(ds, 2)
    assert not report.ok
    assert report.n_groups == 2
    assert report.min_group_size == 1
    assert report.violating_groups == 1

    ok = verify_k_anonymity(ds, 1)
    assert ok.ok

    empty = TabularDataset(SCHEMA, np.empty((0, 4)), Provenance.raw())
    assert verify_k_anonymity(empty, 5).ok


def test_k_anonymize_end_to_end(small_dataset):
    for k in (2, 3, 7):
        out = k_anonymize(small_dataset, k)
        report = verify_k_anonymity(out, k)
        assert report.ok, f"k={k}: {report}"
        assert out.n_rows == small_dataset.n_rows
        # class column is never modified
        ci = small_dataset.class_index
        assert np.array_equal(out.rows[:, ci], small_dataset.rows[:, ci])


def test_clusters_are_tighter_than_random(small_dataset):
    em = encode(small_dataset)
    qi = qi_feature_matrix(em, small_dataset)
    k = 5
    clustering = mdav(qi, k)

    def sse(clusters):
        total = 0.0
        for c in clusters:
            pts = qi[c]
            total += ((pts - pts.mean(axis=0)) ** 2).sum()
        return total

    rng = np.random.default_rng(0)
    perm = rng.permutation(small_dataset.n_rows)
    random_clusters = [c[np.argsort(c)] for c in np.array_split(perm, len(clustering.clusters))]
    assert sse(clustering.clusters) < sse(random_clusters)


def test_mdav_deterministic(small_dataset):
    em = encode(small_dataset)
    qi = qi_feature_matrix(em, small_dataset)
    a = mdav(qi, 4)
    b = mdav(qi, 4)
    assert cluster_sets(a) == cluster_sets(b)


def test_qi_feature_matrix_requires_qi():
    schema = (
        AttributeSchema("x", "numeric", "other", observed_range=(0.0, 1.0)),
        AttributeSchema("label", "categorical", "class", categories=("a", "b")),
    )
    ds = TabularDataset(schema, np.array([[0.5, 0.0]]), Provenance.raw())
    with pytest.raises(DataError, match="quasi-identifier"):
        qi_feature_matrix(encode(ds), ds)
