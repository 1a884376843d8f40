"""Whitening, k-means, and NMI against independent oracles."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from terratex.cluster import ClusterState, apply_whiten, fit_whiten, kmeans, nmi

RNG = np.random.default_rng(23)


# -- whitening ---------------------------------------------------------

def test_whiten_identity_covariance_preserved():
    x = RNG.normal(size=(400, 6))
    t = fit_whiten(x, n_pca=6)
    projected = (x - t.mean) @ t.projection.T
    cov = np.cov(projected, rowvar=False)
    assert np.allclose(cov, np.eye(t.n_pca), atol=1e-6)


def test_whiten_rank_one_cloud_keeps_one_direction():
    direction = np.array([1.0, 2.0, -1.0, 0.5])
    x = np.outer(RNG.normal(size=50), direction)
    t = fit_whiten(x, n_pca=3)
    assert t.n_pca == 1


def test_whiten_matches_eigendecomposition_oracle():
    x = RNG.normal(size=(50, 8)) @ RNG.normal(size=(8, 8)) + RNG.normal(size=8)
    t = fit_whiten(x, n_pca=4)
    # oracle: eigendecomposition of the sample covariance
    cov = np.cov(x, rowvar=False)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:4]
    top_vecs = evecs[:, order]
    for i in range(4):
        row = t.projection[i] / np.linalg.norm(t.projection[i])
        cos = abs(row @ top_vecs[:, i])
        assert cos > 1 - 1e-8, f"direction {i} disagrees with eigenvector (cos={cos})"
    projected = (x - t.mean) @ t.projection.T
    assert np.allclose(np.cov(projected, rowvar=False), np.eye(4), atol=1e-8)


def test_whiten_requires_enough_samples():
    with pytest.raises(ValueError):
        fit_whiten(RNG.normal(size=(4, 8)), n_pca=4)


def test_apply_whiten_unit_norm_and_zero_case():
    x = RNG.normal(size=(40, 5))
    t = fit_whiten(x, n_pca=3)
    out = apply_whiten(t, x)
    norms = np.linalg.norm(out, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-6)
    assert np.allclose(apply_whiten(t, t.mean), 0.0)


def test_apply_whiten_scale_invariant_direction():
    x = RNG.normal(size=(40, 5))
    t = fit_whiten(x, n_pca=3)
    v = RNG.normal(size=5)
    a = apply_whiten(t, t.mean + v)
    b = apply_whiten(t, t.mean + 10.0 * v)
    assert np.allclose(a, b, atol=1e-9)


# -- kmeans ------------------------------------------------------------

def brute_force_inertia(points: np.ndarray, k: int) -> float:
    """Exhaustive search over all assignments with k non-empty clusters."""
    n = points.shape[0]
    best = np.inf
    for assign in itertools.product(range(k), repeat=n):
        if len(set(assign)) != k:
            continue
        total = 0.0
        arr = np.array(assign)
        for j in range(k):
            members = points[arr == j]
            centroid = members.mean(axis=0)
            total += ((members - centroid) ** 2).sum()
        best = min(best, total)
    return best


def test_kmeans_each_point_its_own_centroid():
    points = RNG.normal(size=(5, 3))
    state = kmeans(points, k=5, seed=1)
    assert state.inertia == pytest.approx(0.0, abs=1e-12)
    assert sorted(state.assignments.tolist()) == [0, 1, 2, 3, 4]


def test_kmeans_four_corners_matches_exhaustive_optimum():
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    state = kmeans(corners, k=2, seed=0)
    assert state.inertia == pytest.approx(brute_force_inertia(corners, 2), abs=1e-12)


def test_kmeans_duplicated_data_same_centroids():
    blob_a = RNG.normal(size=(6, 2)) * 0.1
    blob_b = RNG.normal(size=(6, 2)) * 0.1 + 10.0
    single = np.vstack([blob_a, blob_b])
    doubled = np.vstack([single, single])
    c1 = np.sort(kmeans(single, k=2, seed=3).centroids, axis=0)
    c2 = np.sort(kmeans(doubled, k=2, seed=3).centroids, axis=0)
    assert np.allclose(c1, c2, atol=1e-9)


def test_kmeans_rejects_k_larger_than_n():
    with pytest.raises(ValueError):
        kmeans(RNG.normal(size=(3, 2)), k=4)


def test_kmeans_deterministic_given_seed():
    points = RNG.normal(size=(60, 4))
    a = kmeans(points, k=5, seed=42)
    b = kmeans(points, k=5, seed=42)
    assert np.array_equal(a.centroids, b.centroids)
    assert np.array_equal(a.assignments, b.assignments)
    assert a.inertia == b.inertia


def test_kmeans_inertia_matches_recomputation_and_no_empty_clusters():
    points = np.vstack([RNG.normal(size=(20, 3)), RNG.normal(size=(20, 3)) + 5])
    state = kmeans(points, k=6, seed=7)
    recomputed = sum(
        ((points[state.assignments == j] - state.centroids[j]) ** 2).sum() for j in range(6)
    )
    assert state.inertia == pytest.approx(recomputed, rel=1e-6)
    assert np.bincount(state.assignments, minlength=6).min() >= 1


def test_kmeans_repairs_empty_clusters_on_duplicate_heavy_data():
    points = np.array([[0.0, 0.0]] * 5 + [[1.0, 1.0]] * 5)
    state = kmeans(points, k=4, seed=0)
    assert np.bincount(state.assignments, minlength=4).min() >= 1


def test_kmeans_monotone_inertia_on_random_instances():
    # the monotonicity assertion runs inside kmeans on every iteration
    for trial in range(100):
        rng = np.random.default_rng(trial)
        n = int(rng.integers(10, 60))
        d = int(rng.integers(2, 6))
        k = int(rng.integers(2, min(8, n)))
        kmeans(rng.normal(size=(n, d)), k=k, seed=trial)


# -- nmi ---------------------------------------------------------------

def test_nmi_identical_assignments():
    assert nmi([0, 0, 1, 1, 2], [0, 0, 1, 1, 2]) == pytest.approx(1.0)


def test_nmi_label_permutation():
    assert nmi([0, 0, 1, 1], [1, 1, 0, 0]) == pytest.approx(1.0)


def test_nmi_independent_partitions():
    # 2x2 contingency with all cells equal: mutual information is exactly 0
    assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0)


def test_nmi_zero_entropy_cases():
    assert nmi([0, 0, 0], [5, 5, 5]) == pytest.approx(1.0)
    assert nmi([0, 0, 0], [0, 1, 1]) == pytest.approx(0.0)
    assert nmi([3], [9]) == pytest.approx(1.0)


def test_nmi_length_mismatch():
    with pytest.raises(ValueError):
        nmi([0, 1], [0, 1, 2])


def test_nmi_against_contingency_oracle():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 4, size=200)
    b = rng.integers(0, 3, size=200)
    table = np.zeros((4, 3))
    for x, y in zip(a, b):
        table[x, y] += 1
    p = table / 200
    pa, pb = p.sum(axis=1), p.sum(axis=0)
    info = sum(
        p[i, j] * np.log(p[i, j] / (pa[i] * pb[j]))
        for i in range(4)
        for j in range(3)
        if p[i, j] > 0
    )
    ha = -sum(q * np.log(q) for q in pa if q > 0)
    hb = -sum(q * np.log(q) for q in pb if q > 0)
    assert nmi(a, b) == pytest.approx(info / np.sqrt(ha * hb), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.integers(0, 4), min_size=2, max_size=40),
    st.permutations(list(range(5))),
)
def test_nmi_symmetric_and_relabel_invariant(labels, perm):
    other = [(x * 7 + 1) % 3 for x in range(len(labels))]
    relabeled = [perm[v] for v in labels]
    assert nmi(labels, other) == pytest.approx(nmi(other, labels), abs=1e-12)
    assert nmi(labels, other) == pytest.approx(nmi(relabeled, other), abs=1e-12)
