import numpy as np
import pytest
from sklearn.cluster import AffinityPropagation

from csdkit.affinity import ClusterAssignment, cluster_ap, similarity_matrix
from csdkit.textmodel import EmbeddingMatrix

from conftest import unit_rows


def blob_rows(rng, n_blobs=3, per_blob=6, dim=16, spread=0.03):
    centers = np.eye(n_blobs, dim)
    rows = []
    for c in centers:
        for _ in range(per_blob):
            v = c + spread * rng.normal(size=dim)
            rows.append(v / np.linalg.norm(v))
    return np.array(rows)


class TestSimilarityMatrix:
    def test_identical_rows_off_diagonal_zero(self):
        emb = EmbeddingMatrix("a", np.tile([1.0, 0.0], (4, 1)))
        s = similarity_matrix(emb)
        off = s[~np.eye(4, dtype=bool)]
        assert np.all(off == 0.0)

    def test_orthogonal_pair(self):
        emb = EmbeddingMatrix("a", np.array([[1.0, 0.0], [0.0, 1.0]]))
        s = similarity_matrix(emb)
        assert abs(s[0, 1] - (-2.0)) < 1e-12
        assert abs(s[1, 0] - (-2.0)) < 1e-12

    def test_four_point_fixture_matches_hand_computation(self):
        rows = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [1.0, 0.0]])
        emb = EmbeddingMatrix("a", rows)
        s = similarity_matrix(emb)
        # squared distances: orthogonal -> 2, antipodal -> 4, identical -> 0
        assert abs(s[0, 1] + 2.0) < 1e-12
        assert abs(s[0, 2] + 4.0) < 1e-12
        assert s[0, 3] == 0.0
        off = [-2.0, -4.0, 0.0, -2.0, -2.0, -2.0, -4.0, 0.0, -2.0, -2.0, -2.0, -2.0]
        assert abs(s[0, 0] - np.median(off)) < 1e-12

    def test_diagonal_is_median_preference(self, rng):
        emb = EmbeddingMatrix("a", unit_rows(rng, 9, 5))
        s = similarity_matrix(emb)
        off = s[~np.eye(9, dtype=bool)]
        assert np.allclose(np.diag(s), np.median(off))


class TestClusterAp:
    def test_three_blobs_match_reference_implementation(self):
        # the reference injects eps-scale tie-breaking noise, so compare
        # the partitions rather than which blob member got picked exemplar
        for seed in (7, 12345, 901):
            rows = blob_rows(np.random.default_rng(seed))
            s = similarity_matrix(EmbeddingMatrix("a", rows))
            mine = cluster_ap(s)
            ref = AffinityPropagation(
                affinity="precomputed",
                damping=0.5,
                max_iter=200,
                convergence_iter=15,
                random_state=0,
            ).fit(s)
            assert mine.m == len(ref.cluster_centers_indices_) == 3
            mine_parts = {
                frozenset(np.flatnonzero(np.array(mine.labels) == c)) for c in range(3)
            }
            ref_parts = {frozenset(np.flatnonzero(ref.labels_ == c)) for c in range(3)}
            assert mine_parts == ref_parts
            # exemplars inside their own blob
            for e in mine.exemplars:
                blob = (e - 1) // 6
                members = mine.members(mine.labels[e - 1])
                assert all((m - 1) // 6 == blob for m in members)

    def test_single_point(self):
        out = cluster_ap(np.array([[0.0]]))
        assert out.m == 1 and out.exemplars == (1,) and out.labels == (0,)

    def test_identical_points_single_cluster(self):
        emb = EmbeddingMatrix("a", np.tile([0.0, 1.0], (6, 1)))
        out = cluster_ap(similarity_matrix(emb))
        assert out.m == 1
        assert out.fallback

    def test_two_point_constant_matrix_hits_documented_fallback(self):
        # With median preference the 2-point similarity matrix is constant,
        # message passing is shift-invariant, and no exemplar can emerge:
        # the documented fallback (single flagged cluster) applies.
        emb = EmbeddingMatrix("a", np.array([[1.0, 0.0], [0.0, 1.0]]))
        out = cluster_ap(similarity_matrix(emb))
        assert out.m == 1
        assert out.fallback

    def test_assignment_exactness(self, rng):
        rows = blob_rows(rng, n_blobs=4, per_blob=5)
        s = similarity_matrix(EmbeddingMatrix("a", rows))
        out = cluster_ap(s)
        ex = [e - 1 for e in out.exemplars]
        for i, lab in enumerate(out.labels):
            best = max(s[i, e] for e in ex)
            assert s[i, ex[lab]] >= best - 1e-12

    def test_permutation_stability(self, rng):
        rows = blob_rows(rng)
        s = similarity_matrix(EmbeddingMatrix("a", rows))
        base = cluster_ap(s)
        perm = rng.permutation(rows.shape[0])
        s_p = s[np.ix_(perm, perm)]
        permuted = cluster_ap(s_p)
        assert permuted.m == base.m
        # same partition up to relabeling; permuted point i is original perm[i]
        base_sets = {
            frozenset(int(i) for i in np.flatnonzero(np.array(base.labels) == c))
            for c in range(base.m)
        }
        perm_sets = {
            frozenset(int(perm[i]) for i in np.flatnonzero(np.array(permuted.labels) == c))
            for c in range(permuted.m)
        }
        assert base_sets == perm_sets

    def test_messages_stay_finite(self, rng):
        for trial in range(5):
            rows = unit_rows(np.random.default_rng(trial), 12, 6)
            s = similarity_matrix(EmbeddingMatrix("a", rows))
            out = cluster_ap(s)
            assert out.m >= 1
            assert sum(out.sizes) == 12

    def test_damping_validation(self):
        with pytest.raises(ValueError, match="damping"):
            cluster_ap(np.zeros((3, 3)), damping=0.2)

    def test_nonsquare_rejected(self):
        with pytest.raises(ValueError, match="square"):
            cluster_ap(np.zeros((3, 2)))


class TestClusterAssignment:
    def test_sizes_and_members(self):
        ca = ClusterAssignment(exemplars=(1, 3), labels=(0, 0, 1, 1), converged=True)
        assert ca.sizes == (2, 2)
        assert ca.members(1) == [3, 4]

    def test_exemplar_must_own_its_cluster(self):
        with pytest.raises(ValueError):
            ClusterAssignment(exemplars=(1, 2), labels=(0, 0, 1), converged=True)
