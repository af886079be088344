"""
Tests for gradient subspace distance
"""

import numpy as np
import pytest
from pydantic import ValidationError

import src.gsd
from src.errors import BadK, ConfigError, DimMismatch
from src.gsd import (
    GsdReport,
    gsd,
    gsd_from_gradients,
    gsd_trajectory,
    lemma1_terms,
    rank_publics,
)
from src.linalg import random_subspace, top_k_svd
from src.models import Batch, ModelKind, ModelParams, ModelSpec, SgdConfig, init_model
from src.synth import ShiftKind, ShiftSpec, TaskSpec, make_shifted_public, make_task
from tests.oracles import brute_force_distance, top_right_vectors


def rotation_towards(v: np.ndarray, w: np.ndarray, phi: float) -> np.ndarray:
    """Rotation by phi in the plane of orthonormal v, w"""
    p = v.size
    return (
        np.eye(p)
        + (np.cos(phi) - 1.0) * (np.outer(v, v) + np.outer(w, w))
        + np.sin(phi) * (np.outer(w, v) - np.outer(v, w))
    )


class TestGsdFromGradients:
    """Test the distance on raw gradient matrices"""

    def test_identical_matrices(self):
        """Test identical matrices"""
        G = np.random.default_rng(0).standard_normal((20, 8))
        report = gsd_from_gradients(G, G, 3)
        assert report.distance_raw < 1e-10
        assert np.allclose(report.angles, 0.0, atol=1e-7)

    def test_matches_brute_force(self):
        """Test matches brute force"""
        rng = np.random.default_rng(1)
        for _ in range(20):
            G_priv = rng.standard_normal((15, 10))
            G_pub = rng.standard_normal((12, 10))
            report = gsd_from_gradients(G_priv, G_pub, 3)
            expected = brute_force_distance(
                top_right_vectors(G_priv, 3), top_right_vectors(G_pub, 3)
            )
            assert report.distance_raw == pytest.approx(expected, abs=1e-8)

    def test_rotation_gives_sine(self):
        """Test rotation gives sine"""
        rng = np.random.default_rng(2)
        G = rng.standard_normal((30, 6))
        v = top_k_svd(G, 1).right.basis[:, 0]
        w = rng.standard_normal(6)
        w -= (w @ v) * v
        w /= np.linalg.norm(w)
        for phi in [0.1, 0.5, 1.2]:
            R = rotation_towards(v, w, phi)
            report = gsd_from_gradients(G, G @ R.T, 1)
            assert report.distance_raw == pytest.approx(np.sin(phi), abs=1e-9)

    def test_row_scaling_and_order_do_not_matter(self):
        """Test row scaling and order do not matter"""
        rng = np.random.default_rng(3)
        G_priv = rng.standard_normal((10, 7))
        G_pub = rng.standard_normal((9, 7))
        base = gsd_from_gradients(G_priv, G_pub, 2).distance_raw
        moved = gsd_from_gradients(3.0 * G_priv, G_pub[rng.permutation(9)], 2).distance_raw
        assert moved == pytest.approx(base, abs=1e-9)

    def test_report_fields(self):
        """Test report fields"""
        rng = np.random.default_rng(4)
        report = gsd_from_gradients(rng.standard_normal((6, 5)), rng.standard_normal((4, 5)), 2)
        assert (report.m_priv, report.m_pub, report.p, report.k) == (6, 4, 5, 2)
        assert len(report.priv_singular_values) == 5
        assert len(report.pub_singular_values) == 4
        assert report.distance_normalized == pytest.approx(report.distance_raw / np.sqrt(2))
        assert 0.0 <= report.distance_normalized <= 1.0
        assert report.distance() == report.distance_normalized
        assert report.distance(raw=True) == report.distance_raw

    @pytest.mark.parametrize("k", [0, 5])
    def test_bad_k(self, k):
        """Test bad k"""
        rng = np.random.default_rng(5)
        with pytest.raises(BadK):
            gsd_from_gradients(rng.standard_normal((4, 6)), rng.standard_normal((8, 6)), k)

    def test_column_mismatch(self):
        """Test column mismatch"""
        with pytest.raises(DimMismatch):
            gsd_from_gradients(np.ones((3, 4)), np.ones((3, 5)), 1)

    def test_inconsistent_report_rejected(self):
        """Test inconsistent report rejected"""
        with pytest.raises(ValidationError):
            GsdReport(k=2, angles=[0.1, 0.2], distance_raw=1.0, distance_normalized=1.0,
                      m_priv=2, m_pub=2, p=3)


class TestGsd:
    """Test the distance between batches under a model"""

    def test_orthogonal_gradients(self):
        """Test orthogonal gradients"""
        spec = ModelSpec(kind=ModelKind.LINEAR_REGRESSION, input_dim=2)
        model = ModelParams(spec=spec, theta=np.zeros(3))
        priv = Batch(features=[[1.0, 0.0]], labels=[1.0])
        pub = Batch(features=[[-1.0, 0.0]], labels=[1.0])
        report = gsd(priv, pub, model, k=1)
        assert report.distance_raw == pytest.approx(1.0)
        assert report.angles[0] == pytest.approx(np.pi / 2)

    def test_same_batch(self):
        """Test same batch"""
        ds = make_task(TaskSpec(input_dim=4, n_train=50, n_test=10, n_public=10))
        model = init_model(ModelSpec(kind=ModelKind.LOGISTIC_REGRESSION, input_dim=4), 0)
        report = gsd(ds.train, ds.train, model, k=3)
        assert report.distance_raw < 1e-8
        assert report.p == 5

    def test_symmetric_in_batches(self):
        """Test swapping the private and public batch leaves the distance unchanged"""
        ds = make_task(TaskSpec(input_dim=5, num_classes=3, n_train=80, n_test=10, n_public=60, seed=2))
        model = init_model(ModelSpec(kind=ModelKind.SOFTMAX_REGRESSION, input_dim=5, num_classes=3), 1)
        forward = gsd(ds.train, ds.public, model, k=3).distance_raw
        backward = gsd(ds.public, ds.train, model, k=3).distance_raw
        assert forward == pytest.approx(backward, abs=1e-9)

    def test_random_labels_are_seeded(self):
        """Test random labels are seeded"""
        ds = make_task(TaskSpec(input_dim=4, num_classes=3, n_train=40, n_test=10, n_public=40))
        model = init_model(
            ModelSpec(kind=ModelKind.SOFTMAX_REGRESSION, input_dim=4, num_classes=3), 0
        )
        a = gsd(ds.train, ds.public, model, k=2, random_label=True, seed=7)
        b = gsd(ds.train, ds.public, model, k=2, random_label=True, seed=7)
        assert a.distance_raw == b.distance_raw

    def test_monotone_in_rotation(self):
        """Larger rotations of the public data give larger median distances"""
        spec = ModelSpec(kind=ModelKind.LOGISTIC_REGRESSION, input_dim=6)
        angles = [0.0, np.pi / 12, np.pi / 6, np.pi / 4, np.pi / 3]
        medians = []
        for angle in angles:
            distances = []
            for seed in range(10):
                ds = make_task(TaskSpec(input_dim=6, n_train=300, n_test=10, n_public=300,
                                        margin=4.0, noise=0.3, seed=seed))
                shifted = make_shifted_public(ds, ShiftSpec(kind=ShiftKind.ROTATION, magnitude=angle), seed)
                model = init_model(spec, seed)
                distances.append(gsd(ds.train, shifted.public, model, k=2).distance_raw)
            medians.append(np.median(distances))
        assert np.all(np.diff(medians) >= 0)
        assert medians[0] < medians[-1]


class TestLemma1Terms:
    """Test the reconstruction error bound"""

    def test_bound_holds(self):
        """Test bound holds"""
        rng = np.random.default_rng(6)
        for _ in range(200):
            m, p = rng.integers(1, 12), rng.integers(2, 10)
            k = int(rng.integers(1, p + 1))
            G = rng.standard_normal((m, p)) * rng.uniform(0.1, 5.0, size=p)
            terms = lemma1_terms(G, random_subspace(int(p), k, rng))
            assert terms.reconstruction_error <= terms.bound + 1e-9
            assert terms.slack >= -1e-9

    def test_own_subspace_is_tight(self):
        """Test own subspace is tight"""
        rng = np.random.default_rng(7)
        G = rng.standard_normal((20, 8))
        V = top_k_svd(G, 3).right
        terms = lemma1_terms(G, V)
        assert terms.gsd < 1e-8
        assert terms.reconstruction_error == pytest.approx(terms.s_k1, abs=1e-9)

    def test_fewer_rows_than_k(self):
        """Test fewer rows than k"""
        rng = np.random.default_rng(8)
        G = rng.standard_normal((1, 5))
        terms = lemma1_terms(G, random_subspace(5, 3, rng))
        assert terms.s_k1 == 0.0
        assert terms.reconstruction_error <= terms.bound + 1e-9

    def test_dimension_mismatch(self):
        """Test dimension mismatch"""
        with pytest.raises(DimMismatch):
            lemma1_terms(np.ones((3, 4)), random_subspace(5, 2, np.random.default_rng(0)))


class TestRankPublics:
    """Test public dataset ranking"""

    def report(self, distance: float) -> GsdReport:
        return GsdReport(k=1, angles=[np.arcsin(distance)], distance_raw=distance,
                         distance_normalized=distance, m_priv=1, m_pub=1, p=2)

    def test_ascending(self):
        """Test ascending"""
        ranked = rank_publics([("far", self.report(0.9)), ("near", self.report(0.1)),
                               ("mid", self.report(0.5))])
        assert [r.name for r in ranked] == ["near", "mid", "far"]
        assert [r.rank for r in ranked] == [1, 2, 3]
        assert not any(r.tied for r in ranked)

    def test_ties_are_flagged_and_ordered_by_name(self):
        """Test ties are flagged and ordered by name"""
        ranked = rank_publics([("b", self.report(0.3)), ("a", self.report(0.3)),
                               ("c", self.report(0.8))])
        assert [r.name for r in ranked] == ["a", "b", "c"]
        assert [r.tied for r in ranked] == [True, True, False]

    def test_near_ties_are_ordered_by_name(self):
        """Test distances within the tie tolerance rank by name"""
        ranked = rank_publics([("b", self.report(0.3)), ("a", self.report(0.3 + 1e-13)),
                               ("c", self.report(0.3 + 1e-3))])
        assert [r.name for r in ranked] == ["a", "b", "c"]
        assert [r.tied for r in ranked] == [True, True, False]

    def test_empty(self):
        """Test empty"""
        with pytest.raises(ConfigError):
            rank_publics([])


class TestTrajectory:
    """Test distance tracking along SGD"""

    def setup_method(self):
        spec = TaskSpec(input_dim=4, n_train=200, n_test=10, n_public=60, seed=3)
        self.ds = make_task(spec)
        rotated = make_shifted_public(self.ds, ShiftSpec(kind=ShiftKind.ROTATION, magnitude=np.pi / 2), 3)
        self.publics = [self.ds.public, rotated.public]
        self.model0 = init_model(ModelSpec(kind=ModelKind.LOGISTIC_REGRESSION, input_dim=4), 0)

    def test_steps_and_rankings(self):
        """Test steps and rankings"""
        sgd = SgdConfig(learning_rate=0.1, steps=5, batch_size=50)
        report = gsd_trajectory(self.ds, self.publics, self.model0, 2, sgd, threads=2)
        assert len(report.steps) == 5
        assert [s.iteration for s in report.steps] == list(range(5))
        for step in report.steps:
            assert len(step.reports) == 2
            assert sorted(step.ranking) == [0, 1]
        assert 0.0 <= report.order_agreement <= 1.0
        # the first step always agrees with itself
        assert report.order_agreement >= 1 / 5

    def test_is_deterministic(self):
        """Test is deterministic"""
        sgd = SgdConfig(learning_rate=0.1, steps=3, batch_size=50, seed=4)
        a = gsd_trajectory(self.ds, self.publics, self.model0, 2, sgd, threads=1)
        b = gsd_trajectory(self.ds, self.publics, self.model0, 2, sgd, threads=3)
        assert a.model_dump() == b.model_dump()

    def test_reversed_publics_give_same_agreement(self):
        """Test listing the publics in reverse order keeps the agreement"""
        sgd = SgdConfig(learning_rate=0.1, steps=6, batch_size=50, seed=5)
        forward = gsd_trajectory(self.ds, self.publics, self.model0, 2, sgd, threads=1)
        backward = gsd_trajectory(self.ds, self.publics[::-1], self.model0, 2, sgd, threads=1)
        assert forward.order_agreement == backward.order_agreement
        assert [s.ranking for s in backward.steps] == [[1 - i for i in s.ranking] for s in forward.steps]

    def test_steps_through_shared_sgd(self, mocker):
        """Test every iteration takes one shared SGD step"""
        step = mocker.spy(src.gsd, "sgd_step")
        gsd_trajectory(self.ds, self.publics, self.model0, 2,
                       SgdConfig(learning_rate=0.1, steps=4, batch_size=50), threads=1)
        assert step.call_count == 4

    def test_needs_two_publics(self):
        """Test needs two publics"""
        with pytest.raises(ConfigError):
            gsd_trajectory(self.ds, self.publics[:1], self.model0, 2, SgdConfig(steps=1))

    def test_k_above_batch(self):
        """Test k above batch"""
        with pytest.raises(BadK):
            gsd_trajectory(self.ds, self.publics, self.model0, 4,
                           SgdConfig(steps=1, batch_size=3), threads=1)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
