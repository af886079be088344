"""
Tests for the privacy building blocks
"""

import logging
from decimal import Decimal, localcontext

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.integrate import quad
from scipy.stats import chisquare, kstest

import src.privacy
from src.errors import (
    ConfigError,
    DimMismatch,
    EmptyMatrix,
    NonSymmetric,
    PrivacyRangeWarning,
    ZeroGap,
)
from src.linalg import top_k_svd
from src.models import ModelKind, ModelSpec, init_model
from src.privacy import (
    MECHANISM,
    CloseApprox,
    DpPcaDiagnostics,
    PrivacyParams,
    bingham_sample,
    clip_rows,
    dp_gsd,
    dp_gsd_from_gradients,
    dp_pca,
    epsilon_effective,
    gep_noise_scale,
    pca_diagnostics,
    privacy_block,
    required_sample_size,
)
from src.synth import TaskSpec, make_task


def circle_moment(kappa: float) -> float:
    """E[x₁²] for the Bingham density ∝ exp(κ·x₁²) on the unit circle"""
    weight = lambda t: np.exp(kappa * np.cos(t) ** 2)
    numerator = quad(lambda t: np.cos(t) ** 2 * weight(t), 0, 2 * np.pi)[0]
    return numerator / quad(weight, 0, 2 * np.pi)[0]


def concentrated_gradients(m: int, p: int, seed: int) -> np.ndarray:
    """Rows mostly along e1 with a little isotropic noise"""
    rng = np.random.default_rng(seed)
    G = 0.05 * rng.standard_normal((m, p))
    G[:, 0] += np.where(rng.random(m) < 0.5, -0.8, 0.8)
    return G


def circle_bin_counts(kappa: float, n: int, bins: int) -> np.ndarray:
    """Expected angle-bin counts for n draws from ∝ exp(κ·cos²φ) on the unit circle"""
    weight = lambda t: np.exp(kappa * np.cos(t) ** 2)
    edges = np.linspace(0.0, 2 * np.pi, bins + 1)
    mass = np.array([quad(weight, a, b)[0] for a, b in zip(edges[:-1], edges[1:])])
    return n * mass / mass.sum()


def decimal_noise_scale(iterations: int, delta: str, epsilon: str) -> float:
    """2·sqrt(2T·ln(1/δ))/ε at 50 significant digits"""
    with localcontext() as ctx:
        ctx.prec = 50
        log_inv_delta = (1 / Decimal(delta)).ln()
        return float(2 * (2 * Decimal(iterations) * log_inv_delta).sqrt() / Decimal(epsilon))


def decimal_sample_size(top: str, gap: str, p: int, rho: str, eta: str, epsilon: str, c: str) -> float:
    """Closeness sample-size bound at 50 significant digits"""
    with localcontext() as ctx:
        ctx.prec = 50
        top, gap, rho, eta, epsilon, c = map(Decimal, (top, gap, rho, eta, epsilon, c))
        lead = p * c ** 2 / (epsilon * gap * (1 - (1 - rho ** 2).sqrt()))
        tail = 4 * (1 / eta).ln() / p + 2 * (8 * top / (rho ** 2 * gap)).ln()
        return float(lead * tail)


class TestClipRows:
    """Test per-row clipping"""

    def test_norms_bounded(self):
        """Test norms bounded"""
        G = np.random.default_rng(0).standard_normal((50, 6)) * 3
        clipped = clip_rows(G, 1.5)
        assert np.all(np.linalg.norm(clipped, axis=1) <= 1.5 + 1e-12)

    def test_short_rows_untouched(self):
        """Test short rows untouched"""
        G = np.array([[0.3, 0.4], [3.0, 4.0]])
        clipped = clip_rows(G, 1.0)
        assert np.allclose(clipped[0], [0.3, 0.4])
        assert np.allclose(clipped[1], [0.6, 0.8])

    def test_idempotent(self):
        """Test clipping twice changes nothing"""
        G = np.random.default_rng(1).standard_normal((40, 5)) * 2
        once = clip_rows(G, 1.0)
        assert np.allclose(clip_rows(once, 1.0), once, atol=1e-15)

    @pytest.mark.parametrize("c", [0.0, -1.0])
    def test_non_positive_clip(self, c):
        """Test non positive clip"""
        with pytest.raises(ConfigError):
            clip_rows(np.ones((2, 2)), c)


class TestBinghamSample:
    """Test the Bingham sampler"""

    def test_unit_vectors(self):
        """Test unit vectors"""
        A = np.diag([3.0, 1.0, 0.0, -2.0])
        draws = bingham_sample(A, seed=0, size=100)
        assert draws.shape == (100, 4)
        assert np.allclose(np.linalg.norm(draws, axis=1), 1.0)
        assert bingham_sample(A, seed=0).shape == (4,)

    def test_seeded(self):
        """Test seeded"""
        A = np.diag([2.0, 0.0, 0.0])
        assert np.array_equal(bingham_sample(A, 5, 10), bingham_sample(A, 5, 10))

    def test_concentrates_on_top_eigenvector(self):
        """Test concentrates on top eigenvector"""
        A = np.diag([200.0, 0.0, 0.0])
        draws = bingham_sample(A, seed=1, size=500)
        assert np.mean(draws[:, 0] ** 2) > 0.97

    def test_rotated_concentration(self):
        """Test rotated concentration"""
        rng = np.random.default_rng(2)
        Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        A = Q @ np.diag([300.0, 0.0, 0.0, 0.0, 0.0]) @ Q.T
        draws = bingham_sample(A, seed=3, size=200)
        assert np.mean((draws @ Q[:, 0]) ** 2) > 0.97

    def test_zero_matrix_is_uniform(self):
        """Test zero matrix is uniform"""
        draws = bingham_sample(np.zeros((3, 3)), seed=4, size=6000)
        assert np.allclose(np.mean(draws ** 2, axis=0), 1 / 3, atol=0.03)

    def test_matches_circle_moment(self):
        """Test matches circle moment"""
        kappa = 2.0
        draws = bingham_sample(np.diag([kappa, 0.0]), seed=5, size=20000)
        assert np.mean(draws[:, 0] ** 2) == pytest.approx(circle_moment(kappa), abs=0.015)

    @pytest.mark.parametrize("kappa", [0.0, 1.0, 5.0])
    def test_circle_goodness_of_fit(self, kappa):
        """Test angle histograms on the circle against the exact density"""
        n, bins = 100_000, 36
        draws = bingham_sample(np.diag([kappa, 0.0]), seed=20 + int(kappa), size=n)
        angles = np.mod(np.arctan2(draws[:, 1], draws[:, 0]), 2 * np.pi)
        observed, _ = np.histogram(angles, bins=bins, range=(0.0, 2 * np.pi))
        assert chisquare(observed, circle_bin_counts(kappa, n, bins)).pvalue > 0.001

    def test_zero_matrix_first_coordinate_is_uniform(self):
        """Test the first coordinate on the 2-sphere is U(-1, 1) when A = 0"""
        draws = bingham_sample(np.zeros((3, 3)), seed=26, size=100_000)
        assert kstest(draws[:, 0], "uniform", args=(-1.0, 2.0)).pvalue > 0.001

    def test_one_dimensional(self):
        """Test one dimensional"""
        draws = bingham_sample([[3.0]], seed=6, size=200)
        assert set(np.unique(draws)) == {-1.0, 1.0}

    def test_gibbs_fallback(self, mocker):
        """Low acceptance switches to Gibbs updates with the same target"""
        mocker.patch("src.privacy.MIN_ACCEPTANCE", 1.1)
        mocker.patch("src.privacy.MIN_PROPOSALS", 1)
        mocker.patch("src.privacy.MAX_PROPOSAL_BATCH", 64)
        gibbs = mocker.spy(src.privacy, "_bingham_gibbs")
        kappa = 2.0

        draws = bingham_sample(np.diag([kappa, 0.0]), seed=7, size=4000)

        assert gibbs.call_count == 1
        assert draws.shape == (4000, 2)
        assert np.mean(draws[:, 0] ** 2) == pytest.approx(circle_moment(kappa), abs=0.03)

    def test_non_symmetric(self):
        """Test non symmetric"""
        with pytest.raises(NonSymmetric):
            bingham_sample([[1.0, 2.0], [0.0, 1.0]], seed=0)

    def test_non_square(self):
        """Test non square"""
        with pytest.raises(DimMismatch):
            bingham_sample(np.ones((2, 3)), seed=0)


class TestDpPca:
    """Test private top eigenvector extraction"""

    def test_unit_basis(self):
        """Test unit basis"""
        G = clip_rows(np.random.default_rng(8).standard_normal((30, 4)), 1.0)
        V = dp_pca(G, epsilon=1.0, c=1.0, seed=0)
        assert V.k == 1 and V.p == 4
        assert np.linalg.norm(V.basis) == pytest.approx(1.0)

    def test_large_budget_finds_top_direction(self):
        """Test large budget finds top direction"""
        G = clip_rows(concentrated_gradients(1000, 6, 9), 1.0)
        v = dp_pca(G, epsilon=5.0, c=1.0, seed=1).basis[:, 0]
        top = top_k_svd(G, 1).right.basis[:, 0]
        assert abs(v @ top) > 0.99

    def test_vanishing_budget_is_uniform(self):
        """Test the released direction is uniform as epsilon goes to zero"""
        G = clip_rows(concentrated_gradients(200, 3, 13), 1.0)
        rng = np.random.default_rng(14)
        draws = np.array([dp_pca(G, epsilon=1e-12, c=1.0, seed=rng).basis[:, 0] for _ in range(3000)])
        assert np.allclose(np.mean(draws ** 2, axis=0), 1 / 3, atol=0.03)

    def test_empty(self):
        """Test empty"""
        with pytest.raises(EmptyMatrix):
            dp_pca(np.zeros((0, 3)), epsilon=1.0, c=1.0, seed=0)

    def test_bad_epsilon(self):
        """Test bad epsilon"""
        with pytest.raises(ConfigError):
            dp_pca(np.ones((2, 2)) * 0.1, epsilon=0.0, c=1.0, seed=0)

    def test_warns_on_unclipped_rows(self, caplog):
        """Test warns on unclipped rows"""
        with caplog.at_level(logging.WARNING, logger="src.privacy"):
            dp_pca(np.array([[3.0, 0.0], [0.0, 0.1]]), epsilon=1.0, c=1.0, seed=0)
        assert any("clip norm" in r.getMessage() for r in caplog.records)


class TestSampleSize:
    """Test diagnostics and the sample-size bound"""

    def test_diagnostics(self):
        """Test diagnostics"""
        G = np.array([[np.sqrt(2.0), 0.0], [0.0, 1.0]])
        diag = pca_diagnostics(G)
        assert diag.top_eigenvalue == pytest.approx(1.0)
        assert diag.eigengap == pytest.approx(0.5)
        assert (diag.p, diag.m) == (2, 2)

    def test_known_value(self):
        """Test known value"""
        diag = DpPcaDiagnostics(top_eigenvalue=1.0, eigengap=0.5, p=20, m=1)
        close = CloseApprox(rho=0.5, eta=0.1)
        expected = decimal_sample_size("1.0", "0.5", 20, "0.5", "0.1", "1.0", "1.0")
        assert expected == pytest.approx(2620.88, rel=1e-5)
        assert required_sample_size(diag, close, epsilon=1.0, c=1.0) == pytest.approx(expected, rel=1e-12)
        assert diag.required_m(close, 1.0, 1.0) == required_sample_size(diag, close, 1.0, 1.0)

    def test_scales_inversely_with_epsilon(self):
        """Test scales inversely with epsilon"""
        diag = DpPcaDiagnostics(top_eigenvalue=0.8, eigengap=0.3, p=10, m=1)
        close = CloseApprox(rho=0.3, eta=0.05)
        assert required_sample_size(diag, close, 2.0, 1.0) == pytest.approx(
            required_sample_size(diag, close, 1.0, 1.0) / 2
        )

    def test_zero_gap(self):
        """Test zero gap"""
        diag = DpPcaDiagnostics(top_eigenvalue=1.0, eigengap=0.0, p=3, m=10)
        with pytest.raises(ZeroGap):
            required_sample_size(diag, CloseApprox(rho=0.5, eta=0.1), 1.0, 1.0)

    def test_invalid_diagnostics(self):
        """Test invalid diagnostics"""
        with pytest.raises(ValidationError):
            DpPcaDiagnostics(top_eigenvalue=0.5, eigengap=0.8, p=3, m=10)

    @pytest.mark.parametrize("rho,eta", [(0.0, 0.1), (1.0, 0.1), (0.5, 0.0)])
    def test_close_approx_range(self, rho, eta):
        """Test close approx range"""
        with pytest.raises(ValidationError):
            CloseApprox(rho=rho, eta=eta)


class TestDpGsd:
    """Test the private subspace distance"""

    def test_report_shape(self):
        """Test report shape"""
        rng = np.random.default_rng(10)
        params = PrivacyParams(epsilon=1.0)
        report = dp_gsd_from_gradients(rng.standard_normal((40, 5)), rng.standard_normal((30, 5)), params, 0)
        assert report.k == 1
        assert report.priv_singular_values == []
        assert report.distance_raw == report.distance_normalized
        assert 0.0 <= report.distance_raw <= 1.0
        assert (report.m_priv, report.m_pub, report.p) == (40, 30, 5)

    def test_aligned_data_is_close(self):
        """Test aligned data is close"""
        params = PrivacyParams(epsilon=5.0, clip_norm=1.0)
        G_priv = concentrated_gradients(1000, 6, 11)
        G_pub = concentrated_gradients(200, 6, 12)
        report = dp_gsd_from_gradients(G_priv, G_pub, params, seed=2)
        assert report.distance_raw < 0.1

    def test_large_budget_limits(self):
        """Test near-zero distance to itself and near-one distance to orthogonal data"""
        params = PrivacyParams(epsilon=100.0, clip_norm=1.0)
        same, orthogonal = [], []
        for seed in range(20):
            G = concentrated_gradients(1000, 6, 100 + seed)
            G_orth = concentrated_gradients(500, 6, 200 + seed)[:, [1, 0, 2, 3, 4, 5]]
            same.append(dp_gsd_from_gradients(G, G, params, seed).distance_raw)
            orthogonal.append(dp_gsd_from_gradients(G, G_orth, params, seed).distance_raw)
        assert np.median(same) < 0.05
        assert np.median(orthogonal) > 0.95

    def test_public_span_is_all_that_matters(self):
        """Test an orthogonal mix of the public rows gives the same private distance"""
        rng = np.random.default_rng(15)
        G_priv = concentrated_gradients(300, 5, 16)
        G_pub = rng.standard_normal((40, 5)) * np.array([3.0, 1.0, 0.5, 0.2, 0.1])
        O, _ = np.linalg.qr(rng.standard_normal((40, 40)))
        params = PrivacyParams(epsilon=2.0)
        for seed in range(5):
            a = dp_gsd_from_gradients(G_priv, G_pub, params, seed).distance_raw
            b = dp_gsd_from_gradients(G_priv, O @ G_pub, params, seed).distance_raw
            assert a == pytest.approx(b, abs=1e-9)

    def test_column_mismatch(self):
        """Test column mismatch"""
        with pytest.raises(DimMismatch):
            dp_gsd_from_gradients(np.ones((3, 2)), np.ones((3, 4)), PrivacyParams(epsilon=1.0), 0)

    def test_batches(self):
        """Test batches"""
        ds = make_task(TaskSpec(input_dim=3, n_train=50, n_test=10, n_public=20))
        model = init_model(ModelSpec(kind=ModelKind.LOGISTIC_REGRESSION, input_dim=3), 0)
        a = dp_gsd(ds.train, ds.public, model, PrivacyParams(epsilon=2.0), seed=3)
        b = dp_gsd(ds.train, ds.public, model, PrivacyParams(epsilon=2.0), seed=3)
        assert a.distance_raw == b.distance_raw
        assert a.p == 4


class TestBudget:
    """Test privacy parameters and noise calibration"""

    def test_params_validation(self):
        """Test params validation"""
        with pytest.raises(ValidationError):
            PrivacyParams(epsilon=0.0)
        with pytest.raises(ValidationError):
            PrivacyParams(epsilon=1.0, delta=1.0)

    def test_privacy_block(self):
        """Test privacy block"""
        block = privacy_block(PrivacyParams(epsilon=2.0, clip_norm=0.5))
        assert block["mechanism"] == MECHANISM
        assert block["epsilon_effective"] == pytest.approx(8.0)
        assert block["delta_used"] is False
        assert epsilon_effective(PrivacyParams(epsilon=3.0)) == 3.0

    def test_noise_scale_known_value(self):
        """Test noise scale known value"""
        sigma = gep_noise_scale(PrivacyParams(epsilon=2.0, delta=1e-5, iterations=1))
        assert sigma == pytest.approx(decimal_noise_scale(1, "1e-5", "2"), rel=1e-12)

    def test_noise_scale_scaling(self):
        """Test noise scale scaling"""
        base = gep_noise_scale(PrivacyParams(epsilon=2.0, iterations=1))
        assert gep_noise_scale(PrivacyParams(epsilon=2.0, iterations=4)) == pytest.approx(2 * base)
        assert gep_noise_scale(PrivacyParams(epsilon=4.0, iterations=1)) == pytest.approx(base / 2)

    def test_warns_outside_range(self):
        """Test warns outside range"""
        with pytest.warns(PrivacyRangeWarning):
            gep_noise_scale(PrivacyParams(epsilon=30.0, delta=1e-5))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
