import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import ortho_group

from sgcl.analytics import (cka, cka_gram, cka_matrix, diagonal_dominance, energy_binary_gnn,
                            energy_from_counts, energy_full_precision, energy_spikegcl, sparsity)
from sgcl.encoder import SpikeTrain
from sgcl.errors import DimensionError, UndefinedSimilarityError


def hsic_cka(x, y):
    """Textbook linear CKA from explicit double-centred Gram matrices."""
    n = x.shape[0]
    h = np.eye(n) - np.ones((n, n)) / n
    k, l = x @ x.T, y @ y.T

    def hsic(a, b):
        return np.trace(a @ h @ b @ h) / (n - 1) ** 2

    return hsic(k, l) / np.sqrt(hsic(k, k) * hsic(l, l))


class TestEnergy:
    def test_encoding_only(self):
        rep = energy_spikegcl(1, 1, 1, [0])
        assert rep.e_encoding_mj == pytest.approx(4.6e-9, rel=1e-12)
        assert rep.e_spiking_mj == 0.0 and rep.mac_count == 1

    def test_each_spike_costs_one_sop(self):
        a = energy_spikegcl(5, 4, 2, [3, 4])
        b = energy_spikegcl(5, 4, 2, [3, 5])
        assert b.total_mj - a.total_mj == pytest.approx(3.7e-9, rel=1e-9)

    def test_doubling_steps(self):
        a = energy_spikegcl(3, 8, 2, [1, 2])
        b = energy_spikegcl(3, 16, 4, [1, 2, 1, 2])
        assert b.e_encoding_mj == pytest.approx(2 * a.e_encoding_mj)
        assert b.e_spiking_mj == pytest.approx(2 * a.e_spiking_mj)

    def test_total_is_sum(self):
        r = energy_spikegcl(10, 6, 3, [4, 0, 9])
        assert r.total_mj == pytest.approx(r.e_encoding_mj + r.e_spiking_mj)
        assert r.total_pj == pytest.approx(r.total_mj * 1e9)

    def test_count_length_checked(self):
        with pytest.raises(DimensionError):
            energy_spikegcl(1, 2, 2, [1])

    def test_binary_gnn(self):
        assert energy_binary_gnn(64, 0, 64, 1) == pytest.approx(4.6 * 12288 * 1e-9)
        assert energy_binary_gnn(64, 10, 0, 3) == 0.0
        assert energy_binary_gnn(30, 7, 16, 2) == pytest.approx(2 * energy_binary_gnn(30, 7, 16, 1))

    def test_full_precision(self):
        assert energy_full_precision(1, 0, 1, 1, 1) == pytest.approx(4.6e-9)
        assert energy_full_precision(0, 0, 5, 5, 2) == 0.0

    @given(st.integers(0, 10 ** 6), st.integers(0, 10 ** 6))
    def test_linear_and_nonnegative(self, macs, spikes):
        a = energy_from_counts(macs, spikes)
        b = energy_from_counts(2 * macs, 2 * spikes)
        assert a.total_mj >= 0
        assert b.total_mj == pytest.approx(2 * a.total_mj)


class TestSparsity:
    def test_extremes(self):
        assert sparsity(SpikeTrain.from_dense([np.zeros((4, 3))] * 2)) == 1.0
        assert sparsity(SpikeTrain.from_dense([np.ones((4, 3))] * 2)) == 0.0

    def test_balanced_bits(self):
        rng = np.random.default_rng(0)
        steps = [rng.integers(0, 2, (100, 16)) for _ in range(4)]
        n = 100 * 16 * 4
        assert abs(sparsity(SpikeTrain.from_dense(steps)) - 0.5) <= 4 * np.sqrt(0.25 / n)


class TestCka:
    def setup_method(self):
        rng = np.random.default_rng(1)
        self.x = rng.standard_normal((40, 6))
        self.y = rng.standard_normal((40, 4)) + self.x[:, :4]

    def test_self_similarity(self):
        assert cka(self.x, self.x) == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_invariance(self):
        q = ortho_group.rvs(6, random_state=3)
        assert cka(self.x, self.x @ q) == pytest.approx(1.0, abs=1e-5)

    def test_isotropic_scaling(self):
        assert cka(self.x, -3.5 * self.x) == pytest.approx(1.0, abs=1e-5)

    def test_symmetric(self):
        assert cka(self.x, self.y) == pytest.approx(cka(self.y, self.x), abs=1e-6)

    def test_matches_textbook_hsic(self):
        assert cka(self.x, self.y) == pytest.approx(hsic_cka(self.x, self.y), rel=1e-9)
        assert cka_gram(self.x, self.y) == pytest.approx(hsic_cka(self.x, self.y), rel=1e-9)

    @given(st.floats(-50, 50), st.integers(0, 1000))
    def test_shift_invariant(self, c, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.standard_normal((15, 3)), rng.standard_normal((15, 2))
        assert cka(x + c, y) == pytest.approx(cka(x, y), abs=1e-6)
        assert 0.0 <= cka(x, y) <= 1.0 + 1e-9

    def test_zero_variance(self):
        with pytest.raises(UndefinedSimilarityError):
            cka(np.ones((5, 2)), self.x[:5])

    def test_row_mismatch(self):
        with pytest.raises(DimensionError):
            cka(self.x, self.y[:10])

    def test_matrix_and_dominance(self):
        rng = np.random.default_rng(0)
        groups = [rng.standard_normal((30, 3)) for _ in range(3)]
        spikes = [(g[:, :2] > 0).astype(float) for g in groups]
        spikes[2] = np.zeros((30, 2))
        m = cka_matrix(groups, spikes)
        assert np.isnan(m[:, 2]).all()
        assert m[0, 0] > m[0, 1] and m[1, 1] > m[1, 0]
        assert diagonal_dominance(m) == pytest.approx(2 / 3)
        assert diagonal_dominance(np.eye(4)) == 1.0
