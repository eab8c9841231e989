import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import central_diff
from sgcl.contrastive import (ContrastConfig, PredictorParams, mrl_loss, predictor_backward,
                              predictor_score, shuffle_features)
from sgcl.encoder import partition_features
from sgcl.errors import ConfigError, DimensionError
from sgcl.ops import Param

scores = arrays(np.float64, 6, elements=st.floats(-5, 5))


def _pred(k=5, seed=0):
    return PredictorParams.init(k, np.random.default_rng(seed))


class TestShuffle:
    def test_single_column(self):
        x = np.arange(4.0).reshape(4, 1)
        out, perm = shuffle_features(x, 3)
        np.testing.assert_array_equal(out, x)
        assert perm.tolist() == [0]

    def test_explicit_permutation(self):
        out, _ = shuffle_features(np.array([[1.0, 2.0, 3.0]]), None, perm=np.array([2, 0, 1]))
        np.testing.assert_array_equal(out, [[3.0, 1.0, 2.0]])

    @given(st.integers(0, 10 ** 6))
    def test_row_multiset_preserved(self, seed):
        x = np.random.default_rng(seed).standard_normal((4, 7))
        out, perm = shuffle_features(x, seed)
        np.testing.assert_array_equal(np.sort(out, axis=1), np.sort(x, axis=1))
        np.testing.assert_array_equal(out, x[:, perm])

    def test_groups_change_under_non_identity(self):
        x = np.arange(12.0).reshape(1, 12)
        out, perm = shuffle_features(x, 1)
        assert not np.array_equal(perm, np.arange(12))
        changed = [not np.array_equal(a, b)
                   for a, b in zip(partition_features(x, 4), partition_features(out, 4))]
        assert any(changed)


class TestPredictor:
    def test_all_zero_spikes_give_bias(self):
        p = _pred()
        p.b.value[:] = 0.7
        np.testing.assert_allclose(predictor_score(np.zeros((3, 5)), p), 0.7)

    def test_single_bit(self):
        p = _pred()
        z = np.zeros((1, 5))
        z[0, 3] = 1
        assert predictor_score(z, p)[0] == pytest.approx(p.w.value[3, 0] + p.b.value[0, 0])

    @given(arrays(np.uint8, (7, 5), elements=st.integers(0, 1)), st.integers(0, 100))
    def test_matches_dense_product(self, z, seed):
        p = _pred(seed=seed)
        p.b.value[:] = 0.3
        dense = z.astype(np.float64) @ p.w.value[:, 0] + 0.3
        np.testing.assert_allclose(predictor_score(z, p), dense, rtol=1e-5, atol=1e-5)

    def test_width_mismatch(self):
        with pytest.raises(DimensionError):
            predictor_score(np.zeros((2, 4)), _pred())

    def test_backward_finite_difference(self):
        rng = np.random.default_rng(3)
        z = rng.integers(0, 2, (8, 5)).astype(np.float32)
        up = rng.standard_normal(8)
        p = _pred()
        dz = predictor_backward(z, p, up)

        def loss_w(w):
            return float(np.sum(up * (z @ w[:, 0] + p.b.value[0, 0])))

        def loss_b(b):
            return float(np.sum(up * (z @ p.w.value[:, 0] + b[0, 0])))

        def loss_z(zz):
            return float(np.sum(up * (zz @ p.w.value[:, 0] + p.b.value[0, 0])))

        np.testing.assert_allclose(p.w.grad, central_diff(loss_w, p.w.value), rtol=1e-3, atol=1e-4)
        np.testing.assert_allclose(p.b.grad, central_diff(loss_b, p.b.value), rtol=1e-3, atol=1e-4)
        np.testing.assert_allclose(dz, central_diff(loss_z, z), rtol=1e-3, atol=1e-4)


class TestMarginRanking:
    def test_equal_scores_zero_margin(self):
        loss, dp, dn = mrl_loss([1.0, 2.0], [1.0, 2.0], 0.0)
        assert loss == 0.0 and not dp.any() and not dn.any()

    def test_inactive_hinge(self):
        assert mrl_loss([0.0], [1.0], 0.5)[0] == 0.0

    def test_active_hinge(self):
        loss, dp, dn = mrl_loss([1.0], [0.0], 1.0)
        assert loss == 2.0 and dp[0] == 1.0 and dn[0] == -1.0

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            mrl_loss([1.0, 2.0], [1.0], 0.5)

    @given(scores, scores, st.floats(0, 2))
    def test_nonnegative_and_zero_iff_separated(self, pos, neg, m):
        loss, _, _ = mrl_loss(pos, neg, m)
        assert loss >= 0
        assert (loss == 0) == bool(np.all(pos - neg + m <= 0))

    @given(scores, scores, st.floats(0, 2), st.floats(-100, 100))
    def test_translation_invariant(self, pos, neg, m, c):
        a = mrl_loss(pos, neg, m)[0]
        b = mrl_loss(pos + c, neg + c, m)[0]
        assert a == pytest.approx(b, abs=1e-9)

    def test_gradient_matches_finite_difference_off_kink(self):
        rng = np.random.default_rng(0)
        pos, neg = rng.standard_normal(10), rng.standard_normal(10)
        _, dp, dn = mrl_loss(pos, neg, 0.5)
        np.testing.assert_allclose(dp, central_diff(lambda v: mrl_loss(v, neg, 0.5)[0], pos, 1e-6),
                                   atol=1e-5)
        np.testing.assert_allclose(dn, central_diff(lambda v: mrl_loss(pos, v, 0.5)[0], neg, 1e-6),
                                   atol=1e-5)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"margin": -0.1}, {"margin": 2.5}, {"edge_drop_p": 1.0},
                                    {"edge_drop_p": -0.2}])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            ContrastConfig(**kw)

    def test_param_shapes(self):
        p = _pred(k=6)
        assert p.w.shape == (6, 1) and p.b.shape == (1, 1)
        assert isinstance(p.copy().w, Param)
