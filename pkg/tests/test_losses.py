import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moquad.errors import InputError, NumericError, ShapeError
from moquad.losses import (
    LossConfig,
    appearance_loss,
    instance_loss,
    loss_gradcheck,
    moquad_loss,
    moquad_loss_mined,
    num_hard_negatives,
)
from moquad.oracles import GRAD_REL_TOL, LOSS_REL_TOL, oracle_loss, oracle_topk

from conftest import unit_batch

PLAIN = LossConfig(tau=0.1)


def equal_sim_batch(B, M, d=3):
    # every vector identical: all pairwise similarities equal 1
    z = np.zeros((B, M, d))
    z[..., 0] = 1.0
    return z


class TestClosedForms:
    def test_single_video(self):
        assert moquad_loss(equal_sim_batch(1, 4), PLAIN).loss == pytest.approx(math.log(3), abs=1e-12)

    def test_two_videos_counts_all_four_members(self):
        assert moquad_loss(equal_sim_batch(2, 4), PLAIN).loss == pytest.approx(2 * math.log(7), abs=1e-12)

    def test_appearance(self):
        assert appearance_loss(equal_sim_batch(1, 2), 0.1).loss == pytest.approx(0.0, abs=1e-12)
        assert appearance_loss(equal_sim_batch(2, 2), 0.1).loss == pytest.approx(2 * math.log(3), abs=1e-12)

    def test_mined_single_video(self):
        cfg = LossConfig(tau=0.1, alpha=2.0, beta=0.0, mining_enabled=True)
        assert moquad_loss_mined(equal_sim_batch(1, 4), cfg).loss == pytest.approx(math.log(5), abs=1e-12)


class TestOracleAgreement:
    @pytest.mark.parametrize("B", [1, 2, 4, 8])
    def test_moquad(self, rng, B):
        z = unit_batch(rng, B, 4, 8)
        rep = moquad_loss(z, PLAIN)
        assert rep.loss == pytest.approx(oracle_loss(z, 0.1), rel=LOSS_REL_TOL)
        assert rep.topk_indices == []

    def test_appearance(self, rng):
        z = unit_batch(rng, 4, 2, 8)
        assert appearance_loss(z, 0.2).loss == pytest.approx(oracle_loss(z, 0.2, "appearance"),
                                                             rel=LOSS_REL_TOL)

    @pytest.mark.parametrize("beta,alpha", [(0.0, 2.0), (0.1, 1.5), (0.25, 3.0), (1.0, 1.5)])
    def test_mined(self, rng, beta, alpha):
        z = unit_batch(rng, 5, 4, 6)
        cfg = LossConfig(tau=0.1, alpha=alpha, beta=beta, mining_enabled=True)
        rep = moquad_loss_mined(z, cfg)
        assert rep.loss == pytest.approx(oracle_loss(z, 0.1, "mined", alpha, beta), rel=LOSS_REL_TOL)
        assert [list(t) for t in rep.topk_indices] == oracle_topk(z, 0.1, beta)

    def test_topk_tie_break_lower_index(self):
        z = equal_sim_batch(3, 4)
        cfg = LossConfig(tau=0.1, alpha=2.0, beta=0.25, mining_enabled=True)
        rep = moquad_loss_mined(z, cfg)
        # K = floor(0.25 * 8) = 2; all similarities tie, so the two lowest inter indices win
        assert [list(t) for t in rep.topk_indices] == [[4, 5], [0, 1], [0, 1]]


class TestHardNegativeCount:
    @pytest.mark.parametrize("beta,n,k", [
        (0.01, 1020, 10), (0.0, 1020, 0), (0.01, 60, 1), (0.05, 60, 3), (0.01, 12, 1),
        (0.05, 12, 1), (0.29, 100, 29), (1.0, 12, 12), (0.5, 0, 0),
    ])
    def test_floor_with_guard(self, beta, n, k):
        assert num_hard_negatives(beta, n) == k


class TestGradients:
    def test_moquad(self, rng):
        assert loss_gradcheck(moquad_loss, unit_batch(rng, 4, 4, 16), PLAIN) < GRAD_REL_TOL

    def test_mined(self, rng):
        z = unit_batch(rng, 4, 4, 8)
        cfg = LossConfig(tau=0.1, alpha=1.5, beta=0.25, mining_enabled=True)
        assert loss_gradcheck(moquad_loss_mined, z, cfg) < GRAD_REL_TOL

    def test_appearance(self, rng):
        assert loss_gradcheck(appearance_loss, unit_batch(rng, 3, 2, 8), 0.1) < GRAD_REL_TOL

    def test_detects_wrong_gradient(self, rng):
        def broken(z, cfg, check_norm=True):
            rep = moquad_loss(z, cfg, check_norm=check_norm)
            rep.grads = rep.grads * 1.01
            return rep

        assert loss_gradcheck(broken, unit_batch(rng, 2, 4, 4), PLAIN) > 1e-3


class TestValidation:
    def test_non_unit(self, rng):
        with pytest.raises(InputError):
            moquad_loss(2 * unit_batch(rng, 2, 4, 4), PLAIN)

    def test_non_finite(self, rng):
        z = unit_batch(rng, 2, 4, 4)
        z[0, 0, 0] = np.nan
        with pytest.raises(NumericError):
            moquad_loss(z, PLAIN)

    def test_wrong_slots(self, rng):
        with pytest.raises(ShapeError):
            moquad_loss(unit_batch(rng, 2, 3, 4), PLAIN)
        with pytest.raises(ShapeError):
            appearance_loss(unit_batch(rng, 2, 4, 4), 0.1)


def test_mining_reduction_is_exact(rng):
    for _ in range(20):
        z = unit_batch(rng, 6, 4, 8)
        plain = moquad_loss(z, PLAIN)
        mined = moquad_loss_mined(z, LossConfig(tau=0.1, alpha=1.0, beta=0.3, mining_enabled=True))
        assert mined.loss == plain.loss
        np.testing.assert_array_equal(mined.grads, plain.grads)


def test_loss_vanishes_when_separated():
    z = np.zeros((1, 4, 3))
    z[0, :2, 0] = 1.0
    z[0, 2:, 0] = -1.0
    # log(1 + 2e-87) rounds to 0 in float64
    assert 0 <= moquad_loss(z, LossConfig(tau=0.01)).loss < 1e-80
    assert moquad_loss(z, LossConfig(tau=1.0)).loss > 0.1


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), B=st.integers(1, 6), tau=st.floats(0.05, 1.0))
def test_permutation_invariance(seed, B, tau):
    r = np.random.default_rng(seed)
    z = unit_batch(r, B, 4, 5)
    perm = r.permutation(B)
    a = moquad_loss(z, LossConfig(tau=tau))
    b = moquad_loss(z[perm], LossConfig(tau=tau))
    np.testing.assert_allclose(b.per_anchor, a.per_anchor[perm], rtol=1e-12)
    assert b.loss == pytest.approx(a.loss, rel=1e-12)
    assert a.loss > 0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), B=st.integers(1, 5), pick=st.integers(0, 10**6),
       theta=st.floats(0.1, 1.4), step=st.floats(0.02, 0.1))
def test_monotone_in_negative_similarity(seed, B, pick, theta, step):
    # Anchor 0 is e0 and the chosen negative lives in span(e0, e1); every other anchor is
    # orthogonal to that plane, so rotating the negative toward e0 changes only its
    # similarity to anchor 0.
    r = np.random.default_rng(seed)
    d = 8
    z = unit_batch(r, B, 4, d)
    z[:, 0, :2] = 0.0
    z[:, 0] /= np.linalg.norm(z[:, 0], axis=-1, keepdims=True)
    z[0, 0] = np.eye(d)[0]
    negatives = [(0, 2), (0, 3)] + [(j, s) for j in range(1, B) for s in range(1, 4)]
    j, s = negatives[pick % len(negatives)]

    def loss_at(angle):
        w = z.copy()
        w[j, s] = 0.0
        w[j, s, 0], w[j, s, 1] = np.cos(angle), np.sin(angle)
        return moquad_loss(w, PLAIN).loss

    assert loss_at(theta - step) > loss_at(theta)
