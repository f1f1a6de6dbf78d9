"""Tests for brute-force influence and Dobrushin coefficients."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from icl_ts_lab.core.errors import PositivityError, SizeError, SupportWarning
from icl_ts_lab.theory.dobrushin import (
    DiscreteJoint,
    PairwiseMrf,
    alpha_log,
    dobrushin_coeff,
    influence,
    influence_matrix,
    log_influence,
)


def _random_joint(rng, shape) -> DiscreteJoint:
    p = rng.uniform(0.05, 1.0, size=shape)
    return DiscreteJoint(p / p.sum())


class TestDiscreteJoint:
    def test_must_sum_to_one(self):
        with pytest.raises(ValueError):
            DiscreteJoint(np.full((2, 2), 0.3))

    def test_non_negative(self):
        with pytest.raises(ValueError):
            DiscreteJoint(np.array([1.5, -0.5]))

    def test_size_cap(self, monkeypatch):
        monkeypatch.setattr("icl_ts_lab.theory.dobrushin.settings.brute_force_max_entries", 4)
        with pytest.raises(SizeError):
            DiscreteJoint(np.full((2, 2, 2), 1 / 8))

    def test_markov_chain_is_normalized(self):
        joint = DiscreteJoint.markov_chain([0.5, 0.5], [[0.9, 0.1], [0.2, 0.8]], 4)
        assert joint.domain_sizes == (2, 2, 2, 2)
        assert joint.prob.sum() == pytest.approx(1.0)


class TestInfluence:
    def test_independent_variables(self):
        joint = DiscreteJoint.product([0.3, 0.7], [0.5, 0.5], [0.2, 0.3, 0.5])
        assert dobrushin_coeff(joint) == pytest.approx(0.0, abs=1e-12)

    def test_copy_has_full_influence(self):
        joint = DiscreteJoint(np.array([[0.5, 0.0], [0.0, 0.5]]))
        assert influence(joint, 0, 1) == pytest.approx(1.0)
        assert dobrushin_coeff(joint) == pytest.approx(1.0)

    def test_markov_property(self):
        joint = DiscreteJoint.markov_chain([0.4, 0.6], [[0.7, 0.3], [0.1, 0.9]], 3)
        # X0 and X2 are independent given X1
        assert influence(joint, 0, 2) == pytest.approx(0.0, abs=1e-12)
        assert influence(joint, 1, 2) > 0

    def test_symmetric_flip_chain(self):
        # uniform start, each bit flips with probability 0.1
        joint = DiscreteJoint.markov_chain([0.5, 0.5], [[0.9, 0.1], [0.1, 0.9]], 3)
        assert influence(joint, 1, 0) == pytest.approx(0.8)
        assert influence(joint, 0, 1) == pytest.approx(20 / 41)
        assert influence(joint, 2, 0) == pytest.approx(0.0, abs=1e-12)
        assert dobrushin_coeff(joint) == pytest.approx(40 / 41)
        assert dobrushin_coeff(joint) < 1

    def test_zero_support_is_skipped_with_warning(self):
        p = np.zeros((2, 2, 2))
        p[0, 0, 0] = p[1, 1, 1] = 0.5
        with pytest.warns(SupportWarning):
            value = influence(DiscreteJoint(p), 0, 1)
        assert value == 0.0

    def test_same_variable(self, rng):
        with pytest.raises(ValueError):
            influence(_random_joint(rng, (2, 2)), 1, 1)

    def test_matrix(self, rng):
        m = influence_matrix(_random_joint(rng, (2, 2, 2)))
        assert m.shape == (3, 3)
        np.testing.assert_array_equal(np.diag(m), 0.0)
        assert (m >= 0).all() and (m <= 1).all()


class TestLogInfluence:
    def test_upper_bounds_tv_influence(self, rng):
        shapes = [(2, 2, 2), (3, 2, 2), (2, 3, 3), (2, 2), (2, 2, 2, 2)]
        for k in range(100):
            joint = _random_joint(rng, shapes[k % len(shapes)])
            for i, j in itertools.permutations(range(joint.n_vars), 2):
                assert influence(joint, j, i) <= log_influence(joint, j, i) + 1e-12
            assert dobrushin_coeff(joint) <= alpha_log(joint) + 1e-12

    def test_correlated_pair(self):
        joint = DiscreteJoint(np.array([[0.4, 0.1], [0.1, 0.4]]))
        # odds ratio 16, so a quarter of its log
        assert log_influence(joint, 0, 1) == pytest.approx(np.log(2.0))
        assert log_influence(joint, 1, 0) == pytest.approx(np.log(2.0))

    def test_product_has_no_log_influence(self):
        joint = DiscreteJoint.product([0.3, 0.7], [0.2, 0.3, 0.5], [0.6, 0.4])
        for i, j in itertools.permutations(range(3), 2):
            assert log_influence(joint, j, i) == pytest.approx(0.0, abs=1e-12)
        assert alpha_log(joint) == pytest.approx(0.0, abs=1e-12)

    def test_needs_positive_joint(self):
        with pytest.raises(PositivityError):
            log_influence(DiscreteJoint(np.array([[0.5, 0.0], [0.0, 0.5]])), 0, 1)

    def test_ising_chain(self):
        mrf = PairwiseMrf.ising_chain(3, 0.2, field_strength=0.1)
        joint = mrf.joint()
        assert log_influence(joint, 0, 1) == pytest.approx(0.2)
        assert log_influence(joint, 0, 2) == pytest.approx(0.0, abs=1e-12)
        assert alpha_log(joint) == pytest.approx(0.4)
        assert mrf.beta() == pytest.approx(0.4)

    def test_independent_spins(self):
        joint = PairwiseMrf.ising_chain(3, 0.0).joint()
        np.testing.assert_allclose(joint.prob, np.full((2, 2, 2), 1 / 8))
