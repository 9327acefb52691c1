import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densefactor.channels import AdditiveGaussian, PriorKind, Sign
from densefactor.models import GaussGauss, GaussSign, IsingGauss, MixedGaussGauss
from densefactor.replica import solve_eos
from densefactor.state_evolution import (
    CovarianceError,
    SEModel,
    SEState,
    lam2_hats,
    locate_continuous_transition,
    prior_update,
    run_se,
    se_hats,
    se_step,
    sign_overlap_integral,
    tanh_moments,
    theta01,
)

# (E tanh(A + sqrt(A) z), E tanh^2(...)) at A = 0.8, 30-digit mpmath
TANH_A08 = 0.481240791368821751
# 2 E[H'(X)^2 / H(X)] / (1 - q^2) at q = 0.5, p = 2, 30-digit mpmath
SIGN_HAT_Q05 = 0.760111830363126732

FAMILIES = [IsingGauss(2), GaussGauss(3), GaussSign(2)]


@pytest.mark.parametrize("m", [0.0, 0.25, 0.5, 0.9])
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 5.0])
@pytest.mark.parametrize("p", [2, 3])
def test_theta1_vanishes_on_nishimori_line(m, lam, p):
    th0, th1 = theta01(lam, 1.0, 1.0, m, m, p)
    assert abs(th1) <= 1e-10
    hc, hm, hq = lam2_hats(m, m, 1.0, p, lam, AdditiveGaussian(1.0))
    assert hc == hm == pytest.approx(hq, rel=1e-12)
    assert hq == pytest.approx(lam**2 * th0, rel=1e-12)


@pytest.mark.parametrize("lam", [0.5, 1.0, 3.0])
def test_paramagnet_theta0(lam):
    assert theta01(lam, 1.0, 1.0, 0.0, 0.0, 2)[0] == pytest.approx(1 / (1 + lam**2), rel=1e-15)


def test_sign_hat_values():
    h = lam2_hats(0.5, 0.5, 1.0, 2, 1.0, Sign())
    assert h[0] == h[1] == h[2] == pytest.approx(SIGN_HAT_Q05, abs=1e-12)
    # small-q limit: 2 / pi
    assert lam2_hats(0.0, 0.0, 1.0, 2, 2.0, Sign())[0] == pytest.approx(2 / math.pi, rel=1e-12)
    assert sign_overlap_integral(0.0, 2) == pytest.approx(1 / math.pi, rel=1e-15)


@given(st.floats(0.0, 0.95), st.sampled_from([2, 3]), st.floats(0.2, 5.0))
@settings(max_examples=25, deadline=None)
def test_sign_hats_lambda_free(q, p, lam):
    assert lam2_hats(q, q, 1.0, p, lam, Sign()) == lam2_hats(q, q, 1.0, p, 1.0, Sign())


@pytest.mark.parametrize("q", [0.05, 0.3, 0.6, 0.9])
@pytest.mark.parametrize("p", [2, 3])
def test_sign_general_path_matches_closed(q, p):
    closed = lam2_hats(q, q, 1.0, p, 1.0, Sign(), method="closed")
    general = lam2_hats(q, q, 1.0, p, 1.0, Sign(), method="general")
    assert general == pytest.approx(closed, abs=1e-6)


@pytest.mark.parametrize("m,q,Q", [(0.3, 0.3, 1.0), (0.2, 0.5, 1.0), (0.5, 0.6, 1.3)])
@pytest.mark.parametrize("p", [2, 3])
def test_additive_general_path_matches_closed(m, q, Q, p):
    closed = lam2_hats(m, q, Q, p, 1.5, AdditiveGaussian(1.0))
    general = lam2_hats(m, q, Q, p, 1.5, AdditiveGaussian(1.0), method="general")
    assert general[:2] == pytest.approx(closed[:2], abs=1e-6)


def test_indefinite_covariance_rejected():
    with pytest.raises(CovarianceError):
        lam2_hats(0.9, 0.1, 1.0, 2, 1.0, AdditiveGaussian(1.0))
    with pytest.raises(CovarianceError):
        lam2_hats(0.1, 0.5, 0.4, 2, 1.0, AdditiveGaussian(1.0))


@pytest.mark.parametrize("A", [0.1, 1.0, 5.0])
def test_tanh_identity(A):
    m1, m2 = tanh_moments(A, A)
    assert abs(m1 - m2) <= 1e-10


def test_ising_step_equals_replica_map():
    st1 = se_step(SEState(0.5, 0.5, 1.0), SEModel.from_family(IsingGauss(2), 1.6, 2.0))
    assert st1.m == pytest.approx(TANH_A08, abs=1e-12)
    assert st1.q == pytest.approx(TANH_A08, abs=1e-12)
    assert st1.Q == 1.0


@pytest.mark.parametrize("fam", FAMILIES + [MixedGaussGauss(2, 2.0, 3)])
def test_paramagnet_fixed_point(fam):
    model = SEModel.from_family(fam, 2.0, 1.5)
    st1 = se_step(SEState(0.0, 0.0, 1.0), model)
    assert st1.m == 0.0 and st1.q == 0.0
    tr = run_se((0.0, 0.0, 1.0), model, max_t=5)
    assert tr.converged and tr.final[1:4] == (0.0, 0.0, 1.0)


def test_gaussian_equal_hats_propagate():
    m1, q1, Q1 = prior_update(PriorKind.GAUSSIAN, 0.7, 0.7, 0.7)
    assert q1 == pytest.approx(m1, rel=1e-15) and Q1 == pytest.approx(1.0, rel=1e-15)


@pytest.mark.parametrize("fam,alpha,lam,start", [
    (IsingGauss(2), 1.6, 2.0, 0.3),
    (GaussGauss(3), 5.0, 2.0, 0.9),
    (GaussGauss(2), 2.0, 1.5, 0.2),
    (GaussSign(2), 2.0, 1.0, 0.4),
])
def test_nishimori_invariance(fam, alpha, lam, start):
    tr = run_se((start, start, 1.0), SEModel.from_family(fam, alpha, lam), max_t=100, conv_tol=0.0)
    assert np.max(np.abs(tr.column("m") - tr.column("q"))) <= 1e-8
    assert np.max(np.abs(tr.column("Q") - 1.0)) <= 1e-8


def test_gaussian_p2_closed_form():
    tr = run_se((1.0, 1.0, 1.0), SEModel.from_family(GaussGauss(2), 1.5, 2.0), conv_tol=1e-14)
    assert tr.converged
    assert tr.final[1] == pytest.approx(0.75 - 0.5 * math.sqrt(0.25 + 1.0), abs=1e-10)
    assert tr.final[1] == pytest.approx(0.190983, abs=1e-6)


def test_ising_continuous_onset():
    model = lambda lam: SEModel.from_family(IsingGauss(2), 1.6, lam)
    assert run_se((0.01, 0.01, 1.0), model(1.4), conv_tol=1e-12).final[1] > 0.01
    assert run_se((0.01, 0.01, 1.0), model(1.2), conv_tol=1e-12, max_t=50_000).final[1] < 0.001


def test_sign_trajectories_lambda_free():
    a = run_se((0.05, 0.05, 1.0), SEModel.from_family(GaussSign(2), 2.0, 1.0), max_t=50)
    b = run_se((0.05, 0.05, 1.0), SEModel.from_family(GaussSign(2), 2.0, 3.0), max_t=50)
    assert a.column("m").tolist() == b.column("m").tolist()


@pytest.mark.parametrize("fam,alpha,lam,start", [
    (GaussGauss(2), 3.0, 1.0, 1.0),
    (IsingGauss(2), 1.6, 3.0, 1.0),
    (GaussGauss(3), 5.0, 2.0, 1.0),
    (GaussSign(2), 2.0, 1.0, 0.01),
])
def test_fixed_points_solve_eos(fam, alpha, lam, start):
    tr = run_se((start, start, 1.0), SEModel.from_family(fam, alpha, lam), max_t=20_000, conv_tol=1e-14)
    roots = [s.m for s in solve_eos(fam, alpha, lam).solutions]
    assert min(abs(tr.final[1] - r) for r in roots) <= 1e-8


def test_run_se_validation_and_unconverged_flag():
    model = SEModel.from_family(IsingGauss(2), 1.6, 2.0)
    with pytest.raises(ValueError):
        run_se((0.1, 0.1, 1.0), model, max_t=0)
    tr = run_se((0.1, 0.1, 1.0), model, max_t=3, conv_tol=0.0)
    assert not tr.converged and tr.steps == 3


def test_mixed_species_add_fields():
    fam = MixedGaussGauss(2, 2.0, 3)
    st_ = SEState(0.4, 0.4, 1.0)
    mixed = se_step(st_, SEModel.from_family(fam, 1.0, 2.0))
    # Gaussian prior: m' = A / (1 + A) with A the sum of species fields
    A = sum(a * 4.0 * 0.4 ** (p - 1) * lam2_hats(0.4, 0.4, 1.0, p, 2.0, AdditiveGaussian(1.0))[1] / 4.0 for p, a in ((2, 2.0), (3, 1.0)))
    assert mixed.m == pytest.approx(A / (1 + A), rel=1e-12)


def test_sign_transition_near_half_pi():
    a_c = locate_continuous_transition(GaussSign(2), 1.3, 1.9, tol=2e-3)
    assert abs(a_c - math.pi / 2) <= 0.01


def test_se_hats_divide_out_lambda():
    h = se_hats(SEState(0.3, 0.3, 1.0), AdditiveGaussian(1.0), 2.0, 2)
    assert h[2] == pytest.approx(theta01(2.0, 1.0, 1.0, 0.3, 0.3, 2)[0], rel=1e-12)
