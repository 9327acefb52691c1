import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densefactor.models import GaussGauss, GaussSign, IsingGauss, MixedGaussGauss, parse_family
from densefactor.numerics import QuadratureSpec
from densefactor.replica import (
    PHASE_HEADER,
    TRANSITION_HEADER,
    capacity_check,
    classify_phase,
    code_free_energies,
    coexistence_window,
    critical_line,
    delta_f_gauss,
    eos_rhs,
    free_energy,
    gauss3_lambda,
    gauss3_spinodal_m,
    lambda_of_m,
    paramagnet_stability,
    shannon_code_limit,
    solve_eos,
    spinodal,
    trace_phase_diagram,
)


def gamma(alpha, lam):
    return 0.5 * math.sqrt((alpha - 2) ** 2 + 4 / lam**2)


# ---- equation of state -------------------------------------------------------


def test_gauss2_branches():
    br = solve_eos(GaussGauss(2), 1.5, 2.0)
    assert br.m_values[0] == 0.0
    assert [s.m for s in br.nonzero] == pytest.approx([0.75 - gamma(1.5, 2.0)], abs=1e-10)
    assert br.nonzero[0].m == pytest.approx(0.190983, abs=1e-6)


@given(st.floats(1.05, 6.0), st.floats(1.02, 5.0))
@settings(max_examples=40, deadline=None)
def test_gauss2_closed_form_property(alpha, ratio):
    lam = ratio / math.sqrt(alpha - 1)
    nz = solve_eos(GaussGauss(2), alpha, lam).nonzero
    assert len(nz) == 1
    assert nz[0].m == pytest.approx(alpha / 2 - gamma(alpha, lam), abs=1e-10)


@pytest.mark.parametrize("lam", [0.3, 1.0, 3.0, 30.0])
def test_gauss3_no_branch_below_three(lam):
    assert not solve_eos(GaussGauss(3), 2.9, lam).nonzero
    assert spinodal(GaussGauss(3), 2.5) is None


def test_noiseless_ising_stable_roots_are_zero_and_one():
    for p, a in ((2, 1.6), (3, 3.0), (4, 3.0)):
        stable = [s.m for s in solve_eos(IsingGauss(p), a, math.inf).solutions if s.stable]
        assert all(m == 0.0 or m > 1 - 1e-9 for m in stable)


@pytest.mark.parametrize("fam,alpha,lam", [
    (IsingGauss(2), 1.6, 2.0),
    (IsingGauss(2), 2.2, 2.2),
    (GaussGauss(3), 5.0, 2.0),
    (GaussSign(2), 3.0, 1.0),
    (MixedGaussGauss(2, 2.0, 3), 1.0, 2.0),
])
def test_roots_survive_doubled_quadrature(fam, alpha, lam):
    fine = QuadratureSpec(node_count=202)
    for s in solve_eos(fam, alpha, lam).nonzero:
        assert abs(eos_rhs(fam, s.m, alpha, lam, fine) - s.m) <= 1e-9


def test_dominant_has_lowest_free_energy():
    br = solve_eos(IsingGauss(2), 2.2, 2.2)
    stable = [s for s in br.solutions if s.stable]
    assert br.solutions[br.dominant].free_energy == min(s.free_energy for s in stable)


# ---- free energies -------------------------------------------------------------


def test_free_energy_at_zero():
    assert free_energy(IsingGauss(2), 0.0, 1.6, 2.0) == pytest.approx(1.6 / 4 * math.log(5), rel=1e-14)
    assert delta_f_gauss(0.0, 5.0, 2.0, 3) == 0.0
    with pytest.raises(ValueError):
        free_energy(IsingGauss(2), 1.0, 1.6, 2.0)


@given(st.floats(0.0, 0.95), st.floats(1.0, 8.0), st.floats(0.3, 4.0), st.sampled_from([2, 3]))
def test_delta_f_matches_free_energy_difference(m, alpha, lam, p):
    fam = GaussGauss(p)
    diff = free_energy(fam, 0.0, alpha, lam) - free_energy(fam, m, alpha, lam)
    assert diff == pytest.approx(delta_f_gauss(m, alpha, lam, p), abs=1e-12)


def test_gauss3_delta_f_changes_sign():
    ld = spinodal(GaussGauss(3), 5.0)
    high = lambda lam: max(s.m for s in solve_eos(GaussGauss(3), 5.0, lam).nonzero)
    assert delta_f_gauss(high(ld * 1.001), 5.0, ld * 1.001, 3) < 0
    assert delta_f_gauss(high(3.0), 5.0, 3.0, 3) > 0


@pytest.mark.parametrize("m", [0.2, 0.5, 0.8])
def test_free_energy_stationary_at_eos_roots(m):
    # the free energy is stationary at the EOS solution for the lambda that makes m a root
    fam, alpha = IsingGauss(2), 1.6
    lam = lambda_of_m(fam, m, alpha)
    h = 1e-5
    d = (free_energy(fam, m + h, alpha, lam) - free_energy(fam, m - h, alpha, lam)) / (2 * h)
    assert abs(d) < 1e-6


# ---- paramagnet stability --------------------------------------------------------


def test_paramagnet_examples():
    assert paramagnet_stability(GaussGauss(2), 2.0, 0.5) == (True, 1.0)
    assert paramagnet_stability(GaussGauss(3), 10.0, 50.0)[0]
    assert paramagnet_stability(MixedGaussGauss(2, 2.0, 3), 1.0, 0.5)[1] == 1.0
    assert paramagnet_stability(GaussSign(2), 1.5, 1.0)[0]
    assert not paramagnet_stability(GaussSign(2), 1.6, 1.0)[0]


@given(st.floats(0.2, 4.0), st.floats(0.1, 5.0))
def test_ising_pm_stability_matches_curvature(alpha, lam):
    coef = alpha * lam**2 / (1 + lam**2)
    if abs(coef - 1) < 0.05:
        return
    stable, _ = paramagnet_stability(IsingGauss(2), alpha, lam)
    assert stable == (coef < 1)
    # second derivative of the free energy at small m has the same sign
    fam, m = IsingGauss(2), 1e-3
    f0, f1, f2 = (free_energy(fam, x, alpha, lam) for x in (0.0, m, 2 * m))
    curv = (f2 - 2 * f1 + f0) / m**2
    assert (curv > 0) == stable


# ---- spinodal and transitions ----------------------------------------------------


def test_gauss3_spinodal_closed_forms():
    assert gauss3_spinodal_m(4.0) == pytest.approx(2 / 3, abs=1e-12)
    assert spinodal(GaussGauss(3), 4.0) == pytest.approx(math.sqrt(27 / 5), abs=1e-10)
    assert gauss3_lambda(2 / 3, 4.0) == pytest.approx(math.sqrt(27 / 5), abs=1e-10)


@given(st.floats(3.2, 20.0))
@settings(max_examples=20, deadline=None)
def test_gauss3_spinodal_is_branch_minimum(alpha):
    md = gauss3_spinodal_m(alpha)
    ld = gauss3_lambda(md, alpha)
    for dm in (-0.02, 0.02):
        assert gauss3_lambda(md + dm, alpha) > ld


def test_gauss3_large_alpha_approximation():
    # the large-alpha approximation sqrt(8/13) is 0.51% off at alpha = 10
    assert abs(spinodal(GaussGauss(3), 10.0) - 0.780481) < 1e-6
    assert abs(spinodal(GaussGauss(3), 10.0) / math.sqrt(8 / 13) - 1) < 0.006


def test_critical_line_ordering():
    ld = spinodal(GaussGauss(3), 5.0)
    lc = critical_line(GaussGauss(3), 5.0)
    assert ld < lc < math.inf
    assert critical_line(GaussGauss(3), 2.5) is None


def test_ising_coexistence_window():
    lo, hi = coexistence_window(IsingGauss(2), 1.6)
    assert 1 / math.sqrt(0.6) < lo < hi
    assert coexistence_window(IsingGauss(2), 0.5) is None


# ---- code limit -------------------------------------------------------------------


@pytest.mark.parametrize("R,lam_c", [(0.5, 1.0), (1.0, math.sqrt(3)), (2.0, math.sqrt(15)), (4.0, math.sqrt(255))])
def test_code_limit(R, lam_c):
    lc, cap = shannon_code_limit(R)
    assert lc == pytest.approx(lam_c, rel=1e-12)
    assert cap == pytest.approx(R, abs=1e-10)
    f0, f1 = code_free_energies(R, lc)
    assert f0 == pytest.approx(f1, abs=1e-12)


def test_code_limit_small_rate():
    assert shannon_code_limit(1e-6)[0] < 2e-3


@given(st.floats(0.01, 8.0))
def test_capacity_inverse(R):
    assert capacity_check(math.sqrt(4**R - 1)) == pytest.approx(R, rel=1e-12)


# ---- classification ----------------------------------------------------------------


def test_classification_examples():
    assert classify_phase(IsingGauss(2), 0.5, 3.0) == "PM"  # below the high-branch spinodal
    assert classify_phase(IsingGauss(2), 0.5, 6.0) == "I"
    assert classify_phase(GaussGauss(2), 2.0, 0.5) == "impossible"
    assert classify_phase(GaussGauss(2), 2.0, 1.5) == "easy"
    ld = spinodal(GaussGauss(3), 5.0)
    assert classify_phase(GaussGauss(3), 5.0, ld * 1.05) == "hard"
    assert classify_phase(GaussGauss(3), 5.0, ld * 0.95) == "impossible"


def test_phase_diagram_boundary_gauss2():
    alphas = np.linspace(1.2, 3.0, 7)
    lams = np.linspace(0.2, 3.0, 29)
    points, lines = trace_phase_diagram(GaussGauss(2), alphas, lams)
    assert len(points) == len(alphas) * len(lams)
    h = lams[1] - lams[0]
    for a in alphas:
        col = [pt for pt in points if pt.alpha == a]
        flips = [pt.lam for prev, pt in zip(col, col[1:]) if prev.region != pt.region]
        assert len(flips) == 1 and abs(flips[0] - 1 / math.sqrt(a - 1)) <= h * (1 + 1e-9)
    assert [ln.lambda_star for ln in lines] == pytest.approx([1 / math.sqrt(a - 1) for a in alphas])


def test_rows_match_headers():
    points, lines = trace_phase_diagram(IsingGauss(2), [1.6], [2.0, 3.0])
    assert len(points[0].row()) == len(PHASE_HEADER.split(","))
    assert len(lines[0].row()) == len(TRANSITION_HEADER.split(","))


def test_parse_family():
    assert parse_family("isinggauss:2") == IsingGauss(2)
    assert parse_family("gaussgauss(3)") == GaussGauss(3)
    assert parse_family("sign") == GaussSign(2)
    assert parse_family("mixed:2,2.0,3") == MixedGaussGauss(2, 2.0, 3)
