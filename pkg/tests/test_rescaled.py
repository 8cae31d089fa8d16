import math

import numpy as np
import pytest

from viscous_ergodic.rescaled import (
    HarmonicReference,
    RescaledConfigError,
    RescaledProblem,
    Well,
    double_factorial_moment,
    fourth_moment,
    harmonic_ground_state,
    oscillator_floor,
    perturbation_amplitude,
    rescaled_gap,
    solve_rescaled,
    truncation_half_width,
)


def test_double_factorials():
    assert [double_factorial_moment(m) for m in (1, 2, 3, 4)] == [1, 3, 15, 105]
    assert fourth_moment() == 3 and isinstance(fourth_moment(), int)
    with pytest.raises(ValueError):
        double_factorial_moment(0)


def test_harmonic_closed_forms():
    assert HarmonicReference.moment_quadrature(0) == pytest.approx(1.0, abs=1e-12)
    assert HarmonicReference.moment_quadrature(2) == pytest.approx(3.0, abs=1e-8)
    assert HarmonicReference.moment_quadrature(3) == pytest.approx(15.0, abs=1e-7)
    assert HarmonicReference.energy_quadrature() == pytest.approx(1.0, abs=1e-10)
    z = np.linspace(-3, 3, 7)
    h = 1e-5
    fd = (harmonic_ground_state(z + h) - harmonic_ground_state(z - h)) / (2 * h)
    np.testing.assert_allclose(HarmonicReference.derivative(z), fd, atol=1e-9)


def test_harmonic_baseline_eigenpair():
    sol = solve_rescaled(RescaledProblem(1.0, A=0.0, Z=10.0))
    assert abs(sol.e - 1.0) < 1e-6
    assert np.abs(sol.eig.vector - harmonic_ground_state(sol.eig.x)).max() < 1e-4


def test_truncation_width_rule():
    assert truncation_half_width(1e-3, 0.0, 2, "frozen-plus") == pytest.approx(
        6.0 + math.sqrt(2.0 * abs(math.log(1e-12))))
    # coercivity radius (8 A eps)^(-1/2) at eps = 0.1
    assert truncation_half_width(0.1, 0.1, 2, "frozen-plus") == pytest.approx(
        (8 * 0.1 * 0.1) ** -0.5)
    assert truncation_half_width(0.01, 0.1, 2, "paper-loglog") == pytest.approx(5.0)


def test_config_errors():
    with pytest.raises(RescaledConfigError):
        RescaledProblem(0.0)
    with pytest.raises(RescaledConfigError):
        RescaledProblem(0.01, m=1)
    with pytest.raises(RescaledConfigError, match="half-width"):
        RescaledProblem(1.0, A=10.0)
    with pytest.raises(RescaledConfigError, match="z\\^2/8"):
        RescaledProblem(0.01, A=0.1, Z=30.0)


def test_coercivity_floor():
    prob = RescaledProblem(1e-2, A=0.1)
    z = np.linspace(-prob.Z, prob.Z, 1001)
    assert np.all(prob.potential(z) >= 0.375 * z * z - 1e-12)
    assert solve_rescaled(prob).e >= oscillator_floor(prob, 4096) - 1e-9


def test_with_resets_width():
    p = RescaledProblem(1e-2, A=0.1)
    q = p.with_(epsilon=0.05)
    assert q.Z != p.Z
    assert p.with_(well="a").Z == p.Z


@pytest.mark.parametrize("eps,expected", [(1e-2, 0.60007), (1e-3, 0.6000007)])
def test_frozen_gap_values(eps, expected):
    g = rescaled_gap(eps)
    assert g.gap / eps == pytest.approx(expected, rel=1e-5)
    assert g.predicted == pytest.approx(0.6 * eps, rel=1e-12)
    assert g.e_zero > 1.0 > g.e_a


def test_sign_flip_swaps_wells_exactly():
    p = RescaledProblem(3e-3, A=0.1)
    q = RescaledProblem(3e-3, A=-0.1, Z=p.Z)
    assert solve_rescaled(p).e == solve_rescaled(q.with_(well=Well.A, Z=p.Z)).e


def test_fastlog_amplitude_changes_sign():
    g0 = rescaled_gap(math.exp(-math.pi), profile="fast-log")
    g1 = rescaled_gap(math.exp(-3 * math.pi), profile="fast-log")
    assert g0.gap == pytest.approx(0.01862, rel=2e-3)
    assert g1.gap == pytest.approx(-3.476e-5, rel=2e-3)
    assert perturbation_amplitude(math.exp(-math.pi), 2, "fast-log") > 0
    assert perturbation_amplitude(math.exp(-3 * math.pi), 2, "fast-log") < 0


def test_paper_plus_zero_gap():
    eps = math.exp(-2 * math.exp(math.pi / 2))
    g = rescaled_gap(eps, profile="paper-loglog")
    assert g.omega == pytest.approx(1.0, abs=1e-12)
    assert g.gap > 0
    assert g.gap == pytest.approx(g.predicted, rel=0.05)
