import math

import numpy as np
import pytest

from viscous_ergodic.potential import (
    PotentialError,
    PotentialSpec,
    Profile,
    agmon_weight,
    anchored_jumps,
    build_potential,
    check_smoothness,
    cutoff_partition,
    jump_ratios,
    omega,
    omega_from_log,
    smoothstep,
    smoothstep_coefficients,
    torus_distance_to_wells,
    well_perturbation,
)

N = 16384


@pytest.fixture(scope="module")
def pot():
    return build_potential(PotentialSpec(), N)


def test_omega_anchor_points():
    # log log(1/r) = pi/2 gives sin = 1, 3 pi/2 gives -1
    assert omega(math.exp(-math.exp(math.pi / 2))) == pytest.approx(1.0, abs=1e-15)
    assert omega(math.exp(-math.exp(1.5 * math.pi))) == pytest.approx(-1.0, abs=1e-14)
    assert omega(0.3, "frozen-plus") == 1.0
    assert omega(0.3, "frozen-minus") == -1.0
    assert omega(math.exp(-math.pi / 2), "fast-log") == pytest.approx(1.0)


def test_omega_domain():
    for r in (0.0, -0.1, 0.6, math.nan):
        with pytest.raises(PotentialError):
            omega(r)
    with pytest.raises(PotentialError):
        omega(0.1, "square")


def test_omega_from_log_far_below_underflow():
    # log eps_0^- / 2 with eps_0^- ~ 2e-97 and much smaller
    assert omega_from_log(-0.5 * 2 * math.exp(1.5 * math.pi) * 2) == pytest.approx(
        math.sin(math.log(2 * math.exp(1.5 * math.pi))))
    assert omega_from_log(-math.exp(math.pi / 2 + 2 * math.pi)) == pytest.approx(1.0, abs=1e-12)


def test_smoothstep_order7_coefficients():
    np.testing.assert_array_equal(smoothstep_coefficients(7), [0, 0, 0, 0, 35, -84, 70, -20])
    t = np.linspace(0, 1, 11)
    s = smoothstep(t)
    assert s[0] == 0.0 and s[-1] == 1.0
    np.testing.assert_allclose(s + s[::-1], 1.0, atol=1e-14)
    for k in (1, 2, 3):
        d = smoothstep(np.array([0.0, 1.0]), 7, deriv=k)
        np.testing.assert_allclose(d, 0.0, atol=1e-12)


def test_spec_validation_messages():
    with pytest.raises(PotentialError, match="1/20"):
        PotentialSpec(rho=0.1)
    with pytest.raises(PotentialError, match="a = 1/2"):
        PotentialSpec(a=0.4)
    with pytest.raises(PotentialError, match="integer"):
        PotentialSpec(m=1)
    with pytest.raises(PotentialError):
        PotentialSpec(profile="nope")
    with pytest.raises(PotentialError, match="odd"):
        PotentialSpec(bridge_order=6)


def test_well_formula_exact_inside_rho(pot):
    spec = pot.spec
    j = np.arange(1, int(spec.rho * N))
    x = j / N
    expected = 0.5 * x * x + spec.A * x**4 * np.sin(np.log(-np.log(x)))
    np.testing.assert_allclose(pot.values[j], expected, rtol=1e-14, atol=0)
    expected_a = 0.5 * x * x - spec.A * x**4 * np.sin(np.log(-np.log(x)))
    np.testing.assert_allclose(pot.values[N // 2 + j], expected_a, rtol=1e-14, atol=0)
    assert pot.values[0] == 0.0 and pot.values[N // 2] == 0.0


def test_well_perturbation():
    spec = PotentialSpec()
    assert well_perturbation(0.0, spec) == 0.0
    assert well_perturbation(0.01, spec) == pytest.approx(1e-8 * math.sin(math.log(math.log(100))))
    with pytest.raises(PotentialError):
        well_perturbation(spec.rho, spec)


def test_symmetry_and_degenerate_translation():
    pot = build_potential(PotentialSpec(), 4096)
    np.testing.assert_array_equal(pot.values[1:], pot.values[1:][::-1])
    flat = build_potential(PotentialSpec(A=0.0), 4096)
    np.testing.assert_array_equal(flat.values, np.roll(flat.values, 2048))


def test_frozen_plus_minus_mirror():
    plus = build_potential(PotentialSpec(profile="frozen-plus"), 4096)
    minus = build_potential(PotentialSpec(profile="frozen-minus"), 4096)
    np.testing.assert_array_equal(plus.values, np.roll(minus.values, 2048))


def test_bridge_minimum_frozen(pot):
    # continuous-scan reference value 7.998e-4; the grid minimum sits just above it
    d = torus_distance_to_wells(pot.x)
    bridge = pot.values[d >= pot.spec.rho]
    assert float(bridge.min()) == pytest.approx(8.0133e-4, rel=1e-4)
    assert float(bridge.min()) > pot.spec.positivity_floor


def test_positivity_failure_reports_grid_point():
    with pytest.raises(PotentialError, match="grid point j="):
        build_potential(PotentialSpec(positivity_floor=0.01), 4096)


def test_grid_size_checks():
    with pytest.raises(PotentialError):
        build_potential(PotentialSpec(), 1001)
    with pytest.raises(PotentialError):
        build_potential(PotentialSpec(), 128)


def test_seam_jumps_decay_under_refinement():
    spec = PotentialSpec()
    coarse = check_smoothness(build_potential(spec, 16384))
    fine = check_smoothness(build_potential(spec, 32768))
    ratios = jump_ratios(coarse, fine)
    for name, r in ratios.items():
        if "rho" in name:
            continue  # the formula is analytic across rho, so only rounding is left
        for c, f, k in zip(next(s for s in coarse if s.name == name).jumps,
                           next(s for s in fine if s.name == name).jumps, range(4)):
            if abs(f) > 1e-6 * 10**k:
                assert abs(c) / abs(f) > 1.5, (name, k, c, f)


def test_order5_bridge_has_third_derivative_jump():
    spec = PotentialSpec(bridge_order=5)
    j3 = [abs(s.jumps[3]) for s in check_smoothness(build_potential(spec, 16384))
          if "wall" in s.name]
    j3f = [abs(s.jumps[3]) for s in check_smoothness(build_potential(spec, 65536))
           if "wall" in s.name]
    assert max(j3f) > 0.5 * max(j3) > 1.0


def test_partition_identity(pot):
    part = cutoff_partition(0.04, N)
    total = part.chi0**2 + part.chia**2 + part.chib**2
    np.testing.assert_allclose(total, 1.0, atol=1e-14)
    d = torus_distance_to_wells(pot.x)
    core = d <= 0.04 / 3
    for dchi in (part.dchi0, part.dchia, part.dchib):
        assert np.all(dchi[core] == 0.0)
    assert np.all(part.chib[d >= 0.04] == 1.0)


def test_partition_rejects_large_rho():
    with pytest.raises(PotentialError):
        cutoff_partition(0.06, 1024)


def test_agmon_weight_frozen(pot):
    w = agmon_weight(pot, 0.1)
    assert w.s == pytest.approx(0.0012509418003879451, rel=1e-12)
    assert w.nu == pytest.approx(0.0012518843103662667, rel=1e-12)
    assert w.slope == pytest.approx(math.sqrt(w.nu / 2))
    assert np.all(w.edge_slopes() <= w.slope * (1 + 1e-9))
    assert w.Phi.max() == pytest.approx(w.s)
    with pytest.raises(PotentialError):
        agmon_weight(pot, 0.2)


def test_profiles_listed():
    assert {p.value for p in Profile} == {"paper-loglog", "frozen-plus", "frozen-minus", "fast-log"}


def test_anchored_jumps_separate_c2_from_c3():
    h = 1e-4
    smooth = build_potential(PotentialSpec(), 4096)
    rough = build_potential(PotentialSpec(bridge_order=5), 4096)
    for pot, decays in ((smooth, True), (rough, False)):
        a = {s.name: s.jumps[3] for s in anchored_jumps(pot, h)}
        b = {s.name: s.jumps[3] for s in anchored_jumps(pot, h / 2)}
        ratio = abs(a["a-wall"]) / abs(b["a-wall"])
        assert bool(ratio > 1.8) is decays
