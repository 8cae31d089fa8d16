"""Acceptance criteria, one test each; every test logs a PASS/FAIL line."""

import math
import time
from functools import lru_cache

import numpy as np
import pytest

import test_properties as props
from oracles import dense_operator, jacobi_eigenvalues
from viscous_ergodic import experiments as ex
from viscous_ergodic.potential import PotentialSpec, TabulatedPotential, omega
from viscous_ergodic.rescaled import (
    HarmonicReference,
    RescaledProblem,
    fourth_moment,
    harmonic_ground_state,
    rescaled_gap,
    solve_rescaled,
)
from viscous_ergodic.spectral import (
    assemble_dirichlet,
    assemble_periodic,
    dirichlet_from_function,
    laplacian_matrix,
    min_eigenpair,
)

DEFAULT = ex.SolverConfig()


def record(log, number, title, ok, detail):
    log.append(f"C{number} {'PASS' if ok else 'FAIL'} {title}: {detail}")
    assert ok, detail


@lru_cache(maxsize=None)
def report(profile: str, eps: float):
    return ex.compute_report(PotentialSpec(profile=profile), eps, config=DEFAULT)


def test_c1_harmonic_baseline(acceptance_log):
    t0 = time.perf_counter()
    sol = solve_rescaled(RescaledProblem(1.0, A=0.0, Z=10.0, n_list=(4096, 8192)))
    dist = float(np.abs(sol.eig.vector - harmonic_ground_state(sol.eig.x)).max())
    dt = time.perf_counter() - t0
    ok = abs(sol.e - 1.0) <= 1e-6 and dist <= 1e-4 and dt < 5.0
    record(acceptance_log, 1, "harmonic baseline", ok,
           f"|e-1| = {abs(sol.e - 1):.2e}, sup|U-psi0| = {dist:.2e}, {dt:.2f} s")


def test_c2_leading_coefficient(acceptance_log):
    t0 = time.perf_counter()
    window = (1e-4, 1e-2)
    eps = ex.log_sweep(*window, 12)
    zero = ex.rescaled_series(eps, 0.1, 2, "frozen-plus", "zero")
    a = ex.rescaled_series(eps, 0.1, 2, "frozen-plus", "a")
    fz = ex.fit_asymptotic(zero, "zero", window, 0.1, 2)
    fa = ex.fit_asymptotic(a, "a", window, 0.1, 2)
    swapped = ex.rescaled_series(eps, -0.1, 2, "frozen-plus", "zero")
    swapped_a = ex.rescaled_series(eps, -0.1, 2, "frozen-plus", "a")
    exact_swap = [s[1] for s in swapped] == [p[1] for p in a] and \
        [s[1] for s in swapped_a] == [p[1] for p in zero]
    dt = time.perf_counter() - t0
    ok = (abs(fz.slope - 0.3) <= 0.05 * 0.3 and abs(fa.slope + 0.3) <= 0.05 * 0.3
          and exact_swap and dt < 120.0)
    record(acceptance_log, 2, "leading coefficient", ok,
           f"slope0 = {fz.slope:.5f}, slopea = {fa.slope:.5f}, "
           f"c0 = {fz.estimate:.5f}, swap exact = {exact_swap}, {dt:.1f} s")


def test_c3_gaussian_moments(acceptance_log):
    quad = HarmonicReference.moment_quadrature(2, Z=12.0, n=8192)
    (row,) = ex.regularity_scan((3,))
    ok = fourth_moment() == 3 and abs(quad - 3.0) <= 1e-8 and row.rel_error <= 0.07
    record(acceptance_log, 3, "gaussian moments", ok,
           f"fourth_moment = {fourth_moment()}, quadrature - 3 = {quad - 3:.1e}, "
           f"fitted c3 = {row.fitted:.4f}")


def test_c4_rayleigh_ordering(acceptance_log):
    schedule = ex.epsilon_sequences(n_max=0, k_max=1)
    reps = ex.run_sweep(PotentialSpec(), schedule, DEFAULT)
    solved = [r for r in reps if math.isfinite(r.E)]
    skipped = [r.provenance for r in reps if not math.isfinite(r.E)]
    bad = []
    for r in solved:
        if not (r.E > 0.0 and r.E <= min(r.E0D, r.EaD) + 1e-10 and r.E <= r.trial_bound
                and r.rayleigh_ok):
            bad.append(f"ordering at {r.epsilon:.3g}")
        if r.epsilon <= 0.01 and not 0.8 <= r.E / r.epsilon <= 1.2:
            bad.append(f"E/eps = {r.E / r.epsilon:.3f} at {r.epsilon:.3g}")
    ratios = [r.E / r.epsilon for r in solved if r.epsilon <= 0.01]
    ok = not bad and len(solved) == sum(e.physical for e in schedule)
    record(acceptance_log, 4, "rayleigh ordering", ok,
           f"{len(solved)} rows solved, E/eps in [{min(ratios):.3f}, {max(ratios):.3f}] "
           f"for eps <= 0.01, unresolvable rows {skipped}" + (f", failures {bad}" if bad else ""))


def _slopes(eps, logs):
    t = [-1.0 / e for e in eps]
    return [(logs[i + 1] - logs[i]) / (t[i + 1] - t[i]) for i in range(len(eps) - 1)]


def test_c5_localization(acceptance_log):
    t0 = time.perf_counter()
    eps = ex.WITNESS_EPSILONS
    lines, ok = [], True
    for profile, mass_field, sign in (("frozen-minus", "log_ma", 1.0), ("frozen-plus", "log_m0", -1.0)):
        reps = [report(profile, e) for e in eps]
        logs = [getattr(r, mass_field) for r in reps]
        s1, s2 = _slopes(eps, logs)
        lr = [sign * r.log_ratio_a0 for r in reps]
        phi = [sign * r.phi_at_a for r in reps]
        this = (all(b < a for a, b in zip(logs, logs[1:]))
                and abs(s1 - s2) <= 0.5 * max(abs(s1), abs(s2))
                and all(a - b >= math.log(5.0) for a, b in zip(lr, lr[1:]))
                and all(p > 0.01 for p in phi))
        ok &= this
        lines.append(f"{profile}: slopes {s1:.3f}/{s2:.3f}, log-ratio "
                     f"{', '.join(f'{sign * x:.2f}' for x in lr)}, phi(a) "
                     f"{', '.join(f'{sign * p:.3f}' for p in phi)}")
    dt = time.perf_counter() - t0
    ok &= dt < 180.0
    record(acceptance_log, 5, "localization", ok, "; ".join(lines) + f"; {dt:.1f} s")


def test_c6_exact_identities(acceptance_log):
    spec = PotentialSpec()
    n0 = DEFAULT.grid_size(0.02)
    res = []
    for n in (n0, 2 * n0):
        rep = ex.compute_report(spec, 0.02, config=ex.SolverConfig(n_min=n))
        assert rep.n == n
        res.append((rep.agmon_residual, rep.ims_residual))
    (ag0, ims0), (ag1, ims1) = res
    p_ag, p_ims = math.log2(ag0 / ag1), math.log2(ims0 / ims1)
    ok = ag0 <= 1e-6 and ims0 <= 1e-6 and p_ag >= 1.8 and p_ims >= 1.8
    record(acceptance_log, 6, "exact identities", ok,
           f"n = {n0}: agmon {ag0:.2e}, ims {ims0:.2e}; orders {p_ag:.2f}, {p_ims:.2f}")


def test_c7_measure_concentration(acceptance_log):
    plus = report("frozen-plus", 0.005)
    minus = report("frozen-minus", 0.005)
    ok = plus.mass_near_a >= 0.99 and minus.mass_near_0 >= 0.99
    record(acceptance_log, 7, "measure concentration", ok,
           f"frozen-plus mass near a = {plus.mass_near_a:.4f}, "
           f"frozen-minus mass near 0 = {minus.mass_near_0:.4f} (need >= 0.99)")


def test_c8_nonconvergence_witness(acceptance_log):
    pair = ex.nonconvergence_witness(PotentialSpec(), "frozen-pair", delta=0.01, config=DEFAULT)
    fast = ex.nonconvergence_witness(PotentialSpec(), "fastlog", k_list=(0, 1), config=DEFAULT)
    gap_signs = [r["gap_sign"] for r in fast.rows]
    omegas = [omega(math.sqrt(r["epsilon"]), "fast-log") for r in fast.rows]
    eps0 = math.exp(-2.0 * math.exp(math.pi / 2))
    w0 = omega(math.sqrt(eps0))
    g0 = rescaled_gap(eps0, 0.1, 2, "paper-loglog")
    ok = (pair.two_sided and gap_signs == ["+", "-"]
          and [round(w) for w in omegas] == [1, -1] and all(abs(abs(w) - 1) < 1e-12 for w in omegas)
          and abs(w0 - 1.0) <= 1e-12 and g0.gap > 0 and g0.e_zero > g0.e_a)
    record(acceptance_log, 8, "nonconvergence witness", ok,
           f"frozen-pair signs {pair.signs}, fastlog gap signs {gap_signs}, "
           f"omega(sqrt eps_0+) - 1 = {w0 - 1:.1e}, gap(eps_0+) = {g0.gap:.3e}")


def test_c9_oracle_equivalence(acceptance_log):
    worst = 0.0
    rng = np.random.default_rng(9)
    spec = PotentialSpec()
    mats = []
    for n in (3, 4, 7, 16, 33, 64):
        v = rng.uniform(0, 3, n)
        mats += [laplacian_matrix(v, 0.7, periodic=False), laplacian_matrix(v, 0.7, periodic=True)]
    for n in (8, 32, 64):
        pot = TabulatedPotential.from_function(spec, n)
        mats.append(assemble_periodic(pot, 0.05))
        mats.append(assemble_dirichlet(pot, (-0.2, 0.2), 0.05))
        mats.append(dirichlet_from_function(RescaledProblem(1e-2).potential, (-6, 6), 1.0, n))
    for mat in mats:
        w, _ = jacobi_eigenvalues(dense_operator(mat.diag, mat.off, mat.cyclic))
        worst = max(worst, abs(min_eigenpair(mat).value - w[0]) / max(1.0, abs(w[0])))
    suites = []
    for fn in (props.test_partition_identity, props.test_potential_positive_and_symmetric,
               props.test_seam_jumps_decay):
        try:
            fn()
            suites.append(True)
        except Exception:  # noqa: BLE001
            suites.append(False)
    ok = worst <= 1e-10 and all(suites)
    record(acceptance_log, 9, "oracle equivalence", ok,
           f"{len(mats)} solves, worst relative deviation {worst:.1e}; property suites {suites}")
