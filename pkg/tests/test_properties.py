import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from oracles import dense_operator, jacobi_eigenvalues
from viscous_ergodic.potential import (
    PotentialSpec,
    Profile,
    build_potential,
    anchored_jumps,
    cutoff_partition,
    omega,
    torus_distance_to_wells,
)
from viscous_ergodic.spectral import assemble_dirichlet, assemble_periodic, laplacian_matrix, min_eigenpair

PROPS = settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def specs(draw):
    rho = draw(st.floats(0.005, 0.049))
    A = draw(st.floats(-1.0, 1.0))
    m = draw(st.sampled_from([2, 3]))
    profile = draw(st.sampled_from(list(Profile)))
    return PotentialSpec(rho=rho, A=A, m=m, profile=profile)


def _floor(h: float, k: int, vmax: float) -> float:
    # rounding in a k-th difference quotient of values of size vmax
    return 64.0 * np.finfo(float).eps * vmax * 2**k / h**k


@PROPS
@given(spec=specs())
def test_partition_identity(spec):
    part = cutoff_partition(spec.rho, 2048)
    total = part.chi0**2 + part.chia**2 + part.chib**2
    assert np.abs(total - 1.0).max() < 1e-14
    assert np.all((part.chi0 >= 0) & (part.chia >= 0) & (part.chib >= 0))
    d = torus_distance_to_wells(np.arange(2048) / 2048)
    assert np.all(part.dchib[d <= spec.rho / 3] == 0.0)


@PROPS
@given(spec=specs())
def test_potential_positive_and_symmetric(spec):
    pot = build_potential(spec, 4096)
    v = pot.values
    assert v[0] == 0.0 and v[2048] == 0.0
    off = np.ones(4096, bool)
    off[[0, 2048]] = False
    assert np.all(v[off] > 0.0)
    d = torus_distance_to_wells(pot.x)
    assert np.all(v[d >= spec.rho] >= spec.positivity_floor)
    np.testing.assert_array_equal(v[1:], v[1:][::-1])
    # coercivity inside the patch: V >= 3 d^2 / 8
    near = d < spec.rho
    assert np.all(v[near] >= 0.375 * d[near] ** 2 * (1 - 1e-12))


@PROPS
@given(spec=specs())
def test_seam_jumps_decay(spec):
    pot = build_potential(spec, 4096)
    h = min(spec.effective_shelf_width, spec.wall_width) / 256.0
    coarse = anchored_jumps(pot, h)
    fine = anchored_jumps(pot, h / 2)
    for c, f in zip(coarse, fine):
        for k in range(4):
            # C^3 seams: every jump is O(h), so it halves up to rounding
            bound = 0.75 * abs(c.jumps[k]) + _floor(h / 2, k, spec.plateau)
            assert abs(f.jumps[k]) <= bound, (c.name, k, c.jumps[k], f.jumps[k])


@PROPS
@given(r=st.floats(1e-300, 0.5), profile=st.sampled_from(list(Profile)))
def test_omega_bounded(r, profile):
    assert abs(omega(r, profile)) <= 1.0


@settings(max_examples=30, deadline=None)
@given(spec=specs(), eps=st.floats(0.01, 0.05))
def test_periodic_below_dirichlet(spec, eps):
    pot = build_potential(spec, 2048)
    E = min_eigenpair(assemble_periodic(pot, eps)).value
    for c in (0.0, 0.5):
        ED = min_eigenpair(assemble_dirichlet(pot, (c - spec.rho, c + spec.rho), eps)).value
        assert 0.0 < E <= ED + 1e-12


@settings(max_examples=40, deadline=None)
@given(n=st.integers(3, 40), periodic=st.booleans(), seed=st.integers(0, 2**32 - 1),
       k=st.floats(1e-3, 1e3))
def test_random_matrices_match_oracle(n, periodic, seed, k):
    v = np.random.default_rng(seed).uniform(0.0, 10.0, n)
    w, _ = jacobi_eigenvalues(dense_operator(2 * k + v, -k, periodic))
    got = min_eigenpair(laplacian_matrix(v, k, periodic=periodic)).value
    assert abs(got - w[0]) <= 1e-10 * max(1.0, abs(w[0]), math.sqrt(k))
