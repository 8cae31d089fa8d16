"""Harmonic-scale problems: each well blown up by x = sqrt(eps) z.

Near a well the physical operator divided by eps becomes

    L = -2 d^2/dz^2 + z^2/2 +- A eps^(m-1) z^(2m) omega(sqrt(eps) |z|)

with + at the well at 0 and - at the well at a.  Its Dirichlet ground energy
e on a truncated window (-Z, Z) is the physical well energy divided by eps.
The unperturbed oscillator has energy 1 and ground state
psi0 = (2 pi)^(-1/4) exp(-z^2/4), a Gaussian of unit variance, so first-order
perturbation theory predicts e = 1 +- (2m-1)!! A omega eps^(m-1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .potential import Profile, _as_profile, omega, omega_values
from .spectral import (
    EigenPair,
    OperatorMatrix,
    RefinedValue,
    dirichlet_from_function,
    min_eigenpair,
    min_eigenvalue,
    richardson,
)

DEFAULT_N_LIST = (4096, 8192)
DEFAULT_TOL = 1e-12
MIN_HALF_WIDTH = 4.0


class RescaledConfigError(ValueError):
    """The rescaled problem is not coercive on the requested window."""


class Well(str, Enum):
    ZERO = "zero"
    A = "a"

    @property
    def sign(self) -> float:
        return 1.0 if self is Well.ZERO else -1.0


# -- harmonic reference -------------------------------------------------------------

def double_factorial_moment(m: int) -> int:
    """(2m-1)!!, the 2m-th moment of a unit-variance Gaussian."""
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    return math.prod(range(2 * int(m) - 1, 0, -2))


def harmonic_ground_state(z):
    return (2.0 * math.pi) ** -0.25 * np.exp(-0.25 * np.asarray(z, dtype=float) ** 2)


def fourth_moment() -> int:
    return double_factorial_moment(2)


class HarmonicReference:
    """Closed forms for H0 = -2 d^2/dz^2 + z^2/2."""

    energy = 1.0
    norm = 1.0

    @staticmethod
    def ground_state(z):
        return harmonic_ground_state(z)

    @staticmethod
    def derivative(z):
        z = np.asarray(z, dtype=float)
        return -0.5 * z * harmonic_ground_state(z)

    @staticmethod
    def moment(m: int) -> int:
        return double_factorial_moment(m)

    @staticmethod
    def moment_quadrature(m: int, Z: float = 12.0, n: int = 8192) -> float:
        """Trapezoid value of int z^(2m) psi0^2 over (-Z, Z)."""
        z = np.linspace(-Z, Z, n + 1)
        f = z ** (2 * m) * harmonic_ground_state(z) ** 2
        return float((Z * 2.0 / n) * (f.sum() - 0.5 * (f[0] + f[-1])))

    @staticmethod
    def energy_quadrature(Z: float = 12.0, n: int = 8192) -> float:
        """Trapezoid value of int 2 psi0'^2 + z^2 psi0^2 / 2 over (-Z, Z)."""
        z = np.linspace(-Z, Z, n + 1)
        f = 2.0 * HarmonicReference.derivative(z) ** 2 + 0.5 * z * z * harmonic_ground_state(z) ** 2
        return float((Z * 2.0 / n) * (f.sum() - 0.5 * (f[0] + f[-1])))


def perturbation_amplitude(epsilon: float, m: int, profile, Z: float = 16.0,
                           n: int = 16384) -> float:
    """int z^(2m) omega(sqrt(eps)|z|) psi0^2 dz, by the trapezoid rule.

    For slowly varying omega this is close to (2m-1)!! omega(sqrt(eps)); for
    the fast-log profile omega changes sign on the Gaussian scale and the
    integral has to be computed.
    """
    profile = _as_profile(profile)
    if profile in (Profile.FROZEN_PLUS, Profile.FROZEN_MINUS):
        return double_factorial_moment(m) * (1.0 if profile is Profile.FROZEN_PLUS else -1.0)
    z = np.linspace(-Z, Z, n + 1)
    r = math.sqrt(epsilon) * np.abs(z)
    w = np.zeros_like(z)
    ok = r > 0.0
    if profile is Profile.PAPER_LOGLOG:
        ok &= r < 1.0
    w[ok] = omega_values(r[ok], profile)
    f = z ** (2 * m) * w * harmonic_ground_state(z) ** 2
    return float((2.0 * Z / n) * (f.sum() - 0.5 * (f[0] + f[-1])))


# -- rescaled problem ---------------------------------------------------------------------

def truncation_half_width(epsilon: float, A: float, m: int, profile, tol: float = DEFAULT_TOL) -> float:
    """Z = min(tail width for ``tol``, coercivity radius, profile domain).

    The tail width max(8, 6 + sqrt(2|log tol|)) puts the Gaussian tail far
    below ``tol``.  The coercivity radius keeps |A| eps^(m-1) z^(2m-2) <= 1/8
    so the perturbed potential stays above 3 z^2 / 8.  The log-log profile is
    only defined for sqrt(eps)|z| <= 1/2.
    """
    z_tol = max(8.0, 6.0 + math.sqrt(2.0 * abs(math.log(tol))))
    Z = z_tol
    if A != 0.0:
        Z = min(Z, (8.0 * abs(A) * epsilon ** (m - 1)) ** (-1.0 / (2 * m - 2)))
    if _as_profile(profile) is Profile.PAPER_LOGLOG:
        Z = min(Z, 0.5 / math.sqrt(epsilon))
    return Z


@dataclass(frozen=True)
class RescaledProblem:
    epsilon: float
    A: float = 0.1
    m: int = 2
    profile: Profile = Profile.FROZEN_PLUS
    well: Well = Well.ZERO
    Z: float | None = None
    n_list: tuple = DEFAULT_N_LIST
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        object.__setattr__(self, "profile", _as_profile(self.profile))
        object.__setattr__(self, "well", Well(self.well))
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        if not (self.epsilon > 0.0 and math.isfinite(self.epsilon)):
            raise RescaledConfigError(f"epsilon must be positive and finite, got {self.epsilon}")
        if int(self.m) != self.m or self.m < 2:
            raise RescaledConfigError(f"m must be an integer >= 2, got {self.m}")
        if self.Z is None:
            object.__setattr__(self, "Z", truncation_half_width(
                self.epsilon, self.A, self.m, self.profile, self.tol))
        if self.Z < MIN_HALF_WIDTH:
            raise RescaledConfigError(
                f"window half-width {self.Z:.3g} < {MIN_HALF_WIDTH}: the perturbation is not "
                "dominated by z^2/8 on a window wide enough for the Gaussian core")
        self.check_coercivity()

    @property
    def coefficient(self) -> float:
        """Signed prefactor of z^(2m) omega in the rescaled potential."""
        return self.well.sign * self.A * self.epsilon ** (self.m - 1)

    def perturbation(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        r = math.sqrt(self.epsilon) * np.abs(z)
        w = np.zeros_like(z)
        ok = r > 0.0
        w[ok] = omega_values(r[ok], self.profile)
        return self.coefficient * z ** (2 * self.m) * w

    def potential(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return 0.5 * z * z + self.perturbation(z)

    def check_coercivity(self, n: int = 4096) -> None:
        """|perturbation| <= z^2/8 on the window, checked on a grid."""
        z = np.linspace(-self.Z, self.Z, n + 1)
        excess = np.abs(self.perturbation(z)) - 0.125 * z * z
        if np.any(excess > 1e-12 * (1.0 + z * z)):
            j = int(np.argmax(excess))
            raise RescaledConfigError(f"perturbation exceeds z^2/8 at z = {z[j]:.6g}")

    def with_(self, **changes) -> "RescaledProblem":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if "Z" not in changes and any(k in changes for k in ("epsilon", "A", "m", "profile", "tol")):
            d["Z"] = None
        d.update(changes)
        return RescaledProblem(**d)

    def matrix(self, n_sub: int) -> OperatorMatrix:
        # epsilon = 1 gives the -2 d^2/dz^2 kinetic term
        return dirichlet_from_function(self.potential, (-self.Z, self.Z), 1.0, n_sub)


@dataclass(frozen=True, eq=False)
class RescaledSolution:
    problem: RescaledProblem
    e: float
    error: float
    refined: RefinedValue
    eig: EigenPair

    @property
    def E(self) -> float:
        """Physical-scale energy eps * e."""
        return self.problem.epsilon * self.e


def solve_rescaled(problem: RescaledProblem) -> RescaledSolution:
    """Richardson-refined Dirichlet ground energy of the rescaled operator.

    Returns e with E = eps e; ``eig`` is the eigenpair on the finest grid.
    """
    values = []
    eig = None
    for n in problem.n_list:
        eig = min_eigenpair(problem.matrix(n), tol=problem.tol)
        values.append(eig.value)
    if len(values) >= 2:
        e, err = richardson(values[-2], values[-1])
    else:
        e, err = values[0], math.nan
    refined = RefinedValue(e, err, None, tuple(values), problem.n_list)
    return RescaledSolution(problem, e, err, refined, eig)


def oscillator_floor(problem: RescaledProblem, n_sub: int) -> float:
    """Smallest eigenvalue of -2 d^2/dz^2 + 3 z^2 / 8 on the same grid."""
    mat = dirichlet_from_function(lambda z: 0.375 * np.asarray(z) ** 2,
                                  (-problem.Z, problem.Z), 1.0, n_sub)
    return min_eigenvalue(mat)


@dataclass(frozen=True)
class GapResult:
    epsilon: float
    gap: float
    predicted: float
    amplitude: float
    omega: float
    e_zero: float
    e_a: float
    error: float
    Z: float
    flags: tuple = field(default_factory=tuple)


def rescaled_gap(epsilon: float, A: float = 0.1, m: int = 2, profile=Profile.FROZEN_PLUS,
                 n_list: tuple = DEFAULT_N_LIST, Z: float | None = None,
                 tol: float = DEFAULT_TOL) -> GapResult:
    """e_zero - e_a and its first-order prediction 2 A eps^(m-1) amplitude.

    The amplitude is (2m-1)!! omega(sqrt eps) except for the fast-log
    profile, where it is the Gaussian average of z^(2m) omega(sqrt(eps)|z|).
    """
    profile = _as_profile(profile)
    zero = RescaledProblem(epsilon, A, m, profile, Well.ZERO, Z, n_list, tol)
    a = zero.with_(well=Well.A, Z=zero.Z)
    s0, sa = solve_rescaled(zero), solve_rescaled(a)
    r = math.sqrt(epsilon)
    w = omega(r, profile) if r <= 0.5 else float(omega_values(np.array([r]), profile)[0])
    if profile is Profile.FAST_LOG:
        amp = perturbation_amplitude(epsilon, m, profile)
    else:
        amp = double_factorial_moment(m) * w
    flags = []
    gap = s0.e - sa.e
    err = s0.error + sa.error
    if abs(A) * epsilon ** (m - 1) < 1e3 * np.finfo(float).eps:
        flags.append("shift-below-resolution")
    return GapResult(epsilon, gap, 2.0 * A * epsilon ** (m - 1) * amp, amp, w,
                     s0.e, sa.e, err, zero.Z, tuple(flags))
