"""Quantities derived from ground states: phi^eps, well masses, ratios and identity checks.

Everything that involves U at very small epsilon is evaluated from
``EigenPair.log_vector``; exponential weights e^{Phi/eps} are folded into the
same logarithms, so nothing here overflows or underflows.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .potential import (
    WELL_A,
    AgmonWeight,
    CutoffPartition,
    TabulatedPotential,
    smoothstep,
)
from .spectral import EigenPair, OperatorKind, assemble_periodic, log_quadrature

NEAR_RADIUS = 0.1


class ContractViolation(RuntimeError):
    """An eigenvector that should be strictly positive is not."""


class GridMismatch(ValueError):
    """Objects defined on different grids were combined."""


def _check_positive(eig: EigenPair) -> None:
    if not np.all(np.isfinite(eig.log_vector)):
        raise ContractViolation("eigenvector has a nonpositive entry; solver contract broken")


def _check_grid(eig: EigenPair, n: int) -> None:
    if eig.n != n:
        raise GridMismatch(f"eigenvector has {eig.n} nodes, partner object has {n}")


def _torus_chart(eig: EigenPair) -> np.ndarray:
    """Node coordinates mapped to [-1/2, 1/2)."""
    return np.mod(eig.x + 0.5, 1.0) - 0.5


# -- Hopf-Cole ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PhiField:
    epsilon: float
    values: np.ndarray
    x: np.ndarray
    E: float

    @property
    def c(self) -> float:
        """Ergodic constant c(eps) = -E(eps)."""
        return -self.E

    def at(self, x: float) -> float:
        j = int(round(x * self.values.size)) % self.values.size
        return float(self.values[j])


def hopf_cole(eig: EigenPair, epsilon: float | None = None) -> PhiField:
    """phi = -2 eps (log U - log U(0)), so phi(0) = 0 exactly."""
    _check_positive(eig)
    eps = eig.epsilon if epsilon is None else float(epsilon)
    phi = -2.0 * eps * (eig.log_vector - eig.log_vector[0])
    phi[0] = 0.0
    return PhiField(eps, phi, eig.x, eig.value)


# -- masses and ratios ------------------------------------------------------------------

@dataclass(frozen=True)
class WellMasses:
    m0: float
    ma: float
    mb: float
    log_m0: float
    log_ma: float
    log_mb: float

    @property
    def total(self) -> float:
        return self.m0 + self.ma + self.mb


def _log_weighted_mass(eig: EigenPair, chi: np.ndarray) -> float:
    with np.errstate(divide="ignore"):
        logchi = np.log(chi)
    return log_quadrature(2.0 * eig.log_vector + 2.0 * logchi, eig.h)


def well_masses(eig: EigenPair, partition: CutoffPartition) -> WellMasses:
    """m_theta = int chi_theta^2 U^2 for theta in (0, a, b), with their logs."""
    _check_positive(eig)
    _check_grid(eig, partition.n)
    logs = [_log_weighted_mass(eig, c) for c in partition.cutoffs]
    vals = [math.exp(v) for v in logs]
    return WellMasses(*vals, *logs)


@dataclass(frozen=True)
class LocalizationRatio:
    log_a_over_0: float
    a_over_0: float
    zero_over_a: float


def localization_ratio(eig: EigenPair) -> LocalizationRatio:
    """U(a)/U(0) and its inverse from the nodal values at x = 0 and x = 1/2."""
    _check_positive(eig)
    if eig.kind is not OperatorKind.PERIODIC or eig.n % 2:
        raise GridMismatch("localization ratio needs a periodic eigenvector on an even grid")
    lr = float(eig.log_vector[eig.n // 2] - eig.log_vector[0])
    with np.errstate(over="ignore"):
        return LocalizationRatio(lr, float(np.exp(lr)), float(np.exp(-lr)))


# -- exact identities ---------------------------------------------------------------------

def _edge_diff(v: np.ndarray, periodic: bool) -> np.ndarray:
    if periodic:
        return np.diff(np.append(v, v[0]))
    return np.diff(np.concatenate(([0.0], v, [0.0])))


def _edge_products(v: np.ndarray, periodic: bool) -> np.ndarray:
    if periodic:
        return v * np.roll(v, -1)
    w = np.concatenate(([0.0], v, [0.0]))
    return w[:-1] * w[1:]


def _potential_on(eig: EigenPair, pot: TabulatedPotential | np.ndarray) -> np.ndarray:
    values = pot.values if isinstance(pot, TabulatedPotential) else np.asarray(pot)
    _check_grid(eig, values.size)
    return values


def agmon_identity_residual(eig: EigenPair, weight: AgmonWeight,
                            pot: TabulatedPotential | np.ndarray,
                            epsilon: float | None = None) -> float:
    """Relative residual of the Agmon identity on the periodic grid.

        2 eps^2 int |(e^{Phi/2eps} U)'|^2 + int (V - E - |Phi'|^2/2) e^{Phi/eps} U^2 = 0

    The first integral uses the operator's forward differences on edges; the
    |Phi'|^2 term is taken on edges as well, with e^{Phi/eps} U^2 replaced by
    its geometric edge mean.  The discrete identity differs from this by
    O(h^2), which is what the residual measures.  The result is
    |T1 + T2| / (|T1| + |T2|).
    """
    _check_positive(eig)
    _check_grid(eig, weight.n)
    eps = eig.epsilon if epsilon is None else float(epsilon)
    V = _potential_on(eig, pot)
    L = weight.Phi / (2.0 * eps) + eig.log_vector
    shift = float(L.max())
    w = np.exp(L - shift)  # e^{Phi/2eps} U, rescaled by e^{-shift}
    dphi = _edge_diff(weight.Phi, True) / eig.h
    t1 = 2.0 * eps**2 * eig.h * float(np.sum((_edge_diff(w, True) / eig.h) ** 2))
    t2 = eig.h * float(np.sum((V - eig.value) * w * w)) \
        - eig.h * float(np.sum(0.5 * dphi * dphi * _edge_products(w, True)))
    denom = abs(t1) + abs(t2)
    return abs(t1 + t2) / denom if denom > 0.0 else 0.0


def _quadratic_form(v: np.ndarray, V: np.ndarray, eps: float, h: float, periodic: bool) -> float:
    dv = _edge_diff(v, periodic) / h
    return 2.0 * eps**2 * h * float(np.sum(dv * dv)) + h * float(np.sum(V * v * v))


def ims_identity_residual(eig: EigenPair, partition, pot: TabulatedPotential | np.ndarray,
                          epsilon: float | None = None) -> float:
    """Relative residual of the IMS localization formula.

        <P U, U> = sum_theta <P chi_theta U, chi_theta U> - 2 eps^2 sum_theta int |chi_theta'|^2 U^2

    ``partition`` is a :class:`CutoffPartition` or a sequence of
    (chi values, chi' at edge midpoints) pairs.  The correction integral uses
    the analytic chi' at edge midpoints against U_j U_{j+1}; against the
    exact discrete identity this is an O(h^2) defect.
    """
    _check_positive(eig)
    eps = eig.epsilon if epsilon is None else float(epsilon)
    V = _potential_on(eig, pot)
    periodic = eig.kind is OperatorKind.PERIODIC
    if isinstance(partition, CutoffPartition):
        _check_grid(eig, partition.n)
        mid = eig.x + 0.5 * eig.h
        pairs = list(zip(partition.cutoffs, partition.derivative(mid)))
    else:
        pairs = [(np.asarray(c), np.asarray(d)) for c, d in partition]
    u = np.exp(eig.log_vector - eig.log_vector.max())
    q = _quadratic_form(u, V, eps, eig.h, periodic)
    parts = [_quadratic_form(c * u, V, eps, eig.h, periodic) for c, _ in pairs]
    prod = _edge_products(u, periodic)
    corr = 2.0 * eps**2 * eig.h * float(sum(np.sum(d * d * prod[: d.size]) for _, d in pairs))
    residual = q - sum(parts) + corr
    denom = abs(q) + sum(abs(p) for p in parts) + abs(corr)
    return abs(residual) / denom if denom > 0.0 else 0.0


def ims_correction(eig: EigenPair, partition: CutoffPartition, epsilon: float | None = None) -> float:
    """2 eps^2 sum_theta int |chi_theta'|^2 U^2, relative to the energy scale it perturbs."""
    eps = eig.epsilon if epsilon is None else float(epsilon)
    mid = eig.x + 0.5 * eig.h
    prod_log = 0.5 * (eig.log_vector + np.roll(eig.log_vector, -1))
    total = -math.inf
    for d in partition.derivative(mid):
        with np.errstate(divide="ignore"):
            total = np.logaddexp(total, log_quadrature(2.0 * np.log(np.abs(d)) + 2.0 * prod_log, eig.h))
    return 2.0 * eps**2 * math.exp(total)


# -- measure statistics ---------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureMoments:
    mass_near_0: float
    mass_near_a: float
    first_moment: float


def measure_moments(eig: EigenPair, radius: float = NEAR_RADIUS) -> MeasureMoments:
    """U^2 mass within ``radius`` of each well and the mean in the chart [-1/2, 1/2)."""
    _check_positive(eig)
    y = _torus_chart(eig)
    u2 = np.exp(2.0 * eig.log_vector)
    near0 = np.abs(y) < radius
    neara = np.abs(np.mod(eig.x - WELL_A + 0.5, 1.0) - 0.5) < radius
    return MeasureMoments(
        float(eig.h * u2[near0].sum()),
        float(eig.h * u2[neara].sum()),
        float(eig.h * np.sum(y * u2)),
    )


# -- Rayleigh trial bound -------------------------------------------------------------------

@dataclass(frozen=True)
class TrialBound:
    quotient: float
    window: float
    capped: bool


def rayleigh_trial_bound(pot: TabulatedPotential, epsilon: float,
                         max_window: float | None = None) -> TrialBound:
    """Rayleigh quotient of xi(x) exp(-x^2/4eps) centred at x = 0.

    xi is 1 on |x| <= R/2 and 0 for |x| >= R with R = 6 sqrt(eps), capped at
    ``max_window`` (default: where the potential starts its wall, or 0.24).
    The quotient uses the same discrete quadratic form as the operator, so it
    is an exact upper bound for the discrete ground energy.
    """
    if not epsilon > 0.0:
        raise ValueError("epsilon must be positive")
    if max_window is None:
        max_window = pot.spec.wall_radius if pot.spec is not None else 0.24
    R = 6.0 * math.sqrt(epsilon)
    capped = R > max_window
    R = min(R, max_window)
    if R < 8.0 * pot.h:
        raise ValueError(f"trial window {R:.3g} is not resolved by the grid (h = {pot.h:.3g})")
    y = np.mod(pot.x + 0.5, 1.0) - 0.5
    xi = 1.0 - smoothstep((np.abs(y) - 0.5 * R) / (0.5 * R), 7)
    v = xi * np.exp(-y * y / (4.0 * epsilon))
    mat = assemble_periodic(pot, epsilon)
    norm2 = pot.h * float(np.sum(v * v))
    return TrialBound(mat.energy(v) / norm2, R, capped)


# -- Agmon distance -----------------------------------------------------------------------------

def agmon_distance(pot: TabulatedPotential, x: float, y: float) -> float:
    """Shorter of the two torus arcs of int sqrt(2V), by the trapezoid rule on grid nodes."""
    n = pot.n
    i = int(round(x * n)) % n
    j = int(round(y * n)) % n
    if i == j:
        return 0.0
    g = np.sqrt(2.0 * np.maximum(pot.values, 0.0))

    def arc(a, b):
        idx = np.arange(a, a + ((b - a) % n) + 1) % n
        f = g[idx]
        return pot.h * (f.sum() - 0.5 * (f[0] + f[-1]))

    return float(min(arc(i, j), arc(j, i)))


# -- report ---------------------------------------------------------------------------------------

REPORT_FIELDS = (
    "epsilon", "provenance", "n", "E", "E0D", "EaD", "e0", "ea", "gap", "predicted_gap",
    "omega", "phi_at_a", "m0", "ma", "mb", "log_m0", "log_ma", "log_ratio_a0",
    "ratio_a_over_0", "ratio_0_over_a", "agmon_residual", "ims_residual",
    "mass_near_0", "mass_near_a", "first_moment", "trial_bound", "rayleigh_ok",
    "agmon_distance", "rescaled", "flags",
)


@dataclass
class DiagnosticsReport:
    """One epsilon worth of diagnostics; NaN marks a quantity that was not computed."""

    epsilon: float
    provenance: str = "log-sweep"
    n: int = 0
    E: float = math.nan
    E0D: float = math.nan
    EaD: float = math.nan
    e0: float = math.nan
    ea: float = math.nan
    gap: float = math.nan
    predicted_gap: float = math.nan
    omega: float = math.nan
    phi_at_a: float = math.nan
    m0: float = math.nan
    ma: float = math.nan
    mb: float = math.nan
    log_m0: float = math.nan
    log_ma: float = math.nan
    log_ratio_a0: float = math.nan
    ratio_a_over_0: float = math.nan
    ratio_0_over_a: float = math.nan
    agmon_residual: float = math.nan
    ims_residual: float = math.nan
    mass_near_0: float = math.nan
    mass_near_a: float = math.nan
    first_moment: float = math.nan
    trial_bound: float = math.nan
    rayleigh_ok: bool = False
    agmon_distance: float = math.nan
    rescaled: bool = False
    flags: list = field(default_factory=list)

    def as_dict(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in REPORT_FIELDS}


def rayleigh_ok(E: float, dirichlet: Sequence[float], tol: float = 1e-10) -> bool:
    """E <= min of the Dirichlet energies + tol, ignoring energies that were not computed."""
    finite = [d for d in dirichlet if math.isfinite(d)]
    return bool(math.isfinite(E) and E > -tol and (not finite or E <= min(finite) + tol))
