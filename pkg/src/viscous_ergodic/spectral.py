"""Finite-difference Schrodinger operators -2 eps^2 d^2/dx^2 + V and their ground states.

Periodic problems give a cyclic tridiagonal matrix, Dirichlet problems a
plain tridiagonal one.  The smallest eigenvalue is bracketed by Sturm
bisection; the eigenvector comes from shifted inverse iteration carried out
in log space, so its exponentially small tunnelling tail is resolved to full
relative accuracy instead of underflowing.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .potential import TabulatedPotential

EPS = np.finfo(float).eps


class SpectralError(RuntimeError):
    """Eigensolver failure; ``last_iterate`` holds the final log-vector if any."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DomainError(ValueError):
    """Invalid interval or grid for an operator assembly."""


class OperatorKind(str, Enum):
    PERIODIC = "periodic-cyclic-tridiagonal"
    DIRICHLET = "dirichlet-tridiagonal"


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """k * (discrete -Laplacian) + diag(V): diagonal 2k + V_i, off-diagonal -k.

    The potential and k are stored separately so the solvers never round V
    against the much larger 2k.  ``x`` holds the node coordinates
    (unwrapped for Dirichlet intervals).
    """

    kind: OperatorKind
    potential: np.ndarray
    k: float
    h: float
    epsilon: float
    x: np.ndarray
    interval: tuple | None = None

    @property
    def n(self) -> int:
        return self.potential.size

    @property
    def diag(self) -> np.ndarray:
        return 2.0 * self.k + self.potential

    @property
    def off(self) -> float:
        return -self.k

    @property
    def cyclic(self) -> bool:
        return self.kind is OperatorKind.PERIODIC

    @property
    def scale(self) -> float:
        """Gershgorin bound on the spectral radius."""
        return float(4.0 * self.k + np.abs(self.potential).max())

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """M v evaluated as k * (second difference) + V v."""
        if self.cyclic:
            lap = 2.0 * v - np.roll(v, 1) - np.roll(v, -1)
        else:
            w = np.concatenate(([0.0], v, [0.0]))
            lap = 2.0 * v - w[:-2] - w[2:]
        return self.k * lap + self.potential * v

    def dense(self) -> np.ndarray:
        m = np.diag(self.diag)
        idx = np.arange(self.n - 1)
        m[idx, idx + 1] = self.off
        m[idx + 1, idx] = self.off
        if self.cyclic and self.n > 2:
            m[0, -1] = m[-1, 0] = self.off
        return m

    def energy(self, v: np.ndarray) -> float:
        """Quadratic form h*<v, M v> written with differences, no cancellation."""
        if self.cyclic:
            dv = np.diff(np.append(v, v[0]))
        else:
            dv = np.diff(np.concatenate(([0.0], v, [0.0])))
        return float(self.h * (self.k * np.sum(dv * dv) + np.sum(self.potential * v * v)))

    def negcount(self, sigma: float) -> int:
        if self.cyclic:
            return int(_kernels.negcount_cyclic(self.potential, self.k, sigma))
        return int(_kernels.negcount_tridiag(self.potential, self.k, sigma))


def laplacian_matrix(potential, k: float, h: float = 1.0, periodic: bool = False,
                     epsilon: float = math.nan) -> OperatorMatrix:
    """Matrix with diagonal 2k + potential and off-diagonal -k on unit-spaced nodes."""
    v = np.ascontiguousarray(potential, dtype=float)
    kind = OperatorKind.PERIODIC if periodic else OperatorKind.DIRICHLET
    return OperatorMatrix(kind, v, float(k), h, epsilon, h * np.arange(v.size))


@dataclass(frozen=True, eq=False)
class EigenPair:
    """Ground state of an :class:`OperatorMatrix`.

    ``log_vector`` is the authoritative eigenvector (natural log of the
    L2-normalized positive grid function); ``vector`` exponentiates it and
    may underflow to zero deep inside a barrier at very small epsilon.
    """

    value: float
    log_vector: np.ndarray
    residual: float
    bracket: tuple
    iterations: int
    h: float
    x: np.ndarray
    kind: OperatorKind
    epsilon: float
    interval: tuple | None = None
    info: dict = field(default_factory=dict)

    @property
    def vector(self) -> np.ndarray:
        return np.exp(self.log_vector)

    @property
    def n(self) -> int:
        return self.log_vector.size

    def scaled(self, factor: float) -> "EigenPair":
        """Same eigenpair with the vector multiplied by a positive factor."""
        if not factor > 0.0:
            raise ValueError("scale factor must be positive")
        return EigenPair(self.value, self.log_vector + math.log(factor), self.residual,
                         self.bracket, self.iterations, self.h, self.x, self.kind,
                         self.epsilon, self.interval, dict(self.info))

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.x, self.vector]), delimiter=",",
                   header="x,U", comments="", fmt="%.17g")


# -- assembly -------------------------------------------------------------------

def _check_epsilon(epsilon: float) -> None:
    if not (epsilon > 0.0 and math.isfinite(epsilon)):
        raise DomainError(f"epsilon must be positive and finite, got {epsilon!r}")


def assemble_periodic(pot: TabulatedPotential, epsilon: float) -> OperatorMatrix:
    """Cyclic central-difference matrix: diag = 4 eps^2/h^2 + V_i, off = -2 eps^2/h^2."""
    _check_epsilon(epsilon)
    if pot.n < 3:
        raise DomainError("periodic grid needs at least 3 nodes")
    h = pot.h
    k = 2.0 * epsilon**2 / h**2
    v = np.ascontiguousarray(pot.values, dtype=float)
    return OperatorMatrix(OperatorKind.PERIODIC, v, k, h, epsilon, pot.x)


def assemble_dirichlet(pot: TabulatedPotential, interval: tuple, epsilon: float,
                       n_sub: int | None = None) -> OperatorMatrix:
    """Dirichlet matrix on interior nodes of ``interval``.

    With ``n_sub`` the interval is split into n_sub equal cells and V is
    evaluated at the interior nodes.  Without it the nodes of the periodic
    grid strictly inside the interval are used, which makes the matrix a
    principal submatrix of :func:`assemble_periodic` on the same grid.
    Intervals are given in unwrapped coordinates, e.g. (-rho, rho).
    """
    _check_epsilon(epsilon)
    left, right = map(float, interval)
    if not right > left:
        raise DomainError(f"interval must have positive length, got {interval}")
    if pot.n > 2 and (right - left >= 1.0 or left < -1.0 or right > 2.0):
        raise DomainError(f"interval {interval} does not fit in one period")
    if n_sub is None:
        n = pot.n
        j0 = math.floor(left * n + 1e-9) + 1
        j1 = math.ceil(right * n - 1e-9) - 1
        if j1 - j0 + 1 < 1:
            raise DomainError("interval contains no grid node")
        j = np.arange(j0, j1 + 1)
        x = j / n
        v = pot.at(j)
        h = pot.h
    else:
        if n_sub < 2:
            raise DomainError("n_sub must be at least 2")
        h = (right - left) / n_sub
        x = left + h * np.arange(1, n_sub)
        v = np.asarray(pot.evaluate(x), dtype=float)
    k = 2.0 * epsilon**2 / h**2
    v = np.ascontiguousarray(v, dtype=float)
    return OperatorMatrix(OperatorKind.DIRICHLET, v, k, h, epsilon, x, (left, right))


def dirichlet_from_function(func: Callable, interval: tuple, epsilon: float,
                            n_sub: int) -> OperatorMatrix:
    """Dirichlet matrix for an arbitrary potential function on ``interval``.

    The interval is not tied to the unit torus here, which is what the
    rescaled problems on (-Z, Z) need.
    """
    pot = TabulatedPotential(n=2, values=np.zeros(2), func=func)
    return assemble_dirichlet(pot, interval, epsilon, n_sub)


# -- eigensolver ----------------------------------------------------------------

def _bracket_minimum(mat: OperatorMatrix, tol: float) -> tuple:
    vmin = float(mat.potential.min())
    lo = vmin
    step = max(abs(lo), 1.0) * 1e-12
    while mat.negcount(lo) > 0:
        lo -= step
        step *= 2.0
    hi = 2.0 * mat.k + vmin
    if mat.negcount(hi) < 1:
        hi = mat.scale
        step = max(abs(hi), 1.0) * 1e-12
        while mat.negcount(hi) < 1:
            hi += step
            step *= 2.0
    lo, hi, it = _kernels.bisect_min(mat.potential, mat.k, mat.cyclic, lo, hi, tol, 2000)
    return lo, hi, it


def _inverse_iteration(mat, sigma, start, tol, max_iter):
    logh = math.log(mat.h)
    return _kernels.log_inverse_iteration(mat.potential, mat.k, mat.cyclic, sigma, logh,
                                          start, tol, max_iter)


def _constant_ground_state(mat: OperatorMatrix) -> EigenPair:
    """Closed form for a constant potential on the torus: V_0 and the constant vector."""
    v0 = float(mat.potential[0])
    logx = np.full(mat.n, -0.5 * math.log(mat.n * mat.h))
    return EigenPair(value=v0, log_vector=logx, residual=0.0, bracket=(v0, v0), iterations=0,
                     h=mat.h, x=mat.x, kind=mat.kind, epsilon=mat.epsilon,
                     interval=mat.interval, info={"closed_form": True})


def min_eigenpair(mat: OperatorMatrix, tol: float = 0.0, vector_tol: float = 1e-13,
                  max_iter: int = 400) -> EigenPair:
    """Smallest eigenvalue and its positive eigenvector.

    The eigenvalue is bracketed by Sturm bisection to width ``tol`` (0 means
    until the bracket no longer splits).  The eigenvector is computed by
    inverse iteration just below the bracket, first from the constant vector
    and, if that has not converged after a short run, restarted from a point
    source at the dominant node: the restart removes the O(1) component of
    the competing well's state that otherwise has to be damped below the
    tunnelling amplitude.  The returned value is the Rayleigh quotient of
    the eigenvector.
    """
    if mat.n < 3 and mat.cyclic:
        raise DomainError("cyclic eigensolve needs at least 3 nodes")
    if mat.cyclic and np.ptp(mat.potential) == 0.0:
        return _constant_ground_state(mat)
    lo, hi, bis_iter = _bracket_minimum(mat, tol)
    delta = max(8.0 * (hi - lo), 64.0 * EPS * max(abs(lo), float(np.abs(mat.potential).max()), 1e-300))
    n = mat.n
    status, logx, iters, change = 2, np.zeros(n), 0, math.inf
    total = 0
    for _ in range(40):
        sigma = lo - delta
        status, logx, iters, change = _inverse_iteration(
            mat, sigma, np.zeros(n), vector_tol, min(40, max_iter))
        total += iters
        if status == 1:
            start = np.full(n, -np.inf)
            start[int(np.argmax(logx))] = 0.0
            status, logx, iters, change = _inverse_iteration(
                mat, sigma, start, vector_tol, max_iter)
            total += iters
        if status != 2:
            break
        delta *= 4.0
    if status == 2:
        raise SpectralError("no admissible shift below the spectrum was found")
    if status == 1:
        raise SpectralError(
            f"inverse iteration stagnated after {total} iterations (last change {change:.3g})",
            last_iterate=logx)
    if not np.all(np.isfinite(logx)):
        raise SpectralError("eigenvector has nonpositive entries; Perron structure violated",
                            last_iterate=logx)

    mx = float(logx.max())
    v = np.exp(logx - mx)
    norm2 = mat.h * float(np.sum(v * v))
    value = mat.energy(v) / norm2
    logx = logx - mx - 0.5 * math.log(norm2)
    u = np.exp(logx)
    r = mat.matvec(u) - value * u
    residual = math.sqrt(mat.h * float(np.sum(r * r)))
    return EigenPair(value=value, log_vector=logx, residual=residual, bracket=(lo, hi),
                     iterations=total, h=mat.h, x=mat.x, kind=mat.kind,
                     epsilon=mat.epsilon, interval=mat.interval,
                     info={"bisection_steps": bis_iter, "shift": lo - delta,
                           "last_change": change})


def min_eigenvalue(mat: OperatorMatrix, tol: float = 0.0) -> float:
    """Bisection-only smallest eigenvalue (midpoint of the final bracket)."""
    lo, hi, _ = _bracket_minimum(mat, tol)
    return 0.5 * (lo + hi)


# -- extended precision polish ------------------------------------------------------

LD = np.longdouble
# below this log-amplitude the tail is not representable in x87 extended precision
_LD_LOG_FLOOR = -11000.0


def _ld_pivots(w: list, k, m: int) -> list:
    d = [None] * m
    e = k + w[0]
    d[0] = k + e
    for i in range(1, m):
        e = w[i] + k * (e / (k + e))
        d[i] = k + e
    return d


def _ld_subst(d: list, k, rhs: list) -> list:
    m = len(d)
    y = [None] * m
    y[0] = rhs[0]
    for i in range(1, m):
        y[i] = rhs[i] + (k / d[i - 1]) * y[i - 1]
    x = [None] * m
    x[m - 1] = y[m - 1] / d[m - 1]
    for i in range(m - 2, -1, -1):
        x[i] = (y[i] + k * x[i + 1]) / d[i]
    return x


def _ld_solve(mat: OperatorMatrix, sigma, b: np.ndarray) -> np.ndarray:
    k = LD(mat.k)
    w = [LD(v) - sigma for v in mat.potential]
    rhs = list(b)
    if not mat.cyclic:
        return np.array(_ld_subst(_ld_pivots(w, k, len(w)), k, rhs), dtype=LD)
    m = len(w) - 1
    d = _ld_pivots(w, k, m)
    p = _ld_subst(d, k, rhs[:m])
    c = [LD(0)] * m
    c[0] = k
    c[m - 1] += k
    g = _ld_subst(d, k, c)
    s = k * (2 - (g[0] + g[m - 1])) + w[m]
    last = (rhs[m] + k * (p[0] + p[m - 1])) / s
    return np.array([p[i] + g[i] * last for i in range(m)] + [last], dtype=LD)


def _ld_matvec(mat: OperatorMatrix, u: np.ndarray) -> np.ndarray:
    k = LD(mat.k)
    left, right = np.roll(u, 1), np.roll(u, -1)
    if not mat.cyclic:
        left[0] = 0
        right[-1] = 0
    return k * ((u - left) + (u - right)) + mat.potential.astype(LD) * u


def refine_eigenpair(mat: OperatorMatrix, eig: EigenPair, steps: int = 2,
                     rel_shift: float = 1e-9) -> EigenPair:
    """Polish an eigenpair by inverse iteration in extended precision.

    The double precision factorization leaves a relative error of a few
    hundred ulps in the eigenvector, which is enough to swamp O(h^2) effects
    on grids finer than about 30000 nodes.  A couple of extended-precision
    steps remove it.  Pure Python loops, so this costs roughly 0.15 s per
    step per 65536 nodes.  If the tail is too small for extended precision
    the input is returned unchanged with ``info["refined"] = False``.
    """
    if eig.n != mat.n:
        raise DomainError("eigenpair and matrix have different sizes")
    if mat.cyclic and np.ptp(mat.potential) == 0.0:
        exact = _constant_ground_state(mat)
        exact.info.update(eig.info, refined=True)
        return exact
    if float(eig.log_vector.min() - eig.log_vector.max()) < _LD_LOG_FLOOR or LD is np.float64:
        return EigenPair(eig.value, eig.log_vector, eig.residual, eig.bracket, eig.iterations,
                         eig.h, eig.x, eig.kind, eig.epsilon, eig.interval,
                         {**eig.info, "refined": False})
    h = LD(mat.h)
    u = np.exp(eig.log_vector.astype(LD) - LD(eig.log_vector.max()))
    lam = LD(eig.value)
    for _ in range(steps):
        sigma = lam - LD(rel_shift) * max(abs(lam), LD(mat.k) * h * h)
        u = _ld_solve(mat, sigma, u)
        if not np.all(u > 0):
            raise SpectralError("extended precision refinement lost positivity")
        u /= u.max()
        lam = np.sum(u * _ld_matvec(mat, u)) / np.sum(u * u)
    u /= np.sqrt(h * np.sum(u * u))
    r = _ld_matvec(mat, u) - lam * u
    return EigenPair(value=float(lam), log_vector=np.log(u).astype(float),
                     residual=float(np.sqrt(h * np.sum(r * r))), bracket=eig.bracket,
                     iterations=eig.iterations + steps, h=eig.h, x=eig.x, kind=eig.kind,
                     epsilon=eig.epsilon, interval=eig.interval,
                     info={**eig.info, "refined": True})


# -- Richardson refinement --------------------------------------------------------

@dataclass(frozen=True)
class RefinedValue:
    value: float
    error: float
    order: float | None
    values: tuple
    n_list: tuple
    warning: str | None = None


def richardson(coarse: float, fine: float) -> tuple[float, float]:
    """(4 fine - coarse)/3 and the error estimate |fine - coarse|/3."""
    return (4.0 * fine - coarse) / 3.0, abs(fine - coarse) / 3.0


def observed_order(values: Sequence[float], exact: float | None = None) -> float | None:
    """Convergence order from consecutive grid doublings."""
    if exact is not None and len(values) >= 2:
        e0, e1 = abs(values[-2] - exact), abs(values[-1] - exact)
    elif len(values) >= 3:
        e0, e1 = abs(values[-3] - values[-2]), abs(values[-2] - values[-1])
    else:
        return None
    if e1 == 0.0 or e0 == 0.0:
        return None
    return math.log2(e0 / e1)


def refine_eigenvalue(solve: Callable[[int], float], n_list: Sequence[int],
                      exact: float | None = None) -> RefinedValue:
    """Richardson-extrapolate ``solve(n)`` over successively doubled grids.

    ``solve`` maps a grid parameter to an eigenvalue.  The order is observed
    from three grids, or from two when ``exact`` is known; below 1.5 the
    result carries a warning.
    """
    n_list = tuple(int(n) for n in n_list)
    if len(n_list) < 2:
        raise ValueError("need at least two grid sizes")
    for a, b in zip(n_list, n_list[1:]):
        if b != 2 * a:
            raise ValueError(f"grid sizes must double, got {n_list}")
    values = tuple(float(solve(n)) for n in n_list)
    value, err = richardson(values[-2], values[-1])
    order = observed_order(values, exact)
    warning = None
    if order is not None and order < 1.5:
        warning = f"observed order {order:.3g} < 1.5: asymptotic regime not reached"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    return RefinedValue(value, err, order, values, n_list, warning)


# -- quadrature -----------------------------------------------------------------------

def quadrature(f: np.ndarray, h: float) -> float:
    """h * sum(f): the periodic trapezoid rule, and the Dirichlet one with zero ends."""
    return float(h * np.sum(f))


def log_quadrature(logf: np.ndarray, h: float) -> float:
    """log of h * sum(exp(logf)) without underflow."""
    mx = float(np.max(logf))
    if mx == -math.inf:
        return -math.inf
    return mx + math.log(h * float(np.sum(np.exp(logf - mx))))
