"""The oscillatory double-well potential V, its cutoff partition and Agmon weight.

Near each well the potential is given by an explicit formula

    V(x) = x^2/2 + A x^{2m} omega(|x|)            near 0,
    V(x) = (x-a)^2/2 - A (x-a)^{2m} omega(|x-a|)  near a = 1/2,

kept verbatim up to ``shelf_radius >= rho``.  Beyond that radius V is
blended onto a flat shelf, and further out a wall lifts it onto a high
barrier plateau.  Both blends are odd-degree smoothsteps, C^3 for the default
order 7.  Everything is a function of the torus distance to the nearest
well, so V(x) = V(-x) and, for A = 0, V(x + 1/2) = V(x) exactly on any
even grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

WELL_A = 0.5


class PotentialError(ValueError):
    """Invalid construction parameters or a failed positivity check."""


class Profile(str, Enum):
    PAPER_LOGLOG = "paper-loglog"
    FROZEN_PLUS = "frozen-plus"
    FROZEN_MINUS = "frozen-minus"
    FAST_LOG = "fast-log"


def _as_profile(profile) -> Profile:
    try:
        return Profile(profile)
    except ValueError:
        raise PotentialError(f"unknown oscillation profile {profile!r}") from None


def omega(r: float, profile=Profile.PAPER_LOGLOG) -> float:
    """Oscillation factor omega(r) for 0 < r <= 1/2.

    ``paper-loglog`` is sin(log log(1/r)); ``fast-log`` is sin(log(1/r));
    the frozen profiles are the constants +1 and -1.
    """
    profile = _as_profile(profile)
    if not (r > 0.0 and r <= 0.5):
        raise PotentialError(f"omega is defined for 0 < r <= 1/2, got r={r!r}")
    return float(omega_values(np.asarray(r, dtype=float), profile))


def omega_from_log(log_r: float, profile=Profile.PAPER_LOGLOG) -> float:
    """omega evaluated from log(r), usable when r itself underflows."""
    profile = _as_profile(profile)
    if not log_r <= math.log(0.5):
        raise PotentialError("omega is defined for 0 < r <= 1/2")
    if profile is Profile.FROZEN_PLUS:
        return 1.0
    if profile is Profile.FROZEN_MINUS:
        return -1.0
    if profile is Profile.FAST_LOG:
        return math.sin(-log_r)
    return math.sin(math.log(-log_r))


def omega_values(r: np.ndarray, profile: Profile) -> np.ndarray:
    """Vectorized omega without domain checks; r must lie in (0, 1)."""
    r = np.asarray(r, dtype=float)
    if profile is Profile.FROZEN_PLUS:
        return np.ones_like(r)
    if profile is Profile.FROZEN_MINUS:
        return -np.ones_like(r)
    if profile is Profile.FAST_LOG:
        return np.sin(-np.log(r))
    return np.sin(np.log(-np.log(r)))


# -- smoothstep ---------------------------------------------------------------

def smoothstep_coefficients(order: int) -> np.ndarray:
    """Power-series coefficients of the odd-degree smoothstep of ``order``.

    Degree 2k+1 has k vanishing derivatives at both ends; order 7 is
    35t^4 - 84t^5 + 70t^6 - 20t^7.
    """
    if order < 1 or order % 2 == 0:
        raise PotentialError(f"smoothstep order must be odd and positive, got {order}")
    k = (order - 1) // 2
    coef = np.zeros(order + 1)
    for j in range(k + 1):
        coef[k + 1 + j] = (-1) ** j * math.comb(k + j, j) * math.comb(2 * k + 1, k - j)
    return coef


def smoothstep(t, order: int = 7, deriv: int = 0) -> np.ndarray:
    """Smoothstep (or its derivative) with t clipped to [0, 1]."""
    coef = smoothstep_coefficients(order)
    if deriv:
        coef = np.polynomial.polynomial.polyder(coef, deriv)
    tc = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    out = np.polynomial.polynomial.polyval(tc, coef)
    if deriv:
        out = np.where((np.asarray(t) < 0.0) | (np.asarray(t) > 1.0), 0.0, out)
    return out


# -- construction parameters ------------------------------------------------

@dataclass(frozen=True)
class PotentialSpec:
    """Construction parameters for V and F = -V.

    ``rho``, ``A``, ``a``, ``m`` and ``profile`` define the wells.  The rest
    shapes the bridge between them: the well formula holds up to
    ``shelf_radius`` (capped where |A| d^{2m} could exceed d^2/8), is blended
    over ``shelf_width`` onto a flat shelf at the formula's value at the
    blend midpoint, then rises over ``wall_width`` from ``wall_radius`` on
    to the constant ``plateau``.
    """

    rho: float = 0.04
    A: float = 0.1
    a: float = WELL_A
    m: int = 2
    profile: Profile = Profile.PAPER_LOGLOG
    bridge_order: int = 7
    positivity_floor: float = 1e-6
    shelf_radius: float = 0.06
    shelf_width: float = 0.06
    wall_radius: float = 0.215
    wall_width: float = 0.025
    plateau: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "profile", _as_profile(self.profile))
        object.__setattr__(self, "m", int(self.m) if float(self.m).is_integer() else self.m)
        self.validate()

    def validate(self) -> None:
        if not (0.0 < self.rho < 1.0 / 20.0):
            raise PotentialError(f"rho must satisfy 0 < rho < 1/20, got rho={self.rho}")
        if 2.0 * abs(self.A) * self.rho**2 > 0.25:
            raise PotentialError(
                f"amplitude too large: need 2|A| rho^2 <= 1/4, got {2 * abs(self.A) * self.rho**2:.6g}"
            )
        if self.a != WELL_A:
            raise PotentialError("the second well must sit at a = 1/2")
        if not isinstance(self.m, int) or self.m < 2:
            raise PotentialError(f"well exponent m must be an integer >= 2, got {self.m}")
        if self.bridge_order < 3 or self.bridge_order % 2 == 0:
            raise PotentialError(f"bridge_order must be odd and >= 3, got {self.bridge_order}")
        if not self.positivity_floor > 0.0:
            raise PotentialError("positivity_floor must be positive")
        if not (self.shelf_width > 0.0 and self.wall_width > 0.0):
            raise PotentialError("shelf_width and wall_width must be positive")
        if self.shelf_radius < self.rho:
            raise PotentialError("shelf_radius must be at least rho")
        if self.shelf_radius + self.shelf_width > self.wall_radius:
            raise PotentialError("the shelf blend must end before the wall starts")
        if self.wall_radius + self.wall_width >= 0.25:
            raise PotentialError("wall_radius + wall_width must stay below 1/4 (wells would touch)")
        if not self.plateau > 0.0:
            raise PotentialError("plateau must be positive")

    @property
    def degenerate(self) -> bool:
        return self.A == 0.0

    @property
    def coercivity_radius(self) -> float:
        """Largest d with |A| d^{2m-2} <= 1/8, i.e. |A d^{2m} omega| <= d^2/8."""
        if self.A == 0.0:
            return math.inf
        return (8.0 * abs(self.A)) ** (-1.0 / (2 * self.m - 2))

    @property
    def effective_shelf_radius(self) -> float:
        return max(self.rho, min(self.shelf_radius, self.coercivity_radius))

    @property
    def effective_shelf_width(self) -> float:
        # the formula stays nonnegative up to 4^{1/(2m-2)} times the coercivity radius
        r1 = self.effective_shelf_radius
        room = (4.0 ** (1.0 / (2 * self.m - 2))) * self.coercivity_radius - r1
        return min(self.shelf_width, max(room, 0.25 * r1))

    @property
    def smoothness(self) -> int:
        """Number of continuous derivatives of the blends, (order - 1) / 2."""
        return (self.bridge_order - 1) // 2

    def with_(self, **changes) -> "PotentialSpec":
        return replace(self, **changes)

    def well_formula(self, d: np.ndarray, sign: float) -> np.ndarray:
        """x^2/2 + sign*A*|x|^{2m} omega(|x|) as a function of distance d >= 0."""
        d = np.asarray(d, dtype=float)
        pert = np.zeros_like(d)
        pos = d > 0.0
        pert[pos] = d[pos] ** (2 * self.m) * omega_values(d[pos], self.profile)
        return 0.5 * d * d + sign * self.A * pert

    def shelf_level(self, sign: float) -> float:
        mid = self.effective_shelf_radius + 0.5 * self.effective_shelf_width
        return float(self.well_formula(np.array([mid]), sign)[0])

    def radial(self, d: np.ndarray, sign: float) -> np.ndarray:
        """V as a function of the distance d to a well (sign +1 at 0, -1 at a)."""
        d = np.asarray(d, dtype=float)
        r1, w1 = self.effective_shelf_radius, self.effective_shelf_width
        out = np.full_like(d, self.plateau)
        inside = d < self.wall_radius + self.wall_width
        di = d[inside]
        core = np.full_like(di, self.shelf_level(sign))
        near = di < r1 + w1
        s1 = smoothstep((di[near] - r1) / w1, self.bridge_order)
        core[near] = (1.0 - s1) * self.well_formula(di[near], sign) + s1 * core[near]
        s2 = smoothstep((di - self.wall_radius) / self.wall_width, self.bridge_order)
        out[inside] = (1.0 - s2) * core + s2 * self.plateau
        return out

    def __call__(self, x) -> np.ndarray:
        """V at arbitrary real x (wrapped onto the torus)."""
        x = np.mod(np.asarray(x, dtype=float), 1.0)
        d0 = np.minimum(x, 1.0 - x)
        da = np.abs(x - self.a)
        near0 = d0 <= da
        out = np.empty_like(x)
        out[near0] = self.radial(d0[near0], +1.0)
        out[~near0] = self.radial(da[~near0], -1.0)
        return out


def well_perturbation(x: float, spec: PotentialSpec) -> float:
    """x^{2m} omega(|x|) for |x| < rho, with the value 0 at x = 0."""
    if not abs(x) < spec.rho:
        raise PotentialError(f"|x| must be below rho={spec.rho}, got {x}")
    if x == 0.0:
        return 0.0
    return float(abs(x) ** (2 * spec.m) * omega_values(np.array(abs(x)), spec.profile))


# -- tabulation ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TabulatedPotential:
    """V sampled at x_j = j/n, j = 0..n-1, on the unit torus.

    ``seams`` maps a label to a seam position in grid units; ``func`` evaluates
    the continuous potential off the grid (needed for independent Dirichlet
    subdivisions).
    """

    n: int
    values: np.ndarray
    seams: dict = field(default_factory=dict)
    spec: PotentialSpec | None = None
    func: Callable | None = None

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    def at(self, j) -> np.ndarray:
        return self.values[np.mod(j, self.n)]

    def evaluate(self, x) -> np.ndarray:
        if self.func is None:
            raise PotentialError("this tabulation has no continuous potential attached")
        return self.func(x)

    @classmethod
    def from_function(cls, func: Callable, n: int) -> "TabulatedPotential":
        x = np.arange(n) / n
        return cls(n=n, values=np.asarray(func(x), dtype=float), func=func)

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.x, self.values]), delimiter=",",
                   header="x,V", comments="", fmt="%.17g")


def _distances(n: int) -> tuple[np.ndarray, np.ndarray]:
    j = np.arange(n)
    d0 = np.minimum(j, n - j) / n
    da = np.abs(j - n // 2) / n
    return d0, da


def build_potential(spec: PotentialSpec, n: int) -> TabulatedPotential:
    """Tabulate V on the even grid of size n and check positivity on the bridge."""
    if n % 2 or n < 256:
        raise PotentialError(f"grid size must be even and >= 256, got {n}")
    d0, da = _distances(n)
    near0 = d0 <= da
    values = np.empty(n)
    values[near0] = spec.radial(d0[near0], +1.0)
    values[~near0] = spec.radial(da[~near0], -1.0)
    values[0] = 0.0
    values[n // 2] = 0.0

    bridge = np.minimum(d0, da) >= spec.rho
    bad = np.flatnonzero(bridge & (values < spec.positivity_floor))
    if bad.size:
        j = int(bad[np.argmin(values[bad])])
        raise PotentialError(
            f"bridge positivity check failed at grid point j={j} (x={j / n:.6g}): "
            f"V={values[j]:.6g} < floor {spec.positivity_floor:g}; A/rho too aggressive"
        )
    off_wells = np.ones(n, dtype=bool)
    off_wells[[0, n // 2]] = False
    if np.any(values[off_wells] <= 0.0):
        j = int(np.flatnonzero(off_wells & (values <= 0.0))[0])
        raise PotentialError(f"V is not positive at grid point j={j}")

    r1 = spec.effective_shelf_radius
    radii = (("rho", spec.rho), ("shelf", r1), ("shelf-end", r1 + spec.effective_shelf_width),
             ("wall", spec.wall_radius), ("plateau", spec.wall_radius + spec.wall_width))
    seams = {}
    for label, c in (("0", 0.0), ("a", spec.a)):
        for name, r in radii:
            seams[f"{label}-{name}"] = ((c - r) % 1.0) * n
            seams[f"{label}+{name}"] = ((c + r) % 1.0) * n
    return TabulatedPotential(n=n, values=values, seams=seams, spec=spec, func=spec)


# -- smoothness report ----------------------------------------------------------

@dataclass(frozen=True)
class SeamJump:
    name: str
    position: float
    jumps: tuple


def _forward(v, j, k):
    return sum((-1) ** (k - i) * math.comb(k, i) * v[(j + i) % v.size] for i in range(k + 1))


def _backward(v, j, k):
    return sum((-1) ** i * math.comb(k, i) * v[(j - i) % v.size] for i in range(k + 1))


def check_smoothness(pot: TabulatedPotential, order: int = 3) -> list[SeamJump]:
    """Jump of the k-th difference quotient across every seam, k = 0..order.

    The left estimate is the backward difference ending at the last node
    before the seam, the right one the forward difference starting at the
    first node after it.  For a C^order function every jump is O(h).
    """
    if order > 3:
        raise ValueError("order must be <= 3")
    v = pot.values
    h = pot.h
    report = []
    for name, s in sorted(pot.seams.items(), key=lambda kv: kv[1]):
        jl = int(math.floor(s + 1e-9))
        jr = int(math.ceil(s - 1e-9))
        jumps = tuple(
            (_forward(v, jr, k) - _backward(v, jl, k)) / h**k for k in range(order + 1)
        )
        report.append(SeamJump(name, s, jumps))
    return report


def anchored_jumps(pot: TabulatedPotential, h: float, order: int = 3) -> list[SeamJump]:
    """Seam jumps of one-sided difference quotients anchored at the seam itself.

    Uses the continuous potential at s, s +- h, ..., s +- order h, so the
    jump of the k-th quotient is (k/2) h (V^(k+1)(s+) + V^(k+1)(s-)) + O(h^2)
    for a C^k seam, independent of where the seam falls between grid nodes.
    """
    if order > 3:
        raise ValueError("order must be <= 3")
    report = []
    for name, pos in sorted(pot.seams.items(), key=lambda kv: kv[1]):
        s = pos / pot.n
        right = pot.evaluate(s + h * np.arange(order + 1))
        left = pot.evaluate(s - h * np.arange(order + 1))
        jumps = tuple(
            (_forward(right, 0, k) - _backward(left[::-1], order, k)) / h**k
            for k in range(order + 1)
        )
        report.append(SeamJump(name, pos, jumps))
    return report


def jump_ratios(coarse: list[SeamJump], fine: list[SeamJump]) -> dict:
    """|jump(n)| / |jump(2n)| per seam and order."""
    out = {}
    for c, f in zip(coarse, fine):
        out[c.name] = tuple(
            abs(a) / abs(b) if b != 0.0 else math.inf for a, b in zip(c.jumps, f.jumps)
        )
    return out


# -- cutoff partition -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CutoffPartition:
    """Squared partition chi0^2 + chia^2 + chib^2 = 1 with analytic derivatives.

    chi0 is 1 on |x| <= inner = rho/3 and 0 for |x| >= outer = rho; the same
    holds for chia around a.  Every derivative is therefore supported in the
    barrier set outside O_{rho/3}.
    """

    n: int
    rho: float
    chi0: np.ndarray
    chia: np.ndarray
    chib: np.ndarray
    dchi0: np.ndarray
    dchia: np.ndarray
    dchib: np.ndarray
    inner: float
    outer: float
    order: int

    @property
    def cutoffs(self) -> tuple:
        return self.chi0, self.chia, self.chib

    def derivative(self, x: np.ndarray) -> tuple:
        """(chi0', chia', chib') at arbitrary points."""
        return _partition_fields(np.asarray(x, dtype=float), self.rho, self.order)[3:]


def _transition(x, centre, inner, width, order):
    signed = np.mod(x - centre + 0.5, 1.0) - 0.5
    t = (np.abs(signed) - inner) / width
    s = smoothstep(t, order)
    ds = smoothstep(t, order, deriv=1) * np.sign(signed) / width
    return s, ds, np.abs(signed)


def _partition_fields(x, rho, order):
    x = np.mod(x, 1.0)
    inner = rho / 3.0
    width = rho - inner
    s0, ds0, d0 = _transition(x, 0.0, inner, width, order)
    sa, dsa, da = _transition(x, WELL_A, inner, width, order)
    half_pi = 0.5 * np.pi
    chi0 = np.where(s0 >= 1.0, 0.0, np.cos(half_pi * s0))
    chia = np.where(sa >= 1.0, 0.0, np.cos(half_pi * sa))
    dchi0 = -np.sin(half_pi * s0) * half_pi * ds0
    dchia = -np.sin(half_pi * sa) * half_pi * dsa
    # the two transition zones never overlap, so chib follows the nearer well
    near0 = d0 <= da
    s = np.where(near0, s0, sa)
    ds = np.where(near0, ds0, dsa)
    chib = np.where(s >= 1.0, 1.0, np.sin(half_pi * s))
    dchib = np.cos(half_pi * s) * half_pi * ds
    return chi0, chia, chib, dchi0, dchia, dchib


def cutoff_partition(rho: float, n: int, order: int = 7) -> CutoffPartition:
    """Squared partition of unity (chi0, chia, chib) on the grid x_j = j/n."""
    if n % 2:
        raise PotentialError("grid size must be even")
    if not rho < 1.0 / 20.0:
        raise PotentialError(f"rho must be below 1/20, got {rho}")
    if rho <= 0.0 or 2.0 * rho >= WELL_A:
        raise PotentialError("cutoff transition zones overlap")
    x = np.arange(n) / n
    fields = _partition_fields(x, rho, order)
    return CutoffPartition(n, rho, *fields, inner=rho / 3.0, outer=rho, order=order)


# -- Agmon weight -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AgmonWeight:
    """Piecewise-linear Phi: 0 on O_{r/2}, slope sqrt(nu/2) up to a plateau s on O_r's complement."""

    Phi: np.ndarray
    r: float
    s: float
    nu: float
    slope: float
    n: int

    def edge_slopes(self) -> np.ndarray:
        """|Phi'| on each edge (j, j+1), exact for piecewise-linear Phi with grid-aligned kinks."""
        return np.abs(np.diff(np.append(self.Phi, self.Phi[0]))) * self.n


def torus_distance_to_wells(x: np.ndarray) -> np.ndarray:
    x = np.mod(np.asarray(x, dtype=float), 1.0)
    return np.minimum(np.minimum(x, 1.0 - x), np.abs(x - WELL_A))


def agmon_weight(pot: TabulatedPotential, r: float = 0.1) -> AgmonWeight:
    """Lipschitz weight for the barrier-mass estimate, built on the potential's grid."""
    if not 0.0 < r < 0.125:
        raise PotentialError(f"Agmon radius must satisfy 0 < r < 1/8, got {r}")
    d = torus_distance_to_wells(pot.x)
    outside = d >= r / 2.0
    nu = float(pot.values[outside].min()) if outside.any() else 0.0
    if not nu > 0.0:
        raise PotentialError("potential has no positive floor outside O_{r/2}")
    slope = math.sqrt(nu / 2.0)
    Phi = slope * np.clip(d - r / 2.0, 0.0, r / 2.0)
    return AgmonWeight(Phi=Phi, r=r, s=slope * r / 2.0, nu=nu, slope=slope, n=pot.n)
