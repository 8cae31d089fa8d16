"""Epsilon schedules, diagnostic sweeps, asymptotic fits and nonconvergence witnesses."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import diagnostics as dg
from .potential import (
    WELL_A,
    PotentialError,
    PotentialSpec,
    Profile,
    TabulatedPotential,
    agmon_weight,
    build_potential,
    cutoff_partition,
    omega_from_log,
)
from .rescaled import (
    RescaledConfigError,
    RescaledProblem,
    Well,
    double_factorial_moment,
    rescaled_gap,
    solve_rescaled,
)
from .spectral import (
    SpectralError,
    assemble_dirichlet,
    assemble_periodic,
    min_eigenpair,
    refine_eigenpair,
)

TINY = np.finfo(float).tiny
EPS = np.finfo(float).eps


# -- schedules -------------------------------------------------------------------

class Provenance(str, Enum):
    PAPER_PLUS = "paper-plus"
    PAPER_MINUS = "paper-minus"
    LOG_SWEEP = "log-sweep"
    FASTLOG = "fastlog-extremum"


@dataclass(frozen=True)
class ScheduleEntry:
    """One epsilon with its origin.

    ``log_epsilon`` is exact even when epsilon itself underflows.  ``flags``
    says what the entry can be used for: physical-scale solves need the well
    core resolved on a bounded grid, rescaled solves need the O(eps) shift to
    be visible next to the unit eigenvalue.
    """

    epsilon: float
    log_epsilon: float
    provenance: Provenance
    index: int | None = None
    representable: bool = True
    flags: tuple = ()

    @property
    def label(self) -> str:
        if self.index is None:
            return self.provenance.value
        return f"{self.provenance.value}({self.index})"

    @property
    def physical(self) -> bool:
        return self.representable and "physical-unresolvable" not in self.flags

    @property
    def rescaled(self) -> bool:
        return self.representable and "rescaled-shift-below-resolution" not in self.flags


@dataclass(frozen=True)
class EpsilonSchedule:
    entries: tuple = ()

    def __post_init__(self):
        ordered = tuple(sorted(self.entries, key=lambda e: (-e.log_epsilon, e.label)))
        object.__setattr__(self, "entries", ordered)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def select(self, provenance) -> "EpsilonSchedule":
        p = Provenance(provenance)
        return EpsilonSchedule(tuple(e for e in self.entries if e.provenance is p))

    @property
    def epsilons(self) -> list[float]:
        return [e.epsilon for e in self.entries]

    @classmethod
    def from_values(cls, values: Iterable[float], provenance=Provenance.LOG_SWEEP,
                    **flag_kw) -> "EpsilonSchedule":
        return cls(tuple(_entry(math.log(v), Provenance(provenance), None, epsilon=v, **flag_kw)
                         for v in values))


def _entry(log_eps: float, prov: Provenance, index, A: float = 0.1, m: int = 2,
           n_cap: int = 2**22, points_per_sd: float = 16.0,
           epsilon: float | None = None) -> ScheduleEntry:
    if epsilon is not None:
        eps = float(epsilon)
    else:
        eps = math.exp(log_eps) if log_eps > math.log(TINY) else 0.0
    representable = eps >= TINY
    flags = []
    if not representable:
        flags.append("underflow")
    # h <= sqrt(eps)/points_per_sd must be reachable with n <= n_cap
    if log_eps < 2.0 * math.log(points_per_sd / n_cap):
        flags.append("physical-unresolvable")
    # the rescaled shift A eps^(m-1) c_m must stand out against rounding of e ~ 1
    if math.log(abs(A) * double_factorial_moment(m) + TINY) + (m - 1) * log_eps < math.log(1e3 * EPS):
        flags.append("rescaled-shift-below-resolution")
    return ScheduleEntry(eps, log_eps, prov, index, representable, tuple(flags))


def log_sweep(lo: float = 1e-4, hi: float = 5e-2, per_decade: int = 12) -> list[float]:
    """10^(j/per_decade) for every integer j with the value in [lo, hi]."""
    j0 = math.ceil(per_decade * math.log10(lo) - 1e-9)
    j1 = math.floor(per_decade * math.log10(hi) + 1e-9)
    return [10.0 ** (j / per_decade) for j in range(j1, j0 - 1, -1)]


def paper_plus_log(n: int) -> float:
    return -2.0 * math.exp(math.pi / 2 + 2.0 * math.pi * n)


def paper_minus_log(n: int) -> float:
    return -2.0 * math.exp(1.5 * math.pi + 2.0 * math.pi * n)


def fastlog_log(k: int) -> float:
    return -(2 * k + 1) * math.pi


def epsilon_sequences(n_max: int = 1, k_max: int = 1, lo: float = 1e-4, hi: float = 5e-2,
                      per_decade: int = 12, A: float = 0.1, m: int = 2) -> EpsilonSchedule:
    """Double-exponential sequences, a log sweep and fast-log extrema, sorted by decreasing epsilon.

    Entries that cannot be represented or solved are kept and flagged.
    """
    if n_max < 0 or k_max < 0:
        raise ValueError("n_max and k_max must be nonnegative")
    kw = dict(A=A, m=m)
    entries = []
    for n in range(n_max + 1):
        entries.append(_entry(paper_plus_log(n), Provenance.PAPER_PLUS, n, **kw))
        entries.append(_entry(paper_minus_log(n), Provenance.PAPER_MINUS, n, **kw))
    for v in log_sweep(lo, hi, per_decade):
        entries.append(_entry(math.log(v), Provenance.LOG_SWEEP, None, epsilon=v, **kw))
    for k in range(k_max + 1):
        entries.append(_entry(fastlog_log(k), Provenance.FASTLOG, k, **kw))
    return EpsilonSchedule(tuple(entries))


# -- sweeps ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    n_min: int = 65536
    points_per_sd: float = 16.0
    n_cap: int = 2**22
    refine: bool = True
    vector_tol: float = 1e-13
    rescaled_n_list: tuple = (4096, 8192)
    rescaled_tol: float = 1e-12
    agmon_r: float = 0.1
    rayleigh_tol: float = 1e-10
    workers: int = 1

    def grid_size(self, epsilon: float) -> int:
        """Smallest power of two >= n_min with h <= sqrt(eps)/points_per_sd."""
        need = self.points_per_sd / math.sqrt(epsilon)
        n = max(self.n_min, 256)
        while n < need:
            n *= 2
        if n > self.n_cap:
            raise ValueError(f"epsilon = {epsilon:.3g} needs n = {n} > n_cap = {self.n_cap}")
        return n


def _error_token(exc: Exception) -> str:
    return f"error:{type(exc).__name__}:{exc}".replace(",", ";").replace("\n", " ")


def _omega_at(spec: PotentialSpec, epsilon: float) -> float:
    return omega_from_log(0.5 * math.log(epsilon), spec.profile)


def _rescaled_fields(report: dg.DiagnosticsReport, spec: PotentialSpec, epsilon: float,
                     config: SolverConfig) -> None:
    try:
        g = rescaled_gap(epsilon, spec.A, spec.m, spec.profile, config.rescaled_n_list,
                         tol=config.rescaled_tol)
    except (RescaledConfigError, SpectralError, ValueError) as exc:
        report.flags.append("rescaled-" + _error_token(exc))
        return
    report.e0, report.ea, report.gap, report.predicted_gap = g.e_zero, g.e_a, g.gap, g.predicted
    report.flags.extend(g.flags)


def compute_report(source, epsilon: float, provenance: str = "log-sweep",
                   config: SolverConfig = SolverConfig()) -> dg.DiagnosticsReport:
    """All per-epsilon diagnostics for a PotentialSpec or a ready TabulatedPotential.

    Failures of individual stages are recorded in ``flags`` and leave NaN in
    the affected fields; only the stages that depend on them are skipped.
    """
    return solve_and_report(source, epsilon, provenance, config)[0]


def solve_and_report(source, epsilon: float, provenance: str = "log-sweep",
                     config: SolverConfig = SolverConfig()):
    """:func:`compute_report` that also returns the periodic eigenpair (or None)."""
    report = dg.DiagnosticsReport(epsilon=float(epsilon), provenance=str(provenance))
    if not (epsilon > 0.0 and math.isfinite(epsilon)):
        report.flags.append("error:invalid-epsilon")
        return report, None
    try:
        if isinstance(source, TabulatedPotential):
            pot, spec = source, source.spec
        else:
            spec = source
            pot = build_potential(spec, config.grid_size(epsilon))
    except (PotentialError, ValueError) as exc:
        report.flags.append(_error_token(exc))
        return report, None
    report.n = pot.n
    if spec is not None:
        report.omega = _omega_at(spec, epsilon)
        _rescaled_fields(report, spec, epsilon, config)
        rho = spec.rho
    else:
        report.flags.append("no-spec")
        rho = 0.04

    mat = assemble_periodic(pot, epsilon)
    try:
        eig = min_eigenpair(mat, vector_tol=config.vector_tol)
        if config.refine:
            eig = refine_eigenpair(mat, eig)
            if not eig.info.get("refined", False):
                report.flags.append("refinement-skipped")
    except SpectralError as exc:
        report.flags.append(_error_token(exc))
        return report, None
    report.E = eig.value

    dirichlet = []
    for name, centre in (("E0D", 0.0), ("EaD", WELL_A)):
        try:
            val = min_eigenpair(assemble_dirichlet(pot, (centre - rho, centre + rho), epsilon)).value
        except (SpectralError, ValueError) as exc:
            report.flags.append(f"{name}-" + _error_token(exc))
            val = math.nan
        setattr(report, name, val)
        dirichlet.append(val)

    phi = dg.hopf_cole(eig, epsilon)
    report.phi_at_a = phi.at(WELL_A)
    part = cutoff_partition(rho, pot.n)
    masses = dg.well_masses(eig, part)
    report.m0, report.ma, report.mb = masses.m0, masses.ma, masses.mb
    report.log_m0, report.log_ma = masses.log_m0, masses.log_ma
    ratio = dg.localization_ratio(eig)
    report.log_ratio_a0 = ratio.log_a_over_0
    report.ratio_a_over_0, report.ratio_0_over_a = ratio.a_over_0, ratio.zero_over_a
    try:
        report.agmon_residual = dg.agmon_identity_residual(eig, agmon_weight(pot, config.agmon_r), pot)
    except (PotentialError, ValueError) as exc:
        report.flags.append("agmon-" + _error_token(exc))
    report.ims_residual = dg.ims_identity_residual(eig, part, pot)
    mom = dg.measure_moments(eig)
    report.mass_near_0, report.mass_near_a, report.first_moment = (
        mom.mass_near_0, mom.mass_near_a, mom.first_moment)
    try:
        tb = dg.rayleigh_trial_bound(pot, epsilon)
        report.trial_bound = tb.quotient
        if tb.capped:
            report.flags.append("trial-window-capped")
    except ValueError as exc:
        report.flags.append("trial-" + _error_token(exc))
    ok = dg.rayleigh_ok(report.E, dirichlet, config.rayleigh_tol)
    if math.isfinite(report.trial_bound):
        ok = ok and report.E <= report.trial_bound + config.rayleigh_tol
    # E > 0 is part of the check except for synthetic potentials such as V = 0
    report.rayleigh_ok = bool(ok and (report.E > 0.0 or spec is None))
    report.agmon_distance = dg.agmon_distance(pot, 0.0, WELL_A)
    return report, eig


def rescaled_report(spec: PotentialSpec, entry: ScheduleEntry,
                    config: SolverConfig = SolverConfig()) -> dg.DiagnosticsReport:
    """Report row carrying only the rescaled well energies."""
    report = dg.DiagnosticsReport(epsilon=entry.epsilon, provenance=entry.label, rescaled=True)
    report.omega = omega_from_log(0.5 * entry.log_epsilon, spec.profile)
    report.flags.extend(entry.flags)
    if not entry.rescaled:
        return report
    _rescaled_fields(report, spec, entry.epsilon, config)
    return report


def _job(args):
    source, entry, config = args
    if not entry.physical:
        report = dg.DiagnosticsReport(epsilon=entry.epsilon, provenance=entry.label)
        report.flags.extend(entry.flags)
        return report
    try:
        report = compute_report(source, entry.epsilon, entry.label, config)
    except Exception as exc:  # noqa: BLE001  one bad row must not end the sweep
        report = dg.DiagnosticsReport(epsilon=entry.epsilon, provenance=entry.label)
        report.flags.append(_error_token(exc))
    report.flags.extend(f for f in entry.flags if f not in report.flags)
    return report


def run_sweep(source, schedule: EpsilonSchedule | Sequence[float],
              config: SolverConfig = SolverConfig()) -> list[dg.DiagnosticsReport]:
    """One report per schedule entry, in schedule order whatever the worker count."""
    if not isinstance(schedule, EpsilonSchedule):
        schedule = EpsilonSchedule.from_values(schedule)
    jobs = [(source, e, config) for e in schedule]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_job, jobs))
    return [_job(j) for j in jobs]


# -- asymptotic fits ------------------------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    """Fit of y = (e - 1) / (A eps^(m-1)) against the affine model c + d A eps^(m-1).

    ``estimate`` is c, the leading coefficient (signed by the well).
    ``slope`` is the ordinary least-squares slope of e - 1 against
    eps^(m-1), without normalizing by A.  ``envelopes`` holds, per decade of
    the window from the top down, the largest deviation of y from the
    constant model; the fit is converged when the bottom one is smaller than
    the top one.
    """

    model: str
    estimate: float
    slope: float
    predicted: float
    rel_error: float
    envelope: float
    envelopes: tuple
    window: tuple
    n_points: int
    converged: bool
    flags: tuple = ()


def _decade_envelopes(eps: np.ndarray, y: np.ndarray, window: tuple) -> list[float]:
    lo, hi = window
    top = math.log10(hi)
    out = []
    while top > math.log10(lo) + 1e-9:
        bot = max(top - 1.0, math.log10(lo))
        sel = (eps <= 10.0**top * (1 + 1e-9)) & (eps >= 10.0**bot * (1 - 1e-9))
        if sel.sum() >= 2:
            out.append(float(np.max(np.abs(y[sel] - y[sel].mean()))))
        top = bot
    return out


def fit_asymptotic(data, well="zero", window: tuple = (1e-4, 1e-2), A: float = 0.1,
                   m: int = 2, omega: float = 1.0) -> FitResult:
    """Leading coefficient of e(eps) - 1 from rescaled energies.

    ``data`` is a sequence of (eps, e) pairs or of DiagnosticsReports, from
    which e0 or ea is taken according to ``well``.
    """
    well = Well(well)
    pairs = []
    for item in data:
        if isinstance(item, dg.DiagnosticsReport):
            pairs.append((item.epsilon, item.e0 if well is Well.ZERO else item.ea))
        else:
            pairs.append((float(item[0]), float(item[1])))
    lo, hi = window
    pairs = sorted((p for p in pairs if lo * (1 - 1e-9) <= p[0] <= hi * (1 + 1e-9)
                    and math.isfinite(p[1])), reverse=True)
    flags = []
    if len(pairs) < 6:
        raise ValueError(f"need at least 6 points in the window, got {len(pairs)}")
    eps = np.array([p[0] for p in pairs])
    e = np.array([p[1] for p in pairs])
    delta = eps ** (m - 1)
    predicted = well.sign * double_factorial_moment(m) * omega
    slope = float(np.polyfit(delta, e - 1.0, 1)[0])
    if A == 0.0:
        flags.append("degenerate")
        y = (e - 1.0) / delta
        estimate = float(np.mean(y))
        env = _decade_envelopes(eps, y, window)
        return FitResult("affine", estimate, slope, 0.0, math.nan, max(env, default=math.nan),
                         tuple(env), (lo, hi), len(pairs), True, tuple(flags))
    y = (e - 1.0) / (A * delta)
    d, c = np.polyfit(A * delta, y, 1)
    env = _decade_envelopes(eps, y, window)
    converged = len(env) >= 2 and env[-1] < env[0]
    if len(env) < 2:
        flags.append("window-too-narrow")
    elif not converged:
        flags.append("unconverged")
    rel = abs(c - predicted) / abs(predicted) if predicted != 0.0 else math.nan
    return FitResult("affine", float(c), slope, predicted, rel, max(env), tuple(env),
                     (lo, hi), len(pairs), converged, tuple(flags))


def rescaled_series(epsilons: Sequence[float], A: float = 0.1, m: int = 2,
                    profile=Profile.FROZEN_PLUS, well="zero",
                    n_list: tuple = (4096, 8192)) -> list[tuple[float, float]]:
    """(eps, e) along ``epsilons`` for one well of the rescaled problem."""
    out = []
    for eps in epsilons:
        sol = solve_rescaled(RescaledProblem(eps, A, m, profile, Well(well), n_list=n_list))
        out.append((eps, sol.e))
    return out


@dataclass(frozen=True)
class RegularityRow:
    m: int
    fitted: float
    exact: int
    rel_error: float
    fit: FitResult


def regularity_scan(m_list: Sequence[int] = (2, 3), A: float = 0.1,
                    window: tuple = (1e-4, 1e-2), per_decade: int = 12,
                    n_list: tuple = (4096, 8192)) -> list[RegularityRow]:
    """Fitted c_m from frozen-plus rescaled energies against (2m-1)!!."""
    rows = []
    eps = log_sweep(window[0], window[1], per_decade)
    for m in m_list:
        if int(m) != m or m < 2:
            raise ValueError(f"m must be an integer >= 2, got {m}")
        series = rescaled_series(eps, A, m, Profile.FROZEN_PLUS, "zero", n_list)
        fit = fit_asymptotic(series, "zero", window, A, m, 1.0)
        exact = double_factorial_moment(m)
        rows.append(RegularityRow(int(m), fit.estimate, exact,
                                  abs(fit.estimate - exact) / exact, fit))
    return rows


# -- nonconvergence witness -------------------------------------------------------------------

WITNESS_EPSILONS = (0.02, 0.01, 0.005)


@dataclass
class WitnessReport:
    mode: str
    verdict: str
    two_sided: bool
    delta: float
    signs: dict
    rows: list
    paper_sequence: list
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "verdict": self.verdict,
            "two_sided": self.two_sided,
            "delta": self.delta,
            "signs": self.signs,
            "rows": self.rows,
            "paper_sequence": self.paper_sequence,
            "notes": self.notes,
        }


def _sign(x: float, delta: float) -> str:
    if not math.isfinite(x) or abs(x) < delta:
        return "0"
    return "+" if x > 0 else "-"


def paper_sequence_check(spec: PotentialSpec, n_max: int = 1,
                         n_list: tuple = (4096, 8192)) -> list[dict]:
    """omega(sqrt eps) on the eps_n^+ and eps_n^- sequences, from log eps so nothing underflows.

    The rescaled gap is added where the shift is resolvable.
    """
    out = []
    for n in range(n_max + 1):
        for prov, log_eps in ((Provenance.PAPER_PLUS, paper_plus_log(n)),
                              (Provenance.PAPER_MINUS, paper_minus_log(n))):
            entry = _entry(log_eps, prov, n, A=spec.A, m=spec.m)
            row = {
                "label": entry.label,
                "log_epsilon": log_eps,
                "epsilon": entry.epsilon,
                "omega": omega_from_log(0.5 * log_eps, Profile.PAPER_LOGLOG),
                "flags": list(entry.flags),
                "gap": None,
            }
            if entry.rescaled and spec.A != 0.0:
                g = rescaled_gap(entry.epsilon, spec.A, spec.m, Profile.PAPER_LOGLOG, n_list)
                row["gap"] = g.gap
                row["predicted_gap"] = g.predicted
            out.append(row)
    return out


def nonconvergence_witness(spec: PotentialSpec = PotentialSpec(), mode: str = "frozen-pair",
                           epsilons: Sequence[float] | None = None, k_list: Sequence[int] = (0, 1),
                           delta: float = 0.01, config: SolverConfig = SolverConfig(),
                           small_eps: float = 0.02, physical_core: float = 3.0,
                           paper_n_max: int = 0) -> WitnessReport:
    """Two-limit evidence at accessible epsilon.

    frozen-pair: the same sweep for omega = +1 and omega = -1; two-sided when
    phi(a) stays below -delta for one profile and above +delta for the other
    on every row with eps <= ``small_eps``.

    fastlog: the rescaled gap at the fast-log extrema must alternate in sign
    with k as the computed amplitude predicts.  phi(a) is checked too where a
    physical solve is meaningful, i.e. the Gaussian core
    ``physical_core`` sqrt(eps) fits inside the exact well patch.
    """
    notes = [
        "eps_n^- starts near 2e-97, far below any resolvable grid; omega on both "
        "double-exponential sequences is evaluated exactly from log(eps)",
        "frozen profiles realize omega = +1 and -1 at accessible eps",
        "the fast-log profile alternates the sign of omega(sqrt eps) at eps = exp(-(2k+1) pi)",
    ]
    sequences = paper_sequence_check(spec, paper_n_max, config.rescaled_n_list)
    if mode == "frozen-pair":
        eps_list = tuple(WITNESS_EPSILONS if epsilons is None else epsilons)
        rows, signs = [], {}
        for prof in (Profile.FROZEN_PLUS, Profile.FROZEN_MINUS):
            reps = run_sweep(spec.with_(profile=prof), eps_list, config)
            small = [r for r in reps if r.epsilon <= small_eps * (1 + 1e-12)]
            s = {_sign(r.phi_at_a, delta) for r in small}
            signs[prof.value] = s.pop() if len(s) == 1 else "mixed"
            rows.extend({"profile": prof.value, "epsilon": r.epsilon, "phi_at_a": r.phi_at_a,
                         "log_ratio_a0": r.log_ratio_a0, "sign": _sign(r.phi_at_a, delta),
                         "flags": list(r.flags)} for r in reps)
        pair = (signs[Profile.FROZEN_PLUS.value], signs[Profile.FROZEN_MINUS.value])
        two_sided = set(pair) == {"+", "-"}
        if two_sided:
            verdict = "two-sided"
        elif "0" in pair or spec.A == 0.0:
            verdict = "inconclusive"
        else:
            verdict = "failed"
        return WitnessReport(mode, verdict, two_sided, delta, signs, rows, sequences, notes)

    if mode != "fastlog":
        raise ValueError(f"unknown witness mode {mode!r}")
    fl = spec.with_(profile=Profile.FAST_LOG)
    rows, gap_signs, phi_signs = [], [], []
    for k in k_list:
        eps = math.exp(fastlog_log(k))
        g = rescaled_gap(eps, fl.A, fl.m, Profile.FAST_LOG, config.rescaled_n_list,
                         tol=config.rescaled_tol)
        gap_sign = _sign(g.gap, 10.0 * max(g.error, 0.0) + 1e-14)
        pred_sign = _sign(g.predicted, 1e-300)
        row = {"k": k, "epsilon": eps, "omega": g.omega, "gap": g.gap,
               "predicted_gap": g.predicted, "amplitude": g.amplitude,
               "gap_sign": gap_sign, "predicted_sign": pred_sign,
               "phi_at_a": None, "phi_sign": None}
        gap_signs.append(gap_sign)
        if physical_core * math.sqrt(eps) <= fl.rho:
            rep = compute_report(fl, eps, f"fastlog-extremum({k})", config)
            # lower well energy at a (gap > 0) pulls the mass to a, so phi(a) < 0
            row["phi_at_a"] = rep.phi_at_a
            row["phi_sign"] = _sign(rep.phi_at_a, delta)
            phi_signs.append((row["phi_sign"], "-" if gap_sign == "+" else "+"))
        rows.append(row)
    alternating = all(s in "+-" for s in gap_signs) and all(
        a != b for a, b in zip(gap_signs, gap_signs[1:]))
    matches = all(r["gap_sign"] == r["predicted_sign"] for r in rows)
    phi_ok = all(s == want for s, want in phi_signs)
    two_sided = bool(alternating and matches and phi_ok and len(gap_signs) >= 2)
    if two_sided:
        verdict = "two-sided"
    elif any(s == "0" for s in gap_signs) or fl.A == 0.0:
        verdict = "inconclusive"
    else:
        verdict = "failed"
    signs = {"gap": gap_signs, "phi_at_a": [s for s, _ in phi_signs]}
    return WitnessReport(mode, verdict, two_sided, delta, signs, rows, sequences, notes)
