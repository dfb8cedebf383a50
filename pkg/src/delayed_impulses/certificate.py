"""Stability certificate for impulsive delay systems.

Given the Lyapunov constants ``(c, rho1, rho2, kappa, tau, lambda, mu)`` the
engine picks the impulse exponent ``sigma`` from one of four cases, checks the
unified dwell inequality

    -sigma * N(t, s) - (c - lambda) * (t - s) <= mu     for t > s >= t0

against a concrete impulse schedule, and rewrites it as an (reverse) average
dwell-time condition when possible.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .schedule import (
    AdtParams,
    ImpulseSchedule,
    minimal_mu,
    window_counts,
)

D1, D2, D3, D4, INFEASIBLE = "D1", "D2", "D3", "D4", "infeasible"

DEFAULT_LAMBDA = 1e-6
BISECT_TOL = 1e-13
BISECT_MAX_ITER = 200


class WrongCaseError(ValueError):
    pass


class InfeasibleSigmaError(ValueError):
    pass


class NoDwellTimeError(ValueError):
    """The unified inequality has no finite dwell-time reformulation."""


@dataclass(frozen=True)
class CertificateParams:
    c: float
    rho1: float
    rho2: float
    kappa: float
    tau: float
    lam: float = DEFAULT_LAMBDA
    mu: float | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if min(self.rho1, self.rho2, self.kappa) < 0:
            raise ValueError("rho1, rho2 and kappa must be nonnegative")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.mu is not None and self.mu < 0:
            raise ValueError("mu must be nonnegative")

    @property
    def delayed_weight(self) -> float:
        """``(1 - rho1) * kappa + rho2``."""
        return (1.0 - self.rho1) * self.kappa + self.rho2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CertificateParams":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = {"c", "rho1", "rho2", "kappa", "tau", "lam", "mu"}
        missing = sorted({"c", "rho1", "rho2", "kappa", "tau"} - set(data))
        if missing:
            raise KeyError(missing[0])
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown certificate fields: {sorted(extra)}")
        return cls(**{k: float(v) if v is not None else None for k, v in data.items()})


@dataclass(frozen=True)
class SigmaResult:
    case_tag: str
    sigma: float | None
    binding_window_count: int | None = None


def classify_case(c: float, rho1: float, rho2: float, kappa: float, tau: float) -> str:
    w = (1.0 - rho1) * kappa + rho2
    if c > 0:
        if rho1 >= 1:
            return D1
        return D2 if rho1 + w * math.exp(c * tau) >= 1 else D3
    if rho1 < 1 and rho1 + w < 1:
        return D4
    return INFEASIBLE


def sigma_closed_form(params: CertificateParams) -> SigmaResult:
    p = params
    case = classify_case(p.c, p.rho1, p.rho2, p.kappa, p.tau)
    if case == D1:
        return SigmaResult(D1, -math.log(p.rho1 + p.rho2 * math.exp(p.c * p.tau)))
    if case == D2:
        return SigmaResult(D2, -math.log(p.rho1 + p.delayed_weight * math.exp(p.c * p.tau)))
    raise WrongCaseError(f"closed form applies to D1/D2 only, got {case}")


def feasibility_lhs(params: CertificateParams, sigma: float, window_count: int, case: str) -> float:
    """Left side of the D3/D4 defining inequality (feasible iff <= 1)."""
    w = params.delayed_weight
    if case == D3:
        w *= math.exp(params.c * params.tau)
    return params.rho1 * math.exp(sigma) + w * math.exp(sigma * window_count)


def sigma_feasible_max(params: CertificateParams, window_count: int) -> SigmaResult:
    """Largest ``sigma > 0`` satisfying the D3/D4 inequality, by bisection.

    The left side is increasing in ``sigma``, so the feasible set is an
    interval ``(0, sigma_max]``.
    """
    p = params
    case = classify_case(p.c, p.rho1, p.rho2, p.kappa, p.tau)
    if case not in (D3, D4):
        raise WrongCaseError(f"bisection applies to D3/D4 only, got {case}")
    if window_count < 1:
        raise ValueError("window_count must be a positive integer")

    def g(s: float) -> float:
        return feasibility_lhs(p, s, window_count, case) - 1.0

    if g(0.0) >= 0:
        raise InfeasibleSigmaError("left side already >= 1 as sigma -> 0+")
    hi = -math.log(p.rho1) if p.rho1 > 0 else 1.0
    while g(hi) <= 0:
        hi *= 2.0
        if hi > 1e6:
            raise InfeasibleSigmaError("no upper bracket for sigma")
    lo = 0.0
    for _ in range(BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if g(mid) <= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= BISECT_TOL * max(1.0, hi):
            break
    return SigmaResult(case, lo, window_count)


class DwellDirection:
    ADT = "ADT"
    REVERSE = "reverse-ADT"
    UNCONSTRAINED = "unconstrained (arbitrary impulse times)"


def adt_parameters(sigma: float, c: float, lam: float, mu: float) -> tuple[AdtParams | None, str]:
    """``T* = |sigma|/|c - lam|`` and ``N* = mu/|sigma|`` with the dwell direction."""
    rate = c - lam
    if sigma >= 0 and rate >= 0:
        adt = AdtParams(abs(sigma) / rate, mu / abs(sigma)) if sigma > 0 and rate > 0 else None
        return adt, DwellDirection.UNCONSTRAINED
    if sigma < 0 and rate > 0:
        return AdtParams(-sigma / rate, mu / -sigma), DwellDirection.ADT
    if sigma > 0 and rate < 0:
        return AdtParams(sigma / -rate, mu / sigma), DwellDirection.REVERSE
    raise NoDwellTimeError(
        f"sigma={sigma}, c-lambda={rate}: inequality cannot hold on long intervals"
    )


def window_count_bounds(params: CertificateParams, sigma: float, adt: AdtParams) -> tuple[float, float, bool]:
    """Band ``lower <= N(t_k, t_k - tau) <= upper``; third item flags an empty band."""
    p = params
    case = classify_case(p.c, p.rho1, p.rho2, p.kappa, p.tau)
    if case not in (D3, D4):
        raise WrongCaseError(f"window band applies to D3/D4 only, got {case}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    head = 1.0 - p.rho1 * math.exp(sigma)
    if head <= 0:
        raise ValueError("rho1 * e^sigma >= 1: upper bound undefined")
    denom = p.delayed_weight
    if case == D3:
        denom *= math.exp(p.c * p.tau)
    upper = math.inf if denom == 0 else math.log(head / denom) / sigma
    lower = p.tau / adt.t_star - adt.n_star
    return lower, upper, lower > upper


def regime_label(c: float, sigma: float) -> str:
    if c > 0:
        if sigma < 0:
            return "c>0, sigma<0"
        return "c>0, sigma=0" if sigma == 0 else "c>0, sigma>0"
    if sigma <= 0:
        return "c<=0, sigma<=0"
    return "c=0, sigma>0" if c == 0 else "c<0, sigma>0"


@dataclass
class CertificateReport:
    params: CertificateParams
    sigma_result: SigmaResult
    regime: str | None
    direction: str | None
    adt: AdtParams | None
    mu_required: float | None
    mu_used: float | None
    worst_slack: float | None
    condition_v: bool
    certified: bool
    reason: str
    window_supremum: int | None = None
    horizon_limited: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return "GAS-certified" if self.certified else "not-certified"

    def to_dict(self) -> dict:
        d = {
            "verdict": self.verdict,
            "reason": self.reason,
            "case": self.sigma_result.case_tag,
            "sigma": self.sigma_result.sigma,
            "binding_window_count": self.sigma_result.binding_window_count,
            "regime": self.regime,
            "direction": self.direction,
            "t_star": self.adt.t_star if self.adt else None,
            "n_star": self.adt.n_star if self.adt else None,
            "mu_required": self.mu_required,
            "mu_used": self.mu_used,
            "worst_slack": self.worst_slack,
            "condition_v": self.condition_v,
            "window_supremum": self.window_supremum,
            "horizon_limited": self.horizon_limited,
            "params": self.params.to_dict(),
            "notes": list(self.notes),
        }
        return d


def certify(params: CertificateParams, sched: ImpulseSchedule, t0: float, horizon: float) -> CertificateReport:
    p = params
    case = classify_case(p.c, p.rho1, p.rho2, p.kappa, p.tau)
    if case == INFEASIBLE:
        return CertificateReport(
            p, SigmaResult(INFEASIBLE, None), None, None, None, None, p.mu, None, False, False,
            "no sigma case applies (c <= 0 with non-contractive impulses)",
        )

    wsup = None
    limited = not sched.periodic
    if case in (D1, D2):
        sres = sigma_closed_form(p)
    else:
        try:
            wsup = window_counts(sched, p.tau, horizon).supremum
        except ValueError:
            wsup = 1
        try:
            sres = sigma_feasible_max(p, max(wsup, 1))
        except InfeasibleSigmaError as exc:
            return CertificateReport(
                p, SigmaResult(case, None, wsup), None, None, None, None, p.mu, None, False, False,
                f"sigma inconsistent with case {case}: {exc}", wsup, limited,
            )
    sigma = sres.sigma
    regime = regime_label(p.c, sigma)

    mu_req = minimal_mu(sched, sigma, p.c, p.lam, t0, horizon)
    mu_used = mu_req if p.mu is None else p.mu
    ok = math.isfinite(mu_req) and mu_req <= mu_used + 1e-12 * max(1.0, mu_used)
    slack = mu_req - mu_used if math.isfinite(mu_req) else math.inf

    adt = None
    direction = None
    notes: list[str] = []
    try:
        adt, direction = adt_parameters(sigma, p.c, p.lam, mu_used if math.isfinite(mu_used) else 0.0)
    except NoDwellTimeError as exc:
        notes.append(str(exc))
    if not math.isfinite(mu_used):
        adt = None
    if limited:
        notes.append("explicit schedule: conditions checked up to the horizon only")

    if ok:
        reason = "unified dwell inequality holds"
    elif not math.isfinite(mu_req):
        reason = "unified dwell inequality fails: required mu grows without bound (positive per-period drift)"
    else:
        reason = f"unified dwell inequality fails: required mu {mu_req!r} exceeds {mu_used!r}"
    return CertificateReport(
        p, sres, regime, direction, adt, mu_req, mu_used, slack, ok, ok, reason, wsup, limited, notes,
    )
