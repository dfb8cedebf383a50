"""Ready-made systems: a saturated scalar system with a distributed-delay
impulse, a linear system with delayed impulses (three coefficient sets), and a
delayed network control loop.

Systems are assembled from :class:`LinearTerm` pieces ``M @ sat?(read)`` where
``read`` is a point value ``x(t - delay)`` or a window integral.  The same
pieces back the YAML system files accepted by the command line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .certificate import CertificateParams, CertificateReport, certify
from .core import HistoryFunction, SystemDefinition
from .lyapunov import LyapunovPair
from .schedule import ImpulseSchedule, PeriodicSchedule, count_impulses, window_counts


def sat(z):
    """Unit saturation ``(|z + 1| - |z - 1|) / 2``, i.e. clipping to ``[-1, 1]``."""
    return np.clip(z, -1.0, 1.0)


# --- small-matrix linear algebra -------------------------------------------

POWER_TOL = 1e-12
POWER_MAX_ITER = 10000


def _square(m) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def _dominant_eigenvalue(s: np.ndarray) -> float:
    """Largest eigenvalue of a symmetric positive semidefinite matrix."""
    n = s.shape[0]
    v = np.ones(n) + 0.1 * np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(POWER_MAX_ITER):
        w = s @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = float(v @ s @ v)
        if abs(new - lam) <= POWER_TOL * max(1.0, abs(new)):
            return new
        lam = new
    return lam


def spectral_norm(m) -> float:
    """Induced 2-norm by power iteration on ``M^T M``."""
    m = _square(m)
    return math.sqrt(max(_dominant_eigenvalue(m.T @ m), 0.0))


def sym_lambda_max(m) -> float:
    """Largest eigenvalue of a symmetric matrix (power iteration after a shift)."""
    m = _square(m)
    if np.max(np.abs(m - m.T), initial=0.0) > 1e-12:
        raise ValueError("matrix is not symmetric")
    shift = spectral_norm(m)
    return _dominant_eigenvalue(m + shift * np.eye(m.shape[0])) - shift


# --- system assembly ---------------------------------------------------------


@dataclass(frozen=True)
class LinearTerm:
    """``matrix @ sat?(x(t - delay))`` or ``matrix @ sat?(int_{t-delay}^t x)``."""

    matrix: np.ndarray
    delay: float = 0.0
    saturate: bool = False
    kind: str = "point"

    def __post_init__(self):
        object.__setattr__(self, "matrix", _square(self.matrix))
        if self.delay < 0:
            raise ValueError("delay must be nonnegative")
        if self.kind not in ("point", "integral"):
            raise ValueError("kind must be 'point' or 'integral'")
        if self.kind == "integral" and self.delay <= 0:
            raise ValueError("an integral term needs a positive window")

    def __call__(self, xt) -> np.ndarray:
        if self.kind == "point":
            v = xt(-self.delay) if self.delay else xt.current
        else:
            v = xt.integral(-self.delay, 0.0)
        if self.saturate:
            # np.clip carries noticeable per-call overhead on tiny arrays
            v = np.minimum(np.maximum(v, -1.0), 1.0)
        return self.matrix @ v

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "delay": self.delay,
                "saturate": self.saturate, "kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearTerm":
        return cls(np.asarray(d["matrix"], dtype=float), float(d.get("delay", 0.0)),
                   bool(d.get("saturate", False)), d.get("kind", "point"))


def build_system(field_terms: Sequence[LinearTerm], jump_terms: Sequence[LinearTerm],
                 tau: float | None = None, name: str = "") -> SystemDefinition:
    terms = list(field_terms) + list(jump_terms)
    if not field_terms:
        raise ValueError("need at least one field term")
    n = terms[0].matrix.shape[0]
    if any(t.matrix.shape[0] != n for t in terms):
        raise ValueError("all term matrices must share one dimension")
    longest = max(t.delay for t in terms)
    tau = longest if tau is None else float(tau)
    if tau < longest:
        raise ValueError("tau is shorter than a delay the terms read")
    zero = np.zeros(n)
    field_terms, jump_terms = tuple(field_terms), tuple(jump_terms)

    def field_f(t, xt):
        out = zero
        for term in field_terms:
            out = out + term(xt)
        return out

    def jump_g(t, xt):
        out = zero
        for term in jump_terms:
            out = out + term(xt)
        return out

    lags = [t.delay for t in field_terms if t.kind == "point" and t.delay > 0]
    sys = SystemDefinition(n, tau, field_f, jump_g, name, tuple(lags))
    object.__setattr__(sys, "terms", {"field": field_terms, "jump": jump_terms})
    return sys


def system_to_dict(sys: SystemDefinition) -> dict:
    terms = getattr(sys, "terms", None)
    if terms is None:
        raise ValueError("only term-built systems can be exported")
    return {"name": sys.name, "tau": sys.tau,
            "field": [t.to_dict() for t in terms["field"]],
            "jump": [t.to_dict() for t in terms["jump"]]}


def system_from_dict(d: dict) -> SystemDefinition:
    return build_system([LinearTerm.from_dict(t) for t in d.get("field", [])],
                        [LinearTerm.from_dict(t) for t in d.get("jump", [])],
                        d.get("tau"), d.get("name", ""))


def quadratic_pair(weight: float, window: float) -> LyapunovPair:
    """``V1 = x^T x`` and ``V2 = weight * int_{-window}^0 |x(s)|^2 ds``."""

    def v1(t, x):
        return float(np.dot(x, x))

    def v2(t, h):
        if weight == 0.0 or window == 0.0:
            return 0.0
        return weight * h.integrate(lambda s, xs: np.einsum("ij,ij->i", xs, xs), -window, 0.0)

    return LyapunovPair(v1, v2, lambda z: math.sqrt(max(z, 0.0)))


@dataclass
class ExamplePreset:
    name: str
    system: SystemDefinition
    pair: LyapunovPair
    params: CertificateParams
    schedule: ImpulseSchedule
    initial: HistoryFunction
    horizon: float
    t0: float = 0.0
    kappa_check: float | None = None
    reference: dict[str, float] = field(default_factory=dict)
    derivation: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)


# --- scalar saturated system ---------------------------------------------------


def example1_preset(a: float = 0.2, b: float = 0.25, tau: float = 1.0, epsilon: float = 4.0) -> ExamplePreset:
    """``x' = -sat(x) + a sat(x(t - tau))``, jump ``b sat(int_{t-tau}^t x)``."""
    if min(a, b, epsilon) <= 0 or tau <= 0:
        raise ValueError("a, b, epsilon and tau must be positive")
    one = np.ones((1, 1))
    system = build_system(
        [LinearTerm(-one, 0.0, True), LinearTerm(a * one, tau, True)],
        [LinearTerm(b * one, tau, True, "integral")],
        tau, "saturated scalar",
    )

    def v1(t, x):
        z = abs(float(x[0]))
        return z * z if z <= 1.0 else math.exp(2.0 * (z - 1.0))

    def v2(t, h):
        weight = lambda s, xs: np.clip(xs[:, 0], -1, 1) ** 2 * (epsilon + 1.0 + epsilon * s / tau)
        return abs(a) * h.integrate(weight)

    def alpha1_inv(z):
        return math.sqrt(z) if z <= 1.0 else 1.0 + 0.5 * math.log(z)

    c = min(2.0 - (epsilon + 2.0) * abs(a), epsilon / ((epsilon + 1.0) * tau))
    flags = []
    if c <= 0:
        flags.append(f"c = {c} <= 0: continuous part no longer contracting")
    if (b, tau) != (0.25, 1.0):
        flags.append("jump constants rho1 = 2e, rho2 = 1/8 were derived for b = 0.25, tau = 1")
    # V2 <= |a| (eps + 1) tau * sup sat^2 <= |a| (eps + 1) tau * sup V1
    kappa = abs(a) * (epsilon + 1.0) * tau
    params = CertificateParams(c=c, rho1=2.0 * math.e, rho2=0.125, kappa=kappa, tau=tau)
    return ExamplePreset(
        name="ex1", system=system, pair=LyapunovPair(v1, v2, alpha1_inv), params=params,
        schedule=PeriodicSchedule([1.0, 3.0, 6.0, 10.0], 10.0),
        initial=HistoryFunction.constant([0.5], tau), horizon=20.0, kappa_check=kappa,
        reference={"c": 0.8, "sigma": -1.7431, "t_star": 2.1789},
        derivation={"a": a, "b": b, "epsilon": epsilon, "c": c},
        flags=flags,
    )


# --- linear system with delayed impulses ----------------------------------------


@dataclass(frozen=True)
class LinearImpulsiveSpec:
    """``x' = A x + B x(t - r1)``, jump ``C x(t^-) + D x(t - r2)``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    r1: float
    r2: float

    def __post_init__(self):
        mats = [_square(m) for m in (self.A, self.B, self.C, self.D)]
        if len({m.shape for m in mats}) != 1:
            raise ValueError("A, B, C, D must share one square shape")
        for name, m in zip("ABCD", mats):
            object.__setattr__(self, name, m)
        if self.r1 < 0 or self.r2 < 0 or max(self.r1, self.r2) == 0:
            raise ValueError("delays must be nonnegative and not both zero")

    @property
    def r(self) -> float:
        return max(self.r1, self.r2)

    @property
    def n(self) -> int:
        return self.A.shape[0]


def _split_weights(nic: float, nd: float, head: float, tail: float):
    """Minimize ``(1 + xi) nic^2 head + (1 + 1/xi) nd^2 tail`` over ``xi > 0``.

    Returns ``(xi, rho1, rho2, minimum)``; the minimum is
    ``(sqrt(head) nic + sqrt(tail) nd)^2``.
    """
    if nd == 0.0 or tail == 0.0:
        return 0.0, nic**2, 0.0, head * nic**2
    if nic == 0.0:
        return math.inf, 0.0, nd**2, tail * nd**2
    xi = math.sqrt(tail) * nd / (math.sqrt(head) * nic)
    rho1 = (1.0 + xi) * nic**2
    rho2 = (1.0 + 1.0 / xi) * nd**2
    return xi, rho1, rho2, (math.sqrt(head) * nic + math.sqrt(tail) * nd) ** 2


def est01(nic: float, nd: float, kappa: float, growth: float) -> tuple[float, float]:
    """Optimized ``rho1 + [(1 - rho1) kappa + rho2] * growth`` and its ``xi``."""
    head = 1.0 - kappa * growth
    if head <= 0:
        raise ValueError("xi-optimization infeasible: kappa * e^{c r} >= 1")
    xi, _, _, m = _split_weights(nic, nd, head, growth)
    return m + kappa * growth, xi


def est02(nic: float, nd: float, kappa: float, growth: float, sigma: float, count: int) -> tuple[float, float]:
    """Optimized ``rho1 e^sigma + [(1 - rho1) kappa + rho2] growth e^{sigma N}`` and its ``xi``.

    ``growth`` is ``e^{c r}`` for a contracting flow and 1 otherwise.
    """
    tail = growth * math.exp(sigma * count)
    head = math.exp(sigma) - kappa * tail
    if head <= 0:
        return math.inf, math.nan
    xi, _, _, m = _split_weights(nic, nd, head, tail)
    return m + kappa * tail, xi


def _est02_root(nic, nd, kappa, growth, count) -> float:
    lo, hi = 0.0, 1.0
    while est02(nic, nd, kappa, growth, hi, count)[0] <= 1.0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise ValueError("sigma unbounded: impulses annihilate the state")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if est02(nic, nd, kappa, growth, mid, count)[0] <= 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return lo


def example2_params(spec: LinearImpulsiveSpec, window_count: int | None = None) -> tuple[CertificateParams, dict]:
    """Certificate constants for the linear system, with the ``xi`` split optimized.

    The continuous part uses ``eps = ||B||`` and ``c = -(lambda_max(A + A^T) + 2 eps)``.
    With ``c > 0`` the split first minimizes the contraction-free combination;
    if that lands below 1 (stabilizing impulses), or when ``c <= 0``, the split
    is re-optimized at the largest ``sigma`` for ``window_count``.
    """
    A, B, C, D = spec.A, spec.B, spec.C, spec.D
    eye = np.eye(spec.n)
    rec: dict = {}
    if spec.r1 == 0:
        A, B = A + B, np.zeros_like(B)
        rec["folded"] = "B into A (delay-free flow)"
    if spec.r2 == 0:
        C, D = C + D, np.zeros_like(D)
        rec["folded"] = rec.get("folded", "") + "; D into C (delay-free impulses)"
    r = spec.r
    eps = spectral_norm(B) if spec.r1 > 0 else 0.0
    lmax = sym_lambda_max(A + A.T)
    c = -(lmax + 2.0 * eps)
    kappa = eps * spec.r1
    nic = spectral_norm(eye + C)
    nd = spectral_norm(D)
    rec.update(lambda_max=lmax, epsilon=eps, norm_B=spectral_norm(spec.B), c=c, kappa=kappa,
               norm_I_plus_C=nic, norm_D=nd, r=r)

    if c < 0:
        cmp_value, _ = est01(nic, nd, kappa, 1.0)
        rec["interval_bound"] = math.log(cmp_value) / c

    if c > 0:
        growth = math.exp(c * r)
        value, xi = est01(nic, nd, kappa, growth)
        rec.update(est01=value, xi=xi)
        _, rho1, rho2, _ = _split_weights(nic, nd, 1.0 - kappa * growth, growth)
        if value >= 1.0 or rho1 >= 1.0:
            rec["path"] = "closed form"
            return CertificateParams(c=c, rho1=rho1, rho2=rho2, kappa=kappa, tau=r), rec
    else:
        growth = 1.0
    if window_count is None:
        raise ValueError("stabilizing impulses: window_count is required")
    root = _est02_root(nic, nd, kappa, growth, window_count)
    tail = growth * math.exp(root * window_count)
    xi, rho1, rho2, _ = _split_weights(nic, nd, math.exp(root) - kappa * tail, tail)
    rec.update(path="feasible max", est02_sigma=root, xi=xi, window_count=window_count)
    return CertificateParams(c=c, rho1=rho1, rho2=rho2, kappa=kappa, tau=r), rec


_A1 = np.array([[-1.1834, -0.8284], [-0.8284, -1.7751]])
_B1 = np.array([[0.25, 0.175], [0.175, 0.375]])
_C1 = np.array([[-0.7375, 0.175], [0.125, -0.6]])
_C2 = np.array([[-0.895, 0.07], [0.05, -0.84]])
_A3 = np.array([[0.2, 0.12], [0.1, 0.25]])
_D3 = np.array([[0.105, 0.07], [0.05, 0.16]])

_EX2 = {
    "C1": dict(A=_A1, B=_B1, C=_C1, D=_B1, offsets=[0.08, 0.26], period=0.26,
               reference={"lambda_max": -1.1993, "norm_B": 0.4983, "norm_D": 0.4983,
                          "norm_I_plus_C": 0.4972, "c": 0.2027, "sigma": -0.0262,
                          "t_star": 0.1293, "n_star": 2.0}),
    "C2": dict(A=_A1, B=_B1, C=_C2, D=_B1, offsets=[0.03, 0.14], period=0.14,
               reference={"c": 0.2027, "norm_I_plus_C": 0.1989, "est01": 0.5369,
                          "window_supremum": 2.0}),
    "C3": dict(A=_A3, B=_B1, C=_C1, D=_D3, offsets=[0.04, 0.08, 0.12, 0.52], period=0.52,
               reference={"lambda_max": 0.6756, "c": -1.6722, "norm_D": 0.1989, "sigma": 0.3786,
                          "t_star": 0.2264, "n_star": 3.0, "window_supremum": 3.0,
                          "interval_bound": 0.3945}),
}


def example2_spec(case: str, r: float = 0.1) -> LinearImpulsiveSpec:
    d = _EX2[case]
    return LinearImpulsiveSpec(d["A"], d["B"], d["C"], d["D"], r, r)


def example2_preset(case: str) -> ExamplePreset:
    if case not in _EX2:
        raise ValueError(f"unknown case {case!r}; expected one of {sorted(_EX2)}")
    d = _EX2[case]
    spec = example2_spec(case)
    sched = PeriodicSchedule(d["offsets"], d["period"])
    wsup = window_counts(sched, spec.r, 10 * d["period"]).supremum
    params, rec = example2_params(spec, wsup)
    rec["window_supremum"] = wsup
    system = linear_system(spec, name=f"linear {case}")
    return ExamplePreset(
        name=f"ex2-{case.lower()}", system=system, pair=quadratic_pair(rec["epsilon"], spec.r1),
        params=params, schedule=sched, initial=HistoryFunction.constant([0.5, 0.7], spec.r),
        horizon=6.0, kappa_check=params.kappa, reference=dict(d["reference"]), derivation=rec,
    )


def linear_system(spec: LinearImpulsiveSpec, name: str = "") -> SystemDefinition:
    return build_system(
        [LinearTerm(spec.A), LinearTerm(spec.B, spec.r1)],
        [LinearTerm(spec.C), LinearTerm(spec.D, spec.r2)],
        spec.r, name,
    )


# --- delayed network control system --------------------------------------------

_A_NET = np.array([[-18.0 / 7.0, 9.0, 0.0], [1.0, -1.0, 1.0], [0.0, -100.0 / 7.0, 0.0]])
LIPSCHITZ_NET = 27.0 / 7.0


def impulse_overlap(sched: ImpulseSchedule, d: float, horizon: float) -> int:
    """Largest number of impulses strictly inside ``(t_k - d, t_k)``."""
    ts = sched.times_until(horizon)
    if ts.size == 0:
        return 0
    return max(count_impulses(sched, t - d, t) - 1 for t in ts)


def example3_params(sched: ImpulseSchedule, r: float = 0.02, d: float = 0.01, gain: float = -0.5418,
                    horizon: float | None = None) -> tuple[CertificateParams, dict]:
    A, L = _A_NET, LIPSCHITZ_NET
    B = gain * np.eye(3)
    tau = max(r, d)
    if horizon is None:
        horizon = sched.origin + 3 * sched.period if sched.periodic else sched.horizon
    zeta = impulse_overlap(sched, d, horizon)
    kappa = r * L
    norm_a = spectral_norm(A)
    norm_b = spectral_norm(B)
    nib = spectral_norm(np.eye(3) + B)
    lmax = sym_lambda_max(A + A.T)
    c = -(lmax + 2.0 * L)
    q = d * norm_b * (norm_a + L) + zeta * norm_b**2
    xi, rho1, rho2, _ = _split_weights(nib, q, 1.0 - kappa, 1.0)
    rec = dict(norm_A=norm_a, norm_B=norm_b, norm_I_plus_B=nib, lambda_max=lmax, c=c,
               kappa=kappa, zeta=zeta, xi=xi, lipschitz=L)
    return CertificateParams(c=c, rho1=rho1, rho2=rho2, kappa=kappa, tau=tau), rec


def example3_preset() -> ExamplePreset:
    r, d = 0.02, 0.01
    tau = max(r, d)
    sched = PeriodicSchedule([0.05, 0.08], 0.08)
    params, rec = example3_params(sched, r, d)
    h = np.zeros((3, 3))
    h[0, 0] = LIPSCHITZ_NET
    system = build_system(
        [LinearTerm(_A_NET), LinearTerm(h, r, True)],
        [LinearTerm(-0.5418 * np.eye(3), d)],
        tau, "delayed network control",
    )
    flags = []
    if rec["zeta"] > 0:
        flags.append("impulse gaps shorter than the sensing delay: rho2 recomputed with zeta > 0")
    return ExamplePreset(
        name="ex3", system=system, pair=quadratic_pair(LIPSCHITZ_NET, r), params=params,
        schedule=sched, initial=HistoryFunction.constant([0.5, 0.45, -0.2], tau), horizon=2.0,
        kappa_check=params.kappa,
        reference={"sigma": 0.9619, "sigma_over_c": 0.041, "t_star": 0.04},
        derivation=rec, flags=flags,
    )


PRESET_NAMES = ("ex1", "ex2-c1", "ex2-c2", "ex2-c3", "ex3")


def get_preset(name: str) -> ExamplePreset:
    if name == "ex1":
        return example1_preset()
    if name.startswith("ex2-"):
        return example2_preset(name[4:].upper())
    if name == "ex3":
        return example3_preset()
    raise ValueError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")


def certify_preset(preset: ExamplePreset, lam: float | None = None, mu: float | None = None) -> CertificateReport:
    """Certificate report for a preset, optionally overriding ``lambda`` and ``mu``."""
    params = preset.params
    if lam is not None or mu is not None:
        d = params.to_dict()
        d.update({k: v for k, v in (("lam", lam), ("mu", mu)) if v is not None})
        params = CertificateParams(**d)
    return certify(params, preset.schedule, preset.t0, preset.horizon)
