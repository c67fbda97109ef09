"""One KAM step and the iteration loop.

A step takes ``H = N + P`` to ``H_+ = N_+ + P_+`` by

1. splitting ``P = R + tail`` (``|k| <= K_+``, weighted degree ``<= m``);
2. solving ``{N, F} + R - [R] - Q = 0`` for the generator ``F``;
3. applying the time-one map of ``F``:
   ``H o phi_F^1 = N + [R] + (P - [R] + sum_q ad_F^q {H, F} / (q+1)!)``;
4. translating ``z -> z + delta`` so that the new ``g`` has no linear part;
5. regrouping the angle-independent low-degree part into ``N_+``.

The new Hamiltonian equals the old one composed with
``phi_F^1 o (z -> z + delta)``; ``transformation_defect`` checks that
identity pointwise with a numerically integrated flow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import mpmath
import numpy as np
from scipy.special import gammaln, logsumexp

from .flow import flow_map
from .homological import (ResonanceViolation, SingularBlockError, certify_nonresonance,
                          solve_homological)
from .normal_form import NormalForm
from .schedule import Schedule, StepParams
from .series import (Caps, DomainParams, LieSeriesDivergence, TFSeries, add_scale, average,
                     evaluate, linear_combination, majorant_norm, partial_derivative,
                     poisson_bracket, shift_z, truncate)
from .translation import NoZeroFoundError, ShiftResult, find_shift, rebuild_normal_form

mpmath.mp.dps = 30


class KamDivergence(ArithmeticError):
    """The perturbation norm grew during a step."""


# ---------------------------------------------------------------------------
# state

@dataclass(frozen=True)
class StepRecord:
    nu: int
    r: float
    s: float
    gamma: float
    mu: float
    K: int
    norm: float
    bound: float
    omega_drift: float
    shift: float
    hyp_passed: int
    terms: int
    lie_order: int


@dataclass
class KamState:
    """Hamiltonian ``N + P`` at step ``nu`` with the bookkeeping of the run."""

    step: int
    N: NormalForm
    P: TFSeries
    params: StepParams
    omega0: np.ndarray
    h_tilde0: TFSeries
    initial_norm: float
    norm_history: list = field(default_factory=list)   # (nu, |P_nu|, bound_nu)
    shifts: list = field(default_factory=list)          # ShiftResult per step
    transforms: list = field(default_factory=list)      # (F, delta) per step
    records: list = field(default_factory=list)

    @property
    def hamiltonian(self) -> TFSeries:
        return add_scale(1.0, self.P, self.N.as_series(self.P.caps.union(self.N.as_series().caps)))

    def domain(self) -> DomainParams:
        return DomainParams(self.params.s, self.params.r)


def initial_state(N: NormalForm, P: TFSeries, schedule: Schedule) -> KamState:
    params = schedule.at(0)
    dom = DomainParams(params.s, params.r)
    norm = majorant_norm(P, dom)
    return KamState(0, N, P, params, N.omega.copy(), N.h_tilde, norm,
                    norm_history=[(0, norm, schedule.perturbation_bound(0))])


# ---------------------------------------------------------------------------
# hypotheses

def count_modes(n: int, ell: np.ndarray) -> np.ndarray:
    """Log of the number of ``k`` in ``Z**n`` with ``|k|_1 = ell``."""
    ell = np.asarray(ell, dtype=float)
    terms = []
    for i in range(1, n + 1):
        with np.errstate(divide="ignore"):
            t = (i * math.log(2.0) + gammaln(n + 1) - gammaln(i + 1) - gammaln(n - i + 1)
                 + gammaln(ell) - gammaln(i) - gammaln(ell - i + 1))
        terms.append(np.where(ell >= i, t, -np.inf))
    return logsumexp(np.vstack(terms), axis=0)


def log_gamma_sum(n: int, K: int, power: float, dr: float) -> float:
    """``log sum_{0<|k|<=K} |k|**power exp(-|k| dr / 8)``.

    The sum is grouped by ``ell = |k|_1``; beyond ``ell ~ 2 (power + n) / a`` the
    terms decrease geometrically, so it is cut where they have dropped by ``e**-60``.
    """
    if K < 1:
        return -math.inf
    a = dr / 8.0
    stop = int(min(K, math.ceil(2 * (power + n) / a + 120.0 / a) + 1))
    ell = np.arange(1, stop + 1, dtype=float)
    logs = count_modes(n, ell) + power * np.log(ell) - a * ell
    return float(logsumexp(logs))


def h1_integral(n: int, K: float, dr: float):
    """``int_K^inf t**n exp(-t dr / 16) dt`` as an mpmath number."""
    a = mpmath.mpf(dr) / 16
    return mpmath.gammainc(n + 1, a * K) / a ** (n + 1)


@dataclass(frozen=True)
class HypothesisRow:
    name: str
    formula: str
    left: float
    right: float
    margin: float
    passed: bool
    tight_constant: float = float("nan")


@dataclass(frozen=True)
class HypothesisReport:
    nu: int
    rows: tuple

    @property
    def passed_count(self) -> int:
        return sum(r.passed for r in self.rows)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def row(self, name: str) -> HypothesisRow:
        return next(r for r in self.rows if r.name == name)

    def text(self) -> str:
        lines = [f"{'hyp':<4} {'left':>12} {'right':>12} {'margin':>12} {'pass':>5} {'tight c':>10}  formula"]
        for r in self.rows:
            lines.append(f"{r.name:<4} {r.left:>12.4e} {r.right:>12.4e} {r.margin:>12.4e} "
                         f"{'yes' if r.passed else 'no':>5} {r.tight_constant:>10.3e}  {r.formula}")
        return "\n".join(lines)


def _y_derivative_norms(S: TFSeries, order: int, dom: DomainParams) -> float:
    """``max_{|i| <= order} |d_y**i S|`` in the majorant norm."""
    best, layer = majorant_norm(S, dom), [S]
    for _ in range(order):
        nxt = []
        for T in layer:
            for i in range(S.n):
                D = partial_derivative(T, ("y", i))
                if not D.is_zero():
                    nxt.append(D)
                    best = max(best, majorant_norm(D, dom))
        layer = nxt
    return best


def verify_hypotheses(state: KamState, schedule: Schedule, L: float | None = None) -> HypothesisReport:
    """Evaluate (H0)-(H9) at the state's step with measured norms.

    Sup norms are replaced by majorant norms, ``Gamma(r - r_+)`` is the finite
    sum over ``0 < |k| <= K_+`` and all inequalities are compared in extended
    precision (the paper-faithful ``K_+`` makes some terms astronomically large).
    """
    mp = mpmath.mpf
    p, m, n, eps = state.params, schedule.m, schedule.n, schedule.epsilon
    c = schedule.constants
    L = L if L is not None else (schedule.L or 2.0)
    E = schedule.exponent
    nu = state.step
    s, s_p, s_m = mp(p.s), mp(p.s_plus), mp(p.s_minus)
    mu, mu_p, mu_m = mp(p.mu), mp(p.mu_plus), mp(p.mu_minus)
    g, g_p, g0 = mp(p.gamma), mp(p.gamma_plus), mp(schedule.gamma0)
    alpha, dr = mp(p.alpha), p.r - p.r_plus
    K = p.K_plus
    Gamma = mpmath.exp(log_gamma_sum(n, K, E * schedule.tau + m, dr))
    dom = DomainParams(p.s, p.r)
    M_star = _y_derivative_norms(state.h_tilde0, m, dom)
    drift_h = _y_derivative_norms(add_scale(-1.0, state.h_tilde0, state.N.h_tilde), m, dom)
    drift_term = (s_m ** (m - 1) * mu_m) ** (mp(1) / L)
    tail = sum((mp(schedule.gamma_at(i)) ** E * mp(schedule.s_at(i)) ** (m - 3)
                * mp(schedule.mu_at(i)) for i in range(nu)), mp(0))
    Delta = (alpha ** (m + 1) * s ** (m + 1) * mu * (s ** (m - 2) * mu * Gamma ** 2 + Gamma)
             + g ** E * s ** (2 * m - 2) * mu ** 2 * Gamma + g ** E * s ** (m + 1) * mu * tail)
    P_unscaled = mp(state.initial_norm) / mp(eps)

    specs = [
        ("H0", "eps^(m/(8(m+1))) |P| / s^m <= 1",
         mp(eps) ** (mp(m) / (8 * (m + 1))) * P_unscaled / mp(schedule.s) ** m, mp(1), None),
        ("H1", "int_{K+}^inf t^n e^{-t(r-r+)/16} dt <= s", h1_integral(n, K, dr), s, None),
        ("H2", "max |d_y^i (h~ - h~0)| <= s0^(1/2)", mp(drift_h), mp(schedule.s0) ** 0.5, None),
        ("H3", "4s < (gamma - gamma+) / ((M*+2) K+^(tau+1))",
         4 * s, (g - g_p) / ((mp(M_star) + 2) * mp(K) ** (schedule.tau + 1)), None),
        ("H4", "c3 (s-^(m-1) mu-)^(1/L) < alpha s / 8", c[3] * drift_term, alpha * s / 8, c[3]),
        ("H5", "c4 mu Gamma < (r - r+) / 4", c[4] * mu * Gamma, mp(dr) / 4, c[4]),
        ("H6", "c4 s^(m-1) mu Gamma < alpha s / 8", c[4] * s ** (m - 1) * mu * Gamma,
         alpha * s / 8, c[4]),
        ("H7", "c3 mu Gamma + c3 (s^(m-1) mu)^(1/L) < beta - beta+",
         c[3] * (mu * Gamma + (s ** (m - 1) * mu) ** (mp(1) / L)), mp(p.beta - p.beta_plus), c[3]),
        ("H8", "3 s K+^(2tau+1) <= min((g - g+)/g0, (g^2 - g+^2)/g0^2)",
         3 * s * mp(K) ** (2 * schedule.tau + 1), min((g - g_p) / g0, (g ** 2 - g_p ** 2) / g0 ** 2),
         None),
        ("H9", "c6 Delta <= gamma+^E s+^m mu+", c[6] * Delta, g_p ** E * s_p ** m * mu_p, c[6]),
    ]
    rows = []
    for name, formula, left, right, const in specs:
        margin = right - left
        tight = float(right / (left / const)) if const is not None and left > 0 else float("nan")
        rows.append(HypothesisRow(name, formula, float(left), float(right), float(margin),
                                  bool(margin > 0), tight))
    return HypothesisReport(nu, tuple(rows))


# ---------------------------------------------------------------------------
# the step

@dataclass(frozen=True)
class StepOptions:
    """Numerical knobs of a step.

    ``w_cap`` bounds the weighted degree kept in ``P`` (default ``2m + 2``),
    ``k_factor`` sets the Fourier cap ``k_factor * K_+``; terms beyond the caps
    are dropped after every bracket.  The Lie series stops once a term has
    majorant norm below ``lie_rel`` times that of ``{H, F}``.
    """

    w_cap: int | None = None
    k_factor: int = 2
    lie_rel: float = 1e-17
    lie_order_cap: int = 40
    tau: float | None = None
    divergence_guard: bool = True
    enforce_ball: bool | None = None


def _work_caps(schedule: Schedule, K: int, opts: StepOptions) -> Caps:
    return Caps(opts.k_factor * K, opts.w_cap if opts.w_cap is not None else 2 * schedule.m + 2)


def lie_remainder(Y: TFSeries, F: TFSeries, caps: Caps, dom: DomainParams, rel: float,
                  order_cap: int = 40) -> tuple[TFSeries, int]:
    """``sum_{q >= 0} ad_F^q Y / (q+1)!`` truncated once a term drops below ``rel * |Y|``."""
    floor = rel * majorant_norm(Y, dom)
    pieces, term = [(1.0, Y)], Y
    for q in range(1, order_cap + 1):
        term = poisson_bracket(term, F, caps).scaled(1.0 / (q + 1))
        if term.is_zero():
            return linear_combination(pieces, caps), q
        pieces.append((1.0, term))
        if majorant_norm(term, dom) < floor:
            return linear_combination(pieces, caps), q
    raise LieSeriesDivergence(f"Lie series did not settle within {order_cap} brackets")


def kam_step(state: KamState, schedule: Schedule, opts: StepOptions = StepOptions(),
             verify: bool = True) -> KamState:
    """Advance ``state`` by one KAM step (see the module docstring)."""
    if schedule.mode == "paper":
        raise ValueError("paper-faithful cutoffs are for hypothesis checks only; iterate in practical mode")
    p, m = state.params, schedule.m
    N, P = state.N, state.P
    K = p.K_plus
    tau = opts.tau if opts.tau is not None else schedule.tau
    caps = _work_caps(schedule, K, opts)
    dom = DomainParams(p.s, p.r)
    dom_plus = DomainParams(p.s_plus, p.r_plus)
    report = verify_hypotheses(state, schedule) if verify else None

    R, _ = truncate(P, K, m)
    Rbar = average(R)
    certs = certify_nonresonance(N.omega, N.hess_g0(), p.gamma, tau, K, m)
    sol = solve_homological(N, R, certs, m, caps=caps, K_plus=K)
    F = sol.F
    H = add_scale(1.0, P, N.as_series(caps))
    if F.is_zero():
        Pbar, order = add_scale(-1.0, Rbar, P), 0
    else:
        Y = poisson_bracket(H, F, caps)
        rest, order = lie_remainder(Y, F, caps, dom, opts.lie_rel, opts.lie_order_cap)
        Pbar = linear_combination([(1.0, P), (-1.0, Rbar), (1.0, rest)], caps)

    ball = schedule.drift_radius(p.nu)
    shift = find_shift(N.g, Rbar, ball)
    enforce = opts.enforce_ball if opts.enforce_ball is not None else schedule.mode == "paper"
    if enforce and not shift.within_ball:
        raise NoZeroFoundError(f"shift {np.linalg.norm(shift.delta):.3e} outside the ball {ball:.3e}",
                               shift.delta, shift.residual)
    N_plus = rebuild_normal_form(N, Rbar, shift.delta, caps.union(N.as_series().caps), m)
    defect = float(np.abs(N_plus.grad_g0()).max())
    if defect > 1e-10:
        raise NoZeroFoundError(f"gradient of g after the shift is {defect:.3e}", shift.delta, defect)
    P_plus = shift_z(Pbar, shift.delta, caps)

    norm_plus = majorant_norm(P_plus, dom_plus)
    norm_now = state.norm_history[-1][1]
    if opts.divergence_guard and norm_plus > norm_now and norm_now > 0:
        raise KamDivergence(f"step {p.nu}: |P+| = {norm_plus:.3e} exceeds |P| = {norm_now:.3e}")

    nu1 = p.nu + 1
    record = StepRecord(
        nu=p.nu, r=p.r, s=p.s, gamma=p.gamma, mu=p.mu, K=K, norm=norm_now,
        bound=schedule.perturbation_bound(p.nu),
        omega_drift=float(np.abs(N_plus.omega - state.omega0).max()),
        shift=float(np.linalg.norm(shift.delta)),
        hyp_passed=report.passed_count if report else -1, terms=len(P_plus), lie_order=order)
    new = replace(state, step=nu1, N=N_plus, P=P_plus, params=schedule.at(nu1),
                  norm_history=state.norm_history + [(nu1, norm_plus, schedule.perturbation_bound(nu1))],
                  shifts=state.shifts + [shift], transforms=state.transforms + [(F, shift.delta)],
                  records=state.records + [record])
    new.hypotheses = getattr(state, "hypotheses", []) + ([report] if report else [])
    new.last_solution = sol
    return new


# ---------------------------------------------------------------------------
# oracles

def transformation_defect(H_in: TFSeries, H_out: TFSeries, F: TFSeries, delta, points,
                          h: float = 1.0 / 64) -> float:
    """``max |H_out(p) - H_in(phi_F^1(x, y, z + delta))|`` over the rows of ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = H_in.n
    moved = pts.copy()
    moved[:, 2 * n:] += np.asarray(delta, dtype=float)
    if not F.is_zero():
        moved = flow_map(F, moved, 1.0, h)
    old = evaluate(H_in, moved[:, :n], moved[:, n:2 * n], moved[:, 2 * n:])
    new = evaluate(H_out, pts[:, :n], pts[:, n:2 * n], pts[:, 2 * n:])
    return float(np.abs(new - old).max())


def shift_identity_defect(before: TFSeries, delta, points) -> float:
    """``max |shift_z(H, delta)(p) - H(x, y, z + delta)|``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = before.n
    after = shift_z(before, delta)
    a = evaluate(after, pts[:, :n], pts[:, n:2 * n], pts[:, 2 * n:])
    b = evaluate(before, pts[:, :n], pts[:, n:2 * n], pts[:, 2 * n:] + np.asarray(delta))
    return float(np.abs(a - b).max())


def sample_domain(rng, count: int, n: int, d: int, s: float) -> np.ndarray:
    """Real points with ``|y_i| <= s**2`` and ``|z_l| <= s``."""
    x = rng.uniform(0, 2 * np.pi, size=(count, n))
    y = rng.uniform(-s * s, s * s, size=(count, n))
    z = rng.uniform(-s, s, size=(count, 2 * d))
    return np.hstack([x, y, z])


# ---------------------------------------------------------------------------
# the loop

STEP_FAILURES = (ResonanceViolation, SingularBlockError, NoZeroFoundError, KamDivergence,
                 LieSeriesDivergence)


@dataclass
class RunReport:
    records: list
    norm_history: list
    hypotheses: list
    shifts: list
    failure: str | None = None
    failure_kind: str | None = None

    @property
    def passed(self) -> bool:
        return self.failure is None

    def monotone(self) -> bool:
        norms = [h[1] for h in self.norm_history]
        return all(b < a for a, b in zip(norms, norms[1:]))

    def ratios(self) -> list:
        norms = [h[1] for h in self.norm_history]
        return [b / a for a, b in zip(norms, norms[1:]) if a > 0]

    def table(self) -> str:
        head = (f"{'nu':>3} {'r':>10} {'s':>11} {'gamma':>10} {'mu':>11} {'K':>5} {'|P|':>11} "
                f"{'bound':>11} {'|w-w0|':>11} {'|dzeta|':>11} {'hyp':>4}")
        lines = [head]
        for rec in self.records:
            lines.append(f"{rec.nu:>3d} {rec.r:>10.4e} {rec.s:>11.4e} {rec.gamma:>10.4e} "
                         f"{rec.mu:>11.4e} {rec.K:>5d} {rec.norm:>11.4e} {rec.bound:>11.4e} "
                         f"{rec.omega_drift:>11.4e} {rec.shift:>11.4e} {rec.hyp_passed:>4d}")
        nu, norm, bound = self.norm_history[-1]
        lines.append(f"{nu:>3d} {'':>10} {'':>11} {'':>10} {'':>11} {'':>5} {norm:>11.4e} {bound:>11.4e}")
        return "\n".join(lines)


def run(initial: KamState, schedule: Schedule, max_steps: int, stop_norm: float = 0.0,
        opts: StepOptions = StepOptions(), verify: bool = True):
    """Iterate ``kam_step``; returns ``(final_state, RunReport)``.

    Step failures propagate; the exception then carries the partial
    ``(state, report)`` in its ``partial`` attribute.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    state = initial
    state.hypotheses = getattr(initial, "hypotheses", [])

    def report(failure=None, kind=None):
        return RunReport(state.records, state.norm_history, state.hypotheses, state.shifts,
                         failure, kind)

    for _ in range(max_steps):
        if state.norm_history[-1][1] <= stop_norm:
            break
        try:
            state = kam_step(state, schedule, opts, verify)
        except STEP_FAILURES as exc:
            exc.partial = (state, report(str(exc), type(exc).__name__))
            raise
    return state, report()
