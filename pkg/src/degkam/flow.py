"""Numerical integration of Hamilton's equations for series Hamiltonians.

Equations of motion: ``x' = H_y``, ``y' = -H_x``, ``u' = H_v``, ``v' = -H_u``.
The state vector is ``(x, y, z)`` with ``z = (u, v)``.  Integration is the
classical fixed-step fourth-order Runge-Kutta method; the inner loop is
compiled with numba because a single trajectory needs ``10**5`` field
evaluations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .series import TFSeries, evaluate, partial_derivative


class FlowError(ArithmeticError):
    """Non-finite state during integration."""


# ---------------------------------------------------------------------------
# compiled kernels

@numba.njit(cache=True)
def _gradient(S, n, nv, K, EXP, CR, CI, kmax, emax, E, PW, grad, p):
    """Gradient ``(H_x, H_y, H_z)`` at state ``S`` and the value of ``H``.

    ``E[i, m] = exp(1j (m - kmax) x_i)``, ``PW[v, e] = var_v**e`` and ``p`` are
    scratch arrays refilled here.
    """
    for i in range(n):
        w = complex(math.cos(S[i]), math.sin(S[i]))
        E[i, kmax] = 1.0
        for m in range(1, kmax + 1):
            E[i, kmax + m] = E[i, kmax + m - 1] * w
            E[i, kmax - m] = E[i, kmax - m + 1] * w.conjugate()
    for v in range(nv):
        PW[v, 0] = 1.0
        val = S[n + v]
        for e in range(1, emax + 1):
            PW[v, e] = PW[v, e - 1] * val
    for q in range(grad.shape[0]):
        grad[q] = 0.0
    energy = 0.0
    for t in range(K.shape[0]):
        ph = complex(1.0, 0.0)
        for i in range(n):
            ph *= E[i, K[t, i] + kmax]
        a = CR[t] * ph.real - CI[t] * ph.imag
        b = CR[t] * ph.imag + CI[t] * ph.real
        mono = 1.0
        for v in range(nv):
            p[v] = PW[v, EXP[t, v]]
            mono *= p[v]
        energy += a * mono
        for i in range(n):
            if K[t, i] != 0:
                grad[i] -= K[t, i] * b * mono
        for v in range(nv):
            e = EXP[t, v]
            if e == 0:
                continue
            prod = e * PW[v, e - 1]
            for w in range(nv):
                if w != v:
                    prod *= p[w]
            grad[n + v] += a * prod
    return energy


@numba.njit(cache=True)
def _field(S, n, d, K, EXP, CR, CI, kmax, emax, E, PW, grad, out):
    energy = _gradient(S, n, n + 2 * d, K, EXP, CR, CI, kmax, emax, E, PW, grad[:-n - 2 * d],
                       grad[-n - 2 * d:])
    for i in range(n):
        out[i] = grad[n + i]
        out[n + i] = -grad[i]
    base = 2 * n
    for l in range(d):
        out[base + l] = grad[base + d + l]
        out[base + d + l] = -grad[base + l]
    return energy


@numba.njit(cache=True)
def _rk4(X0, h, nsteps, stride, escape, n, d, K, EXP, CR, CI, kmax, emax):
    """Integrate each row of ``X0``; returns samples, energies, deviation and status.

    ``status[b]`` is the number of completed steps; it is less than
    ``nsteps`` when the trajectory left the ball ``|(y, z)| <= escape`` or
    became non-finite (then ``finite[b]`` is False).
    """
    B, dim = X0.shape
    nv = n + 2 * d
    nsamp = nsteps // stride + 1
    samples = np.full((B, nsamp, dim), np.nan)
    energies = np.full((B, nsamp), np.nan)
    deviation = np.zeros(B)
    status = np.zeros(B, dtype=np.int64)
    finite = np.ones(B, dtype=np.bool_)
    E = np.empty((n, 2 * kmax + 1), dtype=np.complex128)
    PW = np.empty((nv, emax + 1))
    grad = np.empty(dim + nv)
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    tmp = np.empty(dim)
    for b in range(B):
        S = X0[b].copy()
        energies[b, 0] = _field(S, n, d, K, EXP, CR, CI, kmax, emax, E, PW, grad, k1)
        samples[b, 0] = S
        done = 0
        for step in range(1, nsteps + 1):
            _field(S, n, d, K, EXP, CR, CI, kmax, emax, E, PW, grad, k1)
            for q in range(dim):
                tmp[q] = S[q] + 0.5 * h * k1[q]
            _field(tmp, n, d, K, EXP, CR, CI, kmax, emax, E, PW, grad, k2)
            for q in range(dim):
                tmp[q] = S[q] + 0.5 * h * k2[q]
            _field(tmp, n, d, K, EXP, CR, CI, kmax, emax, E, PW, grad, k3)
            for q in range(dim):
                tmp[q] = S[q] + h * k3[q]
            _field(tmp, n, d, K, EXP, CR, CI, kmax, emax, E, PW, grad, k4)
            ok = True
            for q in range(dim):
                S[q] += h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q])
                if not np.isfinite(S[q]):
                    ok = False
            if not ok:
                finite[b] = False
                break
            dev = 0.0
            for q in range(n, dim):
                dev += S[q] * S[q]
            dev = math.sqrt(dev)
            if dev > deviation[b]:
                deviation[b] = dev
            done = step
            if step % stride == 0:
                samples[b, step // stride] = S
                energies[b, step // stride] = _field(S, n, d, K, EXP, CR, CI, kmax, emax, E, PW,
                                                     grad, tmp)
            if dev > escape:
                break
        status[b] = done
    return samples, energies, deviation, status, finite


# ---------------------------------------------------------------------------
# python side

class HamiltonianField:
    """Packed representation of a real series Hamiltonian for fast evaluation."""

    def __init__(self, H: TFSeries):
        self.H = H
        self.n, self.d = H.n, H.d
        self.dim = 2 * H.n + 2 * H.d
        self.K = np.ascontiguousarray(H.k, dtype=np.int64)
        self.EXP = np.ascontiguousarray(np.hstack([H.iota, H.j]), dtype=np.int64)
        self.CR = np.ascontiguousarray(H.coeffs.real)
        self.CI = np.ascontiguousarray(H.coeffs.imag)
        self.kmax = int(np.abs(self.K).max()) if len(H) else 0
        self.emax = int(self.EXP.max()) if len(H) else 0

    def _args(self):
        return (self.n, self.d, self.K, self.EXP, self.CR, self.CI, self.kmax, self.emax)

    def vector_field(self, X) -> np.ndarray:
        """Batched right-hand side ``(H_y, -H_x, J H_z)`` for states of shape (B, dim)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n, d, K, EXP, CR, CI, kmax, emax = self._args()
        E = np.empty((n, 2 * kmax + 1), dtype=np.complex128)
        PW = np.empty((n + 2 * d, emax + 1))
        grad = np.empty(self.dim + n + 2 * d)
        out = np.empty_like(X)
        for b in range(X.shape[0]):
            _field(np.ascontiguousarray(X[b]), n, d, K, EXP, CR, CI, kmax, emax, E, PW, grad, out[b])
        return out

    def energy(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = self.n
        return evaluate(self.H, X[:, :n], X[:, n:2 * n], X[:, 2 * n:])


@dataclass
class Trajectory:
    """Samples of one orbit; ``states`` rows are ``(x mod 2 pi, y, z)``."""

    times: np.ndarray
    states: np.ndarray
    energy: np.ndarray
    max_deviation: float
    completed: bool
    h: float

    @property
    def energy_drift(self) -> float:
        return float(abs(self.energy[-1] - self.energy[0]))

    def drift_constant(self) -> float:
        """Fitted ``C`` in ``|H(end) - H(start)| <= C h**4 T``."""
        T = self.times[-1] - self.times[0]
        return self.energy_drift / (self.h ** 4 * T) if T > 0 else 0.0

    def dump(self) -> str:
        """Tab-separated ``t, x.., y.., z.., H`` rows."""
        rows = ["\t".join(["t"] + [f"s{i}" for i in range(self.states.shape[1])] + ["H"])]
        for t, s, e in zip(self.times, self.states, self.energy):
            rows.append("\t".join(f"{v:.17g}" for v in (t, *s, e)))
        return "\n".join(rows) + "\n"


def integrate_batch(H, X0, T: float, h: float, stride: int | None = None,
                    escape: float = np.inf):
    """RK4 from each row of ``X0``; returns raw arrays ``(times, samples, energies, deviation, steps, finite)``."""
    if not (h > 0 and T > 0):
        raise ValueError("need h > 0 and T > 0")
    field = H if isinstance(H, HamiltonianField) else HamiltonianField(H)
    nsteps = int(round(T / h))
    if abs(nsteps * h - T) > 1e-9 * T:
        raise ValueError(f"T = {T} is not a multiple of h = {h}")
    stride = stride or max(1, nsteps // 1000)
    X0 = np.ascontiguousarray(np.atleast_2d(X0), dtype=float)
    if X0.shape[1] != field.dim:
        raise ValueError(f"states need {field.dim} components, got {X0.shape[1]}")
    samples, energies, dev, steps, finite = _rk4(X0, float(h), nsteps, stride, float(escape),
                                                 *field._args())
    times = np.arange(samples.shape[1]) * stride * h
    return times, samples, energies, dev, steps, finite


def integrate_flow(H: TFSeries, initial, T: float, h: float, stride: int | None = None,
                   escape: float = np.inf) -> Trajectory:
    """Fixed-step RK4 orbit of ``H`` from ``initial = (x, y, z)`` up to time ``T``.

    Raises ``FlowError`` on a non-finite state.  With a finite ``escape`` the
    integration stops once ``|(y, z)|`` exceeds it (``completed`` is then False).
    """
    x, y, z = (np.atleast_1d(np.asarray(a, dtype=float)) for a in initial)
    X0 = np.concatenate([x, y, z])[None, :]
    times, samples, energies, dev, steps, finite = integrate_batch(H, X0, T, h, stride, escape)
    if not finite[0]:
        raise FlowError(f"non-finite state after {steps[0]} steps")
    keep = ~np.isnan(energies[0])
    states = samples[0][keep].copy()
    states[:, :H.n] = np.mod(states[:, :H.n], 2 * np.pi)
    nsteps = int(round(T / h))
    return Trajectory(times[keep], states, energies[0][keep], float(dev[0]),
                      bool(steps[0] == nsteps), float(h))


def flow_map(F: TFSeries, X, t: float = 1.0, h: float = 1.0 / 64):
    """Time-``t`` map of the flow of ``F`` applied to each row of ``X`` (unwrapped angles)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    nsteps = max(1, int(math.ceil(abs(t) / h)))
    step = t / nsteps
    field = HamiltonianField(F)
    out = X.copy()
    for _ in range(nsteps):
        k1 = field.vector_field(out)
        k2 = field.vector_field(out + 0.5 * step * k1)
        k3 = field.vector_field(out + 0.5 * step * k2)
        k4 = field.vector_field(out + step * k3)
        out = out + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return out


def torus_angles(n: int, count: int) -> np.ndarray:
    """``count`` angle vectors spread over the torus: a grid when ``count`` is a perfect
    ``n``-th power, otherwise the additive recurrence with the generalized golden ratio."""
    side = round(count ** (1.0 / n))
    if side ** n == count:
        axis = 2 * np.pi * np.arange(side) / side
        mesh = np.meshgrid(*([axis] * n), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])
    phi = 2.0
    for _ in range(64):
        phi = (1 + phi) ** (1.0 / (n + 1))
    alpha = phi ** -np.arange(1, n + 1)
    return 2 * np.pi * np.mod(0.5 + np.outer(np.arange(count), alpha), 1.0)


def term_field_bounds(H: TFSeries, rho: float):
    """Per-term bounds on the normal ``(y, z)`` and tangential ``x`` field components
    on the box ``|y_i|, |z_l| <= rho``."""
    e_y, e_z = H.iota.sum(axis=1), H.j.sum(axis=1)
    e = e_y + e_z
    c = np.abs(H.coeffs)
    order = H.orders()
    with np.errstate(divide="ignore"):
        lower = np.where(e > 0, float(rho) ** np.maximum(e - 1, 0), 0.0)
    normal = c * (order * float(rho) ** e + e_z * lower)
    tangential = c * e_y * lower
    return normal, tangential


def prune_near_torus(H: TFSeries, rho: float, rel: float = 1e-18):
    """Drop terms whose total contribution to the field near the torus is negligible.

    On ``|y|, |z| <= rho`` the dropped terms change the normal components by at
    most ``rel`` times the largest single normal bound and the tangential
    components by at most ``rel`` times the largest tangential bound.
    Returns ``(pruned series, dropped normal bound, dropped tangential bound)``.
    """
    normal, tangential = term_field_bounds(H, rho)
    if len(H) == 0:
        return H, 0.0, 0.0
    tol_n, tol_t = rel * normal.max(), rel * tangential.max()
    score = np.maximum(np.where(tol_n > 0, normal / max(tol_n, 1e-300), np.where(normal > 0, np.inf, 0.0)),
                       np.where(tol_t > 0, tangential / max(tol_t, 1e-300),
                                np.where(tangential > 0, np.inf, 0.0)))
    order = np.argsort(score, kind="stable")
    cum_n, cum_t = np.cumsum(normal[order]), np.cumsum(tangential[order])
    ok = (cum_n <= tol_n) & (cum_t <= tol_t)
    count = int(np.argmin(ok)) if not ok.all() else len(ok)
    drop = np.zeros(len(H), dtype=bool)
    drop[order[:count]] = True
    return H.mask(~drop), float(normal[drop].sum()), float(tangential[drop].sum())


@dataclass(frozen=True)
class TorusCheck:
    deviation: float
    per_angle: np.ndarray
    energy_drift: float
    T: float
    h: float
    radius: float        # box used to certify the pruning
    kept_terms: int
    dropped_bound: float


def torus_deviation(H_final: TFSeries, T: float, h: float, n_angles: int = 16,
                    details: bool = False, prune_rel: float = 1e-18):
    """Largest ``|(y(t), z(t))|`` over orbits started on ``{y = 0, z = 0}`` for ``t <= T``.

    Terms that cannot influence the orbits at double precision are pruned
    first (see ``prune_near_torus``); the pruning radius starts at ``100 T``
    times the field that pushes off the torus and is enlarged and the
    integration repeated if an orbit leaves it.
    """
    X0 = np.zeros((n_angles, 2 * H_final.n + 2 * H_final.d))
    X0[:, :H_final.n] = torus_angles(H_final.n, n_angles)
    drive = term_field_bounds(H_final, 0.0)[0].sum()
    rho = max(100.0 * T * drive, 1e-300)
    for _ in range(8):
        H, dropped_n, _ = prune_near_torus(H_final, rho, prune_rel)
        times, samples, energies, dev, steps, finite = integrate_batch(H, X0, T, h)
        if not finite.all():
            raise FlowError("non-finite state while checking the torus")
        if dev.max() <= rho:
            break
        rho = 10.0 * dev.max()
    else:
        raise FlowError("orbits keep leaving the pruning radius")
    drift = float(np.nanmax(np.abs(energies - energies[:, :1])))
    result = TorusCheck(float(dev.max()), dev, drift, float(T), float(h), float(rho), len(H),
                        dropped_n)
    return result if details else result.deviation


# ---------------------------------------------------------------------------
# degree-zero counterexample

@dataclass(frozen=True)
class Prop2Report:
    epsilon: float
    in_scope: bool
    symbolic_ok: bool
    v_dot_bound: float          # -eps**2
    scan_min: float             # min over the scan of u**2 + eps**2
    scan_argmin: float
    v_start: np.ndarray
    v_end: np.ndarray
    t_end: np.ndarray           # time reached (before T when the orbit escaped)
    max_slope: float            # largest observed (v(t+h) - v(t)) / h
    drop_ok: bool
    slope_ok: bool
    passed: bool

    def text(self) -> str:
        if not self.in_scope:
            return ("[counterexample]\nepsilon = 0: u = v = 0 is an equilibrium, "
                    "the check is out of scope\n")
        lines = [
            "[counterexample]",
            f"H = omega y + (u^3 + v^3)/3 + eps^2 u, eps = {self.epsilon:g}",
            f"v' = -(u^2 + eps^2): symbolic form verified = {self.symbolic_ok}",
            f"u^2 + eps^2 = 0 has no real solution: min over scan = {self.scan_min:.6g} "
            f"at u = {self.scan_argmin:.3g}",
            f"slope bound v' <= {self.v_dot_bound:.6g}; largest observed slope {self.max_slope:.6g}",
        ]
        for v0, v1, t1 in zip(self.v_start, self.v_end, self.t_end):
            lines.append(f"  v(0) = {v0:+.3e}  v({t1:.3f}) = {v1:+.6e}")
        lines.append(f"drop certificate v(end) <= v(0) - eps^2 T: {self.drop_ok}")
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def counterexample_hamiltonian(epsilon: float, omega: float = 1.0) -> TFSeries:
    terms = {((0,), (1,), (0, 0)): omega, ((0,), (0,), (3, 0)): 1 / 3, ((0,), (0,), (0, 3)): 1 / 3,
             ((0,), (0,), (1, 0)): epsilon ** 2}
    return TFSeries.from_terms(1, 1, terms)


def prop2_check(epsilon: float, omega: float = 1.0, T: float = 100.0, h: float = 1e-3,
                starts=None, escape: float = 10.0, scan=(-10.0, 10.0, 20001)) -> Prop2Report:
    """Certify the drift ``v' = -(u**2 + eps**2) <= -eps**2`` for the degree-zero example.

    Orbits blow up in finite time (``u**3 + v**3 + 3 eps**2 u`` is conserved and
    ``v`` decreases without bound), so each orbit is followed until ``T`` or
    until ``|(y, z)| > escape``; the drop ``v(end) <= v(0) - eps**2 T`` is
    checked at the end of that interval.
    """
    if epsilon == 0:
        nan = np.array([np.nan])
        return Prop2Report(0.0, False, True, 0.0, 0.0, 0.0, nan, nan, nan, 0.0, False, False, False)
    H = counterexample_hamiltonian(epsilon, omega)
    rhs = partial_derivative(H, ("z", 0)).to_dict()
    expected = {((0,), (0,), (2, 0)): 1.0, ((0,), (0,), (0, 0)): epsilon ** 2}
    symbolic_ok = rhs.keys() == expected.keys() and all(
        abs(rhs[key] - expected[key]) <= 1e-15 for key in expected)
    # v' = -H_u = -(u^2 + eps^2): a sum of nonnegative squares plus eps^2
    symbolic_ok = symbolic_ok and all(c.real >= 0 and c.imag == 0 for c in rhs.values())
    u = np.linspace(*scan)
    vals = u ** 2 + epsilon ** 2
    idx = int(np.argmin(vals))
    if starts is None:
        grid = np.array([-0.01, 0.0, 0.01])
        starts = np.array([(a, b) for a in grid for b in grid])
    starts = np.atleast_2d(starts)
    X0 = np.zeros((starts.shape[0], 4))
    X0[:, 2:] = starts
    times, samples, energies, dev, steps, finite = integrate_batch(H, X0, T, h, stride=1,
                                                                   escape=escape)
    v = samples[:, :, 3]
    slopes = np.diff(v, axis=1) / h
    max_slope = float(np.nanmax(slopes))
    v_end = np.array([row[~np.isnan(row)][-1] for row in v])
    t_end = steps * h
    drop_ok = bool(np.all(v_end <= starts[:, 1] - epsilon ** 2 * T))
    slope_ok = bool(max_slope <= -epsilon ** 2 * (1 - 1e-6))
    passed = symbolic_ok and vals[idx] > 0 and drop_ok and slope_ok
    return Prop2Report(float(epsilon), True, bool(symbolic_ok), -epsilon ** 2, float(vals[idx]),
                       float(u[idx]), starts[:, 1].copy(), v_end, t_end, max_slope, drop_ok,
                       slope_ok, bool(passed))
