"""Translation of the normal coordinates that removes the linear ``z`` terms.

After the averaged part ``[R]`` is added to the normal form, the new ``g`` has
gradient ``grad g(delta) + grad_z [R](0, delta)`` at the origin.  ``find_shift``
finds a zero ``delta`` of that map; ``rebuild_normal_form`` composes ``N + [R]``
with ``z -> z + delta`` and sorts the terms back into ``e, omega, h_tilde, g, g_bar``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .normal_form import NormalForm
from .series import (Caps, TFSeries, add_scale, average, evaluate, partial_derivative,
                     restrict_y_zero, shift_z)

NEWTON_MAX_ITER = 100
GRID_POINTS = 17
GRID_SEEDS = 8


class NoZeroFoundError(ArithmeticError):
    """No zero of the gradient map was found; carries the best residual and the degree."""

    def __init__(self, message, best_delta, best_residual, degree=None):
        super().__init__(message)
        self.best_delta = best_delta
        self.best_residual = best_residual
        self.degree = degree


@dataclass(frozen=True)
class ShiftResult:
    delta: np.ndarray
    residual: float
    within_ball: bool
    newton_iters: int
    ball_radius: float = float("nan")
    tol: float = float("nan")

    def row(self) -> str:
        return (f"|delta| = {np.linalg.norm(self.delta):.6e}  residual = {self.residual:.3e}  "
                f"within_ball = {self.within_ball}  newton_iters = {self.newton_iters}")


class _GradientMap:
    """``delta -> grad g(delta) + grad_z [R](0, delta)`` and its Jacobian."""

    def __init__(self, g: TFSeries, Rbar: TFSeries):
        self.n, self.dim = g.n, 2 * g.d
        total = add_scale(1.0, restrict_y_zero(average(Rbar)), g) if Rbar is not None else g
        self.grad = [partial_derivative(total, ("z", l)) for l in range(self.dim)]
        self.hess = [[partial_derivative(G, ("z", l)) for l in range(self.dim)] for G in self.grad]
        self.rbar_grad = (None if Rbar is None else
                          [partial_derivative(restrict_y_zero(average(Rbar)), ("z", l))
                           for l in range(self.dim)])

    def _eval(self, series, z):
        z = np.atleast_2d(z)
        zero = np.zeros((z.shape[0], self.n))
        return np.column_stack([evaluate(S, zero, zero, z) for S in series])

    def value(self, z):
        return self._eval(self.grad, z)

    def jacobian(self, z):
        z = np.atleast_2d(z)
        rows = [self._eval(row, z) for row in self.hess]
        return np.stack(rows, axis=1)  # (P, dim, dim)


def _newton(gm: _GradientMap, start: np.ndarray, tol: float, max_iter: int = NEWTON_MAX_ITER):
    """Damped Newton with backtracking; returns (delta, residual, iterations)."""
    z = np.array(start, dtype=float)
    F = gm.value(z)[0]
    res = float(np.linalg.norm(F))
    it = 0
    while res > tol and it < max_iter:
        it += 1
        Jm = gm.jacobian(z)[0]
        step = np.linalg.lstsq(Jm, -F, rcond=1e-14)[0]
        if not np.all(np.isfinite(step)) or not step.any():
            break
        lam, improved = 1.0, False
        while lam > 1e-10:
            trial = z + lam * step
            Ft = gm.value(trial)[0]
            rt = float(np.linalg.norm(Ft))
            if rt < res:
                z, F, res, improved = trial, Ft, rt, True
                break
            lam *= 0.5
        if not improved:
            break
    return z, res, it


def _grid(dim: int, radius: float, points: int = GRID_POINTS) -> np.ndarray:
    axis = np.linspace(-radius, radius, points)
    pts = np.array(list(itertools.product(axis, repeat=dim)))
    return pts[np.linalg.norm(pts, axis=1) <= radius * (1 + 1e-12)]


def default_tolerance(Rbar: TFSeries | None, dim: int) -> float:
    """``1e-12 max(1, sum_l l1(d_{z_l} [R](0, .)))``."""
    if Rbar is None or Rbar.is_zero():
        return 1e-12
    base = restrict_y_zero(average(Rbar))
    size = sum(partial_derivative(base, ("z", l)).l1() for l in range(dim))
    return 1e-12 * max(1.0, size)


def find_shift(g: TFSeries, Rbar: TFSeries | None, ball_radius: float, tol: float | None = None,
               degree: int | None = None, search_radius: float | None = None) -> ShiftResult:
    """Zero of ``grad g(delta) + grad_z [R](0, delta)`` near the origin.

    Damped Newton from the origin first; when that stalls (the Jacobian
    ``Hess g(0)`` vanishes in the degenerate case) Newton is restarted from the
    best points of a ``17**(2d)`` grid in the ball of radius ``search_radius``
    (default ``ball_radius``).  Ties among converged candidates are broken by
    residual, then lexicographically on ``delta``.
    """
    dim = 2 * g.d
    gm = _GradientMap(g, Rbar)
    tol = default_tolerance(Rbar, dim) if tol is None else tol
    radius = search_radius if search_radius is not None else ball_radius
    z, res, iters = _newton(gm, np.zeros(dim), tol)
    total_iters = iters
    if res > tol:
        grid = _grid(dim, radius)
        vals = np.linalg.norm(gm.value(grid), axis=1)
        order = np.lexsort(tuple(grid.T[::-1]) + (vals,))
        candidates = [(res, tuple(z))]
        for idx in order[:GRID_SEEDS]:
            zc, rc, ic = _newton(gm, grid[idx], tol)
            total_iters += ic
            candidates.append((rc, tuple(zc)))
        # second pass: refine around the best point so far
        best = min(candidates)
        zc, rc, ic = _newton(gm, np.array(best[1]), tol)
        total_iters += ic
        candidates.append((rc, tuple(zc)))
        res, zt = min(candidates)
        z = np.array(zt)
    if res > tol:
        raise NoZeroFoundError(
            f"no zero of the gradient map within radius {radius:.3e}: best residual {res:.3e} "
            f"> tol {tol:.3e}" + (f" (degree {degree})" if degree is not None else ""),
            z, res, degree)
    within = bool(np.linalg.norm(z) <= ball_radius)
    return ShiftResult(z, float(res), within, total_iters, float(ball_radius), float(tol))


def rebuild_normal_form(N: NormalForm, Rbar: TFSeries | None, delta, caps: Caps | None = None,
                        m: int | None = None) -> NormalForm:
    """``(N + [R])`` composed with ``z -> z + delta``, regrouped into a normal form.

    Constants go to ``e``, ``y``-linear terms to ``omega``, pure ``y`` terms of
    degree >= 2 to ``h_tilde``, pure ``z`` terms to ``g`` and mixed terms to ``g_bar``.
    This reproduces the update formulas for ``e, omega, h_tilde, g, g_bar`` term by term.
    """
    n, d = N.n, N.d
    base = N.as_series()
    if Rbar is not None and not Rbar.is_zero():
        Rbar = average(Rbar)
        base = add_scale(1.0, Rbar, base)
    caps = caps or base.caps
    shifted = shift_z(base, delta, caps)
    return split_normal_form(shifted, N.zeta + np.asarray(delta, float), m)


def split_normal_form(S: TFSeries, zeta, m: int | None = None) -> NormalForm:
    """Sort an angle-independent series into the normal-form pieces."""
    n, d = S.n, S.d
    if np.any(S.k != 0):
        raise ValueError("normal form must not depend on the angles")
    iy, jz = S.iota.sum(axis=1), S.j.sum(axis=1)
    const = (iy == 0) & (jz == 0)
    e = float(S.coeffs[const].real.sum())
    omega = np.zeros(n)
    lin = (iy == 1) & (jz == 0)
    for row, c in zip(S.iota[lin], S.coeffs[lin]):
        omega[int(np.argmax(row))] += c.real
    caps = S.caps
    h_tilde = S.mask((iy >= 2) & (jz == 0), caps)
    g = S.mask((iy == 0) & (jz >= 1), caps)
    g_bar = S.mask((iy >= 1) & (jz >= 1), caps)
    if m is not None and np.any(g_bar.weighted_degrees() > m):
        raise ValueError("mixed terms above degree m in the normal form")
    return NormalForm(e, omega, h_tilde, g, g_bar, zeta)


@dataclass(frozen=True)
class DriftReport:
    rows: list  # dicts per step
    violations: list  # step indices where |delta| failed to decay

    def text(self) -> str:
        head = f"{'nu':>3} {'|delta|':>12} {'bound':>12} {'ratio':>12}"
        keys = [k for k in ("e", "omega", "h_tilde", "g", "g_bar") if self.rows and k in self.rows[0]]
        head += "".join(f" {'d_' + k:>12}" for k in keys)
        lines = [head]
        for row in self.rows:
            line = f"{row['nu']:>3d} {row['delta']:>12.4e} {row['bound']:>12.4e} {row['ratio']:>12.4e}"
            line += "".join(f" {row[k]:>12.4e}" for k in keys)
            lines.append(line)
        if self.violations:
            lines.append(f"decay violations at steps {self.violations}")
        return "\n".join(lines)


def shift_drift_bounds(history, schedule=None, bounds=None, drifts=None) -> DriftReport:
    """Tabulate ``|zeta_{nu+1} - zeta_nu|`` against ``(s_{nu-1}**(m-1) mu_{nu-1})**(1/L)``.

    ``bounds`` overrides the schedule radii; ``drifts`` is an optional list of
    dicts with the normal-form changes ``e, omega, h_tilde, g, g_bar`` per step.
    A violation is a step whose shift is larger than a nonzero previous one.
    """
    if len(history) < 2:
        raise ValueError("need at least two steps")
    if bounds is None:
        if schedule is None:
            raise ValueError("need a schedule or explicit bounds")
        bounds = [schedule.drift_radius(nu) for nu in range(len(history))]
    rows, violations = [], []
    prev = None
    for nu, (res, b) in enumerate(zip(history, bounds)):
        size = float(np.linalg.norm(res.delta))
        row = {"nu": nu, "delta": size, "bound": float(b), "ratio": size / b if b > 0 else np.inf}
        if drifts is not None:
            row.update(drifts[nu])
        rows.append(row)
        if prev is not None and prev > 0 and size > prev:
            violations.append(nu)
        prev = size
    return DriftReport(rows, violations)
