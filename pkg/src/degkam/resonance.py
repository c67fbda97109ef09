"""Parameter boxes, the nonresonance filter and Monte-Carlo exclusion estimates.

At step ``nu`` the parameters ``xi`` kept are those where, for every mode
``K_nu < |k| <= K_{nu+1}``,

* ``|<k, omega(xi)>| > gamma_nu / |k|**tau`` (scalar condition), and
* ``sigma_min(A_q(k, xi)) > gamma_nu / |k|**tau`` for ``1 <= q <= m`` (matrix
  condition, ``A_q = 1j <k/|k|, omega> I + S_q / |k|``).

With a vanishing Hessian the matrix condition reads
``|<k, omega>| > gamma / |k|**(tau - 1)`` and is the stronger of the two.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .homological import _quadratic_action, nonzero_modes
from .schedule import Schedule, init_schedule

KINDS = ("scalar", "matrix")


# ---------------------------------------------------------------------------
# frequency maps

def _multi_indices(p: int, M: int) -> list[tuple]:
    out = []
    for order in range(M + 1):
        for combo in itertools.combinations_with_replacement(range(p), order):
            idx = [0] * p
            for c in combo:
                idx[c] += 1
            out.append(tuple(idx))
    return out


@dataclass(frozen=True)
class PolynomialMap:
    """``xi -> omega(xi)`` with polynomial components ``{exponent tuple: coefficient}``."""

    n_params: int
    components: tuple  # one dict per frequency component

    @property
    def n(self) -> int:
        return len(self.components)

    @classmethod
    def identity(cls, n: int) -> "PolynomialMap":
        return cls(n, tuple({tuple(int(i == j) for j in range(n)): 1.0} for i in range(n)))

    @classmethod
    def constant(cls, omega, n_params: int = 1) -> "PolynomialMap":
        return cls(n_params, tuple({(0,) * n_params: float(w)} for w in omega))

    def __call__(self, xi) -> np.ndarray:
        return self.derivative(xi, (0,) * self.n_params)

    def derivative(self, xi, alpha) -> np.ndarray:
        """``d_xi**alpha omega`` at a batch of points (shape (P, n_params)) -> (P, n)."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        out = np.zeros((xi.shape[0], self.n))
        for c, comp in enumerate(self.components):
            for expo, coef in comp.items():
                if any(e < a for e, a in zip(expo, alpha)):
                    continue
                factor = coef
                term = np.ones(xi.shape[0])
                for v, (e, a) in enumerate(zip(expo, alpha)):
                    factor *= math.perm(e, a)
                    term = term * xi[:, v] ** (e - a)
                out[:, c] += factor * term
        return out

    def jet(self, xi, M: int) -> np.ndarray:
        """All derivatives up to order ``M``: shape (P, #multi-indices, n)."""
        return np.stack([self.derivative(xi, a) for a in _multi_indices(self.n_params, M)], axis=1)


@dataclass(frozen=True)
class ParamBox:
    bounds: tuple          # ((lo, hi), ...)
    omega_map: PolynomialMap

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float)
        if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 0] >= b[:, 1]):
            raise ValueError("bounds must be pairs with lo < hi")
        if b.shape[0] != self.omega_map.n_params:
            raise ValueError(f"box has {b.shape[0]} parameters, frequency map expects "
                             f"{self.omega_map.n_params}")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def volume(self) -> float:
        b = np.asarray(self.bounds)
        return float(np.prod(b[:, 1] - b[:, 0]))

    def sample(self, rng, count: int) -> np.ndarray:
        b = np.asarray(self.bounds, dtype=float)
        return b[:, 0] + (b[:, 1] - b[:, 0]) * rng.random((count, self.dim))

    def grid(self, per_axis: int) -> np.ndarray:
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in self.bounds]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


# ---------------------------------------------------------------------------
# (A1)

@dataclass(frozen=True)
class A1Report:
    passed: bool
    M: int
    min_jet: float
    violations: list  # (xi, k)
    points: int
    directions: int

    def text(self) -> str:
        head = (f"[A1 nondegeneracy] M = {self.M}, {self.points} grid points x {self.directions} "
                f"directions, min max|jet| = {self.min_jet:.3e}: {'PASS' if self.passed else 'FAIL'}")
        rows = [f"  violation at xi = {np.array2string(np.asarray(x), precision=4)} k = {k}"
                for x, k in self.violations[:10]]
        return "\n".join([head] + rows)


def check_A1(box: ParamBox, M: int, sample_grid: int = 11, K_dir: int = 10,
             threshold: float = 1e-8) -> A1Report:
    """Check that ``(d_xi**i <k/|k|, omega(xi)>)_{|i| <= M}`` never vanishes.

    Directions are ``k/|k|`` for ``0 < |k| <= K_dir`` (one of each pair ``+-k``);
    a point fails when the largest entry of the jet is below ``threshold``.
    """
    pts = box.grid(sample_grid)
    modes = nonzero_modes(box.omega_map.n, K_dir, half=True).astype(float)
    units = modes / np.abs(modes).sum(axis=1, keepdims=True)
    jet = box.omega_map.jet(pts, M)                     # (P, J, n)
    proj = np.abs(np.einsum("pjn,kn->pkj", jet, units)).max(axis=2)   # (P, K)
    bad = np.argwhere(proj < threshold)
    violations = [(pts[p].tolist(), tuple(int(v) for v in modes[k])) for p, k in bad]
    return A1Report(not violations, M, float(proj.min()), violations, len(pts), len(modes))


# ---------------------------------------------------------------------------
# filtering

@dataclass(frozen=True)
class ResonanceZone:
    """Membership test for the set of parameters excluded by mode ``k`` at step ``nu``."""

    k: tuple
    step: int
    kind: str
    gamma: float
    tau: float
    m: int = 1

    def contains(self, omega, hess=None) -> np.ndarray:
        omega = np.atleast_2d(omega)
        scalar, matrix = _margins(omega, np.asarray(self.k, float)[None, :], self.gamma,
                                  self.tau, self.m, hess)
        margin = scalar[:, 0] if self.kind == "scalar" else matrix[:, 0]
        return margin <= 0


def _margins(omega: np.ndarray, modes: np.ndarray, gamma: float, tau: float, m: int, hess=None):
    """Scalar margins (P, K) and the worst matrix margin over classes (P, K)."""
    norm = np.abs(modes).sum(axis=1)
    bound = gamma / norm ** tau
    freq = omega @ modes.T                                  # (P, K)
    scalar = np.abs(freq) - bound
    if hess is None or not np.any(hess):
        matrix = np.abs(freq) / norm - bound
        return scalar, matrix
    hess = np.asarray(hess, dtype=float)
    if hess.ndim == 2:
        hess = np.broadcast_to(hess, (omega.shape[0],) + hess.shape)
    matrix = np.full(freq.shape, np.inf)
    for q in range(1, m + 1):
        for p in range(omega.shape[0]):
            S = _quadratic_action(hess[p], q)
            eye = np.eye(S.shape[0])
            A = 1j * (freq[p] / norm)[:, None, None] * eye + S[None] / norm[:, None, None]
            smin = np.linalg.svd(A, compute_uv=False)[:, -1]
            matrix[p] = np.minimum(matrix[p], smin - bound)
    return scalar, matrix


@dataclass
class FilterResult:
    mask: np.ndarray                 # survivors
    excluded_by: dict = field(default_factory=dict)   # k -> count (first exclusion)
    modes: np.ndarray | None = None

    @property
    def excluded_fraction(self) -> float:
        return 1.0 - float(self.mask.mean()) if self.mask.size else 0.0


def window_modes(n: int, K_lo: int, K_hi: int) -> np.ndarray:
    """One of each pair ``+-k`` with ``K_lo < |k| <= K_hi``."""
    if K_hi <= K_lo:
        return np.zeros((0, n), dtype=int)
    modes = nonzero_modes(n, K_hi, half=True)
    return modes[np.abs(modes).sum(axis=1) > K_lo]


def filter_params(xi, omega_map, gamma: float, tau: float, window: tuple, m: int,
                  hess_map=None, kinds=KINDS, mask=None, modes=None) -> FilterResult:
    """Survival mask of the sampled parameters ``xi`` for the modes in ``window = (K_lo, K_hi]``.

    A sample survives if every condition in ``kinds`` holds strictly for every
    mode.  ``mask`` restricts the test to previous survivors (nested filtering);
    ``modes`` overrides the window.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if xi.shape[0] < 1:
        raise ValueError("need at least one sample")
    unknown = set(kinds) - set(KINDS)
    if unknown:
        raise ValueError(f"unknown condition kinds {sorted(unknown)}")
    omega = omega_map(xi)
    if modes is None:
        modes = window_modes(omega.shape[1], *window)
    modes = np.asarray(modes, dtype=float).reshape(-1, omega.shape[1])
    alive = np.ones(xi.shape[0], dtype=bool) if mask is None else np.asarray(mask, bool).copy()
    counts = {}
    if gamma <= 0 or modes.shape[0] == 0:
        return FilterResult(alive, counts, modes)
    hess = None if hess_map is None else hess_map(xi)
    scalar, matrix = _margins(omega, modes, gamma, tau, m, hess)
    bad = np.zeros(scalar.shape, dtype=bool)
    if "scalar" in kinds:
        bad |= scalar <= 0
    if "matrix" in kinds:
        bad |= matrix <= 0
    for idx in range(modes.shape[0]):
        hit = alive & bad[:, idx]
        if hit.any():
            counts[tuple(int(v) for v in modes[idx])] = int(hit.sum())
            alive &= ~bad[:, idx]
    return FilterResult(alive, counts, modes)


def strip_fraction(width: float) -> float:
    """Area of ``{|xi_1 - xi_2| <= width}`` inside a unit square ``[a, a+1]**2``."""
    w = min(max(width, 0.0), 1.0)
    return 2 * w - w * w


# ---------------------------------------------------------------------------
# measure estimates

@dataclass(frozen=True)
class MeasureRow:
    epsilon: float
    gamma0: float
    fraction: float
    half_width: float
    std_error: float
    samples: int
    analytic_bound: float

    def line(self) -> str:
        return (f"{self.epsilon:>10.2e} {self.gamma0:>10.6f} {self.fraction:>10.6f} "
                f"{self.half_width:>10.6f} {self.std_error:>10.6f} {self.samples:>8d} "
                f"{self.analytic_bound:>12.4e}")


@dataclass(frozen=True)
class MeasureTable:
    rows: tuple
    steps: int
    seed: int
    per_mode: dict

    def text(self) -> str:
        head = (f"{'epsilon':>10} {'gamma0':>10} {'excluded':>10} {'+-95%':>10} {'stderr':>10} "
                f"{'samples':>8} {'bound':>12}")
        return "\n".join([head] + [r.line() for r in self.rows])

    def nonincreasing(self) -> bool:
        f = [r.fraction for r in self.rows]
        return all(b <= a for a, b in zip(f, f[1:]))


def lemma_bound(gamma0: float, tau: float, M: int, n: int, K_max: int) -> float:
    """``sum_{0<|k|<=K} gamma0**(1/(M+1)) / |k|**(tau/(M+1))`` (one of each pair ``+-k``)."""
    modes = nonzero_modes(n, K_max, half=True)
    norm = np.abs(modes).sum(axis=1).astype(float)
    return float(np.sum(gamma0 ** (1.0 / (M + 1)) / norm ** (tau / (M + 1))))


def measure_estimate(box: ParamBox, epsilons, steps: int, samples: int, seed: int = 0,
                     m: int = 3, tau: float = 2.0, s: float = 0.5, r: float = 0.5,
                     K_base: int = 8, kinds=KINDS, hess_map=None, modes=None,
                     M: int = 1, schedule_factory=None) -> MeasureTable:
    """Excluded fraction ``|G \\ G_steps| / |G|`` for each ``epsilon``.

    The same seeded sample set is used for every ``epsilon``; windows and
    ``gamma_nu`` come from the practical schedule of that ``epsilon``.  The
    frequency map is the unperturbed ``omega(xi)`` (the drift of ``omega_nu``
    along a run is not modelled).  ``modes`` replaces the windows by a fixed
    mode list checked once with ``gamma_0``.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    rng = np.random.default_rng(seed)
    xi = box.sample(rng, samples)
    n = box.omega_map.n
    rows, per_mode = [], {}
    for eps in epsilons:
        sch = (schedule_factory(eps) if schedule_factory is not None else
               init_schedule(eps, n, 1, tau, s, r, m=m, K_base=K_base))
        alive = np.ones(samples, dtype=bool)
        counts = {}
        if modes is not None:
            res = filter_params(xi, box.omega_map, sch.gamma0, sch.tau, (0, 0), sch.m, hess_map,
                                kinds, alive, modes)
            alive, counts = res.mask, res.excluded_by
            K_top = int(np.abs(np.asarray(modes)).sum(axis=1).max())
        else:
            for nu in range(steps):
                res = filter_params(xi, box.omega_map, float(sch.gamma_at(nu)), sch.tau,
                                    (sch.K_at(nu), sch.K_at(nu + 1)), sch.m, hess_map, kinds, alive)
                alive = res.mask
                for k, c in res.excluded_by.items():
                    counts[k] = counts.get(k, 0) + c
            K_top = sch.K_at(steps)
        p = 1.0 - alive.mean()
        se = math.sqrt(max(p * (1 - p), 0.0) / samples)
        rows.append(MeasureRow(float(eps), float(sch.gamma0), float(p), 1.96 * se, se, samples,
                               lemma_bound(sch.gamma0, sch.tau, M, n, K_top)))
        per_mode[float(eps)] = counts
    return MeasureTable(tuple(rows), steps, seed, per_mode)


def exclusion_histogram(counts: dict, samples: int) -> list:
    """``(|k|, excluded fraction)`` pairs aggregated by mode order (plot data)."""
    agg = {}
    for k, c in counts.items():
        order = int(np.abs(k).sum())
        agg[order] = agg.get(order, 0) + c
    return sorted((o, c / samples) for o, c in agg.items())
