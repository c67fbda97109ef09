"""Topological degree of gradient maps and the weak-convexity certificate.

The degree is computed on the boundary of a ball.  In the plane it is the
winding number of ``f`` along the circle; samples are refined until the
smallest ``|f|`` dominates the largest step between neighbouring samples, so no
turn of the image curve can be missed.  In higher even dimensions the degree
is the normalized Kronecker integral of ``f/|f|`` over the sphere.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .series import TFSeries, evaluate, partial_derivative

MAX_BOUNDARY_SAMPLES = 1 << 20
#: sampled |f| must exceed this multiple of the largest neighbour difference
VARIATION_FACTOR = 10.0


class BoundaryZeroError(ArithmeticError):
    """``f`` (nearly) vanishes on the boundary; the degree is undefined there."""


class DegenerateFitError(ValueError):
    pass


@dataclass(frozen=True)
class BoxRegion:
    """Closed ball ``B_radius(center)`` in R^{2d}."""

    center: np.ndarray
    radius: float
    boundary_resolution: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.center.shape[0] == 2 and self.boundary_resolution < 64:
            raise ValueError("boundary_resolution must be at least 64 in the plane")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def circle(self, count: int) -> np.ndarray:
        t = 2 * np.pi * np.arange(count) / count
        return self.center + self.radius * np.column_stack([np.cos(t), np.sin(t)])

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniform points in the ball."""
        g = rng.normal(size=(count, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rad = self.radius * rng.uniform(size=(count, 1)) ** (1.0 / self.dim)
        return self.center + rad * g


@dataclass(frozen=True)
class DegreeResult:
    """``max_step`` is the largest neighbour difference of boundary samples for the
    winding method and the distance of the raw integral to ``degree`` for the
    Kronecker method."""

    degree: int
    samples: int
    min_norm: float
    max_step: float
    method: str


def brouwer_degree_2d(f, region: BoxRegion, max_samples: int = MAX_BOUNDARY_SAMPLES) -> DegreeResult:
    """Winding number of ``f`` (vectorized ``(P, 2) -> (P, 2)``) along the circle."""
    if region.dim != 2:
        raise ValueError("brouwer_degree_2d needs a planar region")
    count = region.boundary_resolution
    while True:
        vals = np.asarray(f(region.circle(count)), dtype=float)
        norms = np.hypot(vals[:, 0], vals[:, 1])
        steps = np.hypot(*(np.roll(vals, -1, axis=0) - vals).T)
        min_norm, max_step = float(norms.min()), float(steps.max())
        if min_norm > VARIATION_FACTOR * max_step:
            break
        if count >= max_samples:
            raise BoundaryZeroError(
                f"|f| >= {min_norm:.3e} on the boundary is not resolved at {count} samples "
                f"(largest step {max_step:.3e})")
        count *= 2
    ang = np.arctan2(vals[:, 1], vals[:, 0])
    turn = np.diff(np.append(ang, ang[0]))
    turn = (turn + np.pi) % (2 * np.pi) - np.pi
    winding = turn.sum() / (2 * np.pi)
    return DegreeResult(int(round(winding)), count, min_norm, max_step, "winding")


def _sphere_point(theta: np.ndarray) -> np.ndarray:
    """Hyperspherical coordinates ``(P, m-1) -> (P, m)`` on the unit sphere."""
    P, k = theta.shape
    out = np.ones((P, k + 1))
    sines = np.ones(P)
    for i in range(k):
        out[:, i] = sines * np.cos(theta[:, i])
        sines = sines * np.sin(theta[:, i])
    out[:, k] = sines
    return out


def kronecker_degree(f, region: BoxRegion, resolution: int = 24) -> DegreeResult:
    """Degree in any dimension >= 2 through the Kronecker integral of ``f/|f|``.

    The pulled-back volume form ``det[phi, d phi/d theta_1, ...]`` is integrated
    by the midpoint rule in hyperspherical angles and normalized by the same
    quadrature applied to the identity map.
    """
    m = region.dim
    if m < 2:
        raise ValueError("dimension must be at least 2")
    axes = [np.pi * (np.arange(resolution) + 0.5) / resolution for _ in range(m - 2)]
    axes.append(2 * np.pi * (np.arange(2 * resolution) + 0.5) / (2 * resolution))
    theta = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m - 1)
    h = 1e-5

    def unit(th):
        v = np.asarray(f(region.center + region.radius * _sphere_point(th)), dtype=float)
        nrm = np.linalg.norm(v, axis=1, keepdims=True)
        return v / nrm, nrm

    def form(mapping):
        base, nrm = mapping(theta)
        cols = [base]
        for i in range(m - 1):
            e = np.zeros(m - 1)
            e[i] = h
            cols.append((mapping(theta + e)[0] - mapping(theta - e)[0]) / (2 * h))
        return np.linalg.det(np.stack(cols, axis=-1)).sum(), nrm

    num, nrm = form(unit)
    den, _ = form(lambda th: (_sphere_point(th), None))
    min_norm = float(nrm.min())
    if min_norm <= 1e-12 * float(nrm.max()):
        raise BoundaryZeroError(f"|f| drops to {min_norm:.3e} on the sampled sphere")
    value = num / den
    return DegreeResult(int(round(value)), theta.shape[0], min_norm, float(abs(value - round(value))),
                        "kronecker")


def topological_degree(f, region: BoxRegion) -> DegreeResult:
    if region.dim == 2:
        return brouwer_degree_2d(f, region)
    return kronecker_degree(f, region)


@dataclass(frozen=True)
class BorsukResult:
    passed: bool
    max_defect: float  # max |f(c+w) + f(c-w)| / |f(c+w)|
    min_norm: float
    witness: np.ndarray | None = field(default=None)


def borsuk_odd_check(f, region: BoxRegion, samples: int | None = None,
                     rng: np.random.Generator | None = None) -> BorsukResult:
    """Is ``f`` odd about the center and nonvanishing on the boundary?

    Passing implies an odd, hence nonzero, degree.
    """
    if region.dim == 2:
        count = samples or region.boundary_resolution
        w = region.circle(count) - region.center
    else:
        rng = rng or np.random.default_rng(0)
        w = region.sample(rng, samples or 4096) - region.center
        w *= region.radius / np.linalg.norm(w, axis=1, keepdims=True)
    fp = np.asarray(f(region.center + w), dtype=float)
    fm = np.asarray(f(region.center - w), dtype=float)
    norms = np.linalg.norm(fp, axis=1)
    defect = np.linalg.norm(fp + fm, axis=1) / np.maximum(norms, np.finfo(float).tiny)
    min_norm = float(norms.min())
    worst = int(np.argmax(defect))
    odd = bool(defect[worst] <= 1e-9)
    nonvanishing = min_norm > 1e-12 * max(1.0, float(norms.max()))
    witness = None
    if not odd:
        witness = region.center + w[worst]
    elif not nonvanishing:
        witness = region.center + w[int(np.argmin(norms))]
    return BorsukResult(odd and nonvanishing, float(defect[worst]), min_norm, witness)


@dataclass(frozen=True)
class ConvexityCert:
    sigma: float
    L: float
    sample_count: int
    min_ratio_witness: tuple  # (z, z_star)

    @property
    def passed(self) -> bool:
        return self.sigma > 0 and self.L >= 2


def estimate_convexity(g_grad, region: BoxRegion, samples: int = 10_000,
                       rng: np.random.Generator | None = None, rays: int = 64) -> ConvexityCert:
    """Empirical ``(sigma, L)`` with ``|grad g(z) - grad g(z*)| >= sigma |z - z*|**L``.

    ``L`` is the smallest exponent consistent with every sampled ray from the
    center: along each ray the log-log slope of ``|grad g(z) - grad g(c)|``
    against ``|z - c|`` is fitted and ``L`` is the largest of those slopes.
    ``sigma`` is half the smallest ratio ``|grad g(z) - grad g(z*)| / |z - z*|**L``
    over ``samples`` random pairs in the ball plus the ray samples.
    """
    if samples < 1000:
        raise ValueError("estimate_convexity needs at least 1000 samples")
    rng = rng or np.random.default_rng(0)
    dim, c, R = region.dim, region.center, region.radius
    dirs = rng.normal(size=(rays, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = R * np.geomspace(1e-3, 1.0, 32)
    pts = c + (dirs[:, None, :] * radii[None, :, None]).reshape(-1, dim)
    g0 = np.asarray(g_grad(c[None, :]), dtype=float)[0]
    diff = np.linalg.norm(np.asarray(g_grad(pts), dtype=float) - g0, axis=1).reshape(rays, -1)
    if not np.any(diff > 0):
        raise DegenerateFitError("gradient is constant on every sampled ray")
    logr = np.log(radii)
    slopes = []
    for row in diff:
        ok = row > 0
        if ok.sum() < 2:
            continue
        slopes.append(np.polyfit(logr[ok], np.log(row[ok]), 1)[0])
    if not slopes:
        raise DegenerateFitError("no ray with a usable log-log fit")
    L = float(max(slopes))
    a = region.sample(rng, samples)
    b = region.sample(rng, samples)
    a = np.vstack([a, pts])
    b = np.vstack([b, np.repeat(c[None, :], pts.shape[0], axis=0)])
    dz = np.linalg.norm(a - b, axis=1)
    dg = np.linalg.norm(np.asarray(g_grad(a), dtype=float) - np.asarray(g_grad(b), dtype=float),
                        axis=1)
    keep = dz > 0
    ratio = dg[keep] / dz[keep] ** L
    i = int(np.argmin(ratio))
    witness = (a[keep][i], b[keep][i])
    return ConvexityCert(0.5 * float(ratio[i]), L, int(keep.sum()), witness)


def verify_convexity(g_grad, region: BoxRegion, cert: ConvexityCert, samples: int = 1000,
                     rng: np.random.Generator | None = None) -> float:
    """Smallest slack ``|dg| - sigma |dz|**L`` over fresh random pairs (>= 0 means it holds)."""
    rng = rng or np.random.default_rng(1)
    a, b = region.sample(rng, samples), region.sample(rng, samples)
    dz = np.linalg.norm(a - b, axis=1)
    dg = np.linalg.norm(np.asarray(g_grad(a), dtype=float) - np.asarray(g_grad(b), dtype=float),
                        axis=1)
    return float(np.min(dg - cert.sigma * dz ** cert.L))


def gradient_evaluator(g: TFSeries):
    """Vectorized ``z -> grad_z g(0, 0, z)`` for a series ``g``."""
    n, dim = g.n, 2 * g.d
    parts = [partial_derivative(g, ("z", l)) for l in range(dim)]

    def grad(z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        x = np.zeros((z.shape[0], n))
        return np.column_stack([evaluate(p, x, x, z) for p in parts])

    return grad


@dataclass(frozen=True)
class A0Report:
    degree: DegreeResult | None
    borsuk: BorsukResult
    convexity: ConvexityCert | None
    passed: bool
    message: str

    def text(self) -> str:
        lines = ["[A0 nondegeneracy]"]
        if self.degree is not None:
            lines.append(f"degree = {self.degree.degree} ({self.degree.method}, "
                         f"{self.degree.samples} boundary samples, min|f| = {self.degree.min_norm:.6e})")
        lines.append(f"odd map = {self.borsuk.passed} (max defect {self.borsuk.max_defect:.3e})")
        if self.convexity is not None:
            cv = self.convexity
            lines.append(f"sigma = {cv.sigma:.6e}, L = {cv.L:.6f}, samples = {cv.sample_count}")
            lines.append(f"witness z = {np.array2string(cv.min_ratio_witness[0], precision=6)}, "
                         f"z* = {np.array2string(cv.min_ratio_witness[1], precision=6)}")
        lines.append(f"pass = {self.passed}: {self.message}")
        return "\n".join(lines)


def check_A0(g: TFSeries, region: BoxRegion, samples: int = 10_000,
             rng: np.random.Generator | None = None) -> A0Report:
    """Degree of ``grad g - grad g(center)`` and the weak-convexity exponent."""
    grad = gradient_evaluator(g)
    g0 = grad(region.center[None, :])[0]
    if np.abs(g0).max() > 1e-12:
        raise ValueError(f"grad g at the center is {g0}, expected 0")
    f = lambda z: grad(z) - g0
    borsuk = borsuk_odd_check(f, region)
    degree = topological_degree(f, region)
    conv = estimate_convexity(grad, region, samples, rng)
    if degree.degree == 0:
        message = ("degree 0: a perturbation such as eps^2 u added to (u^3+v^3)/3 leaves the "
                   "gradient equation without a real zero, so the torus need not persist")
        return A0Report(degree, borsuk, conv, False, message)
    if conv.L < 2:
        return A0Report(degree, borsuk, conv, False,
                        f"L = {conv.L:.3f} < 2: g is not degenerate at the center")
    parity = "odd" if degree.degree % 2 else "even"
    return A0Report(degree, borsuk, conv, True, f"degree {degree.degree} ({parity}), L >= 2")
