"""The normal form ``e + <omega, y> + h_tilde(y) + g(z) + g_bar(y, z)``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .series import Caps, TFSeries, linear_combination


def _basis_vector(size: int, idx: int, scale: int = 1) -> tuple:
    out = [0] * size
    out[idx] = scale
    return tuple(out)


@dataclass(frozen=True)
class NormalForm:
    """Angle-independent part of the Hamiltonian carried through the iteration.

    ``h_tilde`` holds pure-``y`` terms of degree >= 2, ``g`` pure-``z`` terms
    (no constant, vanishing gradient at the origin), ``g_bar`` mixed terms
    ``y**i z**j`` with ``|i|, |j| >= 1``.  ``zeta`` is the accumulated shift of
    the normal coordinates.
    """

    e: float
    omega: np.ndarray
    h_tilde: TFSeries
    g: TFSeries
    g_bar: TFSeries
    zeta: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float).copy())
        if self.zeta is None:
            object.__setattr__(self, "zeta", np.zeros(2 * self.d))
        else:
            object.__setattr__(self, "zeta", np.asarray(self.zeta, dtype=float).copy())

    @property
    def n(self) -> int:
        return self.g.n

    @property
    def d(self) -> int:
        return self.g.d

    @classmethod
    def from_parts(cls, omega, g: TFSeries, h_tilde: TFSeries | None = None,
                   g_bar: TFSeries | None = None, e: float = 0.0, zeta=None) -> "NormalForm":
        n, d = g.n, g.d
        empty = TFSeries.zero(n, d, Caps(0, 0))
        return cls(float(e), np.asarray(omega, float), h_tilde or empty, g, g_bar or empty, zeta)

    def as_series(self, caps: Caps | None = None) -> TFSeries:
        n, d = self.n, self.d
        lin = {((0,) * n, _basis_vector(n, i), (0,) * (2 * d)): w for i, w in enumerate(self.omega)}
        lin[((0,) * n, (0,) * n, (0,) * (2 * d))] = self.e
        base = TFSeries.from_terms(n, d, lin)
        parts = [(1.0, base), (1.0, self.h_tilde), (1.0, self.g), (1.0, self.g_bar)]
        if caps is None:
            caps = base.caps.union(self.h_tilde.caps).union(self.g.caps).union(self.g_bar.caps)
        return linear_combination(parts, caps)

    def grad_g0(self) -> np.ndarray:
        """Gradient of ``g`` at ``z = 0`` (the linear coefficients)."""
        n, d = self.n, self.d
        return np.array([self.g.coefficient((0,) * n, (0,) * n, _basis_vector(2 * d, l)).real
                         for l in range(2 * d)])

    def hess_g0(self) -> np.ndarray:
        return hessian_at_zero(self.g)

    def shape_defects(self, m: int) -> dict:
        """Largest coefficient violating each structural constraint (0 when clean)."""
        def worst(S: TFSeries, bad: np.ndarray) -> float:
            return float(np.abs(S.coeffs[bad]).max()) if bad.any() else 0.0

        h, g, gb = self.h_tilde, self.g, self.g_bar
        return {
            "h_tilde": worst(h, np.any(h.k != 0, axis=1) | np.any(h.j != 0, axis=1)
                             | (h.iota.sum(axis=1) < 2)),
            "g": worst(g, np.any(g.k != 0, axis=1) | np.any(g.iota != 0, axis=1)
                       | (g.j.sum(axis=1) < 1)),
            "g_linear": float(np.abs(self.grad_g0()).max()) if self.d else 0.0,
            "g_bar": worst(gb, np.any(gb.k != 0, axis=1) | (gb.iota.sum(axis=1) < 1)
                           | (gb.j.sum(axis=1) < 1) | (gb.weighted_degrees() > m)),
        }


def hessian_at_zero(g: TFSeries) -> np.ndarray:
    """Hessian in ``z`` at the origin of the ``k = 0, iota = 0`` part of ``g``."""
    n, dim = g.n, 2 * g.d
    out = np.zeros((dim, dim))
    zero_k, zero_i = (0,) * n, (0,) * n
    for a in range(dim):
        out[a, a] = 2.0 * g.coefficient(zero_k, zero_i, _basis_vector(dim, a, 2)).real
        for b in range(a + 1, dim):
            jj = [0] * dim
            jj[a] = jj[b] = 1
            out[a, b] = out[b, a] = g.coefficient(zero_k, zero_i, tuple(jj)).real
    return out


def z_polynomial(n: int, d: int, coeffs: dict, caps: Caps | None = None) -> TFSeries:
    """Pure-``z`` series from ``{j: c}``."""
    return TFSeries.from_terms(n, d, {((0,) * n, (0,) * n, tuple(j)): c for j, c in coeffs.items()},
                               caps)
