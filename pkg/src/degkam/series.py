"""Truncated Taylor-Fourier series in (x, y, z).

A series is a finite sum of terms

    c * y**iota * z**j * exp(1j * <k, x>)

with ``x`` on the n-torus, ``y`` in R^n and ``z = (u, v)`` in R^{2d}.  Terms are
stored sparsely as an integer key array with rows ``(k, iota, j)`` and a complex
coefficient vector.  Rows are kept sorted lexicographically so that equal series
have identical storage and serialize to identical text.

Real-valued series satisfy ``c(-k, iota, j) == conj(c(k, iota, j))``.

The weighted degree of a term is ``2|iota| + |j|``; caps bound the Fourier order
``|k|`` (l1 norm) and the weighted degree of every stored term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np

#: coefficients with magnitude below this are dropped when canonicalizing
COEFF_FLOOR = 1e-300

# pairwise products are generated in chunks of at most this many pairs
_PAIR_CHUNK = 1 << 21


class SeriesError(ValueError):
    """Raised on malformed series input or incompatible dimensions."""


class LieSeriesDivergence(ArithmeticError):
    """Raised when Lie series terms fail to fall below the requested floor."""


class Caps(NamedTuple):
    kmax: int
    wmax: int

    def union(self, other: "Caps") -> "Caps":
        return Caps(max(self.kmax, other.kmax), max(self.wmax, other.wmax))


@dataclass(frozen=True)
class MultiIndex:
    k: tuple
    iota: tuple
    j: tuple

    @property
    def order(self) -> int:
        return sum(abs(v) for v in self.k)

    @property
    def weighted_degree(self) -> int:
        return 2 * sum(self.iota) + sum(self.j)


@dataclass(frozen=True)
class DomainParams:
    """Radii of the complex domain ``|Im x| < r, |y| < s**2, |z| < s``."""

    s: float
    r: float

    def __post_init__(self):
        if not (0.0 < self.s < 1.0) or not (0.0 < self.r < 1.0):
            raise ValueError(f"domain needs 0<s<1 and 0<r<1, got s={self.s}, r={self.r}")


def _lex_codes(keys: np.ndarray) -> np.ndarray:
    """Map integer rows to int64 codes whose order is the lexicographic row order."""
    if keys.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    lo = keys.min(axis=0)
    span = keys.max(axis=0) - lo + 1
    codes = np.zeros(keys.shape[0], dtype=np.int64)
    for col in range(keys.shape[1]):
        codes = codes * int(span[col]) + (keys[:, col] - lo[col])
    return codes


def _canonical(keys: np.ndarray, coeffs: np.ndarray):
    """Merge duplicate rows, drop tiny coefficients, sort rows."""
    if keys.shape[0] == 0:
        return keys.reshape(0, keys.shape[1]).astype(np.int64), np.zeros(0, dtype=complex)
    codes = _lex_codes(keys)
    uniq, first, inverse = np.unique(codes, return_index=True, return_inverse=True)
    if uniq.shape[0] == codes.shape[0]:
        order = np.argsort(codes, kind="stable")
        keys, coeffs = keys[order], coeffs[order]
    else:
        re = np.bincount(inverse, weights=coeffs.real, minlength=uniq.shape[0])
        im = np.bincount(inverse, weights=coeffs.imag, minlength=uniq.shape[0])
        keys, coeffs = keys[first], re + 1j * im
    keep = np.abs(coeffs) >= COEFF_FLOOR
    return np.ascontiguousarray(keys[keep], dtype=np.int64), coeffs[keep].astype(complex)


class TFSeries:
    """Immutable sparse Taylor-Fourier series.

    Parameters
    ----------
    n, d : int
        Torus dimension and half the normal dimension.
    keys : array_like of int, shape (N, 2n + 2d)
        Rows ``(k_1..k_n, iota_1..iota_n, j_1..j_2d)``.
    coeffs : array_like of complex, shape (N,)
    caps : Caps
        Fourier and weighted-degree cutoffs; terms outside are discarded.
    """

    __slots__ = ("n", "d", "caps", "_keys", "_coeffs")

    def __init__(self, n: int, d: int, keys, coeffs, caps: Caps, _canonical_input=False):
        self.n = int(n)
        self.d = int(d)
        if self.n < 1 or self.d < 0:
            raise SeriesError(f"invalid dimensions n={n}, d={d}")
        self.caps = Caps(int(caps[0]), int(caps[1]))
        width = 2 * self.n + 2 * self.d
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, width)
        coeffs = np.asarray(coeffs, dtype=complex).reshape(-1)
        if keys.shape[0] != coeffs.shape[0]:
            raise SeriesError("keys and coeffs have different lengths")
        if not _canonical_input:
            if np.any(keys[:, self.n:] < 0):
                raise SeriesError("negative monomial exponent")
            if not np.all(np.isfinite(coeffs)):
                raise SeriesError("non-finite coefficient")
            keep = _within(keys, self.n, self.caps)
            keys, coeffs = _canonical(keys[keep], coeffs[keep])
        self._keys = keys
        self._keys.setflags(write=False)
        self._coeffs = coeffs
        self._coeffs.setflags(write=False)

    # -- construction -------------------------------------------------
    @classmethod
    def zero(cls, n: int, d: int, caps: Caps) -> "TFSeries":
        return cls(n, d, np.zeros((0, 2 * n + 2 * d), dtype=np.int64), [], caps)

    @classmethod
    def from_terms(cls, n: int, d: int, terms, caps: Caps | None = None) -> "TFSeries":
        """Build from ``{(k, iota, j): coeff}`` or an iterable of such pairs.

        Without ``caps`` the smallest caps holding every term are used.
        """
        items = terms.items() if isinstance(terms, dict) else terms
        rows, vals = [], []
        for key, c in items:
            k, iota, j = (tuple(int(v) for v in part) for part in key)
            if len(k) != n or len(iota) != n or len(j) != 2 * d:
                raise SeriesError(f"index {key} does not match n={n}, d={d}")
            rows.append(k + iota + j)
            vals.append(complex(c))
        keys = np.array(rows, dtype=np.int64).reshape(-1, 2 * n + 2 * d)
        if caps is None:
            caps = _tight_caps(keys, n)
        return cls(n, d, keys, vals, caps)

    @classmethod
    def constant(cls, n: int, d: int, c, caps: Caps = Caps(0, 0)) -> "TFSeries":
        return cls.from_terms(n, d, {((0,) * n, (0,) * n, (0,) * (2 * d)): c}, caps)

    @classmethod
    def monomial(cls, n: int, d: int, k=None, iota=None, j=None, c=1.0, caps=None) -> "TFSeries":
        k = tuple(k) if k is not None else (0,) * n
        iota = tuple(iota) if iota is not None else (0,) * n
        j = tuple(j) if j is not None else (0,) * (2 * d)
        return cls.from_terms(n, d, {(k, iota, j): c}, caps)

    @classmethod
    def cos_mode(cls, n: int, d: int, k, iota=None, j=None, c=1.0, caps=None) -> "TFSeries":
        """``c * y**iota * z**j * cos<k, x>`` stored as a conjugate pair."""
        k = tuple(int(v) for v in k)
        iota = tuple(iota) if iota is not None else (0,) * n
        j = tuple(j) if j is not None else (0,) * (2 * d)
        if not any(k):
            return cls.from_terms(n, d, {(k, iota, j): c}, caps)
        neg = tuple(-v for v in k)
        return cls.from_terms(n, d, {(k, iota, j): 0.5 * c, (neg, iota, j): 0.5 * c}, caps)

    # -- views --------------------------------------------------------
    @property
    def keys(self) -> np.ndarray:
        return self._keys

    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def k(self) -> np.ndarray:
        return self._keys[:, : self.n]

    @property
    def iota(self) -> np.ndarray:
        return self._keys[:, self.n: 2 * self.n]

    @property
    def j(self) -> np.ndarray:
        return self._keys[:, 2 * self.n:]

    @property
    def dims(self) -> tuple:
        return (self.n, self.d)

    def orders(self) -> np.ndarray:
        return np.abs(self.k).sum(axis=1)

    def weighted_degrees(self) -> np.ndarray:
        return 2 * self.iota.sum(axis=1) + self.j.sum(axis=1)

    def __len__(self) -> int:
        return self._coeffs.shape[0]

    def is_zero(self) -> bool:
        return len(self) == 0

    def terms(self) -> Iterator[tuple[MultiIndex, complex]]:
        n = self.n
        for row, c in zip(self._keys.tolist(), self._coeffs.tolist()):
            yield MultiIndex(tuple(row[:n]), tuple(row[n: 2 * n]), tuple(row[2 * n:])), c

    def to_dict(self) -> dict:
        return {(m.k, m.iota, m.j): c for m, c in self.terms()}

    def coefficient(self, k, iota=None, j=None) -> complex:
        iota = tuple(iota) if iota is not None else (0,) * self.n
        j = tuple(j) if j is not None else (0,) * (2 * self.d)
        row = np.array(tuple(k) + iota + j, dtype=np.int64)
        hit = np.nonzero(np.all(self._keys == row, axis=1))[0]
        return complex(self._coeffs[hit[0]]) if hit.size else 0j

    def mask(self, keep: np.ndarray, caps: Caps | None = None) -> "TFSeries":
        """Sub-series of the rows selected by a boolean mask."""
        return TFSeries(self.n, self.d, self._keys[keep], self._coeffs[keep],
                        caps or self.caps, _canonical_input=True)

    def with_caps(self, caps: Caps) -> "TFSeries":
        return TFSeries(self.n, self.d, self._keys, self._coeffs, caps)

    def scaled(self, a) -> "TFSeries":
        return TFSeries(self.n, self.d, self._keys, self._coeffs * complex(a), self.caps)

    def conj_reflect(self) -> "TFSeries":
        """Series with terms ``conj(c) at (-k, iota, j)``; equals self when real."""
        keys = self._keys.copy()
        keys[:, : self.n] *= -1
        return TFSeries(self.n, self.d, keys, np.conj(self._coeffs), self.caps)

    def reality_defect(self) -> float:
        """Largest coefficient mismatch against the Hermitian reality constraint."""
        diff = add_scale(-1.0, self.conj_reflect(), self)
        return float(np.abs(diff.coeffs).max()) if len(diff) else 0.0

    def realified(self) -> "TFSeries":
        """Project onto real-valued series (removes roundoff asymmetry)."""
        return add_scale(0.5, self.conj_reflect(), self.scaled(0.5))

    def l1(self) -> float:
        return float(np.abs(self._coeffs).sum())

    # -- operators ----------------------------------------------------
    def __eq__(self, other) -> bool:
        if not isinstance(other, TFSeries):
            return NotImplemented
        return (self.dims == other.dims and np.array_equal(self._keys, other._keys)
                and np.array_equal(self._coeffs, other._coeffs))

    __hash__ = None

    def __add__(self, other: "TFSeries") -> "TFSeries":
        return add_scale(1.0, self, other)

    def __sub__(self, other: "TFSeries") -> "TFSeries":
        return add_scale(-1.0, other, self)

    def __neg__(self) -> "TFSeries":
        return self.scaled(-1.0)

    def __mul__(self, other):
        if isinstance(other, TFSeries):
            return multiply(self, other)
        return self.scaled(other)

    def __rmul__(self, other):
        return self.scaled(other)

    def __repr__(self) -> str:
        return f"TFSeries(n={self.n}, d={self.d}, terms={len(self)}, caps={tuple(self.caps)})"


def _within(keys: np.ndarray, n: int, caps: Caps) -> np.ndarray:
    order = np.abs(keys[:, :n]).sum(axis=1)
    wdeg = 2 * keys[:, n: 2 * n].sum(axis=1) + keys[:, 2 * n:].sum(axis=1)
    return (order <= caps.kmax) & (wdeg <= caps.wmax)


def _tight_caps(keys: np.ndarray, n: int) -> Caps:
    if keys.shape[0] == 0:
        return Caps(0, 0)
    order = np.abs(keys[:, :n]).sum(axis=1)
    wdeg = 2 * keys[:, n: 2 * n].sum(axis=1) + keys[:, 2 * n:].sum(axis=1)
    return Caps(int(order.max()), int(wdeg.max()))


def _check_dims(F: TFSeries, G: TFSeries):
    if F.dims != G.dims:
        raise SeriesError(f"dimension mismatch: {F.dims} vs {G.dims}")


# ---------------------------------------------------------------------------
# linear operations

def add_scale(a, F: TFSeries, G: TFSeries) -> TFSeries:
    """Return ``a*F + G`` with caps the componentwise max of the inputs."""
    _check_dims(F, G)
    keys = np.concatenate([F.keys, G.keys])
    coeffs = np.concatenate([complex(a) * F.coeffs, G.coeffs])
    return TFSeries(F.n, F.d, keys, coeffs, F.caps.union(G.caps))


def linear_combination(pairs: Iterable[tuple], caps: Caps | None = None) -> TFSeries:
    """Sum of ``a_i * F_i`` computed in one canonicalization pass."""
    pairs = list(pairs)
    if not pairs:
        raise SeriesError("empty combination")
    first = pairs[0][1]
    for _, F in pairs[1:]:
        _check_dims(first, F)
    keys = np.concatenate([F.keys for _, F in pairs])
    coeffs = np.concatenate([complex(a) * F.coeffs for a, F in pairs])
    if caps is None:
        caps = first.caps
        for _, F in pairs[1:]:
            caps = caps.union(F.caps)
    return TFSeries(first.n, first.d, keys, coeffs, caps)


# ---------------------------------------------------------------------------
# products

def _pairs(F: TFSeries, G: TFSeries, wlimit: int):
    """Yield index arrays (ia, ib) of term pairs with w_a + w_b <= wlimit, in chunks."""
    wa = F.weighted_degrees()
    wb = G.weighted_degrees()
    order_b = np.argsort(wb, kind="stable")
    wb_sorted = wb[order_b]
    nb = len(G)
    if len(F) == 0 or nb == 0:
        return
    # number of admissible partners for each row of F
    counts = np.searchsorted(wb_sorted, wlimit - wa, side="right")
    rows = np.nonzero(counts)[0]
    start = 0
    while start < rows.shape[0]:
        total = 0
        stop = start
        while stop < rows.shape[0] and (total == 0 or total + counts[rows[stop]] <= _PAIR_CHUNK):
            total += counts[rows[stop]]
            stop += 1
        sel = rows[start:stop]
        c = counts[sel]
        ia = np.repeat(sel, c)
        offsets = np.arange(ia.shape[0]) - np.repeat(np.cumsum(c) - c, c)
        ib = order_b[offsets]
        yield ia, ib
        start = stop


def _operand_key(F: TFSeries) -> tuple:
    return (len(F), F.keys.tobytes(), F.coeffs.tobytes())


def multiply(F: TFSeries, G: TFSeries, caps: Caps | None = None) -> TFSeries:
    """Truncated product ``F*G``.

    Without ``caps`` the output caps are the sums of the input caps, so nothing
    is truncated.
    """
    _check_dims(F, G)
    if caps is None:
        caps = Caps(F.caps.kmax + G.caps.kmax, F.caps.wmax + G.caps.wmax)
    # fixed operand order makes the floating-point sums, hence F*G == G*F, exact
    if _operand_key(F) > _operand_key(G):
        F, G = G, F
    keys_out, coeffs_out = [], []
    for ia, ib in _pairs(F, G, caps.wmax):
        keys = F.keys[ia] + G.keys[ib]
        coeffs = F.coeffs[ia] * G.coeffs[ib]
        keep = np.abs(keys[:, : F.n]).sum(axis=1) <= caps.kmax
        keys_out.append(keys[keep])
        coeffs_out.append(coeffs[keep])
    if not keys_out:
        return TFSeries.zero(F.n, F.d, caps)
    return TFSeries(F.n, F.d, np.concatenate(keys_out), np.concatenate(coeffs_out), caps)


def _parse_var(F: TFSeries, var):
    if isinstance(var, str):
        kind, idx = var[0], int(var[1:]) - 1
    else:
        kind, idx = var
    size = {"x": F.n, "y": F.n, "z": 2 * F.d}.get(kind)
    if size is None or not (0 <= idx < size):
        raise SeriesError(f"invalid variable {var!r} for n={F.n}, d={F.d}")
    return kind, idx


def partial_derivative(F: TFSeries, var) -> TFSeries:
    """Term-by-term derivative.

    ``var`` is ``"x1"``, ``"y2"``, ``"z3"`` (1-based) or a tuple ``("z", 2)`` (0-based).
    """
    kind, idx = _parse_var(F, var)
    keys = F.keys.copy()
    if kind == "x":
        coeffs = F.coeffs * (1j * keys[:, idx])
    else:
        col = (F.n if kind == "y" else 2 * F.n) + idx
        coeffs = F.coeffs * keys[:, col]
        keys[:, col] = np.maximum(keys[:, col] - 1, 0)
    nz = coeffs != 0
    return TFSeries(F.n, F.d, keys[nz], coeffs[nz], F.caps)


def poisson_bracket(F: TFSeries, G: TFSeries, caps: Caps | None = None) -> TFSeries:
    """``{F, G} = d_x F . d_y G - d_y F . d_x G + d_z F . J d_z G``.

    ``z = (u_1..u_d, v_1..v_d)`` and ``J = [[0, I], [-I, 0]]``.  Without ``caps``
    the output caps are large enough that nothing is truncated.
    """
    _check_dims(F, G)
    n, d = F.n, F.d
    if caps is None:
        caps = Caps(F.caps.kmax + G.caps.kmax, max(F.caps.wmax + G.caps.wmax - 2, 0))
    if F == G:
        return TFSeries.zero(n, d, caps)
    # fixed operand order keeps {F, G} = -{G, F} exact in floating point
    sign = 1.0
    if _operand_key(F) > _operand_key(G):
        F, G, sign = G, F, -1.0
    keys_out, coeffs_out = [], []
    # each bracket channel lowers the weighted degree by 2 relative to the product
    for ia, ib in _pairs(F, G, caps.wmax + 2):
        ka, kb = F.keys[ia], G.keys[ib]
        base = ka + kb
        cab = F.coeffs[ia] * G.coeffs[ib]
        okk = np.abs(base[:, :n]).sum(axis=1) <= caps.kmax
        if not okk.any():
            continue
        ka, kb, base, cab = ka[okk], kb[okk], base[okk], cab[okk]
        for i in range(n):
            fac = ka[:, i] * kb[:, n + i] - ka[:, n + i] * kb[:, i]
            nz = fac != 0
            if nz.any():
                keys = base[nz].copy()
                keys[:, n + i] -= 1
                keys_out.append(keys)
                coeffs_out.append(1j * sign * fac[nz] * cab[nz])
        for p in range(d):
            cu, cv = 2 * n + p, 2 * n + d + p
            fac = ka[:, cu] * kb[:, cv] - ka[:, cv] * kb[:, cu]
            nz = fac != 0
            if nz.any():
                keys = base[nz].copy()
                keys[:, cu] -= 1
                keys[:, cv] -= 1
                keys_out.append(keys)
                coeffs_out.append(sign * fac[nz] * cab[nz])
    if not keys_out:
        return TFSeries.zero(n, d, caps)
    return TFSeries(n, d, np.concatenate(keys_out), np.concatenate(coeffs_out), caps)


# ---------------------------------------------------------------------------
# projections and substitutions

def truncate(P: TFSeries, K_plus: int, m: int) -> tuple[TFSeries, TFSeries]:
    """Split ``P = R + tail`` with ``R`` holding ``|k| <= K_plus`` and ``2|iota|+|j| <= m``."""
    if K_plus < 1 or m < 2:
        raise ValueError(f"truncate needs K_plus >= 1 and m >= 2, got {K_plus}, {m}")
    low = (P.orders() <= K_plus) & (P.weighted_degrees() <= m)
    return P.mask(low), P.mask(~low)


def average(R: TFSeries) -> TFSeries:
    """Angle average: the ``k = 0`` part."""
    return R.mask(~np.any(R.k != 0, axis=1))


def shift_z(F: TFSeries, delta, caps: Caps | None = None) -> TFSeries:
    """Compose with the translation ``z -> z + delta`` (binomial expansion)."""
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if delta.shape[0] != 2 * F.d:
        raise SeriesError(f"shift needs {2 * F.d} components, got {delta.shape[0]}")
    if not np.all(np.isfinite(delta)):
        raise SeriesError("non-finite shift")
    caps = caps or F.caps
    keys, coeffs = F.keys, F.coeffs
    for l, dl in enumerate(delta):
        if dl == 0.0 or keys.shape[0] == 0:
            continue
        col = 2 * F.n + l
        e = keys[:, col]
        reps = e + 1
        src = np.repeat(np.arange(keys.shape[0]), reps)
        a = np.arange(src.shape[0]) - np.repeat(np.cumsum(reps) - reps, reps)
        ee = e[src]
        binom = np.array([math.comb(int(p), int(q)) for p, q in zip(ee, a)], dtype=float)
        new_keys = keys[src].copy()
        new_keys[:, col] = a
        new_coeffs = coeffs[src] * binom * np.power(dl, (ee - a).astype(float))
        keys, coeffs = _canonical(new_keys, new_coeffs)
    return TFSeries(F.n, F.d, keys, coeffs, caps)


def restrict_y_zero(F: TFSeries) -> TFSeries:
    """``F(x, 0, z)``: the terms with ``iota = 0``."""
    return F.mask(~np.any(F.iota != 0, axis=1))


def restrict_z_zero(F: TFSeries) -> TFSeries:
    """``F(x, y, 0)``: the terms with ``j = 0``."""
    return F.mask(~np.any(F.j != 0, axis=1))


# ---------------------------------------------------------------------------
# norms and evaluation

def majorant_norm(F: TFSeries, dom: DomainParams) -> float:
    """Weighted l1 majorant ``sum |c| s**(2|iota|+|j|) exp(|k| r)``.

    Bounds the sup norm of ``F`` on ``D(s, r)`` from above.
    """
    if len(F) == 0:
        return 0.0
    w = F.weighted_degrees().astype(float)
    order = F.orders().astype(float)
    return float(np.sum(np.abs(F.coeffs) * np.exp(w * math.log(dom.s) + order * dom.r)))


def evaluate(F: TFSeries, x, y, z) -> np.ndarray:
    """Real value of ``F`` at a batch of points (arrays of shape (P, n), (P, n), (P, 2d))."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float)).reshape(x.shape[0], 2 * F.d)
    if len(F) == 0:
        return np.zeros(x.shape[0])
    phase = np.exp(1j * (x @ F.k.T))
    mono = np.ones((x.shape[0], len(F)))
    for i in range(F.n):
        mono *= y[:, i: i + 1] ** F.iota[:, i]
    for l in range(2 * F.d):
        mono *= z[:, l: l + 1] ** F.j[:, l]
    return np.real((phase * mono) @ F.coeffs)


def evaluate_point(F: TFSeries, x, y, z) -> float:
    """Real value of ``F`` at a single point."""
    return float(evaluate(F, np.reshape(x, (1, -1)), np.reshape(y, (1, -1)),
                          np.reshape(z, (1, -1)))[0])


# ---------------------------------------------------------------------------
# Lie transform

def lie_transform(H: TFSeries, F: TFSeries, caps: Caps | None = None, order_cap: int = 40,
                  floor: float = 1e-18, dom: DomainParams | None = None) -> TFSeries:
    """``H o phi_F^1`` as the truncated series ``sum_q ad_F^q H / q!`` with ``ad_F H = {H, F}``.

    Terms are added until one has majorant norm (plain l1 when ``dom`` is None)
    below ``floor``.  ``LieSeriesDivergence`` is raised if that does not happen
    within ``order_cap`` brackets.
    """
    _check_dims(H, F)
    if len(average(F)):
        raise ValueError("generator must have zero angle average")
    caps = caps or H.caps.union(F.caps)
    size = (lambda S: S.l1()) if dom is None else (lambda S: majorant_norm(S, dom))
    pieces = [(1.0, H)]
    term = H
    for q in range(1, order_cap + 1):
        term = poisson_bracket(term, F, caps).scaled(1.0 / q)
        if term.is_zero():
            break
        pieces.append((1.0, term))
        if size(term) < floor:
            break
    else:
        raise LieSeriesDivergence(
            f"Lie series term {order_cap} still has norm {size(term):.3e} >= floor {floor:.1e}")
    return linear_combination(pieces, caps)


# ---------------------------------------------------------------------------
# text serialization

def dumps(F: TFSeries) -> str:
    """Line format: header ``TFS n d Kmax wmax`` then ``k.. | iota.. | j.. | re im``."""
    lines = [f"TFS {F.n} {F.d} {F.caps.kmax} {F.caps.wmax}"]
    for m, c in F.terms():
        lines.append(" | ".join([
            " ".join(map(str, m.k)), " ".join(map(str, m.iota)), " ".join(map(str, m.j)),
            f"{float(c.real)!r} {float(c.imag)!r}",
        ]))
    return "\n".join(lines) + "\n"


def loads(text: str) -> TFSeries:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SeriesError("empty series text")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "TFS":
        raise SeriesError(f"bad series header: {lines[0]!r}")
    n, d, kmax, wmax = (int(v) for v in head[1:])
    terms = []
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = [p.split() for p in ln.split("|")]
        if len(parts) != 4 or len(parts[3]) != 2:
            raise SeriesError(f"line {lineno}: expected 'k | iota | j | re im'")
        try:
            k, iota, j = (tuple(int(v) for v in p) for p in parts[:3])
            c = complex(float(parts[3][0]), float(parts[3][1]))
        except ValueError as exc:
            raise SeriesError(f"line {lineno}: {exc}") from None
        terms.append(((k, iota, j), c))
    return TFSeries.from_terms(n, d, terms, Caps(kmax, wmax))
