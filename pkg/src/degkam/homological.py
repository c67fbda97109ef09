"""Solving the homological equation ``{N, F} + R - [R] - Q = 0``.

The generator ``F`` has modes ``0 < |k| <= K_plus`` and weighted degree
``2|iota| + |j| <= m``.  Since ``N`` does not depend on ``x``, the operator
``F -> {N, F}`` acts mode by mode, and on a fixed mode it is block lower
triangular in the weighted degree: the frequency term and the quadratic part of
``g`` keep the degree, everything else in ``N`` raises it.  Blocks are solved in
ascending degree; the part of ``{N, F}`` pushed above degree ``m`` is the
correction ``Q``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .normal_form import NormalForm, hessian_at_zero
from .series import (Caps, DomainParams, TFSeries, add_scale, average, linear_combination,
                     majorant_norm, multiply, partial_derivative, poisson_bracket)

#: tolerance for entries that block triangularity says must vanish
TRIANGULAR_TOL = 1e-12


class ResonanceViolation(ArithmeticError):
    """A small-divisor bound fails; carries the offending mode and class."""

    def __init__(self, k, w_class, divisor_kind, margin):
        self.k = tuple(int(v) for v in k)
        self.w_class = w_class
        self.divisor_kind = divisor_kind
        self.margin = float(margin)
        super().__init__(f"resonance at k={self.k} class={w_class} ({divisor_kind}): "
                         f"margin {self.margin:.3e} <= 0")


class SingularBlockError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SmallDivisorCert:
    k: tuple
    w_class: tuple  # (iota, |j|); iota is zero since the condition does not depend on it
    divisor_kind: str  # "scalar" or "matrix"
    margin: float
    bound: float  # gamma / |k|**tau


@dataclass(frozen=True)
class BlockRecord:
    k: tuple
    degree: int
    size: int
    condition: float
    sigma_min: float  # smallest singular value of the block
    certified: float  # lower bound on sigma_min implied by the certificates (nan if none)


def z_monomials(dim: int, q: int) -> list[tuple]:
    """Exponent tuples of total degree ``q`` in ``dim`` variables, lexicographic."""
    return sorted(j for j in itertools.product(range(q + 1), repeat=dim) if sum(j) == q)


def y_monomials(n: int, q: int) -> list[tuple]:
    return sorted(i for i in itertools.product(range(q + 1), repeat=n) if sum(i) == q)


def nonzero_modes(n: int, K: int, half: bool = False) -> np.ndarray:
    """All ``k`` in Z^n with ``0 < |k| <= K``; with ``half`` one of each pair ``+-k``."""
    if K < 1:
        return np.zeros((0, n), dtype=np.int64)
    grid = np.array(list(itertools.product(range(-K, K + 1), repeat=n)), dtype=np.int64)
    norm = np.abs(grid).sum(axis=1)
    grid = grid[(norm > 0) & (norm <= K)]
    if half:
        first = grid[np.arange(grid.shape[0]), np.argmax(grid != 0, axis=1)]
        grid = grid[first > 0]
    return grid


def _quadratic_action(hess_g0: np.ndarray, q: int) -> np.ndarray:
    """Matrix of ``F -> d_z g2 . J d_z F`` on degree-``q`` monomials, ``g2 = z.H.z / 2``."""
    dim = hess_g0.shape[0]
    n_dummy, d = 1, dim // 2
    basis = z_monomials(dim, q)
    g2 = {}
    for a in range(dim):
        for b in range(a, dim):
            jj = [0] * dim
            jj[a] += 1
            jj[b] += 1
            g2[tuple(jj)] = hess_g0[a, a] / 2.0 if a == b else hess_g0[a, b]
    g2s = TFSeries.from_terms(n_dummy, d, {((0,), (0,), j): c for j, c in g2.items() if c != 0.0})
    index = {j: i for i, j in enumerate(basis)}
    out = np.zeros((len(basis), len(basis)), dtype=complex)
    for col, j in enumerate(basis):
        image = poisson_bracket(g2s, TFSeries.monomial(n_dummy, d, j=j))
        for term, c in image.terms():
            out[index[term.j], col] += c
    return out


def build_divisor_matrix(k, omega, hess_g0, w_class) -> np.ndarray:
    """``A = 1j <k/|k|, omega> I + S/|k|`` on the degree-``|j|`` monomials.

    ``S`` is the action of ``F -> d_z g2 . J d_z F`` with ``g2`` the quadratic part
    of ``g`` (Hessian ``hess_g0``).  ``w_class`` is ``(iota, q)`` with ``q = |j|``.
    """
    k = np.asarray(k, dtype=float)
    norm = np.abs(k).sum()
    if norm == 0:
        raise ValueError("divisor matrix is undefined for k = 0")
    _, q = w_class
    S = _quadratic_action(np.asarray(hess_g0, dtype=float), int(q))
    freq = float(np.dot(k, omega)) / norm
    return 1j * freq * np.eye(S.shape[0]) + S / norm


def _classes(m: int) -> list[int]:
    # every |j| = q in 1..m occurs with iota = 0; the matrix does not depend on iota
    return list(range(1, m + 1))


def nonresonance_margins(omega, hess_g0, gamma, tau, modes: np.ndarray, m: int):
    """Scalar and matrix margins for each mode (vectorized).

    Returns ``(scalar, matrix)`` where ``scalar[i] = |<k_i, omega>| - gamma/|k_i|**tau``
    and ``matrix[i, c]`` is ``sigma_min(A) - gamma/|k_i|**tau`` for class ``c``.
    """
    modes = np.asarray(modes, dtype=float).reshape(-1, len(omega))
    norm = np.abs(modes).sum(axis=1)
    bound = gamma / norm ** tau
    freq = modes @ np.asarray(omega, dtype=float)
    scalar = np.abs(freq) - bound
    hess_g0 = np.asarray(hess_g0, dtype=float)
    classes = _classes(m)
    matrix = np.empty((modes.shape[0], len(classes)))
    for c, q in enumerate(classes):
        S = _quadratic_action(hess_g0, q)
        if not np.any(S):
            matrix[:, c] = np.abs(freq) / norm - bound
            continue
        A = 1j * (freq / norm)[:, None, None] * np.eye(S.shape[0]) + S[None] / norm[:, None, None]
        smin = np.linalg.svd(A, compute_uv=False)[:, -1]
        matrix[:, c] = smin - bound
    return scalar, matrix


def certify_nonresonance(omega, hess_g0, gamma: float, tau: float, K_plus: int, m: int):
    """Certificates for every ``0 < |k| <= K_plus`` and class ``1 <= |j| <= m``.

    Modes ``k`` and ``-k`` give identical conditions, so one of each pair is
    checked.  Raises ``ResonanceViolation`` for the first failing ``(k, class)``
    in the enumeration order.
    """
    omega = np.asarray(omega, dtype=float)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if tau <= len(omega) - 1:
        raise ValueError(f"tau must exceed n - 1 = {len(omega) - 1}")
    modes = nonzero_modes(len(omega), K_plus, half=True)
    scalar, matrix = nonresonance_margins(omega, hess_g0, gamma, tau, modes, m)
    norm = np.abs(modes).sum(axis=1)
    bound = gamma / norm.astype(float) ** tau
    zero_iota = (0,) * len(omega)
    classes = _classes(m)
    bad = (scalar <= 0) | np.any(matrix <= 0, axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        if scalar[i] <= 0:
            raise ResonanceViolation(modes[i], (zero_iota, 0), "scalar", scalar[i])
        c = int(np.argmax(matrix[i] <= 0))
        raise ResonanceViolation(modes[i], (zero_iota, classes[c]), "matrix", matrix[i, c])
    certs = []
    for i, k in enumerate(modes.tolist()):
        certs.append(SmallDivisorCert(tuple(k), (zero_iota, 0), "scalar", float(scalar[i]),
                                      float(bound[i])))
        for c, q in enumerate(classes):
            certs.append(SmallDivisorCert(tuple(k), (zero_iota, q), "matrix",
                                          float(matrix[i, c]), float(bound[i])))
    return certs


def z_bracket(A: TFSeries, B: TFSeries, caps: Caps | None = None) -> TFSeries:
    """``d_z A . J d_z B`` alone."""
    d, n = A.d, A.n
    pieces = []
    for p in range(d):
        u, v = ("z", p), ("z", d + p)
        pieces.append((1.0, multiply(partial_derivative(A, u), partial_derivative(B, v), caps)))
        pieces.append((-1.0, multiply(partial_derivative(A, v), partial_derivative(B, u), caps)))
    if not pieces:
        return TFSeries.zero(n, d, caps or A.caps)
    return linear_combination(pieces, caps)


def split_Q(g: TFSeries, gbar: TFSeries, F: TFSeries, m: int, caps: Caps | None = None) -> TFSeries:
    """Part of ``(d_z g + d_z gbar) . J d_z F`` with weighted degree above ``m``."""
    full = z_bracket(add_scale(1.0, g, gbar), F, caps)
    return full.mask(full.weighted_degrees() > m)


class _Assembly:
    """Mode-independent pieces of ``{N, b e^{ikx}}`` for every basis monomial ``b``."""

    def __init__(self, N: NormalForm, m: int):
        n, d = N.n, N.d
        self.n, self.d, self.m = n, d, m
        self.omega = N.omega
        basis = []
        for w in range(m + 1):
            for qy in range(w // 2 + 1):
                for iota in y_monomials(n, qy):
                    for j in z_monomials(2 * d, w - 2 * qy):
                        basis.append((iota, j))
        self.basis = basis
        self.degree = np.array([2 * sum(i) + sum(j) for i, j in basis])
        # linear part of g is dropped: it is zero up to the translation tolerance
        g = N.g.mask(N.g.j.sum(axis=1) >= 2)
        zpart = add_scale(1.0, g, N.g_bar)
        ypart = add_scale(1.0, N.h_tilde, N.g_bar)
        dy = [partial_derivative(ypart, ("y", i)) for i in range(n)]
        rows: dict = {}
        cols_Z, cols_Y = [], [[] for _ in range(n)]
        for iota, j in basis:
            b = TFSeries.monomial(n, d, iota=iota, j=j)
            rows.setdefault(iota + j, len(rows))
            Zb = poisson_bracket(zpart, b)
            cols_Z.append(Zb)
            for i in range(n):
                cols_Y[i].append(multiply(dy[i], b))
        for S in cols_Z + [c for col in cols_Y for c in col]:
            for key in map(tuple, S.keys[:, n:].tolist()):
                rows.setdefault(key, len(rows))
        self.rows = list(rows)
        self.row_index = rows
        self.row_degree = np.array([2 * sum(r[:n]) + sum(r[n:]) for r in self.rows])
        nb, nr = len(basis), len(rows)
        self.Z = np.zeros((nr, nb), dtype=complex)
        self.Y = np.zeros((n, nr, nb), dtype=complex)
        for c, S in enumerate(cols_Z):
            for key, val in zip(map(tuple, S.keys[:, n:].tolist()), S.coeffs):
                self.Z[rows[key], c] += val
        for i in range(n):
            for c, S in enumerate(cols_Y[i]):
                for key, val in zip(map(tuple, S.keys[:, n:].tolist()), S.coeffs):
                    self.Y[i, rows[key], c] += val
        self.E = np.zeros((nr, nb))
        for c, (iota, j) in enumerate(basis):
            self.E[rows[iota + j], c] = 1.0

    def operator(self, k: np.ndarray) -> np.ndarray:
        """Matrix of ``b -> {N, b e^{ikx}} e^{-ikx}`` (rows: all monomials, cols: basis)."""
        freq = float(np.dot(k, self.omega))
        return -1j * freq * self.E - 1j * np.tensordot(k.astype(float), self.Y, axes=1) + self.Z


@dataclass
class HomologicalSolution:
    F: TFSeries
    Q: TFSeries
    blocks: list


def solve_homological(N: NormalForm, R: TFSeries, certs, m: int, caps: Caps | None = None,
                      K_plus: int | None = None) -> HomologicalSolution:
    """Solve ``{N, F} + R - [R] - Q = 0`` for ``F`` (modes ``0 < |k|``, degree ``<= m``).

    ``certs`` are the small-divisor certificates of the current step (used for
    the per-block diagnostics); ``caps`` bounds the stored correction ``Q``.
    """
    n, d = N.n, N.d
    if float(np.abs(N.grad_g0()).max(initial=0.0)) > 1e-10:
        raise ValueError("normal form has a nonvanishing gradient of g at the origin")
    asm = _Assembly(N, m)
    low = asm.row_degree <= m
    high = ~low
    basis_rows = np.array([asm.row_index[i + j] for i, j in asm.basis])
    high_rows = np.nonzero(high)[0]
    # certified lower bounds for the diagonal blocks: |<k,omega>| for q = 0 and
    # |k| sigma_min(A) for q >= 1 (the block is |k| conj(A) since g is real)
    floors = {}
    for c in certs or ():
        knorm_c = sum(abs(v) for v in c.k)
        q = c.w_class[1] if c.divisor_kind == "matrix" else 0
        val = c.margin + c.bound
        floors[(c.k, q)] = val * knorm_c if q else val
    nb = len(asm.basis)
    R_osc = R.mask(np.any(R.k != 0, axis=1))
    if R_osc.is_zero():
        zero = TFSeries.zero(n, d, Caps(K_plus or 1, m))
        return HomologicalSolution(zero, TFSeries.zero(n, d, caps or Caps(1, m)), [])
    if np.any(R_osc.weighted_degrees() > m):
        raise ValueError("R contains terms above degree m; truncate first")
    modes, inverse = np.unique(R_osc.k, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    basis_pos = {iota + j: c for c, (iota, j) in enumerate(asm.basis)}
    F_keys, F_vals, Q_keys, Q_vals, blocks = [], [], [], [], []
    degrees = sorted(set(asm.degree.tolist()))
    for mi, k in enumerate(modes):
        rhs = np.zeros(nb, dtype=complex)
        sel = np.nonzero(inverse == mi)[0]
        for t in sel:
            rhs[basis_pos[tuple(R_osc.keys[t, n:].tolist())]] = -R_osc.coeffs[t]
        L = asm.operator(k)
        Lb = L[basis_rows]  # square, rows ordered like the basis
        x = np.zeros(nb, dtype=complex)
        kt = tuple(int(v) for v in k)
        for w in degrees:
            cols = np.nonzero(asm.degree == w)[0]
            lower_rows = np.nonzero(asm.degree < w)[0]
            if lower_rows.size and np.abs(Lb[np.ix_(lower_rows, cols)]).max() > TRIANGULAR_TOL * (
                    1.0 + np.abs(Lb).max()):
                raise AssertionError(f"coupling from degree {w} into lower degree at k={kt}")
            done = np.nonzero(asm.degree < w)[0]
            b = rhs[cols] - Lb[np.ix_(cols, done)] @ x[done]
            B = Lb[np.ix_(cols, cols)]
            sv = np.linalg.svd(B, compute_uv=False)
            if sv[-1] == 0.0:
                raise SingularBlockError(f"singular block at k={kt}, degree {w}")
            x[cols] = np.linalg.solve(B, b)
            qs = {sum(asm.basis[c][1]) for c in cols}
            ks = tuple(-v for v in kt)
            bounds = [floors.get((kt, q), floors.get((ks, q))) for q in qs]
            certified = min(bounds) if bounds and None not in bounds else float("nan")
            blocks.append(BlockRecord(kt, int(w), len(cols), float(sv[0] / sv[-1]),
                                      float(sv[-1]), float(certified)))
        for c, (iota, j) in enumerate(asm.basis):
            if x[c] != 0:
                F_keys.append(kt + iota + j)
                F_vals.append(x[c])
        qv = L[high_rows] @ x
        for r, val in zip(high_rows, qv):
            if val != 0:
                Q_keys.append(kt + asm.rows[r])
                Q_vals.append(val)
    Fcaps = Caps(K_plus if K_plus is not None else int(np.abs(modes).sum(axis=1).max()), m)
    F = TFSeries(n, d, np.array(F_keys, dtype=np.int64).reshape(-1, 2 * n + 2 * d), F_vals, Fcaps)
    if caps is None:
        qdeg = int(asm.row_degree.max())
        caps = Caps(Fcaps.kmax, qdeg)
    Q = TFSeries(n, d, np.array(Q_keys, dtype=np.int64).reshape(-1, 2 * n + 2 * d), Q_vals, caps)
    return HomologicalSolution(F, Q, blocks)


def residual_check(N: NormalForm, F: TFSeries, R: TFSeries, Q: TFSeries, dom: DomainParams) -> float:
    """Majorant norm of ``{N, F} + R - [R] - Q`` on ``dom``."""
    NF = poisson_bracket(N.as_series(), F)
    total = linear_combination([(1.0, NF), (1.0, R), (-1.0, average(R)), (-1.0, Q)],
                               NF.caps.union(R.caps).union(Q.caps))
    return majorant_norm(total, dom)


def block_table(blocks) -> str:
    """Fixed-width per-block diagnostic report."""
    lines = [f"{'k':>14} {'deg':>4} {'size':>5} {'cond':>12} {'smin':>12} {'certified':>12}"]
    for b in blocks:
        lines.append(f"{str(b.k):>14} {b.degree:>4d} {b.size:>5d} {b.condition:>12.4e} "
                     f"{b.sigma_min:>12.4e} {b.certified:>12.4e}")
    return "\n".join(lines)
