"""Step parameters of the iteration.

Every quantity follows a one-step recursion from its initial value:

* ``r, beta, gamma, sigma``:  ``x_{nu+1} = x_nu / 2 + x_0 / 4``;
* ``s_{nu+1} = alpha_nu s_nu / 8`` with ``alpha_nu = s_nu**(1/(m+1))``;
* ``mu_{nu+1} = 8**m c_0 mu_nu s_nu**rho`` with ``rho = 1/(2(m+1))``;
* ``K_{nu+1} = (floor(log(1/s_nu)) + 1)**(3 eta)``, ``K_0 = 0``.

In practical mode ``K_{nu+1} = K_base * 2**nu`` and all constants are 1.
The paper-faithful ``K`` is astronomically large and is only used as a number
inside the hypothesis inequalities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

MODES = ("paper", "practical")


def m_from_L(L: float) -> int:
    """Least integer ``m >= (L + sqrt(L**2 + 16 L + 16)) / 4``."""
    if L < 2:
        raise ValueError(f"L must be at least 2, got {L}")
    return math.ceil((L + math.sqrt(L * L + 16 * L + 16)) / 4)


def eta_for(rho: float) -> int:
    """Least integer ``eta`` with ``(1 + rho)**eta > 2``."""
    eta = 1
    while (1 + rho) ** eta <= 2:
        eta += 1
    return eta


@dataclass(frozen=True)
class StepParams:
    """Parameters of step ``nu`` (current values and the ``+`` values it targets)."""

    nu: int
    r: float
    r_plus: float
    s: float
    s_plus: float
    s_minus: float
    alpha: float
    gamma: float
    gamma_plus: float
    mu: float
    mu_plus: float
    mu_minus: float
    beta: float
    beta_plus: float
    sigma: float
    K_plus: int


@dataclass(frozen=True)
class Schedule:
    epsilon: float
    m: int
    n: int
    d: int
    tau: float
    s: float
    r: object  # float or Fraction
    sigma: object = 1.0
    L: float | None = None
    mode: str = "practical"
    K_base: int = 8
    constants: tuple = (1.0,) * 7  # c_0 .. c_6
    beta0: object = field(default=None)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.tau <= self.n - 1:
            raise ValueError(f"tau must exceed n - 1 = {self.n - 1}")
        if not (0 < self.s < 1 and 0 < self.r < 1):
            raise ValueError("need 0 < s < 1 and 0 < r < 1")
        if self.m < 2:
            raise ValueError("m must be at least 2")
        if self.L is not None and self.m < (self.L + math.sqrt(self.L ** 2 + 16 * self.L + 16)) / 4:
            raise ValueError(f"m = {self.m} is below the bound required by L = {self.L}")
        if len(self.constants) != 7 or min(self.constants) <= 0:
            raise ValueError("constants must be seven positive numbers c_0..c_6")
        if self.K_base < 1:
            raise ValueError("K_base must be positive")
        if self.beta0 is None:
            object.__setattr__(self, "beta0", self.s)

    # -- initial values ---------------------------------------------------
    @property
    def exponent(self) -> int:
        """``(m+1)(2d)**m``, the power of gamma in the perturbation bound."""
        return (self.m + 1) * (2 * self.d) ** self.m

    @property
    def rho(self) -> float:
        return 1.0 / (2 * (self.m + 1))

    @property
    def eta(self) -> int:
        return eta_for(self.rho)

    @property
    def q(self) -> float:
        return 1.0 + 1.0 / (self.m + 1)

    @property
    def gamma0(self) -> float:
        return self.epsilon ** (1.0 / (2 * self.m * self.exponent))

    @property
    def mu0(self) -> float:
        return self.epsilon ** (1.0 / (8 * (self.m + 1)))

    @property
    def s0(self) -> float:
        return self.s * self.epsilon ** (1.0 / (8 * (self.m + 1))) * self.gamma0 ** self.exponent

    @property
    def r0(self):
        return self.r

    @property
    def c0(self) -> float:
        return max(self.constants)

    @property
    def mu_star(self) -> float:
        return self.s ** 2 * self.epsilon ** (1.0 / (4 * (self.m + 1))) * self.gamma0 ** (2 * self.exponent)

    # -- recursions ---------------------------------------------------------
    @staticmethod
    def _halving(x0, nu: int):
        x = x0
        for _ in range(nu):
            x = x / 2 + x0 / 4
        return x

    def r_at(self, nu: int):
        return self._halving(self.r, nu)

    def beta_at(self, nu: int):
        return self._halving(self.beta0, nu)

    def gamma_at(self, nu: int):
        return self._halving(self.gamma0, nu)

    def sigma_at(self, nu: int):
        return self._halving(self.sigma, nu)

    def s_at(self, nu: int) -> float:
        if nu < 0:
            return self.s0
        s = self.s0
        for _ in range(nu):
            s = s ** (1.0 + 1.0 / (self.m + 1)) / 8.0
        return s

    def alpha_at(self, nu: int) -> float:
        return self.s_at(nu) ** (1.0 / (self.m + 1))

    def mu_at(self, nu: int) -> float:
        if nu < 0:
            return self.mu0
        mu = self.mu0
        for i in range(nu):
            mu = 8.0 ** self.m * self.c0 * mu * self.s_at(i) ** self.rho
        return mu

    def K_at(self, nu: int) -> int:
        """Fourier cutoff ``K_nu`` (``K_0 = 0``)."""
        if nu <= 0:
            return 0
        if self.mode == "practical":
            return self.K_base * 2 ** (nu - 1)
        return (math.floor(math.log(1.0 / self.s_at(nu - 1))) + 1) ** (3 * self.eta)

    # -- closed forms ---------------------------------------------------------
    def r_closed(self, nu: int):
        half = Fraction(1, 2) if isinstance(self.r, Fraction) else 0.5
        return self.r * (half + half ** (nu + 1))

    def s_closed(self, nu: int) -> float:
        qn = self.q ** nu
        return (1.0 / 8.0) ** ((self.m + 1) * (qn - 1)) * self.s0 ** qn

    def log_s_closed(self, nu: int) -> float:
        qn = self.q ** nu
        return -(self.m + 1) * (qn - 1) * math.log(8.0) + qn * math.log(self.s0)

    def mu_closed(self, nu: int) -> float:
        """Closed form of the ``mu`` recursion.

        The exponent of 1/8 is ``((m+1)(q**nu - 1) - nu) / 2`` with ``q = 1 + 1/(m+1)``.
        """
        qn = self.q ** nu
        return ((8.0 ** self.m * self.c0) ** nu * (1.0 / 8.0) ** (((self.m + 1) * (qn - 1) - nu) / 2)
                * self.s0 ** ((qn - 1) / 2) * self.mu0)

    def perturbation_bound(self, nu: int) -> float:
        """``gamma_nu**((m+1)(2d)**m) s_nu**m mu_nu``."""
        return float(self.gamma_at(nu)) ** self.exponent * self.s_at(nu) ** self.m * self.mu_at(nu)

    def drift_radius(self, nu: int, L: float | None = None) -> float:
        """``(s_{nu-1}**(m-1) mu_{nu-1})**(1/L)`` with ``s_{-1} = s_0``, ``mu_{-1} = mu_0``."""
        L = L if L is not None else (self.L or 2.0)
        return (self.s_at(nu - 1) ** (self.m - 1) * self.mu_at(nu - 1)) ** (1.0 / L)

    def at(self, nu: int) -> StepParams:
        return StepParams(
            nu=nu, r=float(self.r_at(nu)), r_plus=float(self.r_at(nu + 1)),
            s=self.s_at(nu), s_plus=self.s_at(nu + 1), s_minus=self.s_at(nu - 1),
            alpha=self.alpha_at(nu), gamma=float(self.gamma_at(nu)),
            gamma_plus=float(self.gamma_at(nu + 1)), mu=self.mu_at(nu), mu_plus=self.mu_at(nu + 1),
            mu_minus=self.mu_at(nu - 1), beta=float(self.beta_at(nu)),
            beta_plus=float(self.beta_at(nu + 1)), sigma=float(self.sigma_at(nu)),
            K_plus=self.K_at(nu + 1))


def init_schedule(epsilon: float, n: int, d: int, tau: float, s: float, r, m: int | None = None,
                  L: float | None = None, mode: str = "practical", K_base: int = 8,
                  constants=None, sigma=1.0) -> Schedule:
    """Schedule from ``m`` or from the convexity exponent ``L`` (then ``m`` is the least admissible)."""
    if m is None:
        if L is None:
            raise ValueError("give m or L")
        m = m_from_L(L)
    if constants is None:
        constants = (1.0,) * 7
    return Schedule(epsilon=epsilon, m=int(m), n=n, d=d, tau=tau, s=s, r=r, sigma=sigma, L=L,
                    mode=mode, K_base=K_base, constants=tuple(float(c) for c in constants))
