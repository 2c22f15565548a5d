"""b-dependent scalar functions of the FENE configuration ball.

Everything here is a pure function of the regularized distance
``rho = b - |m|^2`` and the model parameters.  Arrays are accepted wherever
a scalar is, and evaluation is always in float64.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from fenelab.errors import DomainError, RegimeError

# Spring constant of the scaled system; documentation only.
SPRING_CONST = 1.0


class WeightRegime(enum.Enum):
    SUB2 = "Sub2"
    CRITICAL = "Critical"
    SUPER2 = "Super2"
    ALT_THETA = "AltTheta"


@dataclass(frozen=True)
class ModelParams:
    b: float
    n_conf: int = 2
    theta: Optional[float] = None
    spring_const: float = SPRING_CONST

    def __post_init__(self):
        if not np.isfinite(self.b) or self.b <= 0:
            raise ValueError(f"b must be positive, got {self.b}")
        if int(self.n_conf) != self.n_conf or self.n_conf < 2:
            raise ValueError(f"n_conf must be an integer >= 2, got {self.n_conf}")
        if self.theta is not None:
            if self.b < 6:
                raise ValueError("theta (mu0 variant) requires b >= 6")
            if not -1.0 < self.theta < 1.0:
                raise ValueError(f"theta must lie in (-1, 1), got {self.theta}")
        if self.spring_const != SPRING_CONST:
            raise ValueError("only the scaled system (spring constant 1) is supported")

    @property
    def regime(self) -> WeightRegime:
        return regime(self)

    @property
    def radius(self) -> float:
        return float(np.sqrt(self.b))


def regime(params: ModelParams) -> WeightRegime:
    if params.theta is not None:
        return WeightRegime.ALT_THETA
    if params.b < 2:
        return WeightRegime.SUB2
    if params.b == 2:
        return WeightRegime.CRITICAL
    return WeightRegime.SUPER2


@dataclass(frozen=True)
class KappaMatrix:
    """Velocity-gradient matrix acting on configurations; trace-free."""

    entries: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("kappa must be a square matrix")
        tr = np.trace(a)
        scale = max(1.0, float(np.abs(a).max()))
        if abs(tr) > 1e-12 * scale:
            raise ValueError(f"kappa must be trace-free, trace={tr:.3e}")
        a[-1, -1] = -np.trace(a[:-1, :-1])
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @classmethod
    def traceless(cls, entries) -> "KappaMatrix":
        a = np.array(entries, dtype=float)
        n = a.shape[0]
        return cls(a - np.trace(a) / n * np.eye(n))

    @classmethod
    def zero(cls, n: int = 2) -> "KappaMatrix":
        return cls(np.zeros((n, n)))

    @classmethod
    def shear(cls, rate: float = 1.0) -> "KappaMatrix":
        return cls(np.array([[0.0, rate], [0.0, 0.0]]))

    @classmethod
    def extensional(cls, rate: float = 1.0) -> "KappaMatrix":
        return cls(np.array([[rate, 0.0], [0.0, -rate]]))

    @classmethod
    def from_components(cls, k11: float, k12: float, k21: float) -> "KappaMatrix":
        return cls(np.array([[k11, k12], [k21, -k11]]))

    @property
    def components(self) -> tuple[float, float, float]:
        """(k11, k12, k21) of a 2x2 trace-free matrix."""
        a = self.entries
        return float(a[0, 0]), float(a[0, 1]), float(a[1, 0])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def quadratic(self, m) -> np.ndarray:
        """kappa m . m for points m of shape (..., N)."""
        m = np.asarray(m, dtype=float)
        return np.einsum("...i,ij,...j->...", m, self.entries, m)

    def close_to(self, other: "KappaMatrix", tol: float = 1e-14) -> bool:
        return bool(np.abs(self.entries - other.entries).max() <= tol)


@dataclass(frozen=True)
class WeightValues:
    nu: np.ndarray
    mu: np.ndarray
    mu_star: np.ndarray
    mu0: Optional[np.ndarray] = None


def log_e_over(rho):
    """ln(e/rho) evaluated as 1 - ln(rho)."""
    return 1.0 - np.log(rho)


def rho(m, b: float):
    m = np.asarray(m, dtype=float)
    r2 = np.sum(m * m, axis=-1)
    if np.any(r2 > b):
        raise DomainError("point outside the configuration ball")
    return b - r2


def _check_rho(rho_val, b, allow_zero):
    rho_val = np.asarray(rho_val, dtype=float)
    if allow_zero:
        bad = rho_val < 0
    else:
        bad = rho_val <= 0
    if np.any(bad) or np.any(rho_val > b * (1 + 1e-14)):
        raise DomainError("rho outside (0, b]" if not allow_zero else "rho outside [0, b]")
    return rho_val


def _pow(rho_val, p):
    with np.errstate(divide="ignore"):
        return np.power(rho_val, p)


def nu(rho_val, params: ModelParams):
    r = _check_rho(rho_val, params.b, allow_zero=True)
    b = params.b
    if b < 2:
        out = _pow(r, b / 2)
    elif b == 2:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r > 0, r * log_e_over(np.where(r > 0, r, 1.0)), 0.0)
    else:
        out = r.copy()
    return out


def mu(rho_val, params: ModelParams):
    """The b-dependent energy weight (ignores theta)."""
    r = _check_rho(rho_val, params.b, allow_zero=True)
    b = params.b
    if b < 2:
        return _pow(r, b / 2)
    if b == 2:
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, r * log_e_over(safe) ** 2, 0.0)
    return _pow(r, 2 - b / 2)


def mu_star(rho_val, params: ModelParams):
    r = _check_rho(rho_val, params.b, allow_zero=False)
    b = params.b
    if b < 2:
        return r ** (b / 2 - 2)
    if b == 2:
        return 1.0 / r
    return r ** (-b / 2)


def mu0(rho_val, params: ModelParams):
    if params.theta is None:
        raise RegimeError("mu0 requires theta")
    r = _check_rho(rho_val, params.b, allow_zero=True)
    return _pow(r, params.theta)


def mu_active(rho_val, params: ModelParams):
    """Weight of the solution space actually in use: mu0 if theta is set, else mu."""
    if params.theta is not None:
        return mu0(rho_val, params)
    return mu(rho_val, params)


def mu_star_active(rho_val, params: ModelParams):
    if params.theta is not None:
        r = _check_rho(rho_val, params.b, allow_zero=False)
        return r ** (params.theta - 2)
    return mu_star(rho_val, params)


def eval_weights(rho_val, params: ModelParams) -> WeightValues:
    r = _check_rho(rho_val, params.b, allow_zero=False)
    m0 = mu0(r, params) if params.theta is not None else None
    return WeightValues(nu=nu(r, params), mu=mu(r, params), mu_star=mu_star(r, params), mu0=m0)


def reaction_parts(rho_val, params: ModelParams):
    """Radial factors (c1, c2) with K = c1 + 2 c2 (kappa m . m)."""
    r = _check_rho(rho_val, params.b, allow_zero=False)
    n, b = params.n_conf, params.b
    reg = regime(params)
    if reg is WeightRegime.SUB2:
        z = np.zeros_like(r)
        return z, z.copy()
    if reg is WeightRegime.CRITICAL:
        ell = log_e_over(r)
        return n * ell, ell
    if reg is WeightRegime.SUPER2:
        p = (b / 2 - 1) * r ** (1 - b / 2)
        return n * p, p
    p = r ** (params.theta - 1)
    return n * (b / 2 - 1) * p, (1 - params.theta) * p


def _rho_for(m, params, rho_val):
    # Near the rim b - |m|^2 cancels; callers holding an accurate rho pass it.
    if rho_val is None:
        return rho(m, params.b)
    return np.asarray(rho_val, dtype=float)


def k_coeff(m, kappa: KappaMatrix, params: ModelParams, rho_val=None):
    reg = regime(params)
    if reg is WeightRegime.ALT_THETA:
        raise RegimeError("K is defined for the mu weight; use k0_coeff for the theta variant")
    m = np.asarray(m, dtype=float)
    r = _rho_for(m, params, rho_val)
    if reg is WeightRegime.SUB2:
        return np.zeros_like(r)
    if np.any(r <= 0):
        raise DomainError("K is unbounded on the boundary for b >= 2")
    c1, c2 = reaction_parts(r, params)
    return c1 + 2 * c2 * kappa.quadratic(m)


def k0_coeff(m, kappa: KappaMatrix, params: ModelParams, rho_val=None):
    if regime(params) is not WeightRegime.ALT_THETA:
        raise RegimeError("K0 requires the theta variant (b >= 6)")
    m = np.asarray(m, dtype=float)
    r = _rho_for(m, params, rho_val)
    if np.any(r <= 0):
        raise DomainError("K0 is unbounded on the boundary")
    c1, c2 = reaction_parts(r, params)
    return c1 + 2 * c2 * kappa.quadratic(m)


def c0(b: float) -> float:
    """Boundary-flux constant of the mass identity, b >= 2."""
    if b < 2:
        raise DomainError("C0 is only defined for b >= 2")
    return -2.0 if b == 2 else 2.0 - b


def potential(m, params: ModelParams):
    m = np.asarray(m, dtype=float)
    r = rho(m, params.b)
    if np.any(r <= 0):
        raise DomainError("FENE potential is infinite on the boundary")
    b = params.b
    return -(params.spring_const * b / 2) * np.log1p(-np.sum(m * m, axis=-1) / b)


# --- ratio nu / mu_active -----------------------------------------------------
# Its L2_mu pairing with w is the mass of f = nu w, so keeping it in the
# discrete space makes mass conservation exact.

def nu_over_mu(rho_val, params: ModelParams):
    r = _check_rho(rho_val, params.b, allow_zero=True)
    reg = regime(params)
    if reg is WeightRegime.SUB2:
        return np.ones_like(r)
    if reg is WeightRegime.CRITICAL:
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, 1.0 / log_e_over(safe), 0.0)
    if reg is WeightRegime.SUPER2:
        return _pow(r, params.b / 2 - 1)
    return _pow(r, 1 - params.theta)


def d_nu_over_mu(rho_val, params: ModelParams):
    """Derivative of nu/mu_active with respect to rho."""
    r = _check_rho(rho_val, params.b, allow_zero=False)
    reg = regime(params)
    if reg is WeightRegime.SUB2:
        return np.zeros_like(r)
    if reg is WeightRegime.CRITICAL:
        return 1.0 / (r * log_e_over(r) ** 2)
    if reg is WeightRegime.SUPER2:
        p = params.b / 2 - 1
        return p * r ** (p - 1)
    p = 1 - params.theta
    return p * r ** (p - 1)


def mu_times_ratio_slope(params: ModelParams) -> float:
    """mu_active * d(nu/mu_active)/d rho, which is constant for b >= 2."""
    reg = regime(params)
    if reg is WeightRegime.SUB2:
        raise RegimeError("nu/mu is constant for b < 2")
    if reg is WeightRegime.CRITICAL:
        return 1.0
    if reg is WeightRegime.SUPER2:
        return params.b / 2 - 1
    return 1.0 - params.theta


def rho_from_nu_over_mu(s, params: ModelParams):
    """Inverse of nu_over_mu for b >= 2 (strictly increasing in rho)."""
    s = np.asarray(s, dtype=float)
    reg = regime(params)
    if reg is WeightRegime.SUB2:
        raise RegimeError("nu/mu is constant for b < 2")
    if np.any(s < 0):
        raise DomainError("negative ratio value")
    if reg is WeightRegime.CRITICAL:
        with np.errstate(divide="ignore"):
            return np.where(s > 0, np.exp(1.0 - 1.0 / np.where(s > 0, s, 1.0)), 0.0)
    if reg is WeightRegime.SUPER2:
        return s ** (1.0 / (params.b / 2 - 1))
    return s ** (1.0 / (1 - params.theta))


def d_rho_d_ratio(s, params: ModelParams):
    """d rho / d s where s = nu/mu_active."""
    s = np.asarray(s, dtype=float)
    reg = regime(params)
    if reg is WeightRegime.CRITICAL:
        r = rho_from_nu_over_mu(s, params)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(s > 0, r / np.where(s > 0, s, 1.0) ** 2, 0.0)
    if reg is WeightRegime.SUPER2:
        p = 1.0 / (params.b / 2 - 1)
    elif reg is WeightRegime.ALT_THETA:
        p = 1.0 / (1 - params.theta)
    else:
        raise RegimeError("nu/mu is constant for b < 2")
    with np.errstate(divide="ignore"):
        return p * s ** (p - 1)
