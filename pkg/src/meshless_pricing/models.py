"""Model definitions: SV (Heston), SVJ (Bates) and SVCJ parameter sets.

Besides the parameter containers this module holds every closed-form scalar
quantity the operators need: the Merton and bivariate jump densities, the
expected relative jump size, payoffs and the Dirichlet data at ``s = 0`` and
``s = S_max``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np


class ModelKind(str, enum.Enum):
    SV = "SV"
    SVJ = "SVJ"
    SVCJ = "SVCJ"


class Right(str, enum.Enum):
    CALL = "call"
    PUT = "put"


class Style(str, enum.Enum):
    EUROPEAN = "european"
    AMERICAN = "american"


class ParameterError(ValueError):
    """Raised when a model parameter set violates its invariants."""


@dataclass(frozen=True)
class JumpLaw:
    """Jump-size law.

    ``lam`` is the Poisson intensity, ``gamma``/``delta`` the mean and standard
    deviation of the log return jump (``delta = 0`` is a point mass, allowed
    for closed-form quantities but not by the densities). ``rho_j`` and ``nu`` are only used by the
    SVCJ model (variance jumps are exponential with mean ``nu``).
    """

    lam: float
    gamma: float
    delta: float
    rho_j: float = 0.0
    nu: float = 0.0

    def __post_init__(self):
        if self.lam < 0:
            raise ParameterError(f"jump intensity must be >= 0, got {self.lam}")
        if self.delta < 0:
            raise ParameterError(f"delta must be >= 0, got {self.delta}")
        if self.nu < 0:
            raise ParameterError(f"nu must be >= 0, got {self.nu}")


@dataclass(frozen=True)
class Payoff:
    right: Right
    strike: float

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.right is Right.CALL:
            return np.maximum(s - self.strike, 0.0)
        return np.maximum(self.strike - s, 0.0)


@dataclass(frozen=True)
class ModelSpec:
    """Full parameter set of one pricing problem.

    Parameters
    ----------
    kind : ModelKind
    r, q : float
        Risk-free rate and continuous dividend yield.
    xi, eta, theta : float
        Mean-reversion rate, long-run variance and vol-of-vol of the variance.
    rho : float
        Correlation of the two Brownian motions.
    strike, maturity : float
    right, style : Right, Style
    jump : JumpLaw, optional
        Required for SVJ and SVCJ, forbidden for SV.
    """

    kind: ModelKind
    r: float
    q: float
    xi: float
    eta: float
    theta: float
    rho: float
    strike: float
    maturity: float
    right: Right = Right.PUT
    style: Style = Style.EUROPEAN
    jump: Optional[JumpLaw] = None

    def __post_init__(self):
        # accept plain strings for the enum fields
        object.__setattr__(self, "kind", ModelKind(self.kind))
        object.__setattr__(self, "right", Right(self.right))
        object.__setattr__(self, "style", Style(self.style))
        if not self.xi > 0 or not self.eta > 0 or not self.theta > 0:
            raise ParameterError("xi, eta and theta must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ParameterError(f"rho must lie in [-1, 1], got {self.rho}")
        if not self.strike > 0 or not self.maturity > 0:
            raise ParameterError("strike and maturity must be positive")
        if self.kind is ModelKind.SV and self.jump is not None:
            raise ParameterError("SV model takes no jump law")
        if self.kind is not ModelKind.SV and self.jump is None:
            raise ParameterError(f"{self.kind.value} model requires a jump law")
        if self.kind is ModelKind.SVCJ:
            if not self.jump.nu > 0:
                raise ParameterError("SVCJ requires nu > 0")
            if self.jump.nu * self.jump.rho_j >= 1.0:
                raise ParameterError("SVCJ requires 1 - nu*rho_j > 0")

    @property
    def payoff(self) -> Payoff:
        return Payoff(self.right, self.strike)

    @property
    def lam(self) -> float:
        return 0.0 if self.jump is None else self.jump.lam

    def with_(self, **changes) -> "ModelSpec":
        """Copy with some fields replaced (``jump`` fields may be passed flat)."""
        jump_fields = {k: changes.pop(k) for k in ("lam", "gamma", "delta", "rho_j", "nu")
                       if k in changes}
        if jump_fields:
            changes["jump"] = replace(self.jump, **jump_fields)
        return replace(self, **changes)


def merton_density(x, law: JumpLaw):
    """Lognormal jump density ``f(x)`` of the multiplicative jump ``x > 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("merton_density is defined for x > 0 only")
    if law.delta == 0:
        raise ParameterError("the jump law is a point mass (delta = 0) and has no density")
    d = law.delta
    return np.exp(-(np.log(x) - law.gamma) ** 2 / (2 * d * d)) / (math.sqrt(2 * math.pi) * x * d)


def svcj_density(zs, zv, law: JumpLaw):
    """Bivariate density of the (return, variance) jump pair in the SVCJ model."""
    zs = np.asarray(zs, dtype=float)
    zv = np.asarray(zv, dtype=float)
    if np.any(zs <= 0):
        raise ValueError("svcj_density requires z_s > 0")
    if np.any(zv < 0):
        raise ValueError("svcj_density requires z_v >= 0")
    if law.delta == 0:
        raise ParameterError("the jump law is a point mass (delta = 0) and has no density")
    d, nu = law.delta, law.nu
    expo = -zv / nu - (np.log(zs) - law.gamma - law.rho_j * zv) ** 2 / (2 * d * d)
    return np.exp(expo) / (math.sqrt(2 * math.pi) * zs * d * nu)


def expected_jump_size(spec: ModelSpec) -> float:
    """Expected relative jump size (kappa for SVJ, kappa_s for SVCJ)."""
    law = spec.jump
    if law is None:
        raise ParameterError("expected_jump_size needs a jump law")
    base = math.exp(law.gamma + 0.5 * law.delta ** 2)
    if spec.kind is ModelKind.SVCJ:
        denom = 1.0 - law.nu * law.rho_j
        if denom <= 0:
            raise ParameterError("kappa_s is infinite for nu*rho_j >= 1")
        return base / denom - 1.0
    return base - 1.0


def drift(spec: ModelSpec) -> float:
    """Risk-neutral drift ``r - q - lambda*kappa`` of the asset."""
    if spec.jump is None:
        return spec.r - spec.q
    return spec.r - spec.q - spec.jump.lam * expected_jump_size(spec)


def boundary_values(spec: ModelSpec, tau: float, s_max: float) -> tuple[float, float]:
    """Dirichlet values ``(V(0), V(S_max))`` at time-to-expiry ``tau``."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    k = spec.strike
    if spec.right is Right.CALL:
        if spec.style is Style.AMERICAN:
            return 0.0, s_max - k
        return 0.0, s_max * math.exp(-spec.q * tau) - k * math.exp(-spec.r * tau)
    if spec.style is Style.AMERICAN:
        return k, 0.0
    return k * math.exp(-spec.r * tau), 0.0
