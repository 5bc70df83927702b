"""Model parameterization for the affine SV model with variance-proportional jumps."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class ModelParams:
    """Heston variance with double-exponential price jumps of intensity proportional to V.

    Under Q the jump compensator is ``V_t * (c_minus e^{-lambda_minus|x|} 1{x<0}
    + c_plus e^{-lambda_plus x} 1{x>0}) dx``. Under P the same diffusion is used
    without jumps.
    """

    theta_v: float
    kappa_v: float
    sigma_v: float
    rho: float
    lambda_minus: float = 50.0
    lambda_plus: float = 100.0
    c_minus: float = 0.9 * 50.0**3 / 2
    c_plus: float = 0.1 * 100.0**3 / 2
    x0: float = 2500.0

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            if not math.isfinite(val):
                raise ValueError(f"{f.name} must be finite, got {val!r}")
        if self.theta_v <= 0:
            raise ValueError("theta_v must be positive")
        if self.kappa_v <= 0:
            raise ValueError("kappa_v must be positive")
        if self.sigma_v < 0:
            raise ValueError("sigma_v must be nonnegative")
        if abs(self.rho) > 1:
            raise ValueError("rho must lie in [-1, 1]")
        if self.lambda_minus <= 1:
            raise ValueError("lambda_minus must exceed 1 for e^x to be integrable")
        if self.lambda_plus <= 0:
            raise ValueError("lambda_plus must be positive")
        if self.c_minus < 0 or self.c_plus < 0:
            raise ValueError("jump scale constants must be nonnegative")
        if self.x0 <= 0:
            raise ValueError("x0 must be positive")

    @property
    def feller_ok(self) -> bool:
        return self.sigma_v**2 <= 2 * self.kappa_v * self.theta_v

    @property
    def jump_variation(self) -> float:
        """Jump quadratic variation per unit of V, i.e. the second derivative of the jump transform at 0."""
        return 2 * self.c_minus / self.lambda_minus**3 + 2 * self.c_plus / self.lambda_plus**3

    def without_jumps(self) -> "ModelParams":
        return replace(self, c_minus=0.0, c_plus=0.0)

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


def _case(kappa_v, sigma_v):
    return ModelParams(theta_v=0.02, kappa_v=kappa_v, sigma_v=sigma_v, rho=-0.9)


# S: half-life six months, M: one month, F: ten business days.
CASES = {
    "S": _case(1.39, 0.15),
    "M": _case(7.90, 0.40),
    "F": _case(17.50, 0.70),
}


def named_case(name: str) -> ModelParams:
    try:
        return CASES[name.upper()]
    except KeyError:
        raise ValueError(f"unknown case {name!r}; expected one of {sorted(CASES)}") from None
