"""Factor weights as a function of the per-frame information score.

The association (and bias-error) weight is a logistic squash of the score:
near zero when the frame carries no corner information, near one when it is
rich. Odometry and prior weights move the other way, scaled by the number of
associations so the prior side can balance a large stack of association
residuals, with +1 regularizations keeping every weight strictly positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class WeightConfig:
    """Squash schedule for the information score.

    Variant "a" shifts the score by ``lambda_a`` (a smoothed step whose 0.5
    crossing sits at ``lambda_a``). Variant "b" rescales the active input
    span ``h`` of the logistic (default 12, i.e. [-6, 6]) onto the score
    range [0, lambda_b]. Unset lambdas derive from ``s_max_hint``: lambda_a
    defaults to half of it, lambda_b to the hint itself.
    """

    phi_variant: str = "a"
    s_max_hint: float = 60.0
    lambda_a: float | None = None
    lambda_b: float | None = None
    h: float = 12.0

    def __post_init__(self):
        variant = str(self.phi_variant).lower()
        if variant not in ("a", "b"):
            raise ValueError(f"phi_variant must be 'a' or 'b', got {self.phi_variant!r}")
        object.__setattr__(self, "phi_variant", variant)
        if self.lambda_a is None:
            object.__setattr__(self, "lambda_a", self.s_max_hint / 2.0)
        if self.lambda_b is None:
            object.__setattr__(self, "lambda_b", float(self.s_max_hint))
        if self.lambda_a <= 0 or self.lambda_b <= 0:
            raise ValueError("lambda_a and lambda_b must be positive")
        if self.h <= 0:
            raise ValueError("h must be positive")


@dataclass(frozen=True)
class FrameWeights:
    """Weights for one frame's factors; ``w_a`` and ``w_e`` are equal by
    construction."""

    w_a: float
    w_e: float
    w_o: float
    w_p: float

    @classmethod
    def uniform(cls, value: float) -> "FrameWeights":
        return cls(value, value, value, value)


def phi(s: float, cfg: WeightConfig) -> float:
    """Logistic input for an information score ``s >= 0``."""
    if cfg.phi_variant == "a":
        return s - cfg.lambda_a
    return (cfg.h / cfg.lambda_b) * s - cfg.h / 2.0


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


# Keep weights strictly inside (0, 1) even when the logistic saturates in
# float arithmetic; zero weights would invalidate their factors.
_W_FLOOR = 1e-300
_W_CEIL = 1.0 - 1e-16


def weight_association(s: float, cfg: WeightConfig) -> float:
    """Association weight in (0, 1), increasing in the score."""
    return min(max(_logistic(phi(s, cfg)), _W_FLOOR), _W_CEIL)


def frame_weights(s: float, k: int, sigma_xy: float, cfg: WeightConfig) -> FrameWeights:
    """All four factor weights for a frame with score ``s``, ``k`` association
    pairs, and GPS noise figure ``sigma_xy``."""
    if k < 0:
        raise ValueError(f"pair count must be non-negative, got {k}")
    if sigma_xy < 0:
        raise ValueError(f"sigma_xy must be non-negative, got {sigma_xy}")
    w_a = weight_association(s, cfg)
    w_o = (k + 1) * (2.0 - w_a)
    w_p = w_o / (sigma_xy + 1.0)
    return FrameWeights(w_a=w_a, w_e=w_a, w_o=w_o, w_p=w_p)
