"""Polar-coordinate goal-seeking controller for a unicycle robot.

The relative goal pose [dx, dy, dpsi] is expressed in polar form

    rho   = sqrt(dx^2 + dy^2)
    alpha = atan2(dy, dx)            bearing to the goal point
    beta  = wrap(dpsi - alpha)       goal heading relative to that bearing

and mapped to raw commands

    v = v_max * (1 - exp(-k_rho * rho))
    w = k_alpha * alpha + k_beta * beta

then shaped by three heuristics (slow near the goal, damp speed under
heading error, switch to pure orientation correction for final alignment)
and finally limited with a common scale factor so the commanded curvature
is preserved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import RelPose2, Twist, normalize_angle

DEGENERATE_RHO = 1e-6


@dataclass(frozen=True)
class Polar:
    """Polar form of a relative goal pose."""

    rho: float
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rho) and math.isfinite(self.alpha)
                and math.isfinite(self.beta)):
            raise ValueError("polar components must be finite")
        if self.rho < 0.0:
            raise ValueError("rho must be non-negative")


@dataclass(frozen=True)
class ControlGains:
    """Controller gains and shaping thresholds.

    Stability of the underlying law needs k_rho > 0, k_alpha > 0,
    k_beta < 0 and k_alpha - k_rho > 0.
    """

    k_rho: float = 1.0
    k_alpha: float = 2.0
    k_beta: float = -0.3
    v_max: float = 1.4
    w_max: float = 1.0
    rho_slow: float = 1.0
    rho_align: float = 0.05
    k_final: float = 2.5
    alpha_damp_exponent: float = 2.0

    def __post_init__(self) -> None:
        if self.k_rho <= 0.0:
            raise ValueError("k_rho must be positive")
        if self.k_alpha <= 0.0:
            raise ValueError("k_alpha must be positive")
        if self.k_beta >= 0.0:
            raise ValueError("k_beta must be negative")
        if self.k_alpha - self.k_rho <= 0.0:
            raise ValueError("stability requires k_alpha > k_rho")
        if self.v_max <= 0.0 or self.w_max <= 0.0:
            raise ValueError("velocity limits must be positive")
        if not 0.0 < self.rho_align < self.rho_slow:
            raise ValueError("need 0 < rho_align < rho_slow")
        if self.k_final <= 0.0:
            raise ValueError("k_final must be positive")
        if self.alpha_damp_exponent <= 0.0:
            raise ValueError("alpha damp exponent must be positive")


def to_polar(xi: RelPose2) -> Polar:
    """Polar form of a relative pose; near-zero rho degenerates to alpha=0."""
    rho = math.hypot(xi.dx, xi.dy)
    if rho < DEGENERATE_RHO:
        return Polar(rho, 0.0, normalize_angle(xi.dpsi))
    alpha = math.atan2(xi.dy, xi.dx)
    beta = normalize_angle(xi.dpsi - alpha)
    return Polar(rho, alpha, beta)


def raw_command(polar: Polar, gains: ControlGains) -> Twist:
    """Unshaped control law output."""
    v = gains.v_max * (1.0 - math.exp(-gains.k_rho * polar.rho))
    w = gains.k_alpha * polar.alpha + gains.k_beta * polar.beta
    return Twist(v, w)


def shape_command(raw: Twist, polar: Polar, xi: RelPose2,
                  gains: ControlGains) -> Twist:
    """Apply the three shaping heuristics in order.

    1. Scale v by min(1, rho / rho_slow).
    2. Scale v by max(0, cos(alpha)) ** alpha_damp_exponent.
    3. Inside rho_align, scale v by rho / rho_align and replace w with
       pure goal-heading correction k_final * wrap(dpsi).
    """
    v = raw.v * min(1.0, polar.rho / gains.rho_slow)
    v *= max(0.0, math.cos(polar.alpha)) ** gains.alpha_damp_exponent
    w = raw.w
    if polar.rho < gains.rho_align:
        v *= polar.rho / gains.rho_align
        w = gains.k_final * normalize_angle(xi.dpsi)
    return Twist(v, w)


def limit_command(cmd: Twist, gains: ControlGains) -> Twist:
    """Scale v and w together so both limits hold and curvature is kept."""
    scale = 1.0
    if cmd.v != 0.0:
        scale = min(scale, gains.v_max / abs(cmd.v))
    if cmd.w != 0.0:
        scale = min(scale, gains.w_max / abs(cmd.w))
    return Twist(scale * cmd.v, scale * cmd.w)


def command(xi: RelPose2, gains: ControlGains) -> tuple[Polar, Twist, Twist, Twist]:
    """Full chain: polar form, raw, shaped, limited command."""
    polar = to_polar(xi)
    raw = raw_command(polar, gains)
    shaped = shape_command(raw, polar, xi, gains)
    limited = limit_command(shaped, gains)
    return polar, raw, shaped, limited
