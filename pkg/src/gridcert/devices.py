"""Bus dynamic models and the series-RL line transfer function.

Every device is a transfer function from the per-unit power imbalance at
its bus to the frequency it imposes:

* synchronous generator  w0 (1 + xi_sm s)(1 + T_G s) / (2 H T_G s^2 + 2 H s + k_g)
* synchronous condenser  w0 (1 + xi_sm s) / (2 H s)
* filtered droop         m_p w0 / (T_p s + 1)
* PD droop               m_p w0 (1 + xi_c s) / (T_p s + 1)

The damper-winding coefficient xi_sm can either be supplied directly or be
derived from machine circuit parameters via :func:`xi_sm`.  Line dynamics
under a uniform R/X ratio rho reduce to the scalar second-order function
mu(s) built by :func:`mu`.

Parameter records are immutable; constructors are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

from .tfcore import Polynomial, RationalTF


class DeviceError(Exception):
    """Base class for device-model errors."""


class DegenerateGeometry(DeviceError):
    """Damper circuit outside the reduced-order model's validity region."""


class NonPositiveRho(DeviceError):
    """R/X ratio <= 0: the line-dynamics certificate framework does not apply."""


@dataclass(frozen=True)
class DamperCircuitParams:
    """d-axis damper circuit parameters, per unit on the machine base.

    l_dd, r_dd are the damper winding inductance and resistance; l_ad_sub
    and l_aq_sub are the d- and q-axis subtransient magnetizing
    inductances; omega_base is the electrical base frequency in rad/s.
    """

    l_dd: float
    r_dd: float
    l_ad_sub: float
    l_aq_sub: float
    omega_base: float

    def __post_init__(self):
        if min(self.l_dd, self.r_dd, self.l_ad_sub, self.l_aq_sub) <= 0:
            raise ValueError("damper circuit parameters must be positive")
        if self.omega_base <= 0:
            raise ValueError("omega_base must be positive")


@dataclass(frozen=True)
class MachineParams:
    """Synchronous machine: inertia H (s), turbine constant T_G (s),
    governor gain k_g (p.u.), damper coefficient xi_sm (s).

    T_G = 0 is accepted for generators and drops the turbine lag, which
    makes the generator coefficient-identical to droop control with
    m_p = 1/k_g and T_p = 2H/k_g.
    """

    H: float
    T_G: float = 0.0
    k_g: float = 0.0
    xi_sm: float = 0.0
    omega0: float = 2 * math.pi * 60.0
    is_condenser: bool = False

    def __post_init__(self):
        if self.H <= 0:
            raise ValueError("H must be positive")
        if self.xi_sm < 0:
            raise ValueError("xi_sm must be nonnegative")
        if not self.is_condenser:
            if self.T_G < 0:
                raise ValueError("T_G must be nonnegative")
            if self.k_g <= 0:
                raise ValueError("k_g must be positive for a generator")


@dataclass(frozen=True)
class ConverterParams:
    """Grid-forming converter: droop gain m_p (p.u.), filter constant
    T_p (s), damper-emulation coefficient xi_c (s); xi_c = 0 is plain droop.

    T_p = 0 gives an improper frequency transfer function and is only
    usable through the angle-form realization g(s)/s.
    """

    m_p: float
    T_p: float
    xi_c: float = 0.0
    omega0: float = 2 * math.pi * 60.0

    def __post_init__(self):
        if self.m_p <= 0:
            raise ValueError("m_p must be positive")
        if self.T_p < 0 or self.xi_c < 0:
            raise ValueError("T_p and xi_c must be nonnegative")


@dataclass(frozen=True)
class LineDynamicsParams:
    """Uniform R/X ratio rho (> 0) and nominal frequency omega0 (rad/s)."""

    rho: float
    omega0: float = 2 * math.pi * 60.0

    def __post_init__(self):
        if self.rho <= 0:
            raise NonPositiveRho(f"rho = {self.rho} must be positive")
        if self.omega0 <= 0:
            raise ValueError("omega0 must be positive")


def xi_sm_per_unit(p: DamperCircuitParams) -> float:
    """Damper coefficient in per-unit form, straight from the circuit:

        l_dd * l_ad''^2 / (r_dd * (l_dd - l_ad'') * (l_aq'' - l_ad''))

    Requires l_dd > l_ad'' and l_aq'' != l_ad'' (saliency); otherwise the
    reduced-order damping model does not apply.
    """
    if p.l_dd <= p.l_ad_sub:
        raise DegenerateGeometry(
            f"l_dd = {p.l_dd} must exceed l_ad'' = {p.l_ad_sub}"
        )
    if p.l_aq_sub == p.l_ad_sub:
        raise DegenerateGeometry(
            "l_aq'' equals l_ad''; round-rotor machines must supply xi_sm directly"
        )
    return (p.l_dd * p.l_ad_sub**2) / (
        p.r_dd * (p.l_dd - p.l_ad_sub) * (p.l_aq_sub - p.l_ad_sub)
    )


def xi_sm(p: DamperCircuitParams) -> float:
    """Damper-winding coefficient in seconds.

    The per-unit circuit expression is converted to time units by dividing
    by the electrical base frequency omega_base.
    """
    return xi_sm_per_unit(p) / p.omega_base


def bus_transfer(device: MachineParams | ConverterParams) -> RationalTF:
    """Transfer function from bus power imbalance to imposed frequency."""
    if isinstance(device, MachineParams):
        w0, xi = device.omega0, device.xi_sm
        if device.is_condenser:
            return RationalTF([w0, w0 * xi], [0.0, 2 * device.H])
        num = Polynomial([w0, w0 * xi]).mul(Polynomial([1.0, device.T_G]))
        den = Polynomial([device.k_g, 2 * device.H, 2 * device.H * device.T_G])
        return RationalTF(num, den)
    if isinstance(device, ConverterParams):
        w0 = device.omega0
        num = [device.m_p * w0, device.m_p * w0 * device.xi_c]
        return RationalTF(num, [1.0, device.T_p])
    raise TypeError(f"unknown device type {type(device).__name__}")


def mu(p: LineDynamicsParams) -> RationalTF:
    """Series-RL line dynamics under uniform R/X ratio:

        mu(s) = w0^2 / (s^2 + 2 w0 rho s + w0^2 (1 + rho^2))

    with poles at -rho*w0 +/- j*w0.
    """
    w0, rho = p.omega0, p.rho
    return RationalTF([w0**2], [w0**2 * (1 + rho**2), 2 * w0 * rho, 1.0])


def resonant_frequency(rho: float, omega0: float) -> float:
    """Peak-magnitude frequency of mu, w0*sqrt(1 - rho^2); needs rho < 1."""
    if rho >= 1:
        raise ValueError("no real resonant frequency for rho >= 1")
    return omega0 * math.sqrt(1 - rho**2)


def natural_frequency(rho: float, omega0: float) -> float:
    """Natural frequency of mu, w0*sqrt(1 + rho^2)."""
    return omega0 * math.sqrt(1 + rho**2)
