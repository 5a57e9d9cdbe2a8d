"""Closed-form classical results for the scaled DOPO equations.

All functions are pure.  They serve both as a physics API and as the oracle
suite the stochastic engine is checked against.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    BranchAbsentError,
    ComplexBranchError,
    DomainError,
    NoFiniteKInstabilityError,
)


class DispersionResult(NamedTuple):
    """Growth rates of a signal perturbation at one wavenumber."""

    lambda_plus: complex
    lambda_minus: complex


@dataclass(frozen=True)
class HomogeneousSolution:
    a0_st: complex
    a1_st: complex
    branch: int = +1


class SqueezingDirection(NamedTuple):
    phi_plus: float
    phi_minus: float


class BelowThreshold(NamedTuple):
    xminus_var: float
    xplus_var: float
    v_twin: float


def critical_wavenumber(delta1: float) -> float:
    """Wavenumber of maximum linear gain, ``sqrt(-delta1/2)``."""
    if delta1 >= 0:
        raise NoFiniteKInstabilityError(
            f"delta1={delta1} >= 0: the instability is at zero wavenumber")
    return math.sqrt(-delta1 / 2.0)


def threshold(delta0: float, delta1: float) -> float:
    if delta1 < 0:
        return math.sqrt(1.0 + delta0**2)
    return math.sqrt((1.0 + delta0**2) * (1.0 + delta1**2))


def dispersion(k, pump_mod, delta1) -> DispersionResult:
    """Linear growth rates ``-1 +/- sqrt(|A0|^2 - (delta1 + 2k^2)^2)``.

    Returns real values when the radicand is non-negative, complex otherwise.
    Works elementwise on arrays.
    """
    if np.any(np.asarray(pump_mod) < 0):
        raise DomainError("pump_mod must be non-negative")
    detuning = delta1 + 2.0 * np.asarray(k, dtype=float) ** 2
    rad = np.asarray(pump_mod, dtype=float) ** 2 - detuning**2
    if np.ndim(rad) == 0:
        root = math.sqrt(rad) if rad >= 0 else cmath.sqrt(rad)
    else:
        root = np.sqrt(rad.astype(complex))
        if np.all(rad >= 0):
            root = root.real
    return DispersionResult(-1.0 + root, -1.0 - root)


def trivial_homogeneous(pump_E: float, delta0: float) -> HomogeneousSolution:
    return HomogeneousSolution(complex(pump_E / (1.0 + 1j * delta0)), 0j, +1)


def signal_intensity_half(pump_E: float, delta0: float, delta1: float) -> float:
    """``|A1|^2 / 2`` on the nonzero homogeneous branch (may be negative)."""
    rad = pump_E**2 - (delta0 + delta1) ** 2
    if rad < 0:
        return -math.inf
    return -(1.0 - delta0 * delta1) + math.sqrt(rad)


def nonzero_homogeneous(pump_E: float, delta0: float, delta1: float,
                        branch: int = +1) -> HomogeneousSolution:
    """Nonzero homogeneous steady state.

    Eliminating the pump from the stationary equations gives
    ``(rho + 1 - d0*d1)^2 + (d0 + d1)^2 = E^2`` with ``rho = |A1|^2/2``.  The
    pump follows as ``E(1 + i d1) / ((1 + i d0)(1 + i d1) + rho)`` and the
    signal from the pump equation, principal square root, sign ``branch``.
    """
    if branch not in (+1, -1):
        raise ValueError("branch must be +1 or -1")
    rho = signal_intensity_half(pump_E, delta0, delta1)
    if not rho > 0:
        raise BranchAbsentError(
            f"no nonzero homogeneous solution at E={pump_E} (rho={rho:.6g})")
    denom = (1 + 1j * delta0) * (1 + 1j * delta1) + rho
    a0 = pump_E * (1 + 1j * delta1) / denom
    a1 = branch * cmath.sqrt(2.0 * (pump_E - (1 + 1j * delta0) * a0))
    return HomogeneousSolution(complex(a0), complex(a1), branch)


def stationary_residual(a0, a1, pump_E, delta0, delta1) -> float:
    """Max-norm residual of the noiseless homogeneous field equations."""
    r0 = -(1 + 1j * delta0) * a0 + pump_E - 0.5 * a1 * a1
    r1 = -(1 + 1j * delta1) * a1 + a0 * np.conj(a1)
    return float(max(abs(r0), abs(r1)))


def squeezing_direction(k: float, a0_st: complex, delta1: float) -> SqueezingDirection:
    """Phases of the eigen-combinations ``exp(i Phi) dA(k) +/- dA*(-k)``.

    ``V_+`` is the amplified and ``V_-`` the damped combination.
    """
    detuning = delta1 + 2.0 * k * k
    rad = abs(a0_st) ** 2 - detuning**2
    if rad < 0 or a0_st == 0:
        raise ComplexBranchError(
            f"|A0|^2 < (delta1 + 2k^2)^2 at k={k}: eigen-directions are complex")
    root = math.sqrt(rad)
    e_plus = -(1j * detuning - root) / a0_st
    e_minus = (1j * detuning + root) / a0_st
    return SqueezingDirection(cmath.phase(e_plus), cmath.phase(e_minus))


def mode_pair_matrix(k: float, a0_st: complex, delta1: float) -> np.ndarray:
    """Linearised drift of ``(dA(k), dA*(-k))`` about a homogeneous pump."""
    detuning = delta1 + 2.0 * k * k
    return np.array([[-(1 + 1j * detuning), a0_st],
                     [np.conj(a0_st), -(1 - 1j * detuning)]])


def analytic_below_threshold(pump_E: float) -> BelowThreshold:
    """Linearised shot-noise-normalised variances at ``k_c`` below threshold."""
    if not 0 <= pump_E < 1:
        raise DomainError(f"linear theory requires 0 <= E < 1, got {pump_E}")
    return BelowThreshold(-pump_E / (1 + pump_E), pump_E / (1 - pump_E), -0.5)


def mean_occupation_below_threshold(k, pump_E: float, delta1: float):
    """Normal-ordered ``<N1(k)>`` of the linearised theory, ``E^2 / 2(1 + theta^2 - E^2)``.

    ``theta = delta1 + 2k^2``; valid for ``delta0 = 0`` and ``E < 1``.
    """
    theta = delta1 + 2.0 * np.asarray(k, dtype=float) ** 2
    return pump_E**2 / (2.0 * (1.0 + theta**2 - pump_E**2))
