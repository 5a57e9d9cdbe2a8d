"""Periodic 1-D transverse lattice, parameters and Fourier conventions.

Fields live on ``n_points`` equally spaced cells of a periodic box of length
``length_L``.  The far field is the *unitary* DFT of the near field
(``norm="ortho"`` both ways), so that mode amplitudes keep the same variance
as cell amplitudes and every normalisation constant of the observables is
explicit.  Mode arrays are kept in numpy FFT order: index ``m`` holds
wavenumber ``m * dk`` for ``m < N/2`` and ``(m - N) * dk`` otherwise.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import InvalidParameterError, LengthMismatchError

INIT_KINDS = ("paper-modulated", "noise", "step", "rolls")
PUMP_STARTS = ("trivial", "zero")

#: Pump amplitudes above this are outside the validated envelope of the method.
VALIDATED_MAX_PUMP = 1.5


def default_length(delta1: float) -> float:
    """Four critical wavelengths, ``4 * 2*pi / k_c`` with ``k_c = sqrt(-delta1/2)``."""
    if delta1 >= 0:
        raise InvalidParameterError(
            "length_L", "no default box size for delta1 >= 0 (no critical wavenumber)")
    return 4.0 * 2.0 * math.pi / math.sqrt(-delta1 / 2.0)


@dataclass(frozen=True)
class Params:
    """Physical and numerical parameters, all in scaled units.

    Times are in units of the inverse cavity decay rate, lengths in units of
    the diffraction length, fields scaled so that the threshold pump is one
    (for ``delta0 = 0``).  ``noise_c`` is the dimensionless quantum-noise
    strength; ``length_L=None`` selects four critical wavelengths.
    """

    delta0: float = 0.0
    delta1: float = -0.18
    pump_E: float = 0.9
    noise_c: float = 1e-4
    n_points: int = 64
    length_L: float | None = None
    dt: float = 0.01
    t_total: float = 1.0e4
    t_transient: float = 1.0e3
    seed: int = 0
    init_kind: str = "paper-modulated"
    sample_every: float = 1.0
    rolls_amplitude: float = 1.0
    noise_on: bool = True
    pump_start: str = "trivial"

    def __post_init__(self):
        if self.length_L is None:
            object.__setattr__(self, "length_L", default_length(self.delta1))
        n = self.n_points
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise InvalidParameterError("n_points", f"must be a power of two >= 8, got {n!r}")
        object.__setattr__(self, "n_points", int(n))
        if not self.length_L > 0 or not math.isfinite(self.length_L):
            raise InvalidParameterError("length_L", f"must be positive, got {self.length_L!r}")
        if not self.dt > 0:
            raise InvalidParameterError("dt", f"must be positive, got {self.dt!r}")
        if not self.noise_c > 0:
            raise InvalidParameterError("noise_c", f"must be positive, got {self.noise_c!r}")
        if not 0 <= self.t_transient < self.t_total:
            raise InvalidParameterError(
                "t_transient", f"need 0 <= t_transient < t_total, got {self.t_transient!r}")
        if not self.sample_every >= self.dt:
            raise InvalidParameterError(
                "sample_every", f"must be at least one time step, got {self.sample_every!r}")
        if not self.pump_E >= 0:
            raise InvalidParameterError("pump_E", f"must be non-negative, got {self.pump_E!r}")
        if self.init_kind not in INIT_KINDS:
            raise InvalidParameterError(
                "init_kind", f"must be one of {INIT_KINDS}, got {self.init_kind!r}")
        if self.pump_start not in PUMP_STARTS:
            raise InvalidParameterError(
                "pump_start", f"must be one of {PUMP_STARTS}, got {self.pump_start!r}")
        if self.pump_E > VALIDATED_MAX_PUMP:
            warnings.warn(
                f"pump_E={self.pump_E} is above the validated envelope "
                f"(<= {VALIDATED_MAX_PUMP}); trajectories may be rejected", stacklevel=3)

    @property
    def k_c(self) -> float:
        return math.sqrt(-self.delta1 / 2.0) if self.delta1 < 0 else 0.0

    @property
    def steps_per_sample(self) -> int:
        return max(1, round(self.sample_every / self.dt))

    def with_(self, **changes) -> "Params":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class Grid:
    """Cell positions and the signed wavenumber ladder (FFT order)."""

    n_points: int
    length_L: float
    x: np.ndarray = field(repr=False)
    k: np.ndarray = field(repr=False)

    @property
    def dx(self) -> float:
        return self.length_L / self.n_points

    @property
    def dk(self) -> float:
        return 2.0 * math.pi / self.length_L

    @property
    def m(self) -> np.ndarray:
        """Integer mode numbers in FFT order."""
        return np.fft.fftfreq(self.n_points, 1.0 / self.n_points).astype(int)

    @property
    def nyquist_index(self) -> int:
        return self.n_points // 2

    @property
    def pair_numbers(self) -> np.ndarray:
        """Mode numbers ``1 .. N/2-1`` that have a distinct ``-m`` partner."""
        return np.arange(1, self.n_points // 2)

    @property
    def pair_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """FFT-order indices of the ``+m`` and ``-m`` members of each pair."""
        m = self.pair_numbers
        return m, self.n_points - m

    def index_of(self, m: int) -> int:
        """FFT-order index of mode number ``m`` (may be negative)."""
        if not -self.n_points // 2 <= m < self.n_points // 2:
            raise IndexError(f"mode number {m} outside the lattice")
        return m % self.n_points

    def nearest_mode(self, k: float) -> int:
        return int(round(k / self.dk))

    def sorted_order(self) -> np.ndarray:
        """Permutation taking FFT order to ascending wavenumber."""
        return np.argsort(self.k, kind="stable")


def build_grid(params: Params) -> Grid:
    """Lattice for ``params``: ``x_j = j*dx`` and ``k_m = m*2*pi/L``."""
    n, length = params.n_points, params.length_L
    if n < 8:
        raise InvalidParameterError("n_points", f"need at least 8 points, got {n}")
    if not length > 0:
        raise InvalidParameterError("length_L", f"must be positive, got {length}")
    x = np.arange(n) * (length / n)
    k = np.fft.fftfreq(n, 1.0 / n) * (2.0 * math.pi / length)
    x.flags.writeable = False
    k.flags.writeable = False
    return Grid(n, float(length), x, k)


def _check_length(field_, n):
    field_ = np.asarray(field_)
    if field_.shape[-1:] != (n,):
        raise LengthMismatchError(f"expected trailing length {n}, got shape {field_.shape}")
    return field_


def forward_transform(field_, n_points: int | None = None) -> np.ndarray:
    """Unitary DFT along the last axis (near field -> far field)."""
    field_ = np.asarray(field_)
    if n_points is not None:
        _check_length(field_, n_points)
    return np.fft.fft(field_, axis=-1, norm="ortho")


def inverse_transform(modes, n_points: int | None = None) -> np.ndarray:
    """Inverse of :func:`forward_transform`."""
    modes = np.asarray(modes)
    if n_points is not None:
        _check_length(modes, n_points)
    return np.fft.ifft(modes, axis=-1, norm="ortho")


@dataclass
class FieldState:
    """Pump and signal near fields at one instant.

    Owned by one trajectory; the arrays are mutated in place by the engine.
    """

    alpha0: np.ndarray
    alpha1: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.alpha0 = np.array(self.alpha0, dtype=np.complex128)
        self.alpha1 = np.array(self.alpha1, dtype=np.complex128)
        if self.alpha0.ndim != 1 or self.alpha0.shape != self.alpha1.shape:
            raise LengthMismatchError(
                f"pump and signal must be 1-D of equal length, got "
                f"{self.alpha0.shape} and {self.alpha1.shape}")

    @property
    def n_points(self) -> int:
        return self.alpha0.size

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.alpha0).all() and np.isfinite(self.alpha1).all())

    def copy(self) -> "FieldState":
        return FieldState(self.alpha0.copy(), self.alpha1.copy(), self.time)

    @classmethod
    def zeros(cls, n_points: int) -> "FieldState":
        return cls(np.zeros(n_points, complex), np.zeros(n_points, complex), 0.0)
