"""Stochastic integration of the Q-representation Langevin equations.

Scaled equations (``c`` = ``noise_c``)::

    d alpha0 = [-(1 + i d0 - i lap) alpha0 + E - alpha1^2 / 2] dt + sqrt(2) c xi0 dt
    d alpha1 = [-(1 + i d1 - 2i lap) alpha1 + alpha0 conj(alpha1)] dt + sqrt(2) c xi1 dt

``xi0`` is complex white noise with ``<xi0 xi0*> = delta(x-x') delta(t-t')``;
``xi1`` is the phase-sensitive multiplicative noise built from two real white
noises by :func:`synth_signal_noise`, with ``<xi1 xi1*> = 1`` and
``<xi1 xi1> = -alpha0/2``.  On the lattice a white noise becomes an
independent Gaussian per cell with variance ``1/(dx dt)``.

One step is a symmetric split: exact linear propagation over ``dt/2`` in
mode space, a local stochastic update over ``dt``, and another exact
``dt/2``.  The local update uses a Heun predictor-corrector for the drift
with the noise increment (coefficients frozen at the start of the step) added
to both predictor and corrector, which is consistent with the Ito reading;
Ito and Stratonovich coincide for these equations because the signal noise
depends only on the pump, whose noise is additive and independent.

Trajectories violating the diffusion-positivity condition ``|alpha0| < 2``
are rejected as a whole.

The functions :func:`linear_step`, :func:`nonlinear_noise_step` and
:func:`reference_step` are a plain numpy implementation of one step;
:func:`run_trajectory` drives the fused kernel in :mod:`qdopo._kernel`,
which reproduces the reference draw for draw.

Checkpoint files
----------------
A checkpoint is a little-endian binary file::

    bytes 0-7    magic  b"QDOPOCKP"
    uint32       format version (currently 1)
    uint32       n_points N
    uint32       length of the JSON header in bytes, H
    H bytes      UTF-8 JSON: {"params": {...}, "trajectory": index, ...}
    records      repeated until EOF, each
                   float64       time
                   complex128[N] alpha0 (near field, cell order)
                   complex128[N] alpha1

Each record is ``8 + 32 N`` bytes.
"""
from __future__ import annotations

import json
import math
import struct
import time as _time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from . import _kernel
from .errors import (
    CheckpointFormatError,
    GuardViolationError,
    NonFiniteFieldError,
    UnknownKindError,
)
from .lattice import INIT_KINDS, FieldState, Grid, Params, build_grid

GUARD_LIMIT = 2.0
# |alpha0|^2 at or above this counts as on the boundary (a few ulps below 4,
# so that 2 exp(i theta) rounded to floating point is still rejected)
GUARD_LIMIT_SQ = GUARD_LIMIT**2 * (1.0 - 1e-12)
INIT_SEED_AMPLITUDE = 1e-5


# -- noise -------------------------------------------------------------------

@dataclass
class NoiseDraw:
    """White-noise lattices for one step; each sample has variance ``1/(dx dt)``.

    ``xi0`` is complex (``<|xi0|^2> = 1/(dx dt)``, ``<xi0^2> = 0``); ``phi`` and
    ``psi`` are real and mutually independent.
    """

    xi0: np.ndarray
    phi: np.ndarray
    psi: np.ndarray


def draw_noise(rng: np.random.Generator, n_points: int, dx: float, dt: float) -> NoiseDraw:
    z = rng.standard_normal((4, n_points))
    scale = 1.0 / math.sqrt(dx * dt)
    return NoiseDraw((z[0] + 1j * z[1]) * (scale / math.sqrt(2.0)), z[2] * scale, z[3] * scale)


def synth_signal_noise(alpha0_cell, phi_cell, psi_cell):
    """Phase-sensitive signal noise from two real white noises.

    ``xi1 = [-a0I / (2 sqrt(2 + a0R)) + (i/2) sqrt(2 + a0R)] phi
    + sqrt((1 - |a0|^2/4) / (2 + a0R)) psi``.  Vectorised over cells.
    """
    a0 = np.asarray(alpha0_cell, dtype=complex)
    if np.any(a0.real**2 + a0.imag**2 >= GUARD_LIMIT_SQ):
        raise GuardViolationError("signal noise requested with |alpha0| >= 2")
    s2 = 2.0 + a0.real
    root = np.sqrt(s2)
    b = np.sqrt(np.maximum(1.0 - 0.25 * np.abs(a0) ** 2, 0.0) / s2)
    out = (-a0.imag / (2.0 * root) + 0.5j * root) * phi_cell + b * psi_cell
    return out if np.ndim(out) else complex(out)


# -- reference step -----------------------------------------------------------

def linear_propagators(params: Params, grid: Grid, dt: float) -> np.ndarray:
    """Mode-space factors ``exp(-(1 + i d0 + i k^2) dt)`` and ``exp(-(1 + i d1 + 2i k^2) dt)``.

    Shape ``(2, N)`` in FFT order (pump first).
    """
    k2 = grid.k**2
    return np.stack([
        np.exp(-(1.0 + 1j * params.delta0 + 1j * k2) * dt),
        np.exp(-(1.0 + 1j * params.delta1 + 2j * k2) * dt),
    ])


def linear_step(state: FieldState, params: Params, grid: Grid, dt: float) -> FieldState:
    """Exact solution of the linear, noiseless, undriven subproblem over ``dt``."""
    prop = linear_propagators(params, grid, dt)
    modes = np.fft.fft(np.stack([state.alpha0, state.alpha1]), axis=-1) * prop
    x = np.fft.ifft(modes, axis=-1)
    return FieldState(x[0], x[1], state.time)


def nonlinear_noise_step(state: FieldState, params: Params, noise: NoiseDraw | None,
                         dt: float) -> FieldState:
    """Local update of the pump drive, the quadratic coupling and the noise."""
    a0, a1 = state.alpha0, state.alpha1
    c = params.noise_c
    if noise is None:
        w0 = w1 = 0.0
    else:
        xi1 = synth_signal_noise(a0, noise.phi, noise.psi)
        w0 = math.sqrt(2.0) * c * noise.xi0 * dt
        w1 = math.sqrt(2.0) * c * xi1 * dt
    f0 = params.pump_E - 0.5 * a1 * a1
    f1 = a0 * np.conj(a1)
    p0 = a0 + dt * f0 + w0
    p1 = a1 + dt * f1 + w1
    new0 = a0 + 0.5 * dt * (f0 + params.pump_E - 0.5 * p1 * p1) + w0
    new1 = a1 + 0.5 * dt * (f1 + p0 * np.conj(p1)) + w1
    out = FieldState(new0, new1, state.time + dt)
    if not out.is_finite():
        raise NonFiniteFieldError(f"non-finite field at t={out.time}")
    return out


def guard_diffusion(state: FieldState) -> bool:
    """True when ``max |alpha0| < 2`` (diffusion positive); False means reject."""
    a0 = state.alpha0
    return bool(np.max(a0.real**2 + a0.imag**2) < GUARD_LIMIT_SQ)


def reference_step(state: FieldState, params: Params, grid: Grid,
                   rng: np.random.Generator | None) -> FieldState:
    """One symmetric step with the numpy operators (slow, for verification)."""
    dt = params.dt
    half = linear_step(state, params, grid, dt / 2)
    if not guard_diffusion(half):
        raise GuardViolationError(f"|alpha0| >= 2 at t={state.time}")
    noise = None
    if params.noise_on:
        noise = draw_noise(rng, grid.n_points, grid.dx, dt)
    mid = nonlinear_noise_step(half, params, noise, dt)
    out = linear_step(mid, params, grid, dt / 2)
    out.time = state.time + dt
    return out


# -- initial conditions ---------------------------------------------------------

def make_initial_condition(kind: str, params: Params, grid: Grid | None = None,
                           rng: np.random.Generator | None = None) -> FieldState:
    """Initial fields.

    The pump starts at the trivial steady state ``E / (1 + i d0)`` when
    ``params.pump_start == "trivial"`` (default) and at zero otherwise.
    ``paper-modulated``: ``alpha1 = 1e-5 (eps + 10 sin(k_c x))``;
    ``noise``: ``alpha1 = 1e-5 eps``; ``step``: ``-1`` on the left half and
    ``+1`` on the right half; ``rolls``: ``A cos(k_c x)``.  ``eps`` is a unit
    Gaussian per cell, taken as zero when ``rng`` is None.
    """
    if kind not in INIT_KINDS:
        raise UnknownKindError(f"unknown initial condition {kind!r}; expected one of {INIT_KINDS}")
    grid = grid or build_grid(params)
    n, x = grid.n_points, grid.x
    eps = rng.standard_normal(n) if rng is not None else np.zeros(n)
    if kind == "paper-modulated":
        a1 = INIT_SEED_AMPLITUDE * (eps + 10.0 * np.sin(params.k_c * x))
    elif kind == "noise":
        a1 = INIT_SEED_AMPLITUDE * eps
    elif kind == "step":
        a1 = np.where(np.arange(n) < n // 2, -1.0, 1.0)
    else:
        a1 = params.rolls_amplitude * np.cos(params.k_c * x)
    a0 = np.zeros(n, complex)
    if params.pump_start == "trivial":
        a0[:] = params.pump_E / (1.0 + 1j * params.delta0)
    return FieldState(a0, a1.astype(complex), 0.0)


# -- trajectory driver ------------------------------------------------------------

class Sampler(Protocol):
    def add(self, times: np.ndarray, pump_modes: np.ndarray, signal_modes: np.ndarray) -> None:
        """Receive unitary mode arrays of shape ``(n_samples, N)`` in FFT order."""


@dataclass
class TrajectoryOutcome:
    status: str  # "completed" | "rejected"
    rejection_time: float | None
    samples_contributed: int
    final_state: FieldState | None = None
    steps: int = 0
    wall_time: float = 0.0

    @property
    def rejected(self) -> bool:
        return self.status == "rejected"


def trajectory_rngs(seed: int, index: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (initial-condition, noise) generators for trajectory ``index``."""
    ic_seq, noise_seq = np.random.SeedSequence(seed, spawn_key=(index,)).spawn(2)
    return (np.random.Generator(np.random.PCG64DXSM(ic_seq)),
            np.random.Generator(np.random.PCG64DXSM(noise_seq)))


class Integrator:
    """Kernel-backed stepper for one parameter set (shareable, stateless)."""

    def __init__(self, params: Params, grid: Grid | None = None):
        self.params = params
        self.grid = grid or build_grid(params)
        n = self.grid.n_points
        self.rev, self.tw, self.twc = _kernel.fft_tables(n)
        half = linear_propagators(params, self.grid, params.dt / 2)[:, self.rev]
        self.half_prop = np.ascontiguousarray(half)
        self.half_prop_n = np.ascontiguousarray(half / n)
        self.noise_amp = params.noise_c * math.sqrt(params.dt / self.grid.dx)
        self._noise_buf = np.empty((4, n))

    def to_kernel(self, state: FieldState) -> np.ndarray:
        x = np.stack([state.alpha0, state.alpha1]).astype(complex)
        modes = np.ascontiguousarray(x)
        _kernel.dif_forward(modes, self.tw)
        return modes

    def from_kernel_modes(self, kmodes: np.ndarray) -> np.ndarray:
        """Kernel storage -> unitary modes in FFT order (works on stacked arrays)."""
        return kmodes[..., self.rev] / math.sqrt(self.grid.n_points)

    def to_state(self, kmodes: np.ndarray, time: float) -> FieldState:
        x = np.fft.ifft(self.from_kernel_modes(kmodes), axis=-1, norm="ortho")
        return FieldState(x[0], x[1], time)

    def advance(self, kmodes, rng, n_samples, stride, out=None):
        if out is None:
            out = np.empty((0, 2, self.grid.n_points), complex)
        return _kernel.advance(
            kmodes, self.half_prop, self.half_prop_n, float(self.params.pump_E),
            float(self.params.dt), float(self.noise_amp), bool(self.params.noise_on),
            int(n_samples), int(stride), out, rng, self.tw, self.twc, self._noise_buf,
            GUARD_LIMIT_SQ)


def run_trajectory(params: Params, sampler: Sampler | None = None, index: int = 0,
                   state: FieldState | None = None, grid: Grid | None = None,
                   block: int = 256, integrator: Integrator | None = None,
                   checkpoint: "CheckpointWriter | None" = None) -> TrajectoryOutcome:
    """Integrate one trajectory over ``t_total``, sampling after ``t_transient``.

    Samples are taken every ``params.steps_per_sample`` steps and handed to
    ``sampler`` in blocks.  A guard trip returns a ``rejected`` outcome; the
    caller must discard whatever the sampler received.
    """
    start = _time.perf_counter()
    integ = integrator or Integrator(params, grid)
    grid = integ.grid
    ic_rng, noise_rng = trajectory_rngs(params.seed, index)
    if state is None:
        state = make_initial_condition(params.init_kind, params, grid, ic_rng)
    t0 = state.time
    dt = params.dt
    kmodes = integ.to_kernel(state)

    def fail(status, steps_done):
        t_fail = t0 + steps_done * dt
        if status == _kernel.NON_FINITE:
            raise NonFiniteFieldError(f"non-finite field in trajectory {index} at t={t_fail:.6g}")
        return TrajectoryOutcome("rejected", t_fail, n_taken, None, steps_done,
                                 _time.perf_counter() - start)

    total_steps = int(round(params.t_total / dt))
    transient_steps = int(round(params.t_transient / dt))
    stride = params.steps_per_sample
    n_samples = (total_steps - transient_steps) // stride
    n_taken = 0
    steps_done = 0

    chunk = 100_000
    while steps_done < transient_steps:
        todo = min(chunk, transient_steps - steps_done)
        status, did = integ.advance(kmodes, noise_rng, 1, todo)
        if status != _kernel.OK:
            return fail(status, steps_done + did)
        steps_done += did

    out = np.empty((block, 2, grid.n_points), complex)
    while n_taken < n_samples:
        nb_ = min(block, n_samples - n_taken)
        status, did = integ.advance(kmodes, noise_rng, nb_, stride, out)
        if status != _kernel.OK:
            return fail(status, steps_done + did)
        steps_done += did
        times = t0 + (steps_done - stride * np.arange(nb_ - 1, -1, -1)) * dt
        modes = integ.from_kernel_modes(out[:nb_])
        if sampler is not None:
            sampler.add(times, modes[:, 0], modes[:, 1])
        if checkpoint is not None:
            near = np.fft.ifft(modes, axis=-1, norm="ortho")
            checkpoint.write(times, near[:, 0], near[:, 1])
        n_taken += nb_

    final = integ.to_state(kmodes, t0 + steps_done * dt)
    return TrajectoryOutcome("completed", None, n_taken, final, steps_done,
                             _time.perf_counter() - start)


def evolve(state: FieldState, params: Params, duration: float, rng=None,
           integrator: Integrator | None = None) -> FieldState:
    """Advance ``state`` by ``duration`` with the kernel, no sampling.

    Raises :class:`GuardViolationError` on a guard trip.
    """
    integ = integrator or Integrator(params)
    if rng is None:
        rng = trajectory_rngs(params.seed, 0)[1]
    kmodes = integ.to_kernel(state)
    steps = int(round(duration / params.dt))
    status, did = integ.advance(kmodes, rng, 1, steps)
    t = state.time + did * params.dt
    if status == _kernel.REJECTED:
        raise GuardViolationError(f"|alpha0| >= 2 at t={t:.6g}")
    if status == _kernel.NON_FINITE:
        raise NonFiniteFieldError(f"non-finite field at t={t:.6g}")
    return integ.to_state(kmodes, t)


# -- checkpoints ------------------------------------------------------------------

CHECKPOINT_MAGIC = b"QDOPOCKP"
CHECKPOINT_VERSION = 1
_HEAD = struct.Struct("<8sIII")


class CheckpointWriter:
    """Append-only writer of near-field records (see module docstring)."""

    def __init__(self, path, params: Params, **meta):
        self.path = Path(path)
        self.n_points = params.n_points
        header = json.dumps({"params": params.to_dict(), **meta}, sort_keys=True).encode()
        self._fh = open(self.path, "wb")
        self._fh.write(_HEAD.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, self.n_points, len(header)))
        self._fh.write(header)

    def write(self, times, alpha0, alpha1):
        times = np.atleast_1d(np.asarray(times, "<f8"))
        a0 = np.asarray(alpha0, "<c16").reshape(len(times), self.n_points)
        a1 = np.asarray(alpha1, "<c16").reshape(len(times), self.n_points)
        rec = np.empty(len(times), dtype=_record_dtype(self.n_points))
        rec["time"], rec["alpha0"], rec["alpha1"] = times, a0, a1
        self._fh.write(rec.tobytes())

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _record_dtype(n):
    return np.dtype([("time", "<f8"), ("alpha0", "<c16", (n,)), ("alpha1", "<c16", (n,))])


def read_checkpoint(path):
    """Return ``(header, times, alpha0, alpha1)`` from a checkpoint file."""
    data = Path(path).read_bytes()
    if len(data) < _HEAD.size:
        raise CheckpointFormatError(f"{path}: truncated header")
    magic, version, n, hlen = _HEAD.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    header = json.loads(data[_HEAD.size:_HEAD.size + hlen])
    body = data[_HEAD.size + hlen:]
    dtype = _record_dtype(n)
    if len(body) % dtype.itemsize:
        raise CheckpointFormatError(f"{path}: trailing partial record")
    rec = np.frombuffer(body, dtype=dtype)
    return header, rec["time"].copy(), rec["alpha0"].copy(), rec["alpha1"].copy()
