"""From field snapshots to shot-noise-normalised quantum observables.

Mode amplitudes are scaled to unit-commutator units,
``beta_k = sqrt(dx) / c * F[alpha]_k`` with the unitary DFT, so a vacuum mode
has ``<|beta_k|^2>_Q = 1``.  Q-function samples give antinormally ordered
moments; normal ordering is restored only when reporting:

* number: ``<a+ a> = m1 - 1`` and ``<:dN^2:> = Var_Q(|beta|^2) - 2<N> - 1``
* twin-beam difference: ``<:(dN_k - dN_-k)^2:> = Var_Q(I_k - I_-k) - 2(<N_k> + <N_-k>) - 2``
* quadratures ``X(k) = beta_k + beta_k*``: ``<:X_pm^2:> = Var_Q(X_pm) - 4``

Normalisations: ``V(k)`` is divided by ``<N_k> + <N_-k>``; quadrature
variances by 2, the vacuum variance of ``X(k) +/- X(-k)``.

Samples are accumulated in fixed-length blocks, each storing count, mean and
sum of squared deviations of every tracked variable.  Merging concatenates
block lists, so merged and sequential accumulation are bit-identical.
Each block also records the stream (trajectory) it came from.  Means are
pooled over all samples; variances are pooled within streams, each stream
centred on its own mean, which is the ensemble form of a single-trajectory
time average.  Trajectories that settle into different long-lived patterns
would otherwise add the spread of their means to every variance.  Standard
errors come from a delete-one-group jackknife over groups of consecutive
blocks of one stream, at least ten autocorrelation times long.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    InsufficientSamplesError,
    UndefinedForVacuumError,
    UnphysicalMomentsError,
)
from .lattice import FieldState, Grid, Params, forward_transform

MIN_GROUPS = 20
TAU_FACTOR = 10.0


class Estimate(NamedTuple):
    value: float
    stderr: float


class ModeAmplitudes(NamedTuple):
    pump: np.ndarray
    signal: np.ndarray


class PhaseSum(NamedTuple):
    value: float
    stderr: float
    resultant: float
    defined: bool


def amplitude_scale(params: Params, grid: Grid) -> float:
    """Factor from unitary mode amplitude to unit-commutator amplitude."""
    return math.sqrt(grid.dx) / params.noise_c


def mode_amplitudes(state: FieldState, params: Params, grid: Grid) -> ModeAmplitudes:
    s = amplitude_scale(params, grid)
    return ModeAmplitudes(s * forward_transform(state.alpha0), s * forward_transform(state.alpha1))


# -- variable layout ----------------------------------------------------------------

class Layout:
    """Index map of the per-sample variable vector for an ``N``-point lattice.

    Sections: signal and pump intensities for every mode, then for every
    pair ``m = 1 .. N/2-1``: signal and pump intensity differences,
    ``X_+``, ``X_-``, and cosine/sine of ``theta_+ + theta_-``.
    """

    SECTIONS = ("I1", "I0", "D1", "D0", "XP", "XM", "PC", "PS")

    def __init__(self, n_points: int):
        self.n_points = n_points
        self.n_pairs = n_points // 2 - 1
        sizes = [n_points, n_points] + [self.n_pairs] * 6
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.slices = {name: slice(int(offsets[i]), int(offsets[i + 1]))
                       for i, name in enumerate(self.SECTIONS)}
        self.size = int(offsets[-1])
        m = np.arange(1, n_points // 2)
        self.plus, self.minus = m, n_points - m

    def variables(self, beta0: np.ndarray, beta1: np.ndarray) -> np.ndarray:
        """Per-sample variable matrix of shape ``(n_samples, size)``."""
        beta0 = np.atleast_2d(beta0)
        beta1 = np.atleast_2d(beta1)
        p, q = self.plus, self.minus
        i1 = beta1.real**2 + beta1.imag**2
        i0 = beta0.real**2 + beta0.imag**2
        xk = 2.0 * beta1.real
        prod = beta1[:, p] * beta1[:, q]
        mod = np.abs(prod)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(mod > 0, prod / np.where(mod > 0, mod, 1.0), 0.0)
        return np.concatenate([
            i1, i0,
            i1[:, p] - i1[:, q], i0[:, p] - i0[:, q],
            xk[:, p] + xk[:, q], xk[:, p] - xk[:, q],
            unit.real, unit.imag,
        ], axis=1)

    def __getitem__(self, name):
        return self.slices[name]


# -- accumulator ------------------------------------------------------------------

class MomentAccumulator:
    """Streaming block moments of the Q-sample variables of one or more streams.

    ``add`` takes unitary mode arrays (scaled by ``scale`` to ``beta``);
    ``add_amplitudes`` takes ``beta`` directly.  Call :meth:`flush` at the end
    of each independent stream: it closes the partial block and starts a new
    stream, so no block straddles two trajectories.
    """

    def __init__(self, n_points: int, scale: float = 1.0, block_len: int = 100,
                 k_c_mode: int | None = None):
        if block_len < 1:
            raise ValueError("block_len must be positive")
        self.layout = Layout(n_points)
        self.scale = scale
        self.block_len = block_len
        self.k_c_mode = k_c_mode
        self._counts: list[np.ndarray] = []
        self._means: list[np.ndarray] = []
        self._m2s: list[np.ndarray] = []
        self._streams: list[np.ndarray] = []
        self._n_streams = 0
        self._open_blocks = 0
        self._pending: list[np.ndarray] = []
        self._n_pending = 0

    # feeding
    def add(self, times, pump_modes, signal_modes):
        self.add_amplitudes(self.scale * np.asarray(pump_modes),
                            self.scale * np.asarray(signal_modes))

    def add_amplitudes(self, beta0, beta1):
        y = self.layout.variables(beta0, beta1)
        self._pending.append(y)
        self._n_pending += len(y)
        if self._n_pending >= self.block_len:
            buf = np.concatenate(self._pending)
            n_full = len(buf) // self.block_len * self.block_len
            self._close_blocks(buf[:n_full].reshape(-1, self.block_len, buf.shape[1]))
            rest = buf[n_full:]
            self._pending = [rest] if len(rest) else []
            self._n_pending = len(rest)

    def flush(self):
        if self._n_pending:
            buf = np.concatenate(self._pending)
            self._close_blocks(buf[None])
        self._pending = []
        self._n_pending = 0
        if self._open_blocks:
            self._n_streams += 1
            self._open_blocks = 0
        return self

    def _close_blocks(self, blocks):
        means = blocks.mean(axis=1)
        m2 = ((blocks - means[:, None, :]) ** 2).sum(axis=1)
        self._counts.append(np.full(len(blocks), blocks.shape[1], dtype=np.int64))
        self._means.append(means)
        self._m2s.append(m2)
        self._streams.append(np.full(len(blocks), self._n_streams, dtype=np.int64))
        self._open_blocks += len(blocks)

    # merging
    @classmethod
    def merged(cls, accumulators) -> "MomentAccumulator":
        """Concatenate blocks of ``accumulators`` in the given (canonical) order."""
        accumulators = list(accumulators)
        if not accumulators:
            raise ValueError("nothing to merge")
        first = accumulators[0]
        out = cls(first.layout.n_points, first.scale, first.block_len, first.k_c_mode)
        for acc in accumulators:
            if acc.layout.n_points != first.layout.n_points:
                raise ValueError("cannot merge accumulators of different lattices")
            acc.flush()
            out._counts += acc._counts
            out._means += acc._means
            out._m2s += acc._m2s
            out._streams += [s + out._n_streams for s in acc._streams]
            out._n_streams += acc._n_streams
        return out

    def merge(self, other) -> "MomentAccumulator":
        return MomentAccumulator.merged([self, other])

    # block access
    def blocks(self):
        """``(counts, means, m2)`` arrays over closed blocks (pending samples excluded)."""
        if not self._counts:
            size = self.layout.size
            return np.zeros(0, np.int64), np.zeros((0, size)), np.zeros((0, size))
        return (np.concatenate(self._counts), np.concatenate(self._means),
                np.concatenate(self._m2s))

    def streams(self) -> np.ndarray:
        """Stream index of every closed block."""
        if not self._streams:
            return np.zeros(0, np.int64)
        return np.concatenate(self._streams)

    @property
    def count(self) -> int:
        return int(sum(c.sum() for c in self._counts)) + self._n_pending

    def totals(self):
        """``(n, pooled mean, within-stream unbiased variance)`` of every variable."""
        n, mean, within, n_streams = _pool(*self.blocks(), self.streams())
        return n, mean, within / max(n - n_streams, 1)

    # error analysis
    def autocorrelation_time(self, mode: int | None = None) -> float:
        """Integrated autocorrelation time (in samples) of ``|beta|^2`` at ``+/-mode``.

        Estimated from the variance of group means for growing groups of
        blocks, taking the largest value over the scan.
        """
        counts, means, m2 = self.blocks()
        if len(counts) < 2 * MIN_GROUPS:
            return float("nan")
        mode = mode if mode is not None else (self.k_c_mode or 1)
        cols = [self.layout["I1"].start + (mode % self.layout.n_points),
                self.layout["I1"].start + (-mode % self.layout.n_points)]
        streams = self.streams()
        counts_, means_, m2_ = counts, means[:, cols], m2[:, cols]
        n, _, within, n_streams = _pool(counts_, means_, m2_, streams)
        var = within / max(n - n_streams, 1)
        # centre every block on its own stream so differing stream means
        # do not masquerade as slow correlations
        means_ = means_ - _stream_means(counts_, means_, streams)[streams]
        tau = 0.5
        g = 1
        while len(counts) // g >= MIN_GROUPS:
            gc, gm, _, _ = _group(counts_, means_, m2_, streams, g)
            full = gc == gc.max()
            if full.sum() < MIN_GROUPS:
                break
            size = gc[full][0]
            vm = (gm[full] ** 2).sum(axis=0) / (full.sum() - 1)
            with np.errstate(invalid="ignore", divide="ignore"):
                est = np.nanmax(size * vm / (2.0 * var))
            if np.isfinite(est):
                tau = max(tau, float(est))
            g *= 2
        return tau

    def group_size(self) -> int:
        """Blocks per jackknife group: at least ``10 tau`` samples, at least 20 groups."""
        n_blocks = len(self.blocks()[0])
        tau = self.autocorrelation_time()
        want = 1 if not np.isfinite(tau) else math.ceil(TAU_FACTOR * tau / self.block_len)
        return int(max(1, min(want, n_blocks // MIN_GROUPS if n_blocks >= MIN_GROUPS else 1)))

    def jackknife(self, func, group: int | None = None):
        """``(value, stderr)`` of ``func(n, mean, var)`` over all samples.

        ``mean`` is pooled over every sample and ``var`` within streams.
        ``func`` must broadcast over a leading axis.  Errors come from
        delete-one-group resampling; with fewer than two groups they are NaN.
        """
        counts, means, m2 = self.blocks()
        streams = self.streams()
        n, mu, within, n_streams = _pool(counts, means, m2, streams)
        value = func(n, mu, within / max(n - n_streams, 1))
        group = group or self.group_size()
        gc, gm, g2, gs = _group(counts, means, m2, streams, group)
        n_groups = len(gc)
        if n_groups < 2:
            return value, np.full_like(np.asarray(value, dtype=float), np.nan)
        n_r = n - gc
        mu_r = (n * mu - gc[:, None] * gm) / n_r[:, None]
        # the group's own stream loses it: update that stream's sum of squares
        sc = np.bincount(streams, weights=counts, minlength=n_streams)[gs]
        sm = _stream_means(counts, means, streams)[gs]
        s2 = _stream_m2(counts, means, m2, streams)[gs]
        sc_r = sc - gc
        with np.errstate(invalid="ignore", divide="ignore"):
            sm_r = np.where(sc_r[:, None] > 0,
                            (sc[:, None] * sm - gc[:, None] * gm) / sc_r[:, None], 0.0)
            d = gm - sm_r
            s2_r = np.where(sc_r[:, None] > 0,
                            s2 - g2 - (sc_r * gc / sc)[:, None] * d * d, 0.0)
        within_r = within - s2 + s2_r
        dof_r = n_r - n_streams + (sc_r == 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            loo = func(n_r[:, None], mu_r, within_r / dof_r[:, None])
        loo = np.asarray(loo, dtype=float)
        with np.errstate(invalid="ignore"):
            centre = loo.mean(axis=0)
            err = np.sqrt((n_groups - 1) / n_groups * ((loo - centre) ** 2).sum(axis=0))
        return value, err


def _pool(counts, means, m2, streams):
    """``(n, mean, within-stream sum of squares, number of streams)``."""
    n = int(counts.sum())
    if n == 0:
        size = means.shape[1] if means.ndim == 2 else 0
        return 0, np.full(size, np.nan), np.zeros(size), 0
    w = counts[:, None].astype(float)
    mu = (w * means).sum(axis=0) / n
    within = _stream_m2(counts, means, m2, streams).sum(axis=0)
    return n, mu, within, int(streams.max()) + 1


def _stream_means(counts, means, streams):
    w = counts[:, None].astype(float)
    n_streams = int(streams.max()) + 1
    total = np.zeros((n_streams, means.shape[1]))
    np.add.at(total, streams, w * means)
    return total / np.bincount(streams, weights=counts, minlength=n_streams)[:, None]


def _stream_m2(counts, means, m2, streams):
    """Sum of squared deviations of each stream about its own mean."""
    w = counts[:, None].astype(float)
    d = means - _stream_means(counts, means, streams)[streams]
    out = np.zeros((int(streams.max()) + 1, means.shape[1]))
    np.add.at(out, streams, m2 + w * d * d)
    return out


def _group(counts, means, m2, streams, g):
    """Combine runs of ``g`` consecutive blocks of one stream.

    Groups restart at every stream boundary, so the last group of each
    stream may be short.
    """
    if g == 1:
        return counts, means, m2, streams
    first = np.flatnonzero(np.r_[True, streams[1:] != streams[:-1]])
    ends = np.r_[first[1:], len(counts)]
    starts = np.concatenate([np.arange(a, b, g) for a, b in zip(first, ends)])
    gc = np.add.reduceat(counts, starts)
    w = counts[:, None].astype(float)
    gm = np.add.reduceat(w * means, starts, axis=0) / gc[:, None]
    member_mean = np.repeat(gm, np.diff(np.append(starts, len(counts))), axis=0)
    g2 = np.add.reduceat(m2 + w * (means - member_mean) ** 2, starts, axis=0)
    return gc, gm, g2, streams[starts]


# -- reordering and derived quantities ------------------------------------------------

def reorder_number_moments(m1: float, m2: float, m1_stderr: float = 0.0):
    """Antinormal Q moments of ``|beta|^2`` -> ``(<N>, <:dN^2:>)``.

    ``m1`` and ``m2`` are the raw first and second moments of ``|beta|^2``.
    ``<N>`` is clipped at zero for small statistical undershoot; an
    undershoot beyond five standard errors is rejected as unphysical.
    """
    if m1 < 1.0 - max(5.0 * m1_stderr, 1e-12):
        raise UnphysicalMomentsError(
            f"m1={m1} below the vacuum value 1 by more than 5 standard errors")
    mean_n = m1 - 1.0
    var_normal = (m2 - m1 * m1) - 2.0 * mean_n - 1.0
    return max(mean_n, 0.0), var_normal


def _twin(n_sum, var_d):
    """Normalised normal-ordered intensity-difference variance."""
    return (var_d - 2.0 * n_sum - 2.0) / n_sum


def _section_funcs(layout: Layout):
    s = layout.slices
    p, q = layout.plus, layout.minus

    def occupations(mu, field_):
        return mu[..., s[field_]] - 1.0

    def twin(field_, diff):
        def f(n, mu, var):
            occ = occupations(mu, field_)
            return _twin(occ[..., p] + occ[..., q], var[..., s[diff]])
        return f

    def denominators(field_):
        def f(n, mu, var):
            occ = occupations(mu, field_)
            return occ[..., p] + occ[..., q]
        return f

    return {
        "mean_N1": lambda n, mu, var: occupations(mu, "I1"),
        "mean_N0": lambda n, mu, var: occupations(mu, "I0"),
        "v_twin": twin("I1", "D1"),
        "v_twin_pump": twin("I0", "D0"),
        "den_signal": denominators("I1"),
        "den_pump": denominators("I0"),
        "xplus_var": lambda n, mu, var: (var[..., s["XP"]] - 4.0) / 2.0,
        "xminus_var": lambda n, mu, var: (var[..., s["XM"]] - 4.0) / 2.0,
        "number_var": lambda n, mu, var: var[..., s["I1"]] - 2.0 * occupations(mu, "I1") - 1.0,
        "phase_c": lambda n, mu, var: mu[..., s["PC"]],
        "phase_s": lambda n, mu, var: mu[..., s["PS"]],
        "phase": lambda n, mu, var: np.arctan2(mu[..., s["PS"]], mu[..., s["PC"]]),
        "resultant": lambda n, mu, var: np.hypot(mu[..., s["PS"]], mu[..., s["PC"]]),
    }


def _pair_position(acc: MomentAccumulator, m: int) -> int:
    m = abs(int(m))
    if not 1 <= m < acc.layout.n_points // 2:
        raise IndexError(f"mode number {m} has no distinct partner on this lattice")
    return m - 1


def twin_variance(acc: MomentAccumulator, m: int, field_: str = "signal") -> Estimate:
    """``V(k_m)`` for the pair ``+/-m`` (``field_`` is ``"signal"`` or ``"pump"``)."""
    funcs = _section_funcs(acc.layout)
    i = _pair_position(acc, m)
    key, den_key = ("v_twin", "den_signal") if field_ == "signal" else ("v_twin_pump", "den_pump")
    den, den_err = acc.jackknife(funcs[den_key])
    floor = 3.0 * den_err[i] if np.isfinite(den_err[i]) else 0.0
    if not den[i] > max(floor, 1e-12):
        raise UndefinedForVacuumError(
            f"mean occupation {den[i]:.3g} of pair m={m} is below the statistical floor {floor:.3g}")
    val, err = acc.jackknife(funcs[key])
    return Estimate(float(val[i]), float(err[i]))


def quadrature_variances(acc: MomentAccumulator, m: int, min_samples: int = 100):
    """Normalised normal-ordered variances ``(X_-, X_+)`` of the pair ``+/-m``."""
    if acc.count < min_samples:
        raise InsufficientSamplesError(f"{acc.count} samples < required {min_samples}")
    acc.flush()
    funcs = _section_funcs(acc.layout)
    i = _pair_position(acc, m)
    xm, xm_err = acc.jackknife(funcs["xminus_var"])
    xp, xp_err = acc.jackknife(funcs["xplus_var"])
    return Estimate(float(xm[i]), float(xm_err[i])), Estimate(float(xp[i]), float(xp_err[i]))


def phase_sum(acc: MomentAccumulator, m: int) -> PhaseSum:
    """Circular mean of ``theta_+ + theta_-`` for the pair ``+/-m``.

    ``defined`` is False when the mean resultant length is not at least three
    standard errors from zero (phases effectively unlocked).
    """
    funcs = _section_funcs(acc.layout)
    i = _pair_position(acc, m)
    val, err = acc.jackknife(funcs["phase"])
    r, r_err = acc.jackknife(funcs["resultant"])
    defined = bool(r[i] > 3.0 * (r_err[i] if np.isfinite(r_err[i]) else 0.0) and r[i] > 0)
    return PhaseSum(float(val[i]), float(err[i]), float(r[i]), defined)


class IntensitySpectra(NamedTuple):
    mean_N1: np.ndarray
    mean_N1_err: np.ndarray
    mean_N0: np.ndarray
    mean_N0_err: np.ndarray


def mean_intensity_spectra(acc: MomentAccumulator) -> IntensitySpectra:
    """Normal-ordered mean occupations of every mode (FFT order), with errors."""
    funcs = _section_funcs(acc.layout)
    n1, n1e = acc.jackknife(funcs["mean_N1"])
    n0, n0e = acc.jackknife(funcs["mean_N0"])
    return IntensitySpectra(n1, n1e, n0, n0e)


# -- report ------------------------------------------------------------------------

CSV_COLUMNS = (
    "m", "k", "mean_N1", "mean_N1_err", "mean_N0", "mean_N0_err",
    "v_twin", "v_twin_err", "v_twin_pump", "v_twin_pump_err",
    "xminus_var", "xminus_var_err", "xplus_var", "xplus_var_err",
    "phase_sum", "phase_sum_err", "phase_resultant",
)

CSV_UNITS = {
    "m": "mode number (k = m * dk)",
    "k": "transverse wavenumber, scaled units",
    "mean_N1": "normal-ordered mean signal photon number <N1(k)>",
    "mean_N0": "normal-ordered mean pump photon number <N0(k)>",
    "v_twin": "V(k): normal-ordered variance of N1(k) - N1(-k) over <N1(k)> + <N1(-k)>",
    "v_twin_pump": "same as v_twin for the pump field",
    "xminus_var": "<:X_-(k)^2:> / 2, X_- = X(k) - X(-k)",
    "xplus_var": "<:X_+(k)^2:> / 2, X_+ = X(k) + X(-k)",
    "phase_sum": "circular mean of arg beta(k) + arg beta(-k), radians",
    "phase_resultant": "mean resultant length of exp(i(theta_+ + theta_-)), 0..1",
    "*_err": "jackknife standard error of the column it follows",
}


@dataclass
class SpectraReport:
    """Final observables on the full wavenumber ladder (ascending ``k``).

    Pair quantities are filled on rows with ``0 < k`` below Nyquist and are
    NaN elsewhere (they are symmetric in ``k`` by construction).  Twin
    variances whose denominator is below three standard errors are NaN.
    """

    m: np.ndarray
    k: np.ndarray
    columns: dict
    n_samples: int
    n_trajectories: int = 0
    rejected: int = 0
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_accumulator(cls, acc: MomentAccumulator, grid: Grid, n_trajectories: int = 0,
                         rejected: int = 0, metadata: dict | None = None) -> "SpectraReport":
        acc.flush()
        funcs = _section_funcs(acc.layout)
        order = grid.sorted_order()
        n = grid.n_points
        pairs = acc.layout.plus  # FFT indices of +m
        group = acc.group_size()
        est = {name: acc.jackknife(funcs[name], group)
               for name in ("mean_N1", "mean_N0", "v_twin", "v_twin_pump", "den_signal",
                            "den_pump", "xminus_var", "xplus_var", "phase", "resultant")}
        cols = {}
        for name in ("mean_N1", "mean_N0"):
            cols[name] = est[name][0][order]
            cols[name + "_err"] = est[name][1][order]

        def paired(values, mask=None):
            full = np.full(n, np.nan)
            v = np.array(values, dtype=float)
            if mask is not None:
                v[~mask] = np.nan
            full[pairs] = v
            return full[order]

        for name, den in (("v_twin", "den_signal"), ("v_twin_pump", "den_pump")):
            d, de = est[den]
            ok = d > np.maximum(3.0 * np.nan_to_num(de), 1e-12)
            cols[name] = paired(est[name][0], ok)
            cols[name + "_err"] = paired(est[name][1], ok)
        for name in ("xminus_var", "xplus_var"):
            cols[name] = paired(est[name][0])
            cols[name + "_err"] = paired(est[name][1])
        cols["phase_sum"] = paired(est["phase"][0])
        cols["phase_sum_err"] = paired(est["phase"][1])
        cols["phase_resultant"] = paired(est["resultant"][0])
        meta = dict(metadata or {})
        meta.setdefault("jackknife_group_blocks", group)
        meta.setdefault("block_len", acc.block_len)
        meta.setdefault("autocorrelation_time_samples", acc.autocorrelation_time())
        return cls(grid.m[order], grid.k[order], cols, acc.count, n_trajectories, rejected, meta)

    # access
    def row(self, m: int) -> dict:
        idx = int(np.nonzero(self.m == m)[0][0])
        return {"m": int(self.m[idx]), "k": float(self.k[idx]),
                **{c: float(v[idx]) for c, v in self.columns.items()}}

    def __getitem__(self, name):
        return self.columns[name]

    @property
    def partial(self) -> bool:
        return self.rejected > 0

    # serialisation
    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i in range(len(self.k)):
            row = [int(self.m[i]), _fmt(self.k[i])]
            row += [_fmt(self.columns[c][i]) for c in CSV_COLUMNS[2:]]
            w.writerow(row)
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def sidecar(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_trajectories": self.n_trajectories,
            "rejected_trajectories": self.rejected,
            "partial_results": self.partial,
            "columns": CSV_UNITS,
            **_jsonable(self.metadata),
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read_csv(cls, path) -> "SpectraReport":
        with open(path) as fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
        m = np.array([int(r["m"]) for r in rows])
        k = np.array([float(r["k"]) for r in rows])
        cols = {c: np.array([float(r[c]) for r in rows]) for c in CSV_COLUMNS[2:]}
        return cls(m, k, cols, n_samples=0)


def _fmt(x) -> str:
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj
