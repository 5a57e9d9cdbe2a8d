"""Run configurations, reproducible trajectory ensembles and output artifacts.

Config files are flat ``key = value`` text with ``#`` comments.  Keys are the
fields of :class:`~qdopo.lattice.Params` plus the ensemble keys of
:class:`RunConfig`::

    # E = 0.99 twin-beam spectrum
    pump_E = 0.99
    dt = 0.001
    n_trajectories = 4
    variants = pump_E=0.9; pump_E=0.99

``preset = <name>`` starts from a named preset; the other lines override it
regardless of their position in the file.  ``variants`` is a ``;``-separated
list of ``,``-separated overrides; each variant is run as its own ensemble
into a subdirectory and summarised at ``k_c``.

An ensemble run writes into the output directory::

    config.txt       canonical config (input of every output's config hash)
    spectra.csv      per-k observables (see observables.CSV_COLUMNS)
    spectra.json     metadata sidecar
    spectra.png      spectra figure
    snapshots.ckp    near-field records of trajectory 0 (snapshot_every > 0)
    snapshots.png    spatiotemporal near- and far-field diagrams
    checkpoints/     every sample of every trajectory (checkpoint = true)
    run.log          timing, throughput and rejection log
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .engine import CheckpointWriter, Integrator, read_checkpoint, run_trajectory
from .errors import (
    AllTrajectoriesRejectedError,
    ConfigParseError,
    InvalidParameterError,
    UnknownPresetError,
)
from .lattice import Params, build_grid, default_length
from .observables import MomentAccumulator, SpectraReport, amplitude_scale

log = logging.getLogger(__name__)

PARAM_KEYS = tuple(f.name for f in fields(Params))


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a run, byte for byte."""

    params: Params = field(default_factory=Params)
    n_trajectories: int = 8
    out_dir: str = "qdopo-out"
    snapshot_every: float = 0.0
    checkpoint: bool = False
    block_len: int = 100
    workers: int = 1
    preset: str = ""
    variants: tuple = ()
    plot_k_max: float = 0.0

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise InvalidParameterError("n_trajectories", "need at least one trajectory")
        if self.snapshot_every < 0:
            raise InvalidParameterError("snapshot_every", "must be non-negative")
        if self.snapshot_every and self.snapshot_every < self.params.sample_every:
            raise InvalidParameterError(
                "snapshot_every", "must be 0 or at least sample_every")
        if self.block_len < 1:
            raise InvalidParameterError("block_len", "must be positive")
        if self.workers < 1:
            raise InvalidParameterError("workers", "must be positive")

    def with_(self, **changes) -> "RunConfig":
        p = {k: changes.pop(k) for k in list(changes) if k in PARAM_KEYS}
        if "delta1" in p and "length_L" not in p and self.params.delta1 < 0 \
                and self.params.length_L == default_length(self.params.delta1):
            p["length_L"] = None  # keep "four critical wavelengths" when delta1 changes
        params = self.params.with_(**p) if p else self.params
        return dataclasses.replace(self, params=params, **changes)

    def variant_configs(self) -> list[tuple[str, "RunConfig"]]:
        out = []
        for i, overrides in enumerate(self.variants):
            label = ",".join(f"{k}={_format_value(v)}" for k, v in overrides)
            cfg = self.with_(variants=(), **dict(overrides))
            out.append((f"v{i:02d}_{label}".replace("/", "_"), cfg))
        return out


# -- config text -----------------------------------------------------------------------

_RUN_KEYS = ("n_trajectories", "out_dir", "snapshot_every", "checkpoint", "block_len",
             "workers", "preset", "variants", "plot_k_max")
_DEFAULT_PARAMS = {f.name: f.default for f in fields(Params)}
_DEFAULT_RUN = {f.name: f.default for f in fields(RunConfig) if f.name != "params"}


def _coerce(key: str, text: str):
    """Convert the text of ``key`` to the type of its default value."""
    text = text.strip()
    if key == "length_L":
        if text.lower() in ("", "auto", "none", "default"):
            return None
        return _to_float(key, text)
    if key == "variants":
        return _parse_variants(key, text)
    default = _DEFAULT_PARAMS.get(key, _DEFAULT_RUN.get(key))
    if isinstance(default, bool):
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise InvalidParameterError(key, f"expected a boolean, got {text!r}")
    if isinstance(default, int):
        try:
            return int(text)
        except ValueError:
            raise InvalidParameterError(key, f"expected an integer, got {text!r}") from None
    if isinstance(default, float):
        return _to_float(key, text)
    return text


def _to_float(key, text):
    try:
        return float(text)
    except ValueError:
        raise InvalidParameterError(key, f"expected a number, got {text!r}") from None


def _parse_variants(key, text):
    variants = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        overrides = []
        for item in filter(None, (i.strip() for i in chunk.split(","))):
            if "=" not in item:
                raise InvalidParameterError(key, f"expected name=value, got {item!r}")
            name, value = (s.strip() for s in item.split("=", 1))
            if name not in PARAM_KEYS and name not in ("n_trajectories", "snapshot_every"):
                raise InvalidParameterError(key, f"cannot vary {name!r}")
            overrides.append((name, _coerce(name, value)))
        variants.append(tuple(overrides))
    return tuple(variants)


def parse_config(text: str) -> RunConfig:
    """Parse flat ``key = value`` text into a validated :class:`RunConfig`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigParseError(lineno, "missing key")
        if key not in PARAM_KEYS and key not in _RUN_KEYS:
            raise InvalidParameterError(key, f"unknown key (line {lineno})")
        if key in values:
            raise ConfigParseError(lineno, f"duplicate key {key!r}")
        values[key] = _coerce(key, value)
    base = preset(values["preset"]) if values.get("preset") else RunConfig()
    return base.with_(**values)


def _format_value(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_text(config: RunConfig) -> str:
    """Canonical text form; ``parse_config(to_text(c)) == c``."""
    lines = [f"# qdopo {__version__} run configuration"]
    for key in PARAM_KEYS:
        lines.append(f"{key} = {_format_value(getattr(config.params, key))}")
    for key in _RUN_KEYS:
        value = getattr(config, key)
        if key == "variants":
            value = "; ".join(", ".join(f"{k}={_format_value(v)}" for k, v in var)
                              for var in value)
        lines.append(f"{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical text without the output directory."""
    text = to_text(dataclasses.replace(config, out_dir=""))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# -- presets ---------------------------------------------------------------------------

#: Paper-reproduction recipes at desk scale.  The published runs average one
#: trajectory over 1e7 time units; these use several shorter trajectories.
#: ``scale`` is total averaged time relative to 1e7, ``wall`` a rough
#: single-core estimate.
PRESETS = {
    "fig2": dict(
        doc="Squeezed quadrature X- at k_c versus pump, dt = 1e-3",
        params=dict(dt=1e-3, t_total=1.01e5, sample_every=0.25),
        n_trajectories=4,
        variants="pump_E=0.5; pump_E=0.7; pump_E=0.9; pump_E=0.95; pump_E=0.99; pump_E=0.999",
        scale="4 x 1e5 per pump value (0.04 of 1e7)", wall="~40 min per pump value"),
    "fig3": dict(
        doc="Anti-squeezed quadrature X+ at k_c versus pump up to threshold, dt = 1e-3",
        params=dict(dt=1e-3, t_total=1.01e5, sample_every=0.25),
        n_trajectories=4,
        variants="pump_E=0.5; pump_E=0.7; pump_E=0.9; pump_E=0.95; pump_E=0.99; pump_E=1.0",
        scale="4 x 1e5 per pump value (0.04 of 1e7)", wall="~40 min per pump value"),
    "fig4": dict(
        doc="Twin-beam variance V(k) and mean signal spectrum at E = 0.99, k in (0, 5 k_c]",
        params=dict(pump_E=0.99, dt=1e-3, t_total=1.01e5, sample_every=0.25),
        n_trajectories=4, plot_k_max=5 * math.sqrt(0.09),
        scale="4 x 1e5 (0.04 of 1e7)", wall="~40 min"),
    "fig5": dict(
        doc="V(k_c) across threshold and into the disordered regime",
        params=dict(dt=0.01, t_total=2.0e4),
        n_trajectories=8,
        variants=("pump_E=0.9; pump_E=0.95; pump_E=0.99; pump_E=1.0; pump_E=1.02; "
                  "pump_E=1.1; pump_E=1.2; pump_E=1.3; pump_E=1.4; pump_E=1.5"),
        scale="8 x 2e4 per pump value (0.016 of 1e7)", wall="~1.5 min per pump value"),
    "fig6": dict(
        doc="Phase sum theta+ + theta- at k_c across threshold",
        params=dict(dt=0.01, t_total=1.0e4),
        n_trajectories=8,
        variants="pump_E=0.95; pump_E=1.0; pump_E=1.02; pump_E=1.05; pump_E=1.1; pump_E=1.2",
        scale="8 x 1e4 per pump value (0.008 of 1e7)", wall="~1 min per pump value"),
    "fig7": dict(
        doc="Stripe pattern at E = 1.1: mean signal and pump far-field spectra",
        params=dict(pump_E=1.1, dt=0.01, t_total=1.0e4),
        n_trajectories=8, snapshot_every=10.0,
        scale="8 x 1e4 (0.008 of 1e7)", wall="~1 min"),
    "fig8": dict(
        doc="V(k) spectrum of the stripe pattern at E = 1.1",
        params=dict(pump_E=1.1, dt=0.01, t_total=2.0e4),
        n_trajectories=8,
        scale="8 x 2e4 (0.016 of 1e7)", wall="~1.5 min"),
    "fig9a": dict(
        doc="Disordered structure at E = 1.5 grown from rolls",
        params=dict(pump_E=1.5, dt=0.01, t_total=1.0e4, init_kind="rolls"),
        n_trajectories=4, snapshot_every=10.0,
        scale="4 x 1e4 (0.004 of 1e7)", wall="~30 s"),
    "fig9b": dict(
        doc="Two-domain structure at E = 1.5 grown from a step",
        params=dict(pump_E=1.5, dt=0.01, t_total=1.0e4, init_kind="step"),
        n_trajectories=4, snapshot_every=10.0,
        scale="4 x 1e4 (0.004 of 1e7)", wall="~30 s"),
    "fig10": dict(
        doc="V(k) in the disordered regime E = 1.5: rolls, step, and step with N = 128",
        params=dict(pump_E=1.5, dt=0.01, t_total=2.0e4),
        n_trajectories=8,
        variants="init_kind=rolls; init_kind=step; init_kind=rolls, n_points=128",
        scale="8 x 2e4 per variant (0.016 of 1e7)", wall="~5 min"),
    "fig11": dict(
        doc="V(k) at E = 1.3 from noise, rolls and step initial conditions",
        params=dict(pump_E=1.3, dt=0.01, t_total=2.0e4),
        n_trajectories=8,
        variants="init_kind=noise; init_kind=rolls; init_kind=step",
        scale="8 x 2e4 per variant (0.016 of 1e7)", wall="~5 min"),
}


def preset(name: str) -> RunConfig:
    """Desk-scale configuration reproducing the data of figure ``name``."""
    try:
        spec = PRESETS[name]
    except KeyError:
        raise UnknownPresetError(
            f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
    cfg = RunConfig(params=Params(**spec["params"]), n_trajectories=spec["n_trajectories"],
                    snapshot_every=spec.get("snapshot_every", 0.0),
                    plot_k_max=spec.get("plot_k_max", 0.0), preset=name,
                    out_dir=f"qdopo-{name}")
    if "variants" in spec:
        cfg = dataclasses.replace(cfg, variants=_parse_variants("variants", spec["variants"]))
    return cfg


# -- ensembles -------------------------------------------------------------------------

@dataclass
class EnsembleResult:
    report: SpectraReport
    accumulator: MomentAccumulator
    outcomes: list
    config: RunConfig
    wall_time: float
    out_dir: Path | None = None


class _Tee:
    """Fan samples out to an accumulator and, every ``every`` samples, a snapshot list."""

    def __init__(self, acc, every: int):
        self.acc, self.every, self.count = acc, every, 0
        self.records = []

    def add(self, times, pump_modes, signal_modes):
        self.acc.add(times, pump_modes, signal_modes)
        if self.every:
            idx = np.arange(self.count, self.count + len(times))
            pick = idx % self.every == 0
            if pick.any():
                near = np.fft.ifft(np.stack([pump_modes[pick], signal_modes[pick]], axis=1),
                                   axis=-1, norm="ortho")
                self.records.append((times[pick], near[:, 0], near[:, 1]))
        self.count += len(times)


def _run_one(config: RunConfig, index: int, checkpoint_dir: str | None):
    params = config.params
    grid = build_grid(params)
    integ = Integrator(params, grid)
    k_c_mode = grid.nearest_mode(params.k_c) if params.k_c else 1
    acc = MomentAccumulator(params.n_points, amplitude_scale(params, grid), config.block_len,
                            k_c_mode)
    every = 0
    if index == 0 and config.snapshot_every:
        every = max(1, round(config.snapshot_every / params.sample_every))
    sampler = _Tee(acc, every)
    writer = None
    if checkpoint_dir:
        writer = CheckpointWriter(Path(checkpoint_dir) / f"traj_{index:04d}.ckp", params,
                                  trajectory=index, config_hash=config_hash(config))
    try:
        outcome = run_trajectory(params, sampler, index, integrator=integ, checkpoint=writer)
    finally:
        if writer:
            writer.close()
    acc.flush()
    outcome.final_state = None
    return outcome, (None if outcome.rejected else acc), sampler.records


def run_ensemble(config: RunConfig, out_dir=None, write: bool = True,
                 plots: bool = True) -> EnsembleResult:
    """Run ``config.n_trajectories`` trajectories and merge them in index order.

    Rejected trajectories are dropped from all statistics and counted; if
    every trajectory is rejected, :class:`AllTrajectoriesRejectedError`.
    """
    if config.variants:
        raise ValueError("config has variants; use run_variants")
    out = Path(out_dir or config.out_dir) if write else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    ckp_dir = None
    if out and config.checkpoint:
        ckp_dir = out / "checkpoints"
        ckp_dir.mkdir(exist_ok=True)
    start = time.perf_counter()
    jobs = range(config.n_trajectories)
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_run_one, [config] * len(jobs), jobs,
                                    [str(ckp_dir) if ckp_dir else None] * len(jobs)))
    else:
        results = [_run_one(config, i, ckp_dir) for i in jobs]
    wall = time.perf_counter() - start
    outcomes = [r[0] for r in results]
    accs = [r[1] for r in results if r[1] is not None]
    rejected = sum(o.rejected for o in outcomes)
    if not accs:
        raise AllTrajectoriesRejectedError(
            f"all {len(outcomes)} trajectories violated |alpha0| < 2")
    merged = MomentAccumulator.merged(accs)
    grid = build_grid(config.params)
    report = SpectraReport.from_accumulator(
        merged, grid, n_trajectories=len(outcomes), rejected=rejected,
        metadata=_metadata(config, outcomes))
    result = EnsembleResult(report, merged, outcomes, config, wall, out)
    if out:
        _write_outputs(result, results[0][2], plots)
    return result


def _metadata(config: RunConfig, outcomes) -> dict:
    return {
        "params": config.params.to_dict(),
        "seed": config.params.seed,
        "trajectory_seeds": "SeedSequence(seed, spawn_key=(index,)), index = 0..n-1",
        "config_hash": config_hash(config),
        "code_version": __version__,
        "preset": config.preset,
        "rejection_times": [o.rejection_time for o in outcomes if o.rejected],
        "samples_per_trajectory": [o.samples_contributed for o in outcomes],
    }


def _write_outputs(result: EnsembleResult, snapshot_records, plots: bool):
    out, cfg, report = result.out_dir, result.config, result.report
    h = config_hash(cfg)
    (out / "config.txt").write_text(f"# config_hash={h}\n" + to_text(cfg))
    with open(out / "spectra.csv", "w", newline="") as fh:
        fh.write(f"# qdopo spectra, config_hash={h}\n")
        fh.write(report.to_csv())
    report.write_json(out / "spectra.json")
    if snapshot_records:
        with CheckpointWriter(out / "snapshots.ckp", cfg.params, trajectory=0,
                              config_hash=h, kind="snapshots") as w:
            for rec in snapshot_records:
                w.write(*rec)
    steps = sum(o.steps for o in result.outcomes)
    cells = steps * cfg.params.n_points
    lines = [
        f"finished {time.strftime('%Y-%m-%dT%H:%M:%S')}",
        f"config_hash {h}",
        f"trajectories {len(result.outcomes)} rejected {report.rejected} "
        f"partial_results {str(report.partial).lower()}",
        f"samples {report.n_samples}",
        f"steps {steps} wall_s {result.wall_time:.3f} "
        f"steps_per_s {steps / max(result.wall_time, 1e-9):.1f} "
        f"ns_per_cell_step {1e9 * result.wall_time / max(cells, 1):.1f}",
    ]
    for i, o in enumerate(result.outcomes):
        lines.append(f"trajectory {i} {o.status} samples {o.samples_contributed} "
                     f"wall_s {o.wall_time:.3f}"
                     + (f" rejected_at {o.rejection_time}" if o.rejected else ""))
    (out / "run.log").write_text("\n".join(lines) + "\n")
    if plots:
        from . import plotting
        plotting.plot_spectra(report, out / "spectra.png", k_max=cfg.plot_k_max or None,
                              title=cfg.preset or None, config_hash=h)
        if snapshot_records:
            plotting.plot_spatiotemporal(out / "snapshots.ckp", out / "snapshots.png",
                                         cfg.params, config_hash=h)


# -- variants ---------------------------------------------------------------------------

SUMMARY_COLUMNS = ("variant", "pump_E", "k_c", "mean_N1", "mean_N1_err", "v_twin", "v_twin_err",
                   "xminus_var", "xminus_var_err", "xplus_var", "xplus_var_err",
                   "phase_sum", "phase_sum_err", "phase_resultant", "rejected")


def kc_summary(report: SpectraReport, params: Params) -> dict:
    grid = build_grid(params)
    row = report.row(grid.nearest_mode(params.k_c))
    out = {"pump_E": params.pump_E, "k_c": row["k"]}
    for c in SUMMARY_COLUMNS[3:-1]:
        out[c] = row[c]
    out["rejected"] = report.rejected
    return out


def run_variants(config: RunConfig, out_dir=None, write: bool = True, plots: bool = True):
    """Run every variant of ``config`` in order; returns ``[(label, EnsembleResult)]``."""
    out = Path(out_dir or config.out_dir) if write else None
    results = []
    for label, cfg in config.variant_configs():
        log.info("variant %s", label)
        sub = out / label if out else None
        results.append((label, run_ensemble(cfg, sub, write, plots)))
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(f"# config_hash={config_hash(config)}\n"
                                        + to_text(config))
        rows = [{"variant": label, **kc_summary(r.report, r.config.params)}
                for label, r in results]
        with open(out / "summary.csv", "w") as fh:
            fh.write(f"# qdopo k_c summary, config_hash={config_hash(config)}\n")
            fh.write(",".join(SUMMARY_COLUMNS) + "\n")
            for row in rows:
                fh.write(",".join(_csv_cell(row[c]) for c in SUMMARY_COLUMNS) + "\n")
        with open(out / "summary.json", "w") as fh:
            json.dump({"config_hash": config_hash(config), "preset": config.preset,
                       "code_version": __version__, "variants": [r["variant"] for r in rows]},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")
        if plots:
            from . import plotting
            plotting.plot_summary(rows, out / "summary.png", title=config.preset or None,
                                  config_hash=config_hash(config))
    return results


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def run(config: RunConfig, out_dir=None, write: bool = True, plots: bool = True):
    """Run a plain ensemble or all variants."""
    if config.variants:
        return run_variants(config, out_dir, write, plots)
    return run_ensemble(config, out_dir, write, plots)


# -- analysis from checkpoints ------------------------------------------------------------

def analyze_checkpoints(directory, block_len: int = 100) -> SpectraReport:
    """Rebuild the spectra of a run from its ``checkpoints/traj_*.ckp`` files."""
    directory = Path(directory)
    files = sorted((directory / "checkpoints").glob("traj_*.ckp")) or sorted(
        directory.glob("traj_*.ckp"))
    if not files:
        raise FileNotFoundError(f"no traj_*.ckp checkpoint files under {directory}")
    accs, params = [], None
    for path in files:
        header, times, a0, a1 = read_checkpoint(path)
        params = Params(**header["params"])
        grid = build_grid(params)
        acc = MomentAccumulator(params.n_points, amplitude_scale(params, grid), block_len,
                                grid.nearest_mode(params.k_c) if params.k_c else 1)
        for lo in range(0, len(times), 4096):
            sl = slice(lo, lo + 4096)
            acc.add(times[sl], np.fft.fft(a0[sl], axis=-1, norm="ortho"),
                    np.fft.fft(a1[sl], axis=-1, norm="ortho"))
        accs.append(acc.flush())
    merged = MomentAccumulator.merged(accs)
    return SpectraReport.from_accumulator(
        merged, build_grid(params), n_trajectories=len(files),
        metadata={"params": params.to_dict(), "seed": params.seed, "code_version": __version__,
                  "source": "checkpoints", "checkpoint_files": [p.name for p in files]})
