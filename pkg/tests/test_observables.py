import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdopo.errors import (
    InsufficientSamplesError,
    UndefinedForVacuumError,
    UnphysicalMomentsError,
)
from qdopo.lattice import FieldState, Params, build_grid
from qdopo.observables import (
    CSV_COLUMNS,
    MomentAccumulator,
    SpectraReport,
    mean_intensity_spectra,
    mode_amplitudes,
    phase_sum,
    quadrature_variances,
    reorder_number_moments,
    twin_variance,
)

N = 8


def circular(rng, shape, var=1.0):
    """Complex Gaussian with <|z|^2> = var."""
    return math.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def vacuum(rng, n):
    return circular(rng, (n, N)), circular(rng, (n, N))


def feed(beta0, beta1, block_len=100, chunk=997):
    acc = MomentAccumulator(N, block_len=block_len)
    for lo in range(0, len(beta1), chunk):
        acc.add_amplitudes(beta0[lo:lo + chunk], beta1[lo:lo + chunk])
    return acc.flush()


# -- amplitudes -------------------------------------------------------------------------

def test_plane_wave_amplitude():
    p = Params()
    g = build_grid(p)
    amp = 3e-3
    s = FieldState(np.zeros(64), amp * np.exp(1j * p.k_c * g.x))
    b = mode_amplitudes(s, p, g)
    assert abs(b.signal[4]) ** 2 == pytest.approx(64 * g.dx * amp**2 / p.noise_c**2, rel=1e-12)
    assert np.delete(np.abs(b.signal), 4).max() < 1e-9
    assert np.all(b.pump == 0)
    z = mode_amplitudes(FieldState.zeros(64), p, g)
    assert np.all(z.signal == 0) and np.all(z.pump == 0)


# -- reordering -----------------------------------------------------------------------

def test_reorder_examples():
    assert reorder_number_moments(1.0, 2.0) == (0.0, 0.0)
    assert reorder_number_moments(5.0, 34.0) == (4.0, 0.0)
    assert reorder_number_moments(2.0, 8.0) == (1.0, 1.0)


def test_reorder_clips_small_undershoot_and_rejects_large():
    n, _ = reorder_number_moments(0.999, 2.0, m1_stderr=0.001)
    assert n == 0.0
    with pytest.raises(UnphysicalMomentsError):
        reorder_number_moments(0.99, 2.0, m1_stderr=0.001)


@settings(max_examples=50)
@given(nbar=st.floats(0, 50), mu2=st.floats(0, 50))
def test_reorder_closed_forms(nbar, mu2):
    # displaced thermal Q moments: m1 = s + |mu|^2, m2 = 2 s^2 + 4 s |mu|^2 + |mu|^4, s = nbar + 1
    s = nbar + 1
    m1 = s + mu2
    m2 = 2 * s * s + 4 * s * mu2 + mu2 * mu2
    n, var = reorder_number_moments(m1, m2)
    assert n == pytest.approx(nbar + mu2, rel=1e-12, abs=1e-12)
    assert var == pytest.approx(nbar**2 + 2 * nbar * mu2, rel=1e-9, abs=1e-9)


# -- synthetic ensembles ------------------------------------------------------------------

def test_vacuum_samples_give_zero_normal_ordered_moments():
    rng = np.random.default_rng(1)
    acc = feed(*vacuum(rng, 200_000))
    spec = mean_intensity_spectra(acc)
    assert np.all(np.abs(spec.mean_N1) < 4 * spec.mean_N1_err)
    assert np.all(np.abs(spec.mean_N0) < 4 * spec.mean_N0_err)
    for m in (1, 2, 3):
        xm, xp = quadrature_variances(acc, m)
        assert abs(xm.value) < 4 * xm.stderr and abs(xp.value) < 4 * xp.stderr
        with pytest.raises(UndefinedForVacuumError):
            twin_variance(acc, m)


def test_coherent_samples():
    rng = np.random.default_rng(2)
    b0, b1 = vacuum(rng, 200_000)
    mu = np.array([0, 2.0, 1.0 - 1.5j, 0, 0, 0, 0.5j, 0])
    b1 += mu
    acc = feed(b0, b1)
    spec = mean_intensity_spectra(acc)
    np.testing.assert_allclose(spec.mean_N1, np.abs(mu) ** 2, atol=5 * spec.mean_N1_err.max())
    _, mean, var = acc.totals()
    i1 = acc.layout["I1"]
    num_var = var[i1] - 2 * (mean[i1] - 1) - 1
    assert np.all(np.abs(num_var) < 0.1)
    for m in (1, 2):
        xm, xp = quadrature_variances(acc, m)
        assert abs(xm.value) < 4 * xm.stderr and abs(xp.value) < 4 * xp.stderr


def test_thermal_number_variance():
    rng = np.random.default_rng(3)
    nbar = 1.5
    b1 = circular(rng, (300_000, N), nbar + 1)
    acc = feed(circular(rng, (300_000, N)), b1)
    _, mean, var = acc.totals()
    i1 = acc.layout["I1"]
    n, v = reorder_number_moments(mean[i1][2], mean[i1][2] ** 2 + var[i1][2])
    assert n == pytest.approx(nbar, abs=0.02)
    assert v == pytest.approx(nbar**2, abs=0.1)


def test_quadrature_error_shrinks_as_inverse_sqrt_samples():
    rng = np.random.default_rng(4)
    errs = []
    for n in (20_000, 320_000):
        acc = feed(*vacuum(rng, n))
        xm, xp = quadrature_variances(acc, 1)
        assert abs(xm.value) < 4 * xm.stderr and abs(xp.value) < 4 * xp.stderr
        errs.append(xm.stderr)
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)


def test_independent_coherent_twin_variance_is_zero():
    rng = np.random.default_rng(5)
    b0, b1 = vacuum(rng, 400_000)
    b1[:, 1] += 3.0
    b1[:, N - 1] += 2.0j
    acc = feed(b0, b1)
    v = twin_variance(acc, 1)
    assert abs(v.value) < 3 * v.stderr
    assert v.stderr < 0.05


def test_duplicated_intensity_pairs():
    # |beta_k|^2 = |beta_-k|^2 on every sample: Var_Q(D) = 0, so V = -2 - 1/nbar
    rng = np.random.default_rng(6)
    nbar = 3.0
    b0, b1 = vacuum(rng, 100_000)
    b1[:, 2] = circular(rng, 100_000, nbar + 1)
    b1[:, N - 2] = np.abs(b1[:, 2]) * np.exp(2j * np.pi * rng.random(100_000))
    acc = feed(b0, b1)
    v = twin_variance(acc, 2)
    assert v.value == pytest.approx(-2 - 1 / nbar, abs=max(3 * v.stderr, 1e-3))


def test_twin_variance_converges_at_inverse_sqrt_rate():
    rng = np.random.default_rng(7)
    errs = []
    for n in (25_000, 400_000):
        b0, b1 = vacuum(rng, n)
        b1[:, 3] += 2.0
        b1[:, N - 3] += 2.0
        acc = feed(b0, b1)
        v = twin_variance(acc, 3)
        assert abs(v.value) < 3.5 * v.stderr
        errs.append(v.stderr)
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)


def test_insufficient_samples():
    rng = np.random.default_rng(0)
    acc = feed(*vacuum(rng, 50))
    with pytest.raises(InsufficientSamplesError):
        quadrature_variances(acc, 1)
    with pytest.raises(IndexError):
        twin_variance(acc, N // 2)


def test_phase_sum_of_synthetic_stripe():
    p = Params()
    g = build_grid(p)
    rng = np.random.default_rng(8)
    chi = 0.4
    acc = MomentAccumulator(64, scale=1.0, block_len=50)
    for _ in range(40):
        a1 = 50 * np.cos(p.k_c * g.x) * np.exp(1j * chi)
        b = mode_amplitudes(FieldState(np.zeros(64), a1), p.with_(noise_c=1.0), g)
        noise = circular(rng, (50, 64))
        acc.add_amplitudes(noise, b.signal + noise)
    ps = phase_sum(acc.flush(), 4)
    assert ps.defined and ps.value == pytest.approx(2 * chi, abs=0.01)
    assert ps.resultant > 0.99


def test_phase_sum_undefined_when_unlocked():
    rng = np.random.default_rng(9)
    acc = feed(*vacuum(rng, 50_000))
    ps = phase_sum(acc, 2)
    assert not ps.defined


# -- accumulator mechanics ------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(cuts=st.lists(st.integers(1, 1999), max_size=4, unique=True),
       block_len=st.integers(1, 300), seed=st.integers(0, 1000))
def test_merge_is_bit_identical_to_sequential(cuts, block_len, seed):
    rng = np.random.default_rng(seed)
    b0, b1 = vacuum(rng, 2000)
    edges = [0] + sorted(cuts) + [2000]
    parts, seq = [], MomentAccumulator(N, block_len=block_len)
    for lo, hi in zip(edges[:-1], edges[1:]):
        part = MomentAccumulator(N, block_len=block_len)
        part.add_amplitudes(b0[lo:hi], b1[lo:hi])
        parts.append(part.flush())
        seq.add_amplitudes(b0[lo:hi], b1[lo:hi])
        seq.flush()
    merged = MomentAccumulator.merged(parts)
    for a, b in zip(merged.blocks(), seq.blocks()):
        assert np.array_equal(a, b)
    assert merged.count == seq.count == 2000
    assert np.array_equal(merged.totals()[1], seq.totals()[1])


@settings(max_examples=20, deadline=None)
@given(split=st.integers(1, 2999), seed=st.integers(0, 1000))
def test_merge_order_changes_only_rounding(split, seed):
    rng = np.random.default_rng(seed)
    b0, b1 = vacuum(rng, 3000)
    a = feed(b0[:split], b1[:split], block_len=64)
    b = feed(b0[split:], b1[split:], block_len=64)
    n1, m1, v1 = a.merge(b).totals()
    n2, m2, v2 = b.merge(a).totals()
    assert n1 == n2 == 3000
    np.testing.assert_allclose(m1, m2, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(v1, v2, rtol=1e-10)
    _, m3, _ = feed(b0, b1, block_len=3000).totals()
    np.testing.assert_allclose(m1, m3, rtol=1e-11, atol=1e-13)
    # variance: each stream about its own mean, pooled with n - 2 dof
    col = a.layout["I1"].start + 1
    x = np.abs(b1[:, 1]) ** 2
    ss = ((x[:split] - x[:split].mean()) ** 2).sum() + ((x[split:] - x[split:].mean()) ** 2).sum()
    assert v1[col] == pytest.approx(ss / (3000 - 2), rel=1e-9)


def test_twin_variance_ignores_differing_stream_means():
    # two trajectories locked into mirror-image structures: the mean of
    # I_k - I_-k differs between them but its fluctuations do not
    rng = np.random.default_rng(13)
    streams, d = [], []
    for hi, lo in ((30.0, 20.0), (20.0, 30.0)):
        b0, b1 = vacuum(rng, 40_000)
        b1[:, 1] += hi
        b1[:, N - 1] += lo
        streams.append(feed(b0, b1))
        d.append(np.abs(b1[:, 1]) ** 2 - np.abs(b1[:, N - 1]) ** 2)
    acc = MomentAccumulator.merged(streams)
    v, err = twin_variance(acc, 1)
    # independent coherent modes in each stream: V = 0
    assert abs(v) < 3 * err + 1e-3
    # the same samples pooled about one common mean look strongly classical
    n_sum = 30.0**2 + 20.0**2
    pooled = (np.var(np.concatenate(d), ddof=1) - 2 * n_sum - 2) / n_sum
    assert pooled > 100


def test_streaming_moments_stable_with_large_offset():
    # a large coherent offset: naive m2 - m1^2 would lose all digits
    rng = np.random.default_rng(10)
    b0, b1 = vacuum(rng, 100_000)
    b1[:, 1] += 3e4
    acc = feed(b0, b1)
    _, mean, var = acc.totals()
    xp = var[acc.layout["XP"]][0]
    direct = np.var(2 * (b1[:, 1].real + b1[:, N - 1].real), ddof=1)
    assert xp == pytest.approx(direct, rel=1e-6)


def test_jackknife_matches_iid_standard_error():
    rng = np.random.default_rng(11)
    b0, b1 = vacuum(rng, 200_000)
    acc = feed(b0, b1)
    val, err = acc.jackknife(lambda n, mu, var: mu[..., acc.layout["I1"]])
    expected = 1.0 / math.sqrt(200_000)  # |beta|^2 is Exp(1) for vacuum
    np.testing.assert_allclose(err, expected, rtol=0.15)


def test_autocorrelation_time_of_ar1_sequence():
    rng = np.random.default_rng(12)
    rho, n = 0.9, 400_000
    eps = circular(rng, (n, N), 1 - rho**2)
    b1 = np.empty((n, N), complex)
    b1[0] = circular(rng, N)
    for t in range(1, n):
        b1[t] = rho * b1[t - 1] + eps[t]
    acc = MomentAccumulator(N, block_len=50, k_c_mode=1)
    acc.add_amplitudes(circular(rng, (n, N)), b1)
    acc.flush()
    # |beta|^2 of a complex AR(1) Gaussian has autocorrelation rho^(2 lag)
    r = rho**2
    tau = (1 + r) / (2 * (1 - r))
    assert acc.autocorrelation_time() == pytest.approx(tau, rel=0.3)
    g = acc.group_size()
    assert g * acc.block_len >= 10 * tau * 0.7


# -- report ------------------------------------------------------------------------------------

def synthetic_report(rng):
    p = Params(n_points=8, length_L=8 * math.pi)
    g = build_grid(p)
    b0, b1 = vacuum(rng, 20_000)
    b1[:, 1] += 2.0
    b1[:, N - 1] += 2.0
    acc = feed(b0, b1)
    return SpectraReport.from_accumulator(acc, g, n_trajectories=2, rejected=1,
                                          metadata={"seed": 3})


def test_report_layout_and_round_trip(tmp_path):
    rep = synthetic_report(np.random.default_rng(13))
    assert list(rep.m) == [-4, -3, -2, -1, 0, 1, 2, 3]
    assert rep.partial and rep.n_samples == 20_000
    for name in ("v_twin", "xminus_var", "phase_sum"):
        col = rep[name]
        assert np.isnan(col[rep.m <= 0]).all()
    assert np.isnan(rep.row(2)["v_twin"])  # vacuum pair: undefined
    assert np.isfinite(rep.row(1)["v_twin"]) and np.isfinite(rep.row(1)["v_twin_err"])
    for c in CSV_COLUMNS:
        if c + "_err" in CSV_COLUMNS and c != "v_twin_pump":  # vacuum pump: undefined
            assert np.isfinite(rep[c + "_err"][rep.m == 1]).all()
    path = tmp_path / "s.csv"
    path.write_text("# comment line\n" + rep.to_csv())
    back = SpectraReport.read_csv(path)
    assert np.array_equal(back.m, rep.m)
    for c in CSV_COLUMNS[2:]:
        np.testing.assert_array_equal(back[c], rep[c])
    rep.write_json(tmp_path / "s.json")
    side = json.loads((tmp_path / "s.json").read_text())
    assert side["rejected_trajectories"] == 1 and side["partial_results"] is True
    assert side["seed"] == 3 and "v_twin" in side["columns"]


def test_report_is_deterministic():
    a = synthetic_report(np.random.default_rng(14)).to_csv()
    b = synthetic_report(np.random.default_rng(14)).to_csv()
    assert a == b
    assert a.splitlines()[0] == ",".join(CSV_COLUMNS)


# -- simulated phase sum ------------------------------------------------------------------

@pytest.mark.slow
def test_phase_sum_grows_with_distance_above_threshold():
    from qdopo.runner import RunConfig, run_ensemble

    sums = {}
    for E in (0.95, 1.02, 1.1):
        p = Params(pump_E=E, t_total=5000.0)
        acc = run_ensemble(RunConfig(params=p, n_trajectories=2), write=False).accumulator
        sums[E] = phase_sum(acc, build_grid(p).nearest_mode(p.k_c))
    assert abs(sums[0.95].value) < 3 * sums[0.95].stderr + 1e-3
    lo, hi = sums[1.02], sums[1.1]
    assert lo.defined and hi.defined
    assert 0 < lo.value - 3 * lo.stderr
    assert lo.value + 3 * lo.stderr < hi.value - 3 * hi.stderr


@settings(max_examples=15, deadline=None)
@given(lengths=st.lists(st.integers(150, 900), min_size=1, max_size=4),
       group=st.integers(1, 4), seed=st.integers(0, 1000))
def test_jackknife_leave_one_out_matches_brute_force(lengths, group, seed):
    rng = np.random.default_rng(seed)
    data = []
    for n in lengths:
        b0, b1 = vacuum(rng, n)
        b1[:, 1] += rng.normal(0, 3)
        data.append((b0, b1))
    acc = MomentAccumulator.merged([feed(*d, block_len=50) for d in data])
    col = acc.layout["I1"].start + 1

    def var_of(n, mu, var):
        return var[..., col]

    _, err = acc.jackknife(var_of, group)
    # recompute each leave-one-group-out variance from the raw samples
    x_all = [np.abs(b1[:, 1]) ** 2 for _, b1 in data]
    loo = []
    for me, x_me in enumerate(x_all):
        n_blocks = math.ceil(len(x_me) / 50)
        for g0 in range(0, n_blocks, group):
            kept = [x for i, x in enumerate(x_all) if i != me]
            mine = np.delete(x_me, np.s_[g0 * 50:(g0 + group) * 50])
            if len(mine):
                kept.append(mine)
            ss = sum(((x - x.mean()) ** 2).sum() for x in kept)
            loo.append(ss / (sum(len(x) for x in kept) - len(kept)))
    loo = np.array(loo)
    expected = math.sqrt((len(loo) - 1) / len(loo) * ((loo - loo.mean()) ** 2).sum())
    assert err == pytest.approx(expected, rel=1e-8)
