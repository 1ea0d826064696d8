import numpy as np
import pytest

from spde_split.noise import (CONVOLUTION_CHANNEL, BatchNoise, CovarianceSpec, DriverSource, NoiseStream,
                              aggregate_increments, convolution_covariance, convolution_from_normals,
                              exact_convolution_increment, increment_from_normals, sample_increment, trace_q)
from spde_split.spectral import GridSpec

PL2_TRACE_256 = 1.6136736329582613  # sum over k = -128..127 of (1 + k^2)^-2


def test_single_mode_trace():
    g = GridSpec(16)
    assert trace_q(CovarianceSpec.single_mode(g, 0)) == 1.0


def test_power_law_2_trace_regression():
    g = GridSpec(256)
    cov = CovarianceSpec.power_law(g, 2)
    k = np.arange(-128, 128, dtype=float)
    assert trace_q(cov) == pytest.approx(np.sum(1.0 / (1.0 + k**2) ** 2), rel=1e-14)
    assert trace_q(cov) == pytest.approx(PL2_TRACE_256, rel=1e-14)
    # the infinite lattice sum is (pi coth pi + pi^2 csch^2 pi) / 2; the tail past 128 is ~3e-7
    full = 0.5 * (np.pi / np.tanh(np.pi) + (np.pi / np.sinh(np.pi)) ** 2)
    assert 0 < full - trace_q(cov) < 1e-6


def test_power_law_4_trace_smaller():
    g = GridSpec(256)
    assert trace_q(CovarianceSpec.power_law(g, 4)) < trace_q(CovarianceSpec.power_law(g, 2))


def test_covariance_validation():
    g = GridSpec(8)
    with pytest.raises(ValueError):
        CovarianceSpec("power-law-3", np.ones(8))
    with pytest.raises(ValueError):
        CovarianceSpec("custom", -np.ones(8))
    with pytest.raises(ValueError):
        CovarianceSpec.from_name("white", g)
    with pytest.raises(ValueError):
        CovarianceSpec.power_law(g, 3)


def test_zero_covariance_gives_zero_increment():
    g = GridSpec(16)
    cov = CovarianceSpec("custom", np.zeros(16))
    dw = sample_increment(NoiseStream(1, 0, 16), 3, 0.01, cov)
    assert np.all(dw == 0)


def test_increment_is_real_and_reproducible():
    g = GridSpec(32)
    cov = CovarianceSpec.power_law(g, 2)
    a = sample_increment(NoiseStream(7, 3, 32), 11, 0.01, cov)
    b = sample_increment(NoiseStream(7, 3, 32), 11, 0.01, cov)
    assert a.dtype.kind == "f"
    np.testing.assert_array_equal(a, b)
    c = sample_increment(NoiseStream(7, 4, 32), 11, 0.01, cov)
    assert not np.array_equal(a, c)


def test_random_access_matches_sequential():
    s = NoiseStream(5, 2, 8)
    block = s.normals(0, 10)
    np.testing.assert_array_equal(s.normals(6)[0], block[6])


def test_batch_noise_gathers_per_sample_streams():
    batch = BatchNoise(9, [4, 1, 7], 16)
    first = batch.block(0, 3)
    second = batch.block(3, 2)  # sequential read reuses the open states
    for m, sample in enumerate([4, 1, 7]):
        ref = NoiseStream(9, sample, 16).normals(0, 5)
        np.testing.assert_array_equal(first[:, m], ref[:3])
        np.testing.assert_array_equal(second[:, m], ref[3:])


def test_stream_width_checks():
    with pytest.raises(ValueError):
        NoiseStream(0, 0, 6)
    g = GridSpec(16)
    with pytest.raises(ValueError):
        sample_increment(NoiseStream(0, 0, 32), 0, 0.1, CovarianceSpec.power_law(g, 2))
    with pytest.raises(ValueError):
        exact_convolution_increment(NoiseStream(0, 0, 16), 0, 0.1, CovarianceSpec.power_law(g, 2), 1.0, g)


def test_normals_are_standard():
    xi = NoiseStream(3, 0, 64).normals(0, 4000).ravel()
    assert abs(xi.mean()) < 4 / np.sqrt(xi.size)
    assert abs(xi.var() - 1) < 4 * np.sqrt(2 / xi.size)


def test_increment_second_moment_matches_trace():
    g = GridSpec(16)
    cov = CovarianceSpec.power_law(g, 2)
    tau = 0.01
    xi = NoiseStream(11, 0, 16).normals(0, 100_000)
    dw = increment_from_normals(xi, tau, cov)
    ratio = np.sum(dw**2, axis=1) / tau
    se = ratio.std(ddof=1) / np.sqrt(ratio.size)
    assert abs(ratio.mean() - trace_q(cov)) < 4 * se


def test_aggregation_identity_and_associativity(rng):
    fine = rng.standard_normal((4, 32))
    np.testing.assert_array_equal(aggregate_increments(fine[:1]), fine[0])
    pairs = np.stack([aggregate_increments(fine[:2]), aggregate_increments(fine[2:])])
    np.testing.assert_array_equal(aggregate_increments(fine), aggregate_increments(pairs))


def test_aggregation_checks_block():
    fine = np.zeros((4, 8))
    with pytest.raises(ValueError):
        aggregate_increments(fine[:3])
    with pytest.raises(ValueError):
        aggregate_increments(fine, steps=[4, 5, 7, 8])
    with pytest.raises(ValueError):
        aggregate_increments(fine, steps=[2, 3, 4, 5])
    aggregate_increments(fine, steps=[4, 5, 6, 7])


def test_aggregated_pair_has_double_variance():
    g = GridSpec(16)
    cov = CovarianceSpec.power_law(g, 2)
    xi = NoiseStream(13, 0, 16).normals(0, 200_000).reshape(100_000, 2, 16)
    dw = increment_from_normals(xi, 0.01, cov)
    fine = np.sum(dw[:, 0] ** 2, axis=1)
    coarse = np.sum(aggregate_increments(dw.transpose(1, 0, 2)) ** 2, axis=1)
    diff = coarse - 2 * fine
    # fine and coarse share draws, so compare the paired difference
    assert abs(diff.mean()) < 4 * diff.std(ddof=1) / np.sqrt(diff.size)


def test_convolution_covariance_isometry():
    g = GridSpec(256)
    cov = CovarianceSpec.power_law(g, 2)
    for tau in (1e-6, 0.01, 0.3):
        a, b, c = convolution_covariance(g, tau)
        assert np.all(a >= 0) and np.all(b >= 0)
        assert np.all(a * b - c * c >= -1e-30)
        total = np.sum((a + b) * cov.gamma**2)
        assert total == pytest.approx(tau * trace_q(cov), rel=1e-12)


def test_convolution_zero_mode_is_real_gaussian():
    g = GridSpec(16)
    cov = CovarianceSpec.power_law(g, 2)
    stream = NoiseStream(1, 0, 32, CONVOLUTION_CHANNEL)
    conv = exact_convolution_increment(stream, 0, 0.1, cov, 2.0, g)
    xi = stream.normals(0)[0]
    # -i alpha gamma_0 sqrt(tau) xi: the k = 0 entry is purely imaginary
    assert conv[0] == pytest.approx(-2j * np.sqrt(0.1) * xi[0], abs=1e-15)


def test_convolution_matches_normals_helper():
    g = GridSpec(16)
    cov = CovarianceSpec.power_law(g, 4)
    stream = NoiseStream(2, 5, 32, CONVOLUTION_CHANNEL)
    xi = stream.normals(0, 3)
    for n in range(3):
        np.testing.assert_array_equal(exact_convolution_increment(stream, n, 0.05, cov, 1.5, g),
                                      convolution_from_normals(xi[n], 0.05, cov, 1.5, g))


def _cov_entries(x, y):
    return np.stack([x * x, y * y, x * y])


def _convolution_samples(g, tau, modes, n_draws):
    cov = CovarianceSpec("custom", np.ones(g.num_modes))
    idx = [int(np.flatnonzero(g.wavenumbers == k)[0]) for k in modes]
    exact = convolution_from_normals(NoiseStream(21, 0, 2 * g.num_modes).normals(0, n_draws), tau, cov, 1.0, g)
    z = 1j * exact[:, idx]  # X + iY
    return _cov_entries(z.real, z.imag), idx


def test_convolution_covariance_matches_closed_form():
    g = GridSpec(16)
    tau, modes, n = 0.01, [0, 1, 2, 3, 5], 100_000
    ex, idx = _convolution_samples(g, tau, modes, n)
    theory = np.stack(convolution_covariance(g, tau))[:, idx]
    for e in range(3):
        d = ex[e].mean(0) - theory[e]
        se = ex[e].std(0, ddof=1) / np.sqrt(n)
        assert np.all(np.abs(d) <= np.where(se > 0, 4 * se, 1e-15)), (e, d / np.where(se > 0, se, 1))


def test_convolution_covariance_matches_substepping_oracle():
    g = GridSpec(16)
    tau, n_draws, sub = 0.01, 100_000, 64
    modes = [0, 1, 2, 3, 5]
    ex, _ = _convolution_samples(g, tau, modes, n_draws)

    # sum_j S(tau - s_j) dbeta_j over 64 substeps; the integrand is deterministic, so any tag
    # point gives an Ito sum. Midpoint tags keep the quadrature bias O(dt^2); left points would
    # overstate the sin^2 entry by ~2.4% (about 4 SE at this sample size).
    dt = tau / sub
    s = (np.arange(sub) + 0.5) * dt
    k2 = np.array(modes, float) ** 2
    phase = np.exp(1j * np.outer(tau - s, k2))          # (sub, modes)
    db = NoiseStream(22, 0, 64).normals(0, n_draws * len(modes) * sub // 64)
    db = db.reshape(n_draws, sub, len(modes)) * np.sqrt(dt)
    w = np.einsum("nsm,sm->nm", db, phase)
    orc = _cov_entries(w.real, w.imag)

    for j in range(len(modes)):
        for e in range(3):
            d = ex[e, :, j].mean() - orc[e, :, j].mean()
            se = np.hypot(ex[e, :, j].std(ddof=1), orc[e, :, j].std(ddof=1)) / np.sqrt(n_draws)
            if se == 0:
                assert abs(d) < 1e-15
            else:
                assert abs(d) < 4 * se, (modes[j], e, d, se)


def test_driver_source_matches_streams():
    g = GridSpec(16)
    cov = CovarianceSpec.power_law(g, 2)
    src = DriverSource("increment", g, cov, 0.1, 4, [2, 9], chunk=3)
    for n in (0, 1, 4, 2):
        drv = src(n)
        for m, sample in enumerate([2, 9]):
            np.testing.assert_array_equal(drv[m], sample_increment(NoiseStream(4, sample, 16), n, 0.1, cov))
    conv = DriverSource("convolution", g, cov, 0.1, 4, [2], alpha=1.5)
    ref = exact_convolution_increment(NoiseStream(4, 2, 32, CONVOLUTION_CHANNEL), 1, 0.1, cov, 1.5, g)
    conv(0)
    np.testing.assert_array_equal(conv(1)[0], ref)
    with pytest.raises(ValueError):
        DriverSource("brownian", g, cov, 0.1, 0, [0])
