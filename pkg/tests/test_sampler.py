import math

import numpy as np
import pytest

from biorth_ldp import AngelescoSpec, EnsembleSpec, GaussPower, JacobiPower, TablePotential
from biorth_ldp.analysis import quadrature_oracle
from biorth_ldp.errors import ConfigError, NumericalError
from biorth_ldp.references import rho_infinity_moment
from biorth_ldp.sampler import (ChainConfig, EmpiricalMeasure, SampleBatch, empirical_measure,
                                integrated_autocorr_time, merge_batches, run_chain, run_chains)


def _pooled_coordinates(batches):
    return np.concatenate([b.configurations.ravel() for b in batches])


def test_single_gaussian_particle():
    spec = EnsembleSpec(theta=1, weight=GaussPower(0, 1.0))
    cfg = ChainConfig(n=1, sweeps=5500, burn_in=500, thinning=10, step_size=1.0, seed=4)
    x = _pooled_coordinates(run_chains(spec, cfg, 20))
    assert x.size == 10_000
    assert abs(x.mean()) <= 3 * math.sqrt(0.5) / math.sqrt(x.size)
    assert abs(x.var() - 0.5) <= 0.05


def test_uniform_pair_marginal_against_oracle():
    spec = EnsembleSpec(theta=1, weight=JacobiPower(0, 0))
    cfg = ChainConfig(n=2, sweeps=6000, burn_in=1000, thinning=5, step_size=0.3, seed=9)
    batch = merge_batches(run_chains(spec, cfg, 10))
    mu = empirical_measure(batch)
    oracle = quadrature_oracle(spec, 2)
    gap = np.max(np.abs(mu.cdf(oracle.cdf_knots) - oracle.cdf_values))
    assert gap <= 0.02


def test_bosonic_mean_at_64(bosonic_batches):
    batch = bosonic_batches[64]
    assert batch.configurations.shape[0] >= 100
    mean = empirical_measure(batch).mean()
    assert abs(mean - rho_infinity_moment(1)) <= 0.02 * rho_infinity_moment(1)


def test_empirical_measure_single():
    b = SampleBatch("toy", 3, np.array([[3.0, 1.0, 2.0]]), 0.5, np.zeros(1), 0.1, (0, 0))
    mu = empirical_measure(b)
    assert np.array_equal(mu.atoms, [1.0, 2.0, 3.0])
    assert np.allclose(mu.masses, 1 / 3)


def test_empirical_measure_pooling():
    b = SampleBatch("toy", 2, np.array([[0.0, 1.0], [2.0, 3.0]]), 0.5, np.zeros(2), 0.1, (0, 0))
    mu = empirical_measure(b)
    assert mu.atoms.size == 4 and np.allclose(mu.masses, 0.25)
    per = empirical_measure(b, pool=False)
    assert len(per) == 2 and np.array_equal(per[1].atoms, [2.0, 3.0])


def test_empirical_measure_permutation_idempotent():
    rng = np.random.default_rng(0)
    x = rng.random(9)
    a = EmpiricalMeasure(x, np.full(9, 1 / 9))
    b = EmpiricalMeasure(rng.permutation(x), np.full(9, 1 / 9))
    assert np.array_equal(a.atoms, b.atoms)
    assert np.array_equal(EmpiricalMeasure(a.atoms, a.masses).atoms, a.atoms)


def test_empirical_mass_check():
    with pytest.raises(NumericalError):
        EmpiricalMeasure(np.array([0.0, 1.0]), np.array([0.5, 0.6]))


def test_reproducible_and_chain_independent():
    spec = EnsembleSpec(theta=2, weight=JacobiPower(0.5, 0.0))
    cfg = ChainConfig(n=5, sweeps=300, thinning=3, seed=21)
    a = run_chains(spec, cfg, 3)
    b = run_chains(spec, cfg, 3)
    c = run_chains(spec, cfg, 2)
    for x, y in zip(a, b):
        assert np.array_equal(x.configurations, y.configurations)
        assert np.array_equal(x.log_density, y.log_density)
        assert x.acceptance_rate == y.acceptance_rate
    assert np.array_equal(a[1].configurations, c[1].configurations)
    assert np.array_equal(run_chain(spec, cfg).configurations, a[0].configurations)


def test_support_confinement_angelesco():
    spec = AngelescoSpec(intervals=((-2.0, -0.2), (0.3, 1.0)), ratios=(0.5, 0.5),
                         potentials=(GaussPower(0, 0.5), GaussPower(0, 0.5)))
    batch = run_chain(spec, ChainConfig(n=8, sweeps=400, thinning=2, step_size=0.5, seed=2))
    assert batch.block_sizes == (4, 4)
    assert np.all((batch.species(0) >= -2.0) & (batch.species(0) <= -0.2))
    assert np.all((batch.species(1) >= 0.3) & (batch.species(1) <= 1.0))
    assert np.all(np.isfinite(batch.log_density))


def test_log_density_trace_is_exact():
    from biorth_ldp.ensemble_model import log_joint_density_unnormalized
    spec = EnsembleSpec(theta=3, weight=GaussPower(0, 1.0))
    batch = run_chain(spec, ChainConfig(n=6, sweeps=1000, thinning=50, seed=5))
    for x, ld in zip(batch.configurations, batch.log_density):
        assert ld == pytest.approx(log_joint_density_unnormalized(spec, x, 6), abs=1e-8)


def test_three_bin_flows_balance():
    # reversible chains have matching pairwise flows between any partition cells
    spec = EnsembleSpec(theta=1, weight=TablePotential((0.0, 1.0, 2.0), (0.0, 1.5, 0.5)),
                        support=(0.0, 2.0))
    cfg = ChainConfig(n=1, sweeps=40_000, burn_in=1000, thinning=1, step_size=0.8, adapt=False, seed=3)
    counts = np.zeros((3, 3))
    for b in run_chains(spec, cfg, 8):
        s = np.minimum((b.configurations[:, 0] * 1.5).astype(int), 2)
        np.add.at(counts, (s[:-1], s[1:]), 1)
    for i in range(3):
        for j in range(i + 1, 3):
            tot = counts[i, j] + counts[j, i]
            assert abs(counts[i, j] - counts[j, i]) <= 4 * math.sqrt(tot)


def test_zero_acceptance_burn_in():
    spec = EnsembleSpec(theta=1, weight=GaussPower(0, 1.0))
    with pytest.raises(NumericalError):
        run_chain(spec, ChainConfig(n=1, sweeps=100, burn_in=50, step_size=1e9, adapt=False, seed=0))


def test_acceptance_adapts_into_band():
    spec = EnsembleSpec(theta=1, weight=GaussPower(0, 0.5))
    batch = run_chain(spec, ChainConfig(n=8, sweeps=2000, burn_in=1500, step_size=5.0, seed=1))
    assert 0.2 <= batch.acceptance_rate <= 0.6


@pytest.mark.parametrize("kwargs", [
    {"n": 3, "sweeps": 10, "burn_in": 10},
    {"n": 3, "sweeps": 10, "thinning": 0},
    {"n": 3, "sweeps": 10, "step_size": 0.0},
    {"n": 0, "sweeps": 10},
])
def test_chain_config_validation(kwargs):
    with pytest.raises(ConfigError):
        ChainConfig(**kwargs)


def test_burn_in_default():
    assert ChainConfig(n=2, sweeps=1000).burn_in == 200


def test_autocorrelation_time_ar1():
    rng = np.random.default_rng(12)
    phi, n = 0.8, 200_000
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = 0.0
    for k in range(1, n):
        x[k] = phi * x[k - 1] + e[k]
    assert integrated_autocorr_time(x) == pytest.approx((1 + phi) / (1 - phi), rel=0.1)
