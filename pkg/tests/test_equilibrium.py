import math
import warnings

import numpy as np
import pytest

from biorth_ldp import (AngelescoSpec, EnsembleSpec, GaussPower, JacobiPower, TablePotential,
                        bosonic_spec, gue_type_spec)
from biorth_ldp.analysis import quadrature_oracle, reference_measure, wasserstein1
from biorth_ldp.equilibrium import (GridMeasure, InteractionKernel, angelesco_energy, assemble_kernel,
                                    constrained_minimize, energy, make_grid, minimize,
                                    minimize_angelesco, solve_ensemble, truncation_interval)
from biorth_ldp.errors import ConfigError, ConvergenceError, NumericalError

from oracles import cell_self_average

FLAT = TablePotential((0.0, 1.0), (0.0, 0.0))


def _gue_kernel(m=200, a=-3.0, b=3.0):
    nodes, delta = make_grid(a, b, m)
    return assemble_kernel(gue_type_spec(), nodes, delta)


def _certify(kernel, report, kappa, tol):
    """First-order optimality over the simplex and simplex invariants."""
    w = report.minimizer.weights
    assert np.all(w >= 0) and abs(w.sum() - 1) <= 1e-12
    act = kernel.active
    grad = kappa ** 2 * (kernel.K @ w) + kappa * np.where(act, kernel.U, 0.0)
    assert np.min(grad[act] - grad @ w) >= -tol
    trace = np.array(report.energy_trace)
    assert np.all(np.diff(trace) <= 1e-13 * (1 + np.abs(trace[:-1])))
    assert report.final_duality_gap >= 0


# grid measures

def test_grid_measure_invariants():
    with pytest.raises(NumericalError):
        GridMeasure(np.array([0.0, 1.0]), 1.0, np.array([0.5, 0.4]))
    with pytest.raises(NumericalError):
        GridMeasure(np.array([0.0, 1.0]), 1.0, np.array([1.5, -0.5]))
    with pytest.raises(ConfigError):
        GridMeasure(np.array([0.0, 1.0, 3.0]), 1.0, np.full(3, 1 / 3))


def test_make_grid_rejects_empty_interval():
    with pytest.raises(ConfigError):
        make_grid(3.0, 1.0, 10)


# kernel assembly

def test_diagonal_theta_one():
    nodes, delta = make_grid(0.0, 1.0, 100)
    k = assemble_kernel(EnsembleSpec(theta=1, weight=JacobiPower(0, 0)), nodes, delta)
    assert np.allclose(np.diag(k.K), 12.210340371976184, atol=1e-12)
    assert -2 * cell_self_average(0.01) == pytest.approx(12.210340371976184, abs=1e-8)


def test_far_off_diagonal_theta_one():
    nodes, delta = make_grid(0.0, 1.0, 200)
    k = assemble_kernel(EnsembleSpec(theta=1, weight=JacobiPower(0, 0)), nodes, delta)
    d = nodes[150] - nodes[10]
    assert abs(k.K[10, 150] + 2 * math.log(d)) <= (delta / d) ** 2


@pytest.mark.parametrize("spec,interval", [
    (gue_type_spec(), (-3, 3)), (bosonic_spec(), (0, 6)),
    (EnsembleSpec(theta=4, weight=JacobiPower(1, 2)), (0, 1)),
])
def test_kernel_symmetric_finite(spec, interval):
    nodes, delta = make_grid(*interval, 150)
    k = assemble_kernel(spec, nodes, delta)
    assert np.array_equal(k.K, k.K.T)
    assert np.all(np.isfinite(k.K))


def test_zero_of_weight_is_excluded():
    spec = EnsembleSpec(theta=1, weight=JacobiPower(1, 1))
    nodes = np.array([0.0, 0.25, 0.5])
    with pytest.raises(ConfigError):
        assemble_kernel(spec, nodes, 0.25)
    nodes, delta = make_grid(0.0, 1.0, 50)
    k = assemble_kernel(spec, nodes, delta)
    rep = minimize(k, 1.0)
    assert np.all(rep.minimizer.weights[~k.active] == 0)


# energy

def test_point_mass_energy():
    k = _gue_kernel(50)
    w = np.zeros(50)
    w[7] = 1.0
    assert energy(k, w, 1.3) == pytest.approx(0.5 * 1.3 ** 2 * k.K[7, 7] + 1.3 * k.U[7], rel=1e-14)


def test_two_cell_uniform_energy():
    nodes, delta = make_grid(0.0, 1.0, 2)
    k = assemble_kernel(EnsembleSpec(theta=1, weight=JacobiPower(0, 0)), nodes, delta)
    expected = 0.5 * (k.K[0, 0] + 2 * k.K[0, 1] + k.K[1, 1]) / 4
    assert energy(k, np.array([0.5, 0.5]), 1.0) == pytest.approx(expected, rel=1e-14)


def test_semicircle_beats_uniform(gue_solution):
    mu = gue_solution.minimizer
    nodes, delta = mu.nodes, mu.delta
    k = assemble_kernel(gue_type_spec(), nodes, delta)
    sc = reference_measure("semicircle")
    w_sc = np.diff(sc.cdf(mu.edges))
    w_sc /= w_sc.sum()
    w_unif = np.where(np.abs(nodes) < 2, 1.0, 0.0)
    w_unif /= w_unif.sum()
    assert gue_solution.energy_value <= energy(k, w_sc, 1.0) <= energy(k, w_unif, 1.0)


# minimization

def test_symmetric_two_node_toy():
    k = InteractionKernel(np.array([0.0, 1.0]), 1.0, np.array([[3.0, 1.0], [1.0, 3.0]]), np.array([0.2, 0.2]))
    rep = minimize(k, 1.0, tolerance=1e-14)
    assert np.allclose(rep.minimizer.weights, [0.5, 0.5], atol=1e-12)


def test_gue_solution_certified(gue_solution):
    k = _gue_kernel(400)
    _certify(k, gue_solution, 1.0, 1e-8)
    lo, hi = gue_solution.minimizer.support_endpoints(1e-12)
    assert abs(lo + 2) <= 2 * 0.015 and abs(hi - 2) <= 2 * 0.015


def test_bosonic_solution_certified(bosonic_solution):
    nodes, delta = make_grid(0.0, 6.0, 400)
    _certify(assemble_kernel(bosonic_spec(), nodes, delta), bosonic_solution, 1.0, 1e-8)
    assert bosonic_solution.c_constant == -bosonic_solution.energy_value


def test_iteration_cap():
    with pytest.raises(ConvergenceError) as info:
        minimize(_gue_kernel(100), 1.0, tolerance=1e-12, max_iter=3, polish_every=1000)
    assert "gap" in info.value.payload


def test_grid_refinement_shrinks():
    sols = [solve_ensemble(gue_type_spec(), m, (-3.0, 3.0)).minimizer for m in (100, 200, 400, 800)]
    diffs = [wasserstein1(a, b) for a, b in zip(sols, sols[1:])]
    assert diffs[0] > diffs[1] > diffs[2]


def test_truncation_warning():
    with pytest.warns(RuntimeWarning):
        solve_ensemble(bosonic_spec(), 100, (0.0, 3.0))


def test_truncation_interval_confines():
    a, b = truncation_interval(gue_type_spec())
    assert a < -2 and b > 2
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        solve_ensemble(gue_type_spec(), 200)


@pytest.mark.parametrize("spec,interval", [(gue_type_spec(), (-4.0, 4.0)), (bosonic_spec(), (0.0, 8.0))])
def test_c_constant_direction(spec, interval):
    c = solve_ensemble(spec, 400, interval).c_constant
    scaled = [quadrature_oracle(spec, n, truncate=interval).log_Z / n ** 2 for n in (1, 2, 3)]
    gaps = [abs(s - c) for s in scaled]
    assert gaps[0] > gaps[1] > gaps[2]
    extrapolated = 3 * scaled[2] - 2 * scaled[1]
    assert abs(extrapolated - c) < gaps[2]


# constrained minimization

def test_constraint_inactive():
    k = _gue_kernel()
    free = minimize(k, 1.0)
    rep = constrained_minimize(k, 1.0, k.nodes, -0.5, unconstrained=free)
    assert rep.energy_value == free.energy_value


def test_constraint_at_max_node():
    k = _gue_kernel()
    rep = constrained_minimize(k, 1.0, k.nodes, k.nodes[-1])
    w = rep.minimizer.weights
    assert w[-1] == pytest.approx(1.0, abs=1e-12)
    assert rep.energy_value == pytest.approx(0.5 * k.K[-1, -1] + k.U[-1], rel=1e-12)


def test_constraint_infeasible():
    k = _gue_kernel()
    with pytest.raises(ConfigError):
        constrained_minimize(k, 1.0, k.nodes, 3.5)


def test_constrained_value_monotone_and_shift():
    # for the quadratic field the optimal measure with mean t is the shifted semicircle,
    # so the value rises by exactly t^2/2 in the continuum
    k = _gue_kernel()
    free = minimize(k, 1.0, 1e-10)
    ts = np.round(np.arange(1, 11) * 0.1, 10)
    values = [constrained_minimize(k, 1.0, k.nodes, t, 1e-10, unconstrained=free).energy_value for t in ts]
    assert values[4] > free.energy_value
    assert np.all(np.diff(values) >= 0)
    rates = np.array(values) - free.energy_value
    assert np.allclose(rates, ts ** 2 / 2, atol=2e-3)


# Angelesco

def _mirror_spec(ratios=(0.5, 0.5)):
    return AngelescoSpec(intervals=((-3.0, -0.5), (0.5, 3.0)), ratios=ratios,
                         potentials=(GaussPower(0, 0.5), GaussPower(0, 0.5)))


def test_angelesco_mirror_images():
    rep, _ = minimize_angelesco(_mirror_spec(), [200, 200])
    w1, w2 = rep.minimizer[0].weights, rep.minimizer[1].weights
    assert np.max(np.abs(w1 - w2[::-1])) <= 1e-8


def test_angelesco_energy_double_loop():
    spec = _mirror_spec((0.3, 0.7))
    rep, kern = minimize_angelesco(spec, [60, 80])
    w = [m.weights for m in rep.minimizer]
    r = spec.ratios
    total = 0.0
    for j in range(2):
        for a in range(w[j].size):
            if w[j][a] > 0:
                total += r[j] * kern.fields[j][a] * w[j][a]
            for b in range(w[j].size):
                total += 0.5 * r[j] ** 2 * kern.self_kernels[j][a, b] * w[j][a] * w[j][b]
    for a in range(w[0].size):
        for b in range(w[1].size):
            total += r[0] * r[1] * kern.cross[(0, 1)][a, b] * w[0][a] * w[1][b]
    assert rep.energy_value == pytest.approx(total, rel=1e-10)
    assert angelesco_energy(spec, kern, w) == pytest.approx(total, rel=1e-10)


def test_angelesco_dominant_species_limit():
    spec = AngelescoSpec(intervals=((-3.0, -0.5), (0.5, 3.0)), ratios=(0.999, 0.001),
                         potentials=(GaussPower(0, 0.5), GaussPower(0, 0.5)))
    rep, _ = minimize_angelesco(spec, [200, 200])
    single = solve_ensemble(EnsembleSpec(theta=1, weight=GaussPower(0, 0.5), support=(-3.0, -0.5)),
                            200, check_boundary=False)
    assert wasserstein1(rep.minimizer[0], single.minimizer) <= 1e-2


def test_angelesco_overlapping_grids_rejected():
    with pytest.raises(ConfigError):
        AngelescoSpec(intervals=((-1.0, 0.2), (0.0, 1.0)), ratios=(0.5, 0.5), potentials=(FLAT, FLAT))
