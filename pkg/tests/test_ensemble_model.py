import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from biorth_ldp import (AngelescoSpec, EnsembleSpec, GaussPower, JacobiPower, LogSquare, PowerExp,
                        TablePotential, bosonic_spec)
from biorth_ldp.ensemble_model import (check_tail_assumption, ensemble_from_dict,
                                       log_joint_density_angelesco, log_joint_density_unnormalized,
                                       log_pair_interaction, log_weight)
from biorth_ldp.errors import ConfigError, ContractError, DomainError

from oracles import angelesco_product, log_squared_vandermonde

FLAT = TablePotential((0.0, 1.0), (0.0, 0.0))


# log_weight

@pytest.mark.parametrize("n", [1, 2, 7, 100])
def test_power_exp_weight_at_one(n):
    spec = EnsembleSpec(theta=2, weight=PowerExp(0, 1))
    assert log_weight(spec, 1.0, n) == -1.0


@pytest.mark.parametrize("n", [1, 5])
def test_power_exp_alpha_two_at_one(n):
    spec = EnsembleSpec(theta=2, weight=PowerExp(2, 1))
    assert log_weight(spec, 1.0, n) == -1.0


def test_jacobi_weight_vanishes_at_edge():
    spec = EnsembleSpec(theta=1, weight=JacobiPower(1, 1))
    assert log_weight(spec, 0.0, 3) == -math.inf


def test_log_weight_outside_support():
    spec = EnsembleSpec(theta=2, weight=PowerExp(0, 1))
    with pytest.raises(DomainError):
        log_weight(spec, -0.5, 2)


def test_finite_n_offset_enters_as_alpha_over_n():
    spec = bosonic_spec(alpha=3)
    x = 2.5
    assert log_weight(spec, x, 4) == pytest.approx((3 / 4) * math.log(x) - x, rel=1e-15)


# joint density

def test_uniform_pair_density():
    spec = EnsembleSpec(theta=1, weight=JacobiPower(0, 0))
    assert log_joint_density_unnormalized(spec, [0.25, 0.75], 2) == pytest.approx(2 * math.log(0.5), abs=1e-14)


def test_coincident_coordinates_give_minus_infinity():
    spec = bosonic_spec()
    assert log_joint_density_unnormalized(spec, [1.0, 1.0, 2.0], 3) == -math.inf


def test_bosonic_pair_density():
    # n * log w_n(x) = -x per particle: log 1 + log 3 - 3
    spec = EnsembleSpec(theta=2, weight=PowerExp(0, 0.5))
    assert log_joint_density_unnormalized(spec, [1.0, 2.0], 2) == pytest.approx(-1.9013877113318902, abs=1e-12)


def test_length_mismatch_is_contract_error():
    with pytest.raises(ContractError):
        log_joint_density_unnormalized(bosonic_spec(), [1.0, 2.0], 3)


def test_outside_support_is_soft():
    assert log_joint_density_unnormalized(bosonic_spec(), [-1.0, 2.0], 2) == -math.inf


def test_theta_one_matches_squared_vandermonde():
    rng = np.random.default_rng(3)
    spec = EnsembleSpec(theta=1, weight=JacobiPower(0, 0))
    for _ in range(20):
        x = rng.random(6)
        assert log_joint_density_unnormalized(spec, x, 6) == pytest.approx(log_squared_vandermonde(x), abs=1e-11)


@given(st.lists(st.floats(0.01, 10.0), min_size=2, max_size=7, unique=True), st.randoms())
def test_density_is_permutation_symmetric(xs, rnd):
    spec = EnsembleSpec(theta=3, weight=PowerExp(0.5, 1.0))
    perm = list(xs)
    rnd.shuffle(perm)
    a = log_joint_density_unnormalized(spec, xs, len(xs))
    b = log_joint_density_unnormalized(spec, perm, len(xs))
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


@given(st.floats(0.001, 50.0), st.floats(0.001, 50.0), st.integers(1, 6))
def test_pair_interaction_matches_direct_powers(x, y, theta):
    if abs(x - y) < 1e-6:
        return
    direct = math.log(abs(x - y)) + math.log(abs(x ** theta - y ** theta))
    assert float(log_pair_interaction(x, y, theta)) == pytest.approx(direct, rel=1e-9, abs=1e-9)


@given(st.floats(0.01, 5.0), st.integers(2, 8))
def test_even_theta_pair_finite_off_diagonal(x, theta):
    y = x * 1.37 + 0.01
    assert math.isfinite(float(log_pair_interaction(x, y, theta)))


def test_large_theta_close_points_no_overflow():
    val = float(log_pair_interaction(1e3, 1e3 * (1 + 1e-12), 40))
    assert math.isfinite(val)


# Angelesco density

def _flat_angelesco(intervals):
    return AngelescoSpec(intervals=intervals, ratios=(0.5, 0.5), potentials=(FLAT, FLAT))


def test_angelesco_single_cross_pair():
    spec = _flat_angelesco(((-1.0, -0.1), (0.1, 1.0)))
    assert log_joint_density_angelesco(spec, [[-0.5], [0.5]], 2) == pytest.approx(0.0, abs=1e-15)


def test_angelesco_two_by_two():
    spec = _flat_angelesco(((-1.0, 0.0), (0.0, 1.0)))
    blocks = [[-0.75, -0.25], [0.25, 0.75]]
    val = log_joint_density_angelesco(spec, blocks, 4)
    assert val == pytest.approx(-3.0602707946915624, abs=1e-12)
    assert val == pytest.approx(angelesco_product(blocks), abs=1e-12)


def test_angelesco_coincidence():
    spec = _flat_angelesco(((-1.0, 0.0), (0.0, 1.0)))
    assert log_joint_density_angelesco(spec, [[-0.5, -0.5], [0.25, 0.75]], 4) == -math.inf


def test_angelesco_outside_interval():
    spec = _flat_angelesco(((-1.0, 0.0), (0.0, 1.0)))
    assert log_joint_density_angelesco(spec, [[-0.5, 0.5], [0.25, 0.75]], 4) == -math.inf


@given(st.integers(0, 10_000))
def test_angelesco_cross_sign_constant(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-3, -0.5, 4)
    y = rng.uniform(0.5, 3, 5)
    assert np.all(x[:, None] - y[None, :] < 0)


def test_angelesco_overlap_rejected():
    with pytest.raises(ConfigError):
        _flat_angelesco(((-1.0, 0.5), (0.0, 1.0)))


def test_angelesco_ratio_validation():
    with pytest.raises(ConfigError):
        AngelescoSpec(intervals=((-1, 0), (1, 2)), ratios=(0.7, 0.7), potentials=(FLAT, FLAT))


# tail diagnostic

def test_tail_bosonic_satisfied():
    assert check_tail_assumption(bosonic_spec(), 0.1, 100.0).satisfied


def test_tail_flat_weight_violated():
    spec = EnsembleSpec(theta=1, weight=FLAT, support=(0.0, math.inf))
    rep = check_tail_assumption(spec, 0.1, 100.0)
    assert not rep.satisfied


def test_tail_log_square_satisfied():
    spec = EnsembleSpec(theta=1, weight=LogSquare(1.0))
    assert check_tail_assumption(spec, 0.1, 1e6).satisfied


def test_tail_bounded_trivial():
    assert check_tail_assumption(EnsembleSpec(theta=1, weight=JacobiPower(0, 0)), 0.1, 10.0).satisfied


# validation and round trips

@pytest.mark.parametrize("kwargs", [
    {"theta": 0, "weight": PowerExp()},
    {"theta": 1.5, "weight": PowerExp()},
    {"theta": 2, "weight": GaussPower()},
    {"theta": 1, "weight": PowerExp(), "kappa": 0},
    {"theta": 1, "weight": JacobiPower(), "support": (-1.0, 1.0)},
])
def test_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        EnsembleSpec(**kwargs)


@pytest.mark.parametrize("weight_args", [
    (PowerExp, {"alpha": -1}), (PowerExp, {"tau": 0}), (GaussPower, {"alpha": -2}),
    (JacobiPower, {"beta_jac": -1}), (LogSquare, {"c_sw": 0}),
    (TablePotential, {"nodes": (0, 0), "values": (1, 1)}),
])
def test_weight_validation(weight_args):
    cls, kwargs = weight_args
    with pytest.raises(ConfigError):
        cls(**kwargs)


@pytest.mark.parametrize("spec", [
    bosonic_spec(alpha=2),
    EnsembleSpec(theta=3, weight=JacobiPower(0.5, 1.5), kappa=0.5, name="j"),
    EnsembleSpec(theta=1, weight=TablePotential((-1, 0, 2), (1.0, 0.0, 3.0))),
    AngelescoSpec(intervals=((-2, -1), (1, 2)), ratios=(0.25, 0.75),
                  potentials=(GaussPower(0, 0.5), LogSquare(2.0))),
])
def test_dict_round_trip(spec):
    assert ensemble_from_dict(spec.to_dict()) == spec


def test_particle_rule():
    spec = EnsembleSpec(theta=1, weight=GaussPower(), kappa=0.5)
    assert spec.particles(10) == 5
    spec.check_particle_rule([10, 20, 40])
    bad = EnsembleSpec(theta=1, weight=GaussPower(), kappa=1.0, p_of_n=lambda n: 2 * n)
    with pytest.raises(ConfigError):
        bad.check_particle_rule([10])
