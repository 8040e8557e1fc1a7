"""Metropolis-within-Gibbs sampling of the joint eigenvalue densities.

Each sweep visits every coordinate once and proposes a uniform move inside a
window of half-width ``step_size``.  Several chains are advanced together
(vectorized over the chain axis) but every chain draws from its own random
stream ``default_rng([seed, chain_index])``, so a chain's output does not
depend on how many siblings it was run with.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .ensemble_model import (AngelescoSpec, EnsembleSpec, PowerExp, _log_theta_factor,
                             log_joint_density_angelesco, log_joint_density_unnormalized)
from .errors import ConfigError, NumericalError

__all__ = [
    "ChainConfig", "SampleBatch", "EmpiricalMeasure", "run_chain", "run_chains",
    "empirical_measure", "merge_batches", "integrated_autocorr_time",
]

ADAPT_BATCH = 50


@dataclass(frozen=True)
class ChainConfig:
    n: int
    sweeps: int = 2000
    burn_in: Optional[int] = None
    thinning: int = 10
    step_size: float = 0.1
    adapt: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.sweeps < 1:
            raise ConfigError("n and sweeps must be positive")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", int(0.2 * self.sweeps))
        if not 0 <= self.burn_in < self.sweeps:
            raise ConfigError(f"burn_in must lie in [0, sweeps), got {self.burn_in}")
        if self.thinning < 1:
            raise ConfigError("thinning must be >= 1")
        if not self.step_size > 0:
            raise ConfigError("step_size must be > 0")

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class SampleBatch:
    ensemble_id: str
    n: int
    configurations: np.ndarray          # (kept, p)
    acceptance_rate: float
    log_density: np.ndarray             # (kept,)
    step_size: float
    seed: tuple
    block_sizes: tuple = ()
    iat: float = float("nan")

    @property
    def p(self) -> int:
        return self.configurations.shape[1]

    def species(self, j: int) -> np.ndarray:
        start = int(sum(self.block_sizes[:j]))
        return self.configurations[:, start:start + self.block_sizes[j]]


@dataclass(frozen=True)
class EmpiricalMeasure:
    atoms: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        order = np.argsort(atoms, kind="stable")
        object.__setattr__(self, "atoms", atoms[order])
        object.__setattr__(self, "masses", masses[order])
        if atoms.shape != masses.shape or atoms.ndim != 1 or atoms.size == 0:
            raise ConfigError("atoms and masses must be equal-length nonempty 1-d arrays")
        if np.any(masses < 0) or abs(masses.sum() - 1.0) > 1e-12:
            raise NumericalError("empirical masses must be nonnegative and sum to one",
                                 total=float(masses.sum()))

    def cdf(self, x):
        cum = np.cumsum(self.masses)
        idx = np.searchsorted(self.atoms, np.asarray(x, dtype=float), side="right")
        return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)

    def mean(self) -> float:
        return float(np.dot(self.atoms, self.masses))

    def integrate(self, f) -> float:
        return float(np.dot(f(self.atoms), self.masses))


# ----------------------------------------------------------------------------
# targets: one-body term and pair interaction for a single coordinate
# ----------------------------------------------------------------------------

class _BiorthTarget:
    def __init__(self, spec: EnsembleSpec, n: int):
        self.spec = spec
        self.n = n
        self.p = spec.particles(n)
        self.lo = np.full(self.p, spec.support[0])
        self.hi = np.full(self.p, spec.support[1])
        self.block_sizes = ()

    def one_body(self, k, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.n * self.spec.weight.log_wn(x, self.n)

    def pair_sum(self, k, x, state):
        # x: (C,), state: (C, p); column k is excluded
        with np.errstate(divide="ignore", invalid="ignore"):
            diff = np.abs(state - x[:, None])
            vals = 2.0 * np.log(diff)
            if self.spec.theta > 1:
                vals = vals + _log_theta_factor(x[:, None], state, self.spec.theta)
        vals[:, k] = 0.0
        return vals.sum(axis=1)

    def log_density(self, x):
        return log_joint_density_unnormalized(self.spec, x, self.n)

    def core(self):
        spec = self.spec
        lo, hi = spec.support
        if isinstance(spec.weight, PowerExp) and math.isfinite(lo):
            r0 = 4.0 * (spec.theta + 1) * spec.kappa / spec.weight.tau
            a, b = lo, min(hi, lo + r0)
        else:
            from .equilibrium import truncation_interval
            a, b = truncation_interval(spec)
            a, b = max(a, lo), min(b, hi)
        return np.full(self.p, a), np.full(self.p, b)


class _AngelescoTarget:
    def __init__(self, spec: AngelescoSpec, n: int):
        self.spec = spec
        self.n = n
        self.block_sizes = spec.block_sizes(n)
        self.p = int(sum(self.block_sizes))
        self.species = np.repeat(np.arange(spec.p), self.block_sizes)
        self.lo = np.array([spec.intervals[s][0] for s in self.species])
        self.hi = np.array([spec.intervals[s][1] for s in self.species])
        self.coef = np.where(self.species[:, None] == self.species[None, :], 2.0, 1.0)

    def one_body(self, k, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return -self.n * self.spec.potential(int(self.species[k]), x)

    def pair_sum(self, k, x, state):
        with np.errstate(divide="ignore"):
            vals = self.coef[k][None, :] * np.log(np.abs(state - x[:, None]))
        vals[:, k] = 0.0
        return vals.sum(axis=1)

    def log_density(self, x):
        blocks = np.split(np.asarray(x), np.cumsum(self.block_sizes)[:-1])
        return log_joint_density_angelesco(self.spec, blocks, self.n)

    def core(self):
        return self.lo.copy(), self.hi.copy()


def _make_target(spec, n):
    if isinstance(spec, AngelescoSpec):
        return _AngelescoTarget(spec, n)
    if isinstance(spec, EnsembleSpec):
        return _BiorthTarget(spec, n)
    raise ConfigError(f"unsupported ensemble type {type(spec).__name__}")


# ----------------------------------------------------------------------------
# chains
# ----------------------------------------------------------------------------

def run_chains(spec: Union[EnsembleSpec, AngelescoSpec], cfg: ChainConfig, chains: int = 1):
    """Run ``chains`` independent chains; returns a list of SampleBatches."""
    if chains < 1:
        raise ConfigError("chains must be >= 1")
    target = _make_target(spec, cfg.n)
    p = target.p
    rngs = [np.random.default_rng([cfg.seed, c]) for c in range(chains)]
    core_lo, core_hi = target.core()
    if np.any(~(core_hi > core_lo)):
        raise ConfigError("initialization core has zero measure")

    state = np.empty((chains, p))
    logd = np.empty(chains)
    for c, rng in enumerate(rngs):
        for _ in range(100):
            x = core_lo + (core_hi - core_lo) * rng.random(p)
            ld = target.log_density(x)
            if np.isfinite(ld):
                break
        else:
            raise ConfigError("could not draw an initial configuration with finite density")
        state[c] = x
        logd[c] = ld

    step = np.full(chains, float(cfg.step_size))
    width = target.hi - target.lo
    max_step = float(np.min(np.where(np.isfinite(width), width, np.inf)))
    rows = np.arange(chains)
    kept_x, kept_ld = [], []
    accepted_post = np.zeros(chains)
    proposed_post = 0
    accepted_burn = np.zeros(chains)
    batch_acc = np.zeros(chains)
    batch_count = 0

    for sweep in range(cfg.sweeps):
        draws = np.stack([rng.random((2, p)) for rng in rngs])     # (C, 2, p)
        acc_sweep = np.zeros(chains)
        for k in range(p):
            x_old = state[:, k]
            x_new = x_old + step * (2.0 * draws[:, 0, k] - 1.0)
            inside = (x_new >= target.lo[k]) & (x_new <= target.hi[k])
            x_eval = np.where(inside, x_new, x_old)
            delta = (target.one_body(k, x_eval) - target.one_body(k, x_old)
                     + target.pair_sum(k, x_eval, state) - target.pair_sum(k, x_old, state))
            delta = np.where(inside & ~np.isnan(delta), delta, -np.inf)
            with np.errstate(divide="ignore"):
                accept = np.log(draws[:, 1, k]) < delta
            if np.any(accept):
                state[rows[accept], k] = x_new[accept]
                logd[accept] += delta[accept]
                acc_sweep += accept
        acc_sweep /= p
        if sweep < cfg.burn_in:
            accepted_burn += acc_sweep
            if cfg.adapt:
                batch_acc += acc_sweep
                batch_count += 1
                if batch_count == ADAPT_BATCH:
                    rate = batch_acc / batch_count
                    step = np.where(rate > 0.5, step * 1.1, np.where(rate < 0.3, step * 0.9, step))
                    step = np.minimum(step, max_step)
                    batch_acc[:] = 0.0
                    batch_count = 0
            if sweep == cfg.burn_in - 1 and np.any(accepted_burn == 0):
                raise NumericalError("no proposal accepted during burn-in; decrease step_size",
                                     step_size=step.tolist())
        else:
            accepted_post += acc_sweep
            proposed_post += 1
            if (sweep - cfg.burn_in) % cfg.thinning == cfg.thinning - 1:
                kept_x.append(state.copy())
                kept_ld.append(logd.copy())
        if sweep % 200 == 199:
            # resynchronize the incremental log-density against roundoff drift
            logd = np.array([target.log_density(state[c]) for c in range(chains)])

    if not kept_x:
        raise ConfigError("no configurations kept; increase sweeps or reduce thinning")
    xs = np.stack(kept_x, axis=1)     # (C, kept, p)
    lds = np.stack(kept_ld, axis=1)
    if not np.all(np.isfinite(lds)):
        raise NumericalError("stored configuration with non-finite log-density")
    if np.any(xs < target.lo) or np.any(xs > target.hi):
        raise NumericalError("stored coordinate outside the support")
    name = getattr(spec, "name", type(spec).__name__)
    out = []
    for c in range(chains):
        out.append(SampleBatch(
            ensemble_id=name, n=cfg.n, configurations=xs[c], acceptance_rate=float(accepted_post[c] / proposed_post),
            log_density=lds[c], step_size=float(step[c]), seed=(cfg.seed, c),
            block_sizes=tuple(target.block_sizes), iat=integrated_autocorr_time(lds[c])))
    return out


def run_chain(spec: Union[EnsembleSpec, AngelescoSpec], cfg: ChainConfig) -> SampleBatch:
    return run_chains(spec, cfg, 1)[0]


def merge_batches(batches: Sequence[SampleBatch]) -> SampleBatch:
    if not batches:
        raise ConfigError("nothing to merge")
    first = batches[0]
    if any(b.n != first.n or b.p != first.p for b in batches):
        raise ConfigError("cannot merge batches of different sizes")
    kept = np.array([b.configurations.shape[0] for b in batches], dtype=float)
    rate = float(np.dot(kept, [b.acceptance_rate for b in batches]) / kept.sum())
    return SampleBatch(first.ensemble_id, first.n,
                       np.concatenate([b.configurations for b in batches]), rate,
                       np.concatenate([b.log_density for b in batches]),
                       float(np.mean([b.step_size for b in batches])),
                       tuple(b.seed for b in batches), first.block_sizes,
                       float(np.max([b.iat for b in batches])))


def empirical_measure(batch: SampleBatch, pool: bool = True, species: Optional[int] = None):
    """Equal-mass empirical measure(s) of the stored configurations.

    With ``pool=True`` all configurations are merged into one measure with
    mass ``1/(p * kept)`` per atom; otherwise one measure per configuration.
    """
    x = batch.configurations if species is None else batch.species(species)
    if x.size == 0:
        raise ConfigError("empty batch")
    if pool:
        flat = x.ravel()
        return EmpiricalMeasure(flat, np.full(flat.size, 1.0 / flat.size))
    return [EmpiricalMeasure(row, np.full(row.size, 1.0 / row.size)) for row in x]


def integrated_autocorr_time(series, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's self-consistent window."""
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    n = x.size
    if n < 4 or not np.any(x):
        return 1.0
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    tau = 2.0 * np.cumsum(acf) - 1.0
    for m in range(1, n):
        if m >= c * tau[m]:
            return float(tau[m])
    return float(tau[-1])
