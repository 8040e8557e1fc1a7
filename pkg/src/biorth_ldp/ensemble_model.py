"""Ensemble definitions, weights and unnormalized joint log-densities.

Two kinds of ensembles are covered:

* biorthogonal ensembles on a support ``Sigma`` with ``p(n)`` particles and
  joint density proportional to

      prod_i w_n(x_i)^n  prod_{i<j} |x_i - x_j| |x_i^theta - x_j^theta|

* Angelesco ensembles with ``p`` species living on pairwise disjoint
  intervals, squared Vandermonde self-interaction, linear cross-interaction
  and varying weights ``exp(-n V_j)``.

Weight families are parametrized by their *limiting* weight ``w``.  The
finite-n weight ``w_n`` only differs from ``w`` through optional integer
exponent offsets, e.g. ``PowerExp(alpha, tau, alpha_offset=k)`` has
``w_n(x)^n = x^(n*alpha + k) exp(-n*tau*x)``.  The disordered-boson density
``x^a exp(-n x)`` (entry variance 1/n) is ``PowerExp(0, 1, alpha_offset=a)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, ContractError, DomainError

INF = math.inf

__all__ = [
    "PowerExp", "GaussPower", "JacobiPower", "LogSquare", "TablePotential",
    "WeightFamily", "EnsembleSpec", "AngelescoSpec", "TailReport",
    "weight_from_dict", "log_weight", "log_pair_interaction",
    "log_joint_density_unnormalized", "log_joint_density_angelesco",
    "check_tail_assumption", "bosonic_spec", "gue_type_spec",
]


def _xlogy(a, x):
    """a*log(x) with the convention 0*log(0) = 0 (elementwise, x >= 0)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a * np.log(x)
    if a == 0:
        return np.zeros_like(out)
    return out


# ----------------------------------------------------------------------------
# weight families
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerExp:
    """Laguerre type weight ``log w(x) = alpha*log(x) - tau*x`` on ``[0, inf)``."""

    alpha: float = 0.0
    tau: float = 1.0
    alpha_offset: float = 0.0

    family = "power_exp"

    def __post_init__(self):
        if not self.alpha > -1:
            raise ConfigError(f"power_exp: alpha must be > -1, got {self.alpha}")
        if not self.tau > 0:
            raise ConfigError(f"power_exp: tau must be > 0, got {self.tau}")

    @property
    def domain(self):
        return (0.0, INF)

    def log_w(self, x):
        x = np.asarray(x, dtype=float)
        return _xlogy(self.alpha, x) - self.tau * x

    def log_wn(self, x, n):
        x = np.asarray(x, dtype=float)
        return _xlogy(self.alpha + self.alpha_offset / n, x) - self.tau * x


@dataclass(frozen=True)
class GaussPower:
    """Hermite type weight ``log w(x) = alpha*log|x| - scale*x**2`` on the line."""

    alpha: float = 0.0
    scale: float = 1.0
    alpha_offset: float = 0.0

    family = "gauss_power"

    def __post_init__(self):
        if not self.alpha > -1:
            raise ConfigError(f"gauss_power: alpha must be > -1, got {self.alpha}")
        if not self.scale > 0:
            raise ConfigError(f"gauss_power: scale must be > 0, got {self.scale}")

    @property
    def domain(self):
        return (-INF, INF)

    def log_w(self, x):
        x = np.asarray(x, dtype=float)
        return _xlogy(self.alpha, np.abs(x)) - self.scale * x * x

    def log_wn(self, x, n):
        x = np.asarray(x, dtype=float)
        return _xlogy(self.alpha + self.alpha_offset / n, np.abs(x)) - self.scale * x * x


@dataclass(frozen=True)
class JacobiPower:
    """Jacobi type weight ``x**alpha (1-x)**beta_jac`` on ``[0, 1]``."""

    alpha: float = 0.0
    beta_jac: float = 0.0
    alpha_offset: float = 0.0
    beta_offset: float = 0.0

    family = "jacobi_power"

    def __post_init__(self):
        if not (self.alpha > -1 and self.beta_jac > -1):
            raise ConfigError("jacobi_power: alpha and beta_jac must be > -1")

    @property
    def domain(self):
        return (0.0, 1.0)

    def log_w(self, x):
        x = np.asarray(x, dtype=float)
        return _xlogy(self.alpha, x) + _xlogy(self.beta_jac, 1.0 - x)

    def log_wn(self, x, n):
        x = np.asarray(x, dtype=float)
        return (_xlogy(self.alpha + self.alpha_offset / n, x)
                + _xlogy(self.beta_jac + self.beta_offset / n, 1.0 - x))


@dataclass(frozen=True)
class LogSquare:
    """Stieltjes-Wigert weight ``exp(-c_sw * log(x)**2)`` on ``[0, inf)``."""

    c_sw: float = 1.0

    family = "log_square"

    def __post_init__(self):
        if not self.c_sw > 0:
            raise ConfigError(f"log_square: c_sw must be > 0, got {self.c_sw}")

    @property
    def domain(self):
        return (0.0, INF)

    def log_w(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            lx = np.log(x)
        return -self.c_sw * lx * lx

    def log_wn(self, x, n):
        return self.log_w(x)


@dataclass(frozen=True)
class TablePotential:
    """Tabulated potential ``V = -log w``, linear between nodes, flat outside.

    The natural domain is the node range; an ensemble may declare a wider
    support, in which case the end values are continued as constants.
    """

    nodes: tuple = (0.0, 1.0)
    values: tuple = (0.0, 0.0)

    family = "table"

    def __post_init__(self):
        nodes = tuple(float(v) for v in self.nodes)
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)
        if len(nodes) < 2 or len(nodes) != len(values):
            raise ConfigError("table: need >= 2 nodes and as many values")
        if np.any(np.diff(nodes) <= 0):
            raise ConfigError("table: nodes must be strictly increasing")
        if not np.all(np.isfinite(values)) or not np.all(np.isfinite(nodes)):
            raise ConfigError("table: nodes and values must be finite")

    @property
    def domain(self):
        return (-INF, INF)

    @property
    def node_range(self):
        return (self.nodes[0], self.nodes[-1])

    def log_w(self, x):
        x = np.asarray(x, dtype=float)
        return -np.interp(x, self.nodes, self.values)

    def log_wn(self, x, n):
        return self.log_w(x)


WeightFamily = Union[PowerExp, GaussPower, JacobiPower, LogSquare, TablePotential]

_FAMILIES = {cls.family: cls for cls in (PowerExp, GaussPower, JacobiPower, LogSquare, TablePotential)}


def weight_to_dict(weight) -> dict:
    d = {"family": weight.family}
    for name in weight.__dataclass_fields__:
        v = getattr(weight, name)
        d[name] = list(v) if isinstance(v, tuple) else v
    return d


def weight_from_dict(d: dict):
    d = dict(d)
    try:
        cls = _FAMILIES[d.pop("family")]
    except KeyError as exc:
        raise ConfigError(f"unknown or missing weight family in {d!r}") from exc
    unknown = set(d) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"{cls.family}: unknown fields {sorted(unknown)}")
    if cls is TablePotential:
        d = {k: tuple(v) for k, v in d.items()}
    return cls(**d)


def _default_support(weight):
    if isinstance(weight, TablePotential):
        return weight.node_range
    return weight.domain


# ----------------------------------------------------------------------------
# ensemble descriptions
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleSpec:
    """One-species biorthogonal ensemble.

    ``p_of_n`` maps the scaling index n to the particle count; the default is
    ``round(kappa * n)``.  ``support`` is a closed interval, possibly with
    infinite endpoints.
    """

    theta: int
    weight: WeightFamily
    kappa: float = 1.0
    support: Optional[tuple] = None
    p_of_n: Optional[Callable[[int], int]] = field(default=None, compare=False, repr=False)
    name: str = "biorthogonal"

    def __post_init__(self):
        if isinstance(self.theta, bool) or int(self.theta) != self.theta or self.theta < 1:
            raise ConfigError(f"theta must be a positive integer, got {self.theta!r}")
        object.__setattr__(self, "theta", int(self.theta))
        if not self.kappa > 0:
            raise ConfigError(f"kappa must be > 0, got {self.kappa}")
        support = self.support if self.support is not None else _default_support(self.weight)
        lo, hi = (float(s) for s in support)
        object.__setattr__(self, "support", (lo, hi))
        if not lo < hi:
            raise ConfigError(f"support must satisfy lo < hi, got {support}")
        dlo, dhi = self.weight.domain
        if lo < dlo or hi > dhi:
            raise ConfigError(f"support {support} exceeds weight domain {(dlo, dhi)}")
        if self.theta % 2 == 0 and lo < 0:
            raise ConfigError("even theta requires a support inside [0, inf)")

    def particles(self, n: int) -> int:
        if n < 1:
            raise ContractError(f"n must be >= 1, got {n}")
        p = self.p_of_n(n) if self.p_of_n is not None else max(1, int(round(self.kappa * n)))
        if int(p) != p or p < 1:
            raise ConfigError(f"p_of_n({n}) = {p!r} is not a positive integer")
        return int(p)

    def check_particle_rule(self, ns: Sequence[int], rtol: float = 0.25):
        """Raise unless ``|p(n)/n - kappa| <= rtol*kappa`` for every n in ``ns``."""
        for n in ns:
            if abs(self.particles(n) / n - self.kappa) > rtol * self.kappa:
                raise ConfigError(f"p({n})/{n} = {self.particles(n) / n:.4g} is far from kappa={self.kappa}")

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.support[0]) and math.isfinite(self.support[1])

    def in_support(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= self.support[0]) & (x <= self.support[1])

    def to_dict(self) -> dict:
        return {
            "kind": "biorthogonal",
            "name": self.name,
            "theta": self.theta,
            "kappa": self.kappa,
            "support": list(self.support),
            "weight": weight_to_dict(self.weight),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSpec":
        d = dict(d)
        kind = d.pop("kind", "biorthogonal")
        if kind != "biorthogonal":
            raise ConfigError(f"expected kind 'biorthogonal', got {kind!r}")
        allowed = {"name", "theta", "kappa", "support", "weight"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"ensemble: unknown fields {sorted(unknown)}")
        if "theta" not in d or "weight" not in d:
            raise ConfigError("ensemble: 'theta' and 'weight' are required")
        support = d.get("support")
        if support is not None:
            if len(support) != 2:
                raise ConfigError("ensemble.support must have two entries")
            support = tuple(float(s) for s in support)
        return cls(theta=d["theta"], weight=weight_from_dict(d["weight"]),
                   kappa=float(d.get("kappa", 1.0)), support=support,
                   name=d.get("name", "biorthogonal"))


@dataclass(frozen=True)
class AngelescoSpec:
    """Multi-species Angelesco ensemble with varying weights ``exp(-n V_j)``.

    ``potentials[j]`` is a weight family whose negative log is ``V_j``.
    """

    intervals: tuple
    ratios: tuple
    potentials: tuple
    n_of: Optional[Callable[[int], tuple]] = field(default=None, compare=False, repr=False)
    name: str = "angelesco"

    def __post_init__(self):
        intervals = tuple((float(a), float(b)) for a, b in self.intervals)
        ratios = tuple(float(r) for r in self.ratios)
        potentials = tuple(self.potentials)
        object.__setattr__(self, "intervals", intervals)
        object.__setattr__(self, "ratios", ratios)
        object.__setattr__(self, "potentials", potentials)
        p = len(intervals)
        if p < 2:
            raise ConfigError("angelesco: need at least two species")
        if len(ratios) != p or len(potentials) != p:
            raise ConfigError("angelesco: intervals, ratios and potentials must have equal length")
        for a, b in intervals:
            if not (math.isfinite(a) and math.isfinite(b) and a < b):
                raise ConfigError(f"angelesco: bad interval {(a, b)}")
        order = sorted(intervals)
        for (a1, b1), (a2, b2) in zip(order, order[1:]):
            if not b1 <= a2:
                raise ConfigError("angelesco: interval interiors must be pairwise disjoint")
        if any(not 0 < r < 1 for r in ratios) or abs(sum(ratios) - 1) > 1e-12:
            raise ConfigError("angelesco: ratios must lie in (0,1) and sum to 1")
        for (a, b), pot in zip(intervals, potentials):
            dlo, dhi = pot.domain
            if a < dlo or b > dhi:
                raise ConfigError(f"angelesco: interval {(a, b)} exceeds potential domain")

    @property
    def p(self) -> int:
        return len(self.intervals)

    def block_sizes(self, n: int) -> tuple:
        if self.n_of is not None:
            sizes = tuple(int(k) for k in self.n_of(n))
        else:
            sizes = [int(round(r * n)) for r in self.ratios[:-1]]
            sizes.append(n - sum(sizes))
            sizes = tuple(sizes)
        if len(sizes) != self.p or any(k < 1 for k in sizes):
            raise ConfigError(f"angelesco: invalid block sizes {sizes} for n={n}")
        return sizes

    def potential(self, j: int, x):
        return -self.potentials[j].log_w(x)

    def to_dict(self) -> dict:
        return {
            "kind": "angelesco",
            "name": self.name,
            "intervals": [list(iv) for iv in self.intervals],
            "ratios": list(self.ratios),
            "potentials": [weight_to_dict(w) for w in self.potentials],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AngelescoSpec":
        d = dict(d)
        if d.pop("kind", "angelesco") != "angelesco":
            raise ConfigError("expected kind 'angelesco'")
        unknown = set(d) - {"name", "intervals", "ratios", "potentials"}
        if unknown:
            raise ConfigError(f"ensemble: unknown fields {sorted(unknown)}")
        try:
            return cls(intervals=tuple(tuple(iv) for iv in d["intervals"]),
                       ratios=tuple(d["ratios"]),
                       potentials=tuple(weight_from_dict(w) for w in d["potentials"]),
                       name=d.get("name", "angelesco"))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"angelesco: malformed section ({exc})") from exc


def ensemble_from_dict(d: dict):
    kind = d.get("kind", "biorthogonal")
    if kind == "angelesco":
        return AngelescoSpec.from_dict(d)
    return EnsembleSpec.from_dict(d)


def bosonic_spec(alpha: int = 0, kappa: float = 1.0) -> EnsembleSpec:
    """Disordered-boson ensemble: theta=2, density ``x^alpha exp(-n x)`` per particle."""
    return EnsembleSpec(theta=2, weight=PowerExp(0.0, 1.0, alpha_offset=alpha),
                        kappa=kappa, name="bosonic")


def gue_type_spec() -> EnsembleSpec:
    """theta=1 with ``log w = -x^2/2``; equilibrium is the semicircle on [-2, 2]."""
    return EnsembleSpec(theta=1, weight=GaussPower(0.0, 0.5), name="gue_type")


# ----------------------------------------------------------------------------
# densities
# ----------------------------------------------------------------------------

def log_weight(spec: EnsembleSpec, x: float, n: int) -> float:
    """``log w_n(x)``; the density carries this times n per particle."""
    if not spec.in_support(x):
        raise DomainError(f"x={x} outside support {spec.support}")
    return float(spec.weight.log_wn(x, n))


def _log_theta_factor(x, y, theta):
    """log|(x^theta - y^theta)/(x - y)| computed without forming the powers."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if theta == 1:
        return np.zeros(np.broadcast(x, y).shape)
    big = np.where(np.abs(x) >= np.abs(y), x, y)
    small = np.where(np.abs(x) >= np.abs(y), y, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(big != 0, small / np.where(big != 0, big, 1.0), 0.0)
        s = np.ones_like(r)
        for _ in range(theta - 1):
            s = s * r + 1.0
        out = (theta - 1) * np.log(np.abs(big)) + np.log(np.abs(s))
    return out


def log_pair_interaction(x, y, theta: int):
    """``log|x - y| + log|x^theta - y^theta|`` elementwise; -inf on coincidence."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        ld = np.log(np.abs(x - y))
    out = 2.0 * ld + _log_theta_factor(x, y, theta)
    return np.where(x == y, -INF, out)


def log_joint_density_unnormalized(spec: EnsembleSpec, x, n: int) -> float:
    """Log of the joint density without the partition function.

    Returns -inf when a coordinate leaves the support, two coordinates
    coincide, or a weight vanishes.
    """
    x = np.asarray(x, dtype=float)
    p = spec.particles(n)
    if x.ndim != 1 or x.size != p:
        raise ContractError(f"expected {p} coordinates, got shape {x.shape}")
    if not np.all(spec.in_support(x)):
        return -INF
    one_body = n * spec.weight.log_wn(x, n)
    total = float(np.sum(one_body))
    if np.isnan(total) or total == -INF:
        return -INF
    if total == INF:
        return INF
    i, j = np.triu_indices(p, k=1)
    if i.size:
        pair = log_pair_interaction(x[i], x[j], spec.theta)
        total += float(np.sum(pair))
    return total if not np.isnan(total) else -INF


def log_joint_density_angelesco(spec: AngelescoSpec, blocks, n: int) -> float:
    """Log of the Angelesco density (squared self Vandermonde, linear cross term)."""
    blocks = [np.atleast_1d(np.asarray(b, dtype=float)) for b in blocks]
    sizes = spec.block_sizes(n)
    if len(blocks) != spec.p or tuple(b.size for b in blocks) != sizes:
        raise ContractError(f"block sizes {[b.size for b in blocks]} do not match {sizes}")
    for b, (lo, hi) in zip(blocks, spec.intervals):
        if np.any(b < lo) or np.any(b > hi):
            return -INF
    total = 0.0
    with np.errstate(divide="ignore"):
        for j, b in enumerate(blocks):
            total -= n * float(np.sum(spec.potential(j, b)))
            i1, i2 = np.triu_indices(b.size, k=1)
            total += 2.0 * float(np.sum(np.log(np.abs(b[i1] - b[i2]))))
        for j in range(spec.p):
            for k in range(j + 1, spec.p):
                total += float(np.sum(np.log(np.abs(blocks[j][:, None] - blocks[k][None, :]))))
    return total if not np.isnan(total) else -INF


# ----------------------------------------------------------------------------
# tail assumption diagnostic
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class TailReport:
    satisfied: bool
    decreasing: bool
    boundary_log_value: float
    radii: tuple = ()
    log_values: tuple = ()
    reason: str = ""


def check_tail_assumption(spec: EnsembleSpec, epsilon: float, probe_radius: float,
                          log_threshold: float = -10.0, points: int = 200) -> TailReport:
    """Probe ``|x|^((theta+1)(kappa+eps)) w(x)`` along the unbounded ends of the support.

    Diagnostic only: reports whether the log of the probe is decreasing on the
    outer half of a geometric grid and below ``log_threshold`` at the radius.
    """
    if not epsilon > 0:
        raise ConfigError("epsilon must be > 0")
    if spec.bounded:
        return TailReport(True, True, -INF, reason="bounded support")
    power = (spec.theta + 1) * (spec.kappa + epsilon)
    lo, hi = spec.support
    ends = []
    if not math.isfinite(hi):
        ends.append(1.0)
    if not math.isfinite(lo):
        ends.append(-1.0)
    start = max(1.0, abs(lo) + 1.0 if math.isfinite(lo) else 1.0, abs(hi) + 1.0 if math.isfinite(hi) else 1.0)
    if probe_radius <= start:
        raise ConfigError(f"probe_radius must exceed {start}")
    radii = np.geomspace(start, probe_radius, points)
    decreasing = True
    worst = -INF
    all_vals = []
    for sign in ends:
        x = sign * radii
        vals = power * np.log(radii) + spec.weight.log_w(x)
        half = vals[points // 2:]
        decreasing &= bool(np.all(np.diff(half) < 0))
        worst = max(worst, float(vals[-1]))
        all_vals.append(tuple(float(v) for v in vals))
    satisfied = decreasing and worst <= log_threshold
    reason = "" if satisfied else ("probe not decreasing" if not decreasing else "probe above threshold")
    return TailReport(satisfied, decreasing, worst, tuple(radii.tolist()), tuple(all_vals), reason)
