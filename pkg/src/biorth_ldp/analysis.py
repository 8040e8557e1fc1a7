"""Distances between measures, a brute-force quadrature oracle, and the LDP probe.

Every measure is reduced to a CDF that is piecewise linear between knots and
may jump at knots (atoms jump, grid measures spread mass uniformly per cell).
On such CDFs the W1 integral and the Kolmogorov-Smirnov supremum are exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .ensemble_model import EnsembleSpec, _log_theta_factor
from .equilibrium import (GridMeasure, assemble_kernel, constrained_minimize, make_grid,
                          minimize, truncation_interval)
from .errors import AccuracyError, ConfigError, PrecisionError
from .references import reference_atoms, reference_law
from .sampler import EmpiricalMeasure

__all__ = [
    "PiecewiseCDF", "MeasurePair", "as_cdf", "reference_measure", "wasserstein1", "ks_distance",
    "BLReport", "bounded_lipschitz", "HalfSpaceEvent", "OracleResult", "quadrature_oracle",
    "ProbeRow", "ProbeReport", "ldp_probe", "EVENT_FUNCTIONS",
]

NORMALIZATION_TOL = 1e-10


@dataclass(frozen=True)
class PiecewiseCDF:
    """CDF with values ``left``/``right`` at ``knots``, linear in between."""
    knots: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def total(self) -> float:
        return float(self.right[-1])

    def at(self, x, side: str = "right"):
        """Evaluate the right- (or left-) continuous version at ``x``."""
        x = np.asarray(x, dtype=float)
        k = self.knots
        i = np.searchsorted(k, x, side="left")
        j = np.searchsorted(k, x, side="right")
        on_knot = j > i
        inner = np.clip(i, 1, k.size - 1)
        x0, x1 = k[inner - 1], k[inner]
        with np.errstate(over="ignore", invalid="ignore"):
            frac = np.clip(np.where(x1 > x0, (x - x0) / np.where(x1 > x0, x1 - x0, 1.0), 0.0), 0.0, 1.0)
        between = self.right[inner - 1] + frac * (self.left[inner] - self.right[inner - 1])
        out = np.where(x < k[0], 0.0, np.where(x > k[-1], self.right[-1], between))
        knot_val = (self.right if side == "right" else self.left)[np.clip(i, 0, k.size - 1)]
        return np.where(on_knot, knot_val, out)


def _atoms_cdf(atoms, masses):
    atoms = np.asarray(atoms, dtype=float)
    masses = np.asarray(masses, dtype=float)
    order = np.argsort(atoms, kind="stable")
    atoms, masses = atoms[order], masses[order]
    knots, inv = np.unique(atoms, return_inverse=True)
    merged = np.zeros(knots.size)
    np.add.at(merged, inv, masses)
    right = np.cumsum(merged)
    left = right - merged
    return PiecewiseCDF(knots, left, right)


def as_cdf(measure) -> PiecewiseCDF:
    """Reduce an EmpiricalMeasure, GridMeasure, PiecewiseCDF or (atoms, masses) pair."""
    if isinstance(measure, PiecewiseCDF):
        return measure
    if isinstance(measure, EmpiricalMeasure):
        return _atoms_cdf(measure.atoms, measure.masses)
    if isinstance(measure, GridMeasure):
        edges = measure.edges
        cum = np.concatenate([[0.0], np.cumsum(measure.weights)])
        return PiecewiseCDF(edges, cum, cum.copy())
    if isinstance(measure, tuple) and len(measure) == 2:
        return _atoms_cdf(*measure)
    raise ConfigError(f"cannot interpret {type(measure).__name__} as a measure")


def reference_measure(name: str, cells: int = 20000) -> GridMeasure:
    """Named closed-form law as a fine grid measure with exact cell masses."""
    nodes, mass = reference_atoms(name, cells)
    return GridMeasure(nodes, float(nodes[1] - nodes[0]), mass)


@dataclass(frozen=True)
class MeasurePair:
    first: object
    second: object

    def reduced(self):
        a, b = as_cdf(self.first), as_cdf(self.second)
        for c in (a, b):
            if abs(c.total() - 1.0) > NORMALIZATION_TOL:
                raise ConfigError(f"measure is not normalized (total mass {c.total():.12g})")
        return a, b


def _pair(a, b):
    return a if isinstance(a, MeasurePair) and b is None else MeasurePair(a, b)


def _merged_differences(a: PiecewiseCDF, b: PiecewiseCDF):
    x = np.union1d(a.knots, b.knots)
    dl = a.at(x, "left") - b.at(x, "left")
    dr = a.at(x, "right") - b.at(x, "right")
    return x, dl, dr


def wasserstein1(a, b=None) -> float:
    """Exact W1 on the line, ``int |F - G| dx`` over the merged knot set."""
    F, G = _pair(a, b).reduced()
    x, dl, dr = _merged_differences(F, G)
    h = np.diff(x)
    d0, d1 = dr[:-1], dl[1:]
    same = d0 * d1 >= 0
    a0, a1 = np.abs(d0), np.abs(d1)
    denom = np.where(a0 + a1 > 0, a0 + a1, 1.0)
    seg = np.where(same, 0.5 * (a0 + a1), 0.5 * (d0 * d0 + d1 * d1) / denom) * h
    return float(seg.sum())


def ks_distance(a, b=None) -> float:
    """Exact Kolmogorov-Smirnov distance ``sup |F - G|``."""
    F, G = _pair(a, b).reduced()
    _, dl, dr = _merged_differences(F, G)
    return float(max(np.max(np.abs(dl)), np.max(np.abs(dr))))


# ----------------------------------------------------------------------------
# bounded-Lipschitz estimate
# ----------------------------------------------------------------------------

def _ramp_anti(u):
    return np.where(u <= -1, -u - 0.5, np.where(u >= 1, u - 0.5, 0.5 * u * u))


def _tent_anti(u):
    return np.where(u <= -1, 0.0, np.where(u <= 0, 0.5 * (1 + u) ** 2,
                                           np.where(u < 1, 1 - 0.5 * (1 - u) ** 2, 1.0)))


def _tanh_anti(u):
    a = np.abs(u)
    return a + np.log1p(np.exp(-2 * a)) - math.log(2.0)


_PROFILES = {
    "ramp": (lambda u: np.clip(u, -1.0, 1.0), _ramp_anti),
    "tent": (lambda u: np.maximum(0.0, 1.0 - np.abs(u)), _tent_anti),
    "tanh": (np.tanh, _tanh_anti),
}


def _integrate(cdf: PiecewiseCDF, profile, c, s):
    """Exact ``int f dmu`` for ``f(x) = profile((x - c)/s)`` (unit height)."""
    f, anti = _PROFILES[profile]
    jumps = cdf.right - cdf.left
    total = float(np.dot(jumps, f((cdf.knots - c) / s)))
    dens_mass = cdf.left[1:] - cdf.right[:-1]
    h = np.diff(cdf.knots)
    live = (dens_mass > 0) & (h > 0)
    if np.any(live):
        x0, x1 = cdf.knots[:-1][live], cdf.knots[1:][live]
        avg = s * (anti((x1 - c) / s) - anti((x0 - c) / s)) / (x1 - x0)
        total += float(np.dot(dens_mass[live], avg))
    return total


@dataclass
class BLReport:
    lower: float
    upper: float
    witness: tuple = ()

    def to_dict(self):
        return {"lower": self.lower, "upper": self.upper, "witness": list(self.witness)}


def bounded_lipschitz(a, b=None, family_size: int = 300, refine_steps: int = 60) -> BLReport:
    """Sandwich for the bounded-Lipschitz distance.

    The lower bound maximizes ``|int f dmu - int f dnu|`` over ramps, tents
    and tanh profiles at data-adaptive centers and scales, each of height
    ``s/(1+s)`` so that Lipschitz constant plus sup-norm equals one.  The
    best member is then refined by a local pattern search.  The
    upper bound is ``2 W1 / (2 + W1)``: an admissible ``f`` with sup-norm
    ``h`` gives at most ``min((1-h) W1, 2h)``.
    """
    if family_size < 1:
        raise ConfigError("family_size must be >= 1")
    F, G = _pair(a, b).reduced()
    w1 = wasserstein1(F, G)
    upper = 2.0 * w1 / (2.0 + w1)
    knots = np.union1d(F.knots, G.knots)
    spread = float(knots[-1] - knots[0])
    per = max(1, int(math.ceil(family_size / 3)))
    n_scales = max(1, int(round(math.sqrt(per))))
    n_centers = max(1, per // n_scales)
    qs = (np.arange(n_centers) + 0.5) / n_centers
    centers = np.quantile(knots, qs) if knots.size > 1 else knots
    base = max(spread, 1e-3)
    scales = base * np.geomspace(1e-3, 2.0, n_scales)

    def gain(profile, c, s):
        return s / (1.0 + s) * abs(_integrate(F, profile, c, s) - _integrate(G, profile, c, s))

    best, witness = 0.0, ()
    for profile in _PROFILES:
        for s in scales:
            for c in centers:
                diff = gain(profile, c, s)
                if diff > best:
                    best, witness = diff, (profile, float(c), float(s))
    if witness:
        # compass search over the profile's transition endpoints c - s, c + s;
        # the objective has kinks exactly where an atom crosses one of them
        profile, c, s = witness
        lo, hi = c - s, c + s
        step = 0.25 * base / n_centers
        compass = [(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1) if i or j]
        for _ in range(refine_steps):
            trials = [(gain(profile, 0.5 * (lo + hi + (i + j) * step), 0.5 * (hi - lo + (j - i) * step)), i, j)
                      for i, j in compass if hi - lo + (j - i) * step > 0]
            diff, i, j = max(trials)
            if diff > best:
                best, lo, hi = diff, lo + i * step, hi + j * step
            else:
                step *= 0.5
        c, s = 0.5 * (lo + hi), 0.5 * (hi - lo)
        witness = (profile, float(c), float(s))
    return BLReport(min(best, upper), upper, witness)


# ----------------------------------------------------------------------------
# quadrature oracle
# ----------------------------------------------------------------------------

def _x(v):
    return v


EVENT_FUNCTIONS = {
    "x": _x,
    "x^2": np.square,
    "|x|": np.abs,
}


@dataclass(frozen=True)
class HalfSpaceEvent:
    """The event ``(1/p) sum g(x_i) >= t``."""
    g: Callable
    t: float
    label: str = ""

    @classmethod
    def parse(cls, text: str):
        """Parse ``"name,t"`` with ``name`` a key of EVENT_FUNCTIONS."""
        try:
            name, t = text.rsplit(",", 1)
            return cls(EVENT_FUNCTIONS[name.strip()], float(t), f"{name.strip()}>={float(t)}")
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"cannot parse event {text!r}; expected g,t with g in "
                              f"{sorted(EVENT_FUNCTIONS)}") from exc


@dataclass
class OracleResult:
    n: int
    log_Z: float
    error_estimate: float              # absolute, on Z
    cdf_knots: np.ndarray
    cdf_values: np.ndarray
    probabilities: dict = field(default_factory=dict)
    probability_errors: dict = field(default_factory=dict)
    interval: tuple = ()

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z)

    def to_dict(self):
        return {"n": self.n, "log_Z": self.log_Z, "Z": self.Z, "error_estimate": self.error_estimate,
                "interval": list(self.interval), "probabilities": self.probabilities,
                "probability_errors": self.probability_errors,
                "marginal_cdf": {"x": self.cdf_knots.tolist(), "F": self.cdf_values.tolist()}}


_GL8 = np.polynomial.legendre.leggauss(8)


def _panel_rule(a, b, resolution):
    panels = resolution // 8
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * _GL8[0][None, :]).ravel()
    w = (half[:, None] * _GL8[1][None, :]).ravel()
    return x, w, edges


def _tensor_pass(spec, n, p, a, b, resolution, events, axis_order=None):
    x, wq, edges = _panel_rule(a, b, resolution)
    with np.errstate(divide="ignore", invalid="ignore"):
        one = n * spec.weight.log_wn(x, n) + np.log(wq)
        pair = 2.0 * np.log(np.abs(x[:, None] - x[None, :]))
        if spec.theta > 1:
            pair = pair + _log_theta_factor(x[:, None], x[None, :], spec.theta)
    pair[np.diag_indices_from(pair)] = -np.inf
    one = np.where(np.isnan(one), -np.inf, one)
    if p == 1:
        logf = one
    elif p == 2:
        logf = one[:, None] + one[None, :] + pair
    else:
        logf = (one[:, None, None] + one[None, :, None] + one[None, None, :]
                + pair[:, :, None] + pair[:, None, :] + pair[None, :, :])
    shift = float(np.max(logf))
    if not math.isfinite(shift):
        raise AccuracyError("integrand vanishes on every quadrature node")
    f = np.exp(logf - shift)
    if axis_order is not None:
        f = np.transpose(f, axis_order)
    total = float(f.sum())
    marg = f.reshape(resolution, -1).sum(axis=1) / total
    cdf = np.concatenate([[0.0], np.cumsum(marg.reshape(-1, 8).sum(axis=1))])
    probs = []
    for ev in events:
        # each node stands for a box of width wq; count the fraction of the box
        # inside the event, treating the box average of g as uniform with the
        # box's spread.  Exact for one particle and linear g.
        gx = ev.g(x)
        ends = np.stack([ev.g(x - 0.5 * wq), gx, ev.g(x + 0.5 * wq)])
        spread2 = (ends.max(axis=0) - ends.min(axis=0)) ** 2
        if p == 1:
            s, v = gx, spread2
        elif p == 2:
            s, v = gx[:, None] + gx[None, :], spread2[:, None] + spread2[None, :]
        else:
            s = gx[:, None, None] + gx[None, :, None] + gx[None, None, :]
            v = spread2[:, None, None] + spread2[None, :, None] + spread2[None, None, :]
        margin = s / p - ev.t
        width = np.sqrt(v) / p
        frac = np.where(width > 0, np.clip(0.5 + margin / np.where(width > 0, width, 1.0), 0.0, 1.0),
                        (margin >= 0).astype(float))
        if axis_order is not None:
            frac = np.transpose(frac, axis_order)
        probs.append(float((f * frac).sum()) / total)
    return shift + math.log(total), edges, np.minimum(cdf, 1.0), probs


def quadrature_oracle(spec: EnsembleSpec, n: int, resolution: Optional[int] = None,
                      events: Sequence[HalfSpaceEvent] = (), truncate=None,
                      axis_order: Optional[Sequence[int]] = None) -> OracleResult:
    """Partition function, marginal CDF and event probabilities at ``n <= 3``.

    Tensor-product composite Gauss-Legendre (8-node panels, ``resolution``
    nodes per axis); the difference to the half-resolution rule is the error
    estimate.  ``axis_order`` permutes the summation axes; the marginal is
    taken along the first axis of that order.
    """
    p = spec.particles(n)
    if n not in (1, 2, 3) or p > 3:
        raise ConfigError(f"the oracle handles n in {{1,2,3}} with at most 3 particles, got n={n}, p={p}")
    if resolution is None:
        resolution = 256 if p <= 2 else 128
    if resolution < 16 or resolution % 16:
        raise ConfigError("resolution must be a positive multiple of 16")
    a, b = truncate if truncate is not None else truncation_interval(spec)
    if not a < b:
        raise ConfigError(f"truncation must satisfy a < b, got ({a}, {b})")
    events = list(events)
    if axis_order is not None and sorted(axis_order) != list(range(p)):
        raise ConfigError(f"axis_order must permute range({p})")
    logz, edges, cdf, probs = _tensor_pass(spec, n, p, a, b, resolution, events, axis_order)
    logz_h, _, _, probs_h = _tensor_pass(spec, n, p, a, b, resolution // 2, events, axis_order)
    err = abs(math.exp(logz) - math.exp(logz_h))
    if err > 0.01 * math.exp(logz):
        raise AccuracyError(f"quadrature error {err:.3e} exceeds 1% of Z; increase resolution",
                            Z=math.exp(logz), error=err, resolution=resolution)
    labels = [ev.label or f"event{k}" for k, ev in enumerate(events)]
    return OracleResult(n, logz, err, edges, cdf,
                        dict(zip(labels, probs)),
                        {lab: abs(q - qh) for lab, q, qh in zip(labels, probs, probs_h)},
                        (float(a), float(b)))


# ----------------------------------------------------------------------------
# LDP probe
# ----------------------------------------------------------------------------

@dataclass
class ProbeRow:
    n: int
    probability: float
    probability_error: float
    exponent: float          # -(1/n^2) log Q_n(A)
    bound_holds: bool        # exponent >= inf I / 2


@dataclass
class ProbeReport:
    event: str
    inf_rate: float
    bound_line: float
    feasible: bool
    rows: list
    monotone_toward: bool

    def to_dict(self):
        return {"event": self.event, "inf_rate": self.inf_rate, "bound_line": self.bound_line,
                "feasible": self.feasible, "monotone_toward": self.monotone_toward,
                "rows": [row.__dict__ for row in self.rows],
                "violations": [row.n for row in self.rows if not row.bound_holds]}


def ldp_probe(spec: EnsembleSpec, event: HalfSpaceEvent, ns: Sequence[int] = (1, 2, 3),
              grid: int = 200, truncate=None, resolution: Optional[int] = None,
              tolerance: float = 1e-9) -> ProbeReport:
    """Compare oracle exponents ``-(1/n^2) log Q_n(A)`` with the constrained minimum.

    ``inf_rate`` is the constrained minimum of the discrete energy minus the
    unconstrained minimum.  Finite-n violations of the exponent bound
    ``inf_rate / 2`` are flagged, never raised.
    """
    a, b = truncate if truncate is not None else truncation_interval(spec)
    nodes, delta = make_grid(a, b, grid)
    kernel = assemble_kernel(spec, nodes, delta)
    free = minimize(kernel, spec.kappa, tolerance)
    try:
        con = constrained_minimize(kernel, spec.kappa, event.g(nodes), event.t, tolerance, unconstrained=free)
        inf_rate = max(con.energy_value - free.energy_value, 0.0)
        feasible = True
    except ConfigError:
        inf_rate, feasible = math.inf, False
    rows = []
    label = event.label or "event"
    for n in ns:
        res = quadrature_oracle(spec, n, resolution, [HalfSpaceEvent(event.g, event.t, label)], (a, b))
        q, qerr = res.probabilities[label], res.probability_errors[label]
        if q == 0.0 and qerr == 0.0:
            exponent = math.inf
        elif q <= qerr:
            raise PrecisionError(f"P(A) = {q:.3e} at n={n} is below its quadrature error {qerr:.3e}",
                                 n=n, probability=q, error=qerr)
        else:
            exponent = -math.log(q) / n ** 2
        rows.append(ProbeRow(n, q, qerr, exponent, bool(exponent >= 0.5 * inf_rate)))
    gaps = [abs(r.exponent - inf_rate) for r in rows]
    finite = all(math.isfinite(g) for g in gaps)
    monotone = finite and all(g1 < g0 for g0, g1 in zip(gaps, gaps[1:]))
    return ProbeReport(label, inf_rate, 0.5 * inf_rate, feasible, rows, monotone)
