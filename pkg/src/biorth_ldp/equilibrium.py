"""Discretized rate functionals and their minimization over probability vectors.

A probability measure on a truncation ``[a, b]`` of the support is
represented by a :class:`GridMeasure`: ``m`` uniform cells, each carrying a
mass that is spread uniformly over the cell.  The double integral of the
logarithmic interaction is replaced by a quadratic form ``w^T K w`` with cell
averaged entries, the external field by ``U^T w``.  The discrete energy

    E(w) = kappa^2/2 * w^T K w + kappa * U^T w

is convex on the simplex and is minimized by Frank-Wolfe with away steps,
accelerated by exact minimization over the current support face.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .ensemble_model import AngelescoSpec, EnsembleSpec
from .errors import ConfigError, ConvergenceError, NumericalError

__all__ = [
    "GridMeasure", "InteractionKernel", "RateReport", "make_grid",
    "truncation_interval", "cell_log_distance", "assemble_kernel", "energy",
    "minimize", "minimize_angelesco", "angelesco_energy", "constrained_minimize",
    "solve_ensemble",
]

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class GridMeasure:
    nodes: np.ndarray
    delta: float
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ConfigError("nodes and weights must be 1-d arrays of equal length")
        if np.any(weights < 0):
            raise NumericalError("negative grid weight", min_weight=float(weights.min()))
        if abs(weights.sum() - 1.0) > 1e-12:
            raise NumericalError("grid weights do not sum to one", total=float(weights.sum()))
        if nodes.size > 1:
            steps = np.diff(nodes)
            if np.any(steps <= 0) or np.max(np.abs(steps - self.delta)) > 1e-12 * max(1.0, np.max(np.abs(nodes))):
                raise ConfigError("nodes must be uniformly spaced with spacing delta")

    @property
    def edges(self):
        return np.append(self.nodes - 0.5 * self.delta, self.nodes[-1] + 0.5 * self.delta)

    @property
    def density(self):
        return self.weights / self.delta

    def cdf(self, x):
        """CDF of the measure with mass spread uniformly inside each cell."""
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        return np.interp(np.asarray(x, dtype=float), self.edges, cum)

    def mean(self) -> float:
        return float(np.dot(self.nodes, self.weights))

    def atoms(self, refine: int = 1):
        """Atoms and masses; ``refine`` > 1 splits each cell into sub-atoms."""
        if refine == 1:
            return self.nodes.copy(), self.weights.copy()
        offs = (np.arange(refine) + 0.5) / refine - 0.5
        x = (self.nodes[:, None] + offs[None, :] * self.delta).ravel()
        w = np.repeat(self.weights / refine, refine)
        return x, w

    def support_endpoints(self, threshold: float = 0.0):
        idx = np.flatnonzero(self.weights > threshold)
        return float(self.edges[idx[0]]), float(self.edges[idx[-1] + 1])


def make_grid(a: float, b: float, m: int):
    """Midpoints and spacing of ``m`` uniform cells covering ``[a, b]``."""
    if not (math.isfinite(a) and math.isfinite(b)) or not a < b:
        raise ConfigError(f"truncation must be finite with a < b, got ({a}, {b})")
    if m < 1:
        raise ConfigError("grid size must be >= 1")
    delta = (b - a) / m
    return a + (np.arange(m) + 0.5) * delta, delta


def truncation_interval(spec: EnsembleSpec, rise: float = 20.0):
    """Finite window outside which the effective potential exceeds its minimum by ``rise``.

    The effective potential is ``kappa*U(x) - kappa^2*(theta+1)*log(1+|x|)``.
    """
    lo, hi = spec.support
    if spec.bounded:
        return lo, hi

    def phi(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (-spec.kappa * spec.weight.log_w(x)
                    - spec.kappa ** 2 * (spec.theta + 1) * np.log1p(np.abs(x)))

    span = 1.0
    while True:
        a = lo if math.isfinite(lo) else -span
        b = hi if math.isfinite(hi) else span
        x = np.linspace(a, b, 4001)
        v = phi(x)
        vmin = np.nanmin(v[np.isfinite(v)])
        left_ok = math.isfinite(lo) or v[0] - vmin >= rise
        right_ok = math.isfinite(hi) or v[-1] - vmin >= rise
        if left_ok and right_ok:
            break
        span *= 2.0
        if span > 1e8:
            raise ConfigError("effective potential does not confine; check the tail assumption")
    ok = np.isfinite(v) & (v - vmin >= rise)
    core = np.flatnonzero(~ok)
    new_a = a if math.isfinite(lo) else float(x[max(core[0] - 1, 0)])
    new_b = b if math.isfinite(hi) else float(x[min(core[-1] + 1, x.size - 1)])
    return new_a, new_b


# ----------------------------------------------------------------------------
# kernel assembly
# ----------------------------------------------------------------------------

def _cell_log_offsets(kmax: int):
    """Average of log|x - y| / (cell width) units for cell offsets 0..kmax, minus log(delta)."""
    k = np.arange(kmax + 1, dtype=float)
    out = np.empty(kmax + 1)
    out[0] = -1.5

    def g(t):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(t > 0, 0.5 * t * t * np.log(t), 0.0)

    small = (k >= 1) & (k <= 20)
    ks = k[small]
    out[small] = g(ks + 1) - 2 * g(ks) + g(ks - 1) - 1.5
    big = k > 20
    kb = k[big]
    out[big] = np.log(kb) - 1 / (12 * kb ** 2) - 1 / (60 * kb ** 4) - 1 / (168 * kb ** 6)
    return out


def cell_log_distance(m: int, delta: float):
    """Matrix of exact averages of ``log|x - y|`` over pairs of uniform cells."""
    offsets = _cell_log_offsets(m - 1) + math.log(delta)
    idx = np.arange(m)
    return offsets[np.abs(idx[:, None] - idx[None, :])]


def _cross_log_distance(nodes_a, delta_a, nodes_b, delta_b, order: int = 4):
    """Gauss-averaged ``log|x - y|`` between cells of two disjoint grids."""
    gx, gw = np.polynomial.legendre.leggauss(order)
    xa = (nodes_a[:, None] + 0.5 * delta_a * gx[None, :])
    xb = (nodes_b[:, None] + 0.5 * delta_b * gx[None, :])
    vals = np.log(np.abs(xa[:, None, :, None] - xb[None, :, None, :]))
    return 0.25 * np.einsum("abij,i,j->ab", vals, gw, gw)


@dataclass(frozen=True)
class InteractionKernel:
    """Quadratic form ``K`` and external field ``U`` on a uniform grid.

    ``K[i, j]`` is the cell average of ``-(log|x-y| + log|x^theta-y^theta|)``;
    ``U[i] = -log w(node_i)``, ``+inf`` where the weight vanishes.
    """

    nodes: np.ndarray
    delta: float
    K: np.ndarray
    U: np.ndarray
    theta: int = 1

    @property
    def m(self):
        return self.nodes.size

    @property
    def active(self):
        return np.isfinite(self.U)

    def with_field(self, U) -> "InteractionKernel":
        return InteractionKernel(self.nodes, self.delta, self.K, np.asarray(U, dtype=float), self.theta)


def _log_theta_cell_fallback(x0, delta, theta, order=8):
    gx, gw = np.polynomial.legendre.leggauss(order)
    pts = x0 + 0.5 * delta * gx
    from .ensemble_model import _log_theta_factor
    vals = _log_theta_factor(pts[:, None], pts[None, :], theta)
    return 0.25 * float(np.einsum("ij,i,j->", vals, gw, gw))


def assemble_kernel(spec: EnsembleSpec, nodes, delta: float, absorb_zeros: bool = True) -> InteractionKernel:
    """Assemble ``K`` and ``U`` for a one-species ensemble on a uniform grid.

    The ``log|x-y|`` singularity is integrated exactly over cell pairs; the
    smooth factor ``log|(x^theta - y^theta)/(x - y)|`` is taken at midpoints.
    """
    from .ensemble_model import _log_theta_factor

    nodes = np.asarray(nodes, dtype=float)
    lo, hi = spec.support
    if nodes[0] - 0.5 * delta < lo - 1e-12 * max(1, abs(lo)) or nodes[-1] + 0.5 * delta > hi + 1e-12 * max(1, abs(hi)):
        raise ConfigError(f"grid [{nodes[0] - delta / 2}, {nodes[-1] + delta / 2}] leaves the support {spec.support}")
    L = cell_log_distance(nodes.size, delta)
    S = _log_theta_factor(nodes[:, None], nodes[None, :], spec.theta)
    bad = ~np.isfinite(S)
    if np.any(bad):
        for i in np.flatnonzero(np.diag(bad)):
            S[i, i] = _log_theta_cell_fallback(nodes[i], delta, spec.theta)
        if not np.all(np.isfinite(S)):
            raise ConfigError("interaction kernel is not finite on this grid")
    K = -2.0 * L - S
    K = 0.5 * (K + K.T)
    with np.errstate(divide="ignore"):
        U = -np.asarray(spec.weight.log_w(nodes), dtype=float)
    if np.any(np.isnan(U)) or np.any(U == -np.inf):
        raise ConfigError("weight is infinite or undefined at a grid node")
    if not absorb_zeros and np.any(np.isinf(U)):
        raise ConfigError("grid node at a zero of the weight")
    if not np.any(np.isfinite(U)):
        raise ConfigError("weight vanishes at every grid node")
    return InteractionKernel(nodes, float(delta), K, U, spec.theta)


# ----------------------------------------------------------------------------
# energy and single-species minimization
# ----------------------------------------------------------------------------

def energy(kernel: InteractionKernel, mu, kappa: float) -> float:
    """``kappa^2/2 w^T K w + kappa U^T w`` for grid weights ``w`` (or a GridMeasure)."""
    w = mu.weights if isinstance(mu, GridMeasure) else np.asarray(mu, dtype=float)
    if w.shape != kernel.U.shape:
        raise ConfigError(f"weights of shape {w.shape} do not match kernel of size {kernel.m}")
    pos = w > 0
    field_term = float(np.dot(kernel.U[pos], w[pos]))
    return 0.5 * kappa ** 2 * float(w @ kernel.K @ w) + kappa * field_term


@dataclass
class RateReport:
    minimizer: object
    energy_value: float
    c_constant: float
    iterations: int
    final_duality_gap: float
    energy_trace: list = field(default_factory=list, repr=False)
    boundary_mass: float = 0.0
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "energy_value": self.energy_value,
            "c_constant": self.c_constant,
            "iterations": self.iterations,
            "final_duality_gap": self.final_duality_gap,
            "boundary_mass": self.boundary_mass,
            "converged": self.converged,
        }


def _descent_check(e_new, e_old, where):
    if e_new > e_old + 1e-13 * (1.0 + abs(e_old)):
        raise NumericalError(f"energy increased during {where}", before=e_old, after=e_new)


def _face_step(K, U, kappa, w, Kw, support):
    """Direction to the minimizer of the energy restricted to the affine hull of ``support``."""
    S = support
    k = S.size
    A = np.empty((k + 1, k + 1))
    A[:k, :k] = kappa ** 2 * K[np.ix_(S, S)]
    A[:k, k] = 1.0
    A[k, :k] = 1.0
    A[k, k] = 0.0
    rhs = np.append(-kappa * U[S], 1.0)
    try:
        sol = np.linalg.solve(A, rhs)
        if not np.all(np.isfinite(sol)) or np.linalg.norm(A @ sol - rhs) > 1e-8 * (1 + np.linalg.norm(rhs)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    return sol[:k] - w[S]


def minimize(kernel: InteractionKernel, kappa: float = 1.0, tolerance: float = 1e-8,
             max_iter: Optional[int] = None, w0=None, polish_every: int = 10,
             raise_on_cap: bool = True) -> RateReport:
    """Minimize the discrete energy over the probability simplex.

    Frank-Wolfe with away steps and exact line search; every ``polish_every``
    iterations the iterate is moved towards the exact minimizer on its current
    support face (clipped to stay feasible).  Exits once the duality gap
    ``max_i [-grad]_i - (-grad)^T w`` is at most ``tolerance``.
    """
    if not tolerance > 0:
        raise ConfigError("tolerance must be > 0")
    K, U = kernel.K, kernel.U
    m = U.size
    active = np.isfinite(U)
    if max_iter is None:
        max_iter = 200 * m
    k2 = kappa ** 2
    Ufin = np.where(active, U, 0.0)

    if w0 is None:
        diag = 0.5 * k2 * np.diag(K) + kappa * U
        start = int(np.argmin(np.where(active, diag, np.inf)))
        w = np.zeros(m)
        w[start] = 1.0
    else:
        w = np.array(w0, dtype=float)
        if w.shape != (m,) or np.any(w < 0) or abs(w.sum() - 1) > 1e-9 or np.any(w[~active] > 0):
            raise ConfigError("initial weights must be a probability vector on active nodes")
        w /= w.sum()
    Kw = K @ w

    def current_energy():
        return 0.5 * k2 * float(w @ Kw) + kappa * float(Ufin @ w)

    E = current_energy()
    trace = [E]
    gap = np.inf
    it = 0
    polish_next = w0 is not None
    for it in range(1, max_iter + 1):
        g = k2 * Kw + kappa * Ufin
        g_masked = np.where(active, g, np.inf)
        s = int(np.argmin(g_masked))
        gw = float(g @ w)
        gap = gw - g[s]
        if gap <= tolerance:
            break
        if polish_every and (it % polish_every == 0 or polish_next):
            polish_next = False
            supp = np.flatnonzero(w > 0)
            if supp.size > 1:
                d = _face_step(K, Ufin, kappa, w, Kw, supp)
                neg = d < 0
                gmax = float(np.min(w[supp][neg] / -d[neg])) if np.any(neg) else 1.0
                gamma = min(1.0, gmax)
                dK = K[:, supp] @ d
                slope = float(g[supp] @ d)
                curv = k2 * float(d @ dK[supp])
                if slope < 0:
                    if curv > 0:
                        gamma = min(gamma, -slope / curv)
                    w_try = w.copy()
                    w_try[supp] += gamma * d
                    if gamma == gmax:
                        hit = supp[neg][np.argmin(w[supp][neg] / -d[neg])]
                        w_try[hit] = 0.0
                    w_try[w_try < 0] = 0.0
                    w_try /= w_try.sum()
                    Kw_try = K @ w_try
                    E_try = 0.5 * k2 * float(w_try @ Kw_try) + kappa * float(Ufin @ w_try)
                    if E_try <= E:
                        w, Kw, E = w_try, Kw_try, E_try
                        trace.append(E)
                        # clipped step: keep shrinking the face
                        polish_next = gamma < 1.0
                        continue
        supp = w > 0
        g_supp = np.where(supp, g, -np.inf)
        v = int(np.argmax(g_supp))
        fw_gain = gap
        away_gain = g[v] - gw
        if fw_gain >= away_gain or w[v] >= 1.0:
            Kd = K[:, s] - Kw
            slope = g[s] - gw
            d_dot_Kd = Kd[s] - float(w @ Kd)
            gmax = 1.0
            fw = True
        else:
            Kd = Kw - K[:, v]
            slope = gw - g[v]
            d_dot_Kd = float(w @ Kd) - Kd[v]
            gmax = w[v] / (1.0 - w[v])
            fw = False
        curv = k2 * d_dot_Kd
        gamma = gmax if curv <= 0 else min(gmax, -slope / curv)
        if fw:
            w *= (1.0 - gamma)
            w[s] += gamma
        else:
            w *= (1.0 + gamma)
            w[v] -= gamma
            if gamma == gmax:
                w[v] = 0.0
        w[w < 0] = 0.0
        Kw += gamma * Kd
        if it % 50 == 0:
            w /= w.sum()
            Kw = K @ w
        E_new = current_energy()
        _descent_check(E_new, E, "Frank-Wolfe step")
        E = E_new
        trace.append(E)
    else:
        it = max_iter
        g = k2 * Kw + kappa * Ufin
        gap = float(g @ w) - float(np.min(np.where(active, g, np.inf)))
    w /= w.sum()
    converged = gap <= tolerance
    if not converged and raise_on_cap:
        raise ConvergenceError(f"Frank-Wolfe stopped after {it} iterations with gap {gap:.3e}",
                               gap=float(gap), iterations=it)
    mu = GridMeasure(kernel.nodes, kernel.delta, w)
    E = energy(kernel, w, kappa)
    edge = max(1, int(math.ceil(0.02 * m)))
    boundary = float(w[:edge].sum() + w[-edge:].sum())
    return RateReport(mu, E, -E, it, float(max(gap, 0.0)), trace, boundary, converged)


def solve_ensemble(spec: EnsembleSpec, m: int, truncate=None, tolerance: float = 1e-8,
                   check_boundary: bool = True) -> RateReport:
    """Assemble the kernel for ``spec`` on ``m`` cells and minimize.

    Warns when more than 1e-6 mass lands in the outer 2% of cells of an
    artificial truncation.
    """
    a, b = truncate if truncate is not None else truncation_interval(spec)
    nodes, delta = make_grid(a, b, m)
    kernel = assemble_kernel(spec, nodes, delta)
    report = minimize(kernel, spec.kappa, tolerance)
    lo, hi = spec.support
    edge = max(1, int(math.ceil(0.02 * m)))
    w = report.minimizer.weights
    outer = 0.0
    if a > lo:
        outer += float(w[:edge].sum())
    if b < hi:
        outer += float(w[-edge:].sum())
    report.boundary_mass = outer
    if check_boundary and outer > 1e-6:
        warnings.warn(f"minimizer puts {outer:.2e} mass near the truncation boundary; widen [a, b]",
                      RuntimeWarning, stacklevel=2)
    return report


# ----------------------------------------------------------------------------
# constrained minimization (half-space of measures)
# ----------------------------------------------------------------------------

def _polytope_lmo(c, g, t, active):
    """Minimize ``c^T w`` over ``{w in simplex, g^T w >= t}``; returns (value, i, j, lam)."""
    idx = np.flatnonzero(active)
    cc, gg = c[idx], g[idx]
    best = (np.inf, -1, -1, 1.0)
    ok = gg >= t
    if np.any(ok):
        k = int(np.argmin(np.where(ok, cc, np.inf)))
        best = (float(cc[k]), int(idx[k]), int(idx[k]), 1.0)
    hi = np.flatnonzero(gg > t)
    lo = np.flatnonzero(gg < t)
    if hi.size and lo.size:
        lam = (t - gg[lo][None, :]) / (gg[hi][:, None] - gg[lo][None, :])
        val = lam * cc[hi][:, None] + (1 - lam) * cc[lo][None, :]
        a, b = np.unravel_index(int(np.argmin(val)), val.shape)
        if val[a, b] < best[0]:
            best = (float(val[a, b]), int(idx[hi[a]]), int(idx[lo[b]]), float(lam[a, b]))
    return best


def constrained_minimize(kernel: InteractionKernel, kappa: float, g, t: float,
                         tolerance: float = 1e-8, max_iter: Optional[int] = None,
                         unconstrained: Optional[RateReport] = None) -> RateReport:
    """Minimize the energy over probability vectors with ``g^T w >= t``.

    Fully corrective Frank-Wolfe over the constrained polytope: the linear
    subproblem is solved exactly over its vertices (single nodes with
    ``g >= t`` and two-node mixtures on the hyperplane ``g^T w = t``), and
    after each new vertex the energy is minimized over the convex hull of the
    active vertices.
    """
    g = np.asarray(g, dtype=float)
    if g.shape != kernel.U.shape:
        raise ConfigError("constraint values must match the grid")
    active = kernel.active
    if not np.any(g[active] >= t):
        raise ConfigError(f"constraint g >= {t} is infeasible on the grid (max {g[active].max():.4g})")
    if unconstrained is None:
        unconstrained = minimize(kernel, kappa, tolerance)
    w_free = unconstrained.minimizer.weights
    if float(g @ w_free) >= t:
        return unconstrained
    m = kernel.m
    if max_iter is None:
        max_iter = 2 * m + 50
    K = kernel.K
    Ufin = np.where(active, kernel.U, 0.0)
    k2 = kappa ** 2

    def vertex(i, j, lam):
        v = np.zeros(m)
        v[i] += lam
        v[j] += 1.0 - lam
        return v

    i0 = int(np.argmax(np.where(active, g, -np.inf)))
    atoms = [vertex(i0, i0, 1.0)]
    keys = [(i0, i0, 1.0)]
    beta = np.array([1.0])
    w = atoms[0].copy()
    E = energy(kernel, w, kappa)
    trace = [E]
    gap = np.inf
    for it in range(1, max_iter + 1):
        grad = k2 * (K @ w) + kappa * Ufin
        val, i, j, lam = _polytope_lmo(grad, g, t, active)
        gap = float(grad @ w) - val
        if gap <= tolerance:
            break
        key = (i, j, round(lam, 15))
        if key not in keys:
            keys.append(key)
            atoms.append(vertex(i, j, lam))
            beta = np.append(beta, 0.0)
        A = np.array(atoms).T
        sub = InteractionKernel(np.arange(A.shape[1], dtype=float), 1.0, A.T @ K @ A, A.T @ Ufin)
        inner = minimize(sub, kappa, tolerance=0.1 * tolerance, w0=beta,
                         polish_every=5, raise_on_cap=False)
        beta = inner.minimizer.weights
        keep = beta > 0
        atoms = [a for a, k in zip(atoms, keep) if k]
        keys = [k for k, kk in zip(keys, keep) if kk]
        beta = beta[keep] / beta[keep].sum()
        w = np.array(atoms).T @ beta
        E_new = energy(kernel, w, kappa)
        _descent_check(E_new, E, "fully corrective step")
        E = min(E, E_new)
        trace.append(E_new)
    else:
        raise ConvergenceError(f"constrained Frank-Wolfe stopped with gap {gap:.3e}", gap=gap)
    w = np.clip(w, 0.0, None)
    w /= w.sum()
    E = energy(kernel, w, kappa)
    mu = GridMeasure(kernel.nodes, kernel.delta, w)
    return RateReport(mu, E, unconstrained.c_constant, it, float(max(gap, 0.0)), trace)


# ----------------------------------------------------------------------------
# Angelesco ensembles
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class AngelescoKernels:
    nodes: tuple
    deltas: tuple
    self_kernels: tuple      # -2 * cell averaged log|x-y| per species
    cross: dict              # (j, k) -> -cell averaged log|x-y|, j < k
    fields: tuple            # V_j at nodes


def assemble_angelesco(spec: AngelescoSpec, grid_sizes: Sequence[int]) -> AngelescoKernels:
    if len(grid_sizes) != spec.p:
        raise ConfigError("need one grid size per species")
    nodes, deltas, selfk, fields = [], [], [], []
    for j, ((a, b), m) in enumerate(zip(spec.intervals, grid_sizes)):
        x, d = make_grid(a, b, int(m))
        nodes.append(x)
        deltas.append(d)
        selfk.append(-2.0 * cell_log_distance(x.size, d))
        with np.errstate(divide="ignore"):
            V = np.asarray(spec.potential(j, x), dtype=float)
        if np.any(np.isnan(V)) or np.any(V == -np.inf):
            raise ConfigError(f"potential of species {j} is undefined on its grid")
        fields.append(V)
    cross = {}
    for j in range(spec.p):
        for k in range(j + 1, spec.p):
            cross[(j, k)] = -_cross_log_distance(nodes[j], deltas[j], nodes[k], deltas[k])
    return AngelescoKernels(tuple(nodes), tuple(deltas), tuple(selfk), cross, tuple(fields))


def _cross(kern: AngelescoKernels, j, k):
    return kern.cross[(j, k)] if j < k else kern.cross[(k, j)].T


def angelesco_energy(spec: AngelescoSpec, kern: AngelescoKernels, weights) -> float:
    """Discrete rate functional without the constant c."""
    r = spec.ratios
    total = 0.0
    for j, w in enumerate(weights):
        pos = w > 0
        total += 0.5 * r[j] ** 2 * float(w @ kern.self_kernels[j] @ w)
        total += r[j] * float(kern.fields[j][pos] @ w[pos])
    for j in range(spec.p):
        for k in range(j + 1, spec.p):
            total += r[j] * r[k] * float(weights[j] @ kern.cross[(j, k)] @ weights[k])
    return total


def _species_field(spec, kern, weights, j):
    U = kern.fields[j].copy()
    for k in range(spec.p):
        if k != j:
            U = U + spec.ratios[k] * (_cross(kern, j, k) @ weights[k])
    return U


def minimize_angelesco(spec: AngelescoSpec, grid_sizes: Sequence[int], tolerance: float = 1e-12,
                       weight_tolerance: float = 1e-11, max_cycles: int = 500):
    """Block coordinate descent over species; each block is a single-species problem.

    Returns ``(report, kernels)``; ``report.minimizer`` is a list of GridMeasures.
    """
    kern = assemble_angelesco(spec, grid_sizes)
    weights = []
    for j in range(spec.p):
        w = np.zeros(kern.nodes[j].size)
        active = np.isfinite(kern.fields[j])
        w[active] = 1.0 / active.sum()
        weights.append(w)
    E = angelesco_energy(spec, kern, weights)
    trace = [E]
    inner_tol = min(tolerance, 1e-12)
    for cycle in range(1, max_cycles + 1):
        E_cycle_start = E
        change = 0.0
        for j in range(spec.p):
            U = _species_field(spec, kern, weights, j)
            sub = InteractionKernel(kern.nodes[j], kern.deltas[j], kern.self_kernels[j], U)
            rep = minimize(sub, spec.ratios[j], tolerance=inner_tol, w0=weights[j])
            change = max(change, float(np.max(np.abs(rep.minimizer.weights - weights[j]))))
            weights[j] = rep.minimizer.weights
            E_new = angelesco_energy(spec, kern, weights)
            _descent_check(E_new, E, "block coordinate step")
            E = E_new
            trace.append(E)
        if E_cycle_start - E < tolerance and change < weight_tolerance:
            break
    else:
        raise ConvergenceError(f"block coordinate descent did not settle in {max_cycles} cycles",
                               last_change=change)
    gaps = []
    for j in range(spec.p):
        U = _species_field(spec, kern, weights, j)
        g = spec.ratios[j] ** 2 * (kern.self_kernels[j] @ weights[j]) + spec.ratios[j] * U
        gaps.append(float(g @ weights[j]) - float(np.min(np.where(np.isfinite(U), g, np.inf))))
    measures = [GridMeasure(x, d, w) for x, d, w in zip(kern.nodes, kern.deltas, weights)]
    report = RateReport(measures, E, -E, cycle, max(0.0, max(gaps)), trace)
    return report, kern
