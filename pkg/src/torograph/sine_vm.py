"""Multivariate sine von Mises distribution and conditional von Mises DAGs.

The joint sine density is known only up to its normalizing constant, but
each full conditional is univariate von Mises.  A conditional von Mises
DAG chains such univariate conditionals along a known node ordering, so
its likelihood is available in closed form and each node can be fitted
separately.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import optimize, stats

from .core import (
    AngleMatrix,
    as_angle_matrix,
    bessel_ratio,
    circular_mean,
    log_bessel_i0,
    wrap_angle,
)
from .errors import ConvergenceError, InvalidArgumentError
from .graphs import Dag, EdgeRecord, EdgeReport, dag_validate
from .multitest import holm_adjust

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class VonMisesParams:
    mu: float
    kappa: float

    def __post_init__(self):
        if not self.kappa >= 0:
            raise InvalidArgumentError(f"kappa must be >= 0, got {self.kappa}")
        object.__setattr__(self, "mu", wrap_angle(self.mu))


def vm_log_density(theta, params: VonMisesParams):
    theta = np.asarray(theta, dtype=float)
    return params.kappa * np.cos(theta - params.mu) - LOG_2PI - log_bessel_i0(params.kappa)


def vm_kappa_mle(rbar: float) -> float:
    """Solve ``A1(kappa) = rbar`` for the von Mises concentration."""
    if rbar <= 0:
        return 0.0
    if rbar >= 1:
        raise InvalidArgumentError("resultant length 1 has no finite kappa MLE")
    hi = 1.0
    while bessel_ratio(hi) < rbar:
        hi *= 2.0
    return optimize.brentq(lambda k: bessel_ratio(k) - rbar, 0.0, hi, xtol=1e-14, rtol=1e-14)


@dataclass(frozen=True)
class SineModelParams:
    mu: np.ndarray
    kappa: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(wrap_angle(np.asarray(self.mu, dtype=float)))
        kappa = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        lam = np.atleast_2d(np.asarray(self.lam, dtype=float))
        p = mu.size
        if kappa.shape != (p,) or lam.shape != (p, p):
            raise InvalidArgumentError("mu, kappa and lambda dimensions disagree")
        if np.any(kappa < 0):
            raise InvalidArgumentError("kappa must be componentwise >= 0")
        if not np.allclose(lam, lam.T, atol=1e-12) or np.any(np.diag(lam) != 0):
            raise InvalidArgumentError("lambda must be symmetric with zero diagonal")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "lam", lam)

    @property
    def p(self):
        return self.mu.size


def sine_log_density_unnormalized(theta, params: SineModelParams):
    """Exponent ``kappa'c + s'Lambda s / 2`` of the sine density.

    ``theta`` may be a single p-vector or an (n, p) array of rows.
    """
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta - params.mu)
    s = np.sin(theta - params.mu)
    return c @ params.kappa + 0.5 * np.einsum("...i,ij,...j->...", s, params.lam, s)


def _conditional_from_drift(mu_j, kappa_j, b):
    kappa_c = np.hypot(kappa_j, b)
    mu_c = wrap_angle(mu_j + np.arctan2(b, kappa_j))
    return mu_c, kappa_c


def sine_full_conditional(j: int, theta_rest, params: SineModelParams) -> VonMisesParams:
    """Von Mises law of coordinate ``j`` given the remaining p - 1 angles.

    With ``b = sum_i lambda_ij sin(theta_i - mu_i)`` the conditional has
    concentration ``sqrt(kappa_j^2 + b^2)`` and mean ``mu_j + atan2(b, kappa_j)``.
    """
    p = params.p
    if p < 2:
        raise InvalidArgumentError("full conditionals need p >= 2")
    theta_rest = np.asarray(theta_rest, dtype=float)
    if theta_rest.shape != (p - 1,):
        raise InvalidArgumentError(f"theta_rest must have length {p - 1}")
    rest = [i for i in range(p) if i != j]
    b = float(np.sum(params.lam[rest, j] * np.sin(theta_rest - params.mu[rest])))
    mu_c, kappa_c = _conditional_from_drift(params.mu[j], params.kappa[j], b)
    return VonMisesParams(float(mu_c), float(kappa_c))


def sine_normalizing_constant(params: SineModelParams, n_grid: int = 256) -> float:
    """Normalizing constant by tensor trapezoid quadrature, p <= 3 only."""
    if params.p > 3:
        raise InvalidArgumentError("normalizing constant is only computed for p <= 3")
    t = -np.pi + 2.0 * np.pi * np.arange(n_grid) / n_grid
    mesh = np.stack(np.meshgrid(*([t] * params.p), indexing="ij"), axis=-1)
    vals = sine_log_density_unnormalized(mesh.reshape(-1, params.p), params)
    shift = vals.max()
    cell = (2.0 * np.pi / n_grid) ** params.p
    return float(np.exp(shift) * np.sum(np.exp(vals - shift)) * cell)


@dataclass(frozen=True)
class CvmDagModel:
    """Conditional von Mises DAG.

    ``lam`` maps ``(i, j)`` to the coefficient of parent ``i`` in the
    conditional of ``j``; its keys are exactly the DAG's edges.
    """

    dag: Dag
    mu: np.ndarray
    kappa: np.ndarray
    lam: dict = field(default_factory=dict)

    def __post_init__(self):
        mu = np.atleast_1d(wrap_angle(np.asarray(self.mu, dtype=float)))
        kappa = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        if mu.shape != (self.dag.p,) or kappa.shape != (self.dag.p,):
            raise InvalidArgumentError("mu and kappa must have one entry per vertex")
        if np.any(kappa < 0):
            raise InvalidArgumentError("kappa must be componentwise >= 0")
        lam = {(int(i), int(j)): float(v) for (i, j), v in dict(self.lam).items()}
        if set(lam) != set(self.dag.edges):
            raise InvalidArgumentError("lambda keys must coincide with the DAG edges")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "lam", lam)

    @property
    def p(self):
        return self.dag.p

    def as_dict(self):
        return {
            "mu": self.mu.tolist(),
            "kappa": self.kappa.tolist(),
            "lambda": [
                {"parent": i + 1, "child": j + 1, "value": v} for (i, j), v in sorted(self.lam.items())
            ],
        }


def _drift(values, mu, parents, coefs):
    if not parents:
        return np.zeros(values.shape[0])
    S = np.sin(values[:, parents] - mu[parents])
    return S @ np.asarray(coefs, dtype=float)


def node_conditional(model: CvmDagModel, j: int, values):
    """Per-row ``(mu, kappa)`` of node ``j`` given its parents."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    parents = list(model.dag.parents[j])
    b = _drift(values, model.mu, parents, [model.lam[(i, j)] for i in parents])
    return _conditional_from_drift(model.mu[j], model.kappa[j], b)


def cvm_log_likelihood(data, model: CvmDagModel) -> float:
    data = as_angle_matrix(data)
    if data.p != model.p:
        raise InvalidArgumentError(f"data has {data.p} columns, model has {model.p} nodes")
    total = 0.0
    for j in range(model.p):
        mu_c, kappa_c = node_conditional(model, j, data.values)
        total += float(np.sum(kappa_c * np.cos(data.values[:, j] - mu_c) - LOG_2PI - log_bessel_i0(kappa_c)))
    return total


def _node_terms(x, c, s, S):
    """Mean conditional log-likelihood of one node and its gradient.

    ``x = (log kappa, lambda_1, ..., lambda_m)``.  The conditional exponent
    ``kappa_c cos(phi - atan2(b, kappa))`` equals ``kappa cos(phi) + b sin(phi)``.
    """
    kappa = np.exp(x[0])
    b = S @ x[1:] if S.shape[1] else np.zeros_like(c)
    kc = np.hypot(kappa, b)
    ll = kappa * c + b * s - LOG_2PI - log_bessel_i0(kc)
    small = kc < 1e-8
    ratio = np.where(small, 0.5, bessel_ratio(kc) / np.where(small, 1.0, kc))
    d_kappa = c - ratio * kappa
    d_b = s - ratio * b
    grad = np.empty_like(x)
    grad[0] = kappa * d_kappa.mean()
    grad[1:] = S.T @ d_b / c.size
    return ll.mean(), grad


def node_objective(x, data, j, parents, mu):
    """Mean log-likelihood of node ``j`` and its gradient at ``x``.

    Exposed for gradient checks; ``x`` holds ``log kappa`` followed by one
    coefficient per parent.
    """
    values = as_angle_matrix(data).values
    phi = values[:, j] - mu[j]
    S = np.sin(values[:, list(parents)] - mu[list(parents)]) if parents else np.zeros((values.shape[0], 0))
    return _node_terms(np.asarray(x, dtype=float), np.cos(phi), np.sin(phi), S)


class NodeFit(NamedTuple):
    mu: float
    kappa: float
    lam: dict
    loglik: float
    n_iter: int
    converged: bool


def cvm_fit_node(data, j: int, parents=(), mu=None, max_iter: int = 500, gtol: float = 1e-8) -> NodeFit:
    """Profile maximum likelihood for one node of a conditional von Mises DAG.

    The location ``mu_j`` (and every parent's ``mu_i``) is fixed at the
    circular sample mean; ``log kappa_j`` and the parent coefficients are
    then maximized with BFGS.

    Parameters
    ----------
    data : AngleMatrix or array_like
    j : int
        Node index (0-based column).
    parents : sequence of int
        Parent columns of ``j``.
    mu : array_like, optional
        Precomputed column means; computed from ``data`` when omitted.

    Raises
    ------
    ConvergenceError
        When ``max_iter`` is reached; ``best`` holds the last iterate.
    """
    data = as_angle_matrix(data)
    parents = [int(i) for i in parents]
    if j in parents:
        raise InvalidArgumentError("a node cannot be its own parent")
    if data.n <= len(parents) + 2:
        raise InvalidArgumentError("need n > |parents| + 2 to fit a node")
    values = data.values
    if mu is None:
        mu = np.atleast_1d(circular_mean(values))
    mu = np.asarray(mu, dtype=float)
    phi = values[:, j] - mu[j]
    c, s = np.cos(phi), np.sin(phi)
    S = np.sin(values[:, parents] - mu[parents]) if parents else np.zeros((data.n, 0))

    rbar = float(np.clip(np.mean(c), 1e-3, 0.99))
    x0 = np.zeros(1 + len(parents))
    x0[0] = np.log(max(vm_kappa_mle(rbar), 1e-3))

    def fun(x):
        ll, g = _node_terms(x, c, s, S)
        return -ll, -g

    res = optimize.minimize(fun, x0, jac=True, method="BFGS", options={"maxiter": max_iter, "gtol": gtol})
    x = res.x
    lam = {(i, j): float(v) for i, v in zip(parents, x[1:])}
    fit = NodeFit(float(mu[j]), float(np.exp(x[0])), lam, float(-res.fun * data.n), int(res.nit), bool(res.success))
    if res.status == 1:
        raise ConvergenceError(f"node {j} fit hit the iteration cap ({max_iter})", best=fit)
    return fit


def cvm_fit(data, dag: Dag, **kwargs) -> CvmDagModel:
    """Fit every node of ``dag`` with :func:`cvm_fit_node`."""
    data = as_angle_matrix(data)
    mu = np.atleast_1d(circular_mean(data.values))
    kappa = np.empty(dag.p)
    lam = {}
    for j in range(dag.p):
        fit = cvm_fit_node(data, j, dag.parents[j], mu=mu, **kwargs)
        kappa[j] = fit.kappa
        lam.update(fit.lam)
    return CvmDagModel(dag, mu, kappa, lam)


class CvmSelection(NamedTuple):
    dag: Dag
    report: EdgeReport
    model: CvmDagModel


def cvm_lrt_select(data, ordering, candidate_parents=None, alpha: float = 0.05,
                   correction: Optional[str] = None) -> CvmSelection:
    """Select parents by likelihood-ratio tests of ``lambda_ij = 0``.

    For each node the full model uses every candidate parent; dropping one
    candidate at a time gives a chi-squared(1) statistic.  Edges with
    p-value below ``alpha`` are kept and the retained DAG is refitted.

    Parameters
    ----------
    ordering : sequence of int
        Known node ordering (0-based).
    candidate_parents : mapping or sequence, optional
        Defaults to all predecessors of each node in ``ordering``.
    correction : {None, "holm"}
        Optional multiplicity correction across all tests.
    """
    data = as_angle_matrix(data)
    if not 0 <= alpha < 1:
        raise InvalidArgumentError("alpha must lie in [0, 1)")
    if correction not in (None, "holm"):
        raise InvalidArgumentError(f"unknown correction {correction!r}")
    ordering = [int(v) for v in ordering]
    if sorted(ordering) != list(range(data.p)):
        raise InvalidArgumentError("ordering must be a permutation of the data columns")
    if candidate_parents is None:
        candidates = [ordering[: ordering.index(j)] for j in range(data.p)]
    else:
        if isinstance(candidate_parents, dict):
            candidate_parents = [candidate_parents.get(j, ()) for j in range(data.p)]
        candidates = [list(c) for c in candidate_parents]
        dag_validate(ordering, candidates)

    mu = np.atleast_1d(circular_mean(data.values))
    records = []
    for j in ordering:
        cand = list(candidates[j])
        if not cand:
            continue
        full = cvm_fit_node(data, j, cand, mu=mu)
        for i in cand:
            reduced = cvm_fit_node(data, j, [c for c in cand if c != i], mu=mu)
            stat = max(2.0 * (full.loglik - reduced.loglik), 0.0)
            records.append(EdgeRecord(i, j, stat, float(stats.chi2.sf(stat, 1)), weight=full.lam[(i, j)]))

    pvals = np.array([r.p_value for r in records])
    adjusted = holm_adjust(pvals) if correction == "holm" else pvals
    for rec, adj in zip(records, adjusted):
        rec.adjusted_p = float(adj)
        rec.selected = bool(adj < alpha)
    parent_sets = [[] for _ in range(data.p)]
    for rec in records:
        if rec.selected:
            parent_sets[rec.j].append(rec.i)
    dag = dag_validate(ordering, parent_sets, data.columns)
    model = cvm_fit(data, dag)
    for rec in records:
        if rec.selected:
            rec.weight = model.lam[(rec.i, rec.j)]
    return CvmSelection(dag, EdgeReport(records), model)


def vm_sample(mu, kappa, rng: np.random.Generator):
    """Best-Fisher rejection sampler, vectorized over ``mu`` and ``kappa``."""
    mu, kappa = np.broadcast_arrays(np.asarray(mu, dtype=float), np.asarray(kappa, dtype=float))
    mu, kappa = mu.ravel(), kappa.ravel()
    out = np.empty(mu.size)
    uniform = kappa < 1e-8
    out[uniform] = rng.uniform(-np.pi, np.pi, size=int(uniform.sum()))
    idx = np.flatnonzero(~uniform)
    k = kappa[idx]
    tau = 1.0 + np.sqrt(1.0 + 4.0 * k * k)
    rho = (tau - np.sqrt(2.0 * tau)) / (2.0 * k)
    r = (1.0 + rho * rho) / (2.0 * rho)
    while idx.size:
        u1, u2, u3 = rng.uniform(size=(3, idx.size))
        z = np.cos(np.pi * u1)
        f = (1.0 + r * z) / (r + z)
        c = k * (r - f)
        with np.errstate(divide="ignore"):
            accept = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
        draw = mu[idx] + np.sign(u3 - 0.5) * np.arccos(np.clip(f, -1.0, 1.0))
        out[idx[accept]] = draw[accept]
        keep = ~accept
        idx, k, r = idx[keep], k[keep], r[keep]
    return wrap_angle(out)


def cvm_sample(model: CvmDagModel, n: int, seed) -> AngleMatrix:
    """Ancestral sampling along the model's node ordering."""
    rng = np.random.default_rng(seed)
    values = np.zeros((int(n), model.p))
    for j in model.dag.ordering:
        mu_c, kappa_c = node_conditional(model, j, values)
        values[:, j] = vm_sample(mu_c, kappa_c, rng)
    return AngleMatrix(values, model.dag.labels)
