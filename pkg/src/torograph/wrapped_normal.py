"""Multivariate wrapped Normal distribution and the unwrapped Normal graph.

``Theta = X mod 2*pi`` with ``X ~ N_p(mu, Sigma)``.  Every density here
replaces the sum over all winding vectors ``k in Z^p`` by a finite grid
``{-r, ..., r}^p`` (:class:`WindingTruncation`).
"""

import itertools
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg, optimize, stats
from scipy.special import logsumexp

from .core import AngleMatrix, as_angle_matrix, circular_mean, moment_covariance, wrap_angle
from .errors import ConvergenceError, InvalidArgumentError, NumericalError
from .graphs import EdgeRecord, EdgeReport, UndirectedGraph
from .multitest import fisher_z_pvalue, holm_adjust

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
LOG_2PI = np.log(TWO_PI)
# entries of an (n, K, p) work array held in memory at once
_CHUNK_ENTRIES = 4_000_000


def _cholesky(sigma):
    try:
        return linalg.cholesky(sigma, lower=True)
    except linalg.LinAlgError:
        raise InvalidArgumentError("sigma is not positive definite") from None


@dataclass(frozen=True)
class WnParams:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (mu.size, mu.size):
            raise InvalidArgumentError(f"sigma shape {sigma.shape} does not match mu of length {mu.size}")
        if np.max(np.abs(sigma - sigma.T)) > 1e-12 * max(1.0, np.max(np.abs(sigma))):
            raise InvalidArgumentError("sigma must be symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        _cholesky(sigma)
        object.__setattr__(self, "mu", np.atleast_1d(wrap_angle(mu)))
        object.__setattr__(self, "sigma", sigma)

    @property
    def p(self):
        return self.mu.size

    def as_dict(self):
        return {"mu": self.mu.tolist(), "sigma": self.sigma.tolist()}


@dataclass(frozen=True)
class WindingTruncation:
    radius: int = 1
    dimension: int = 1

    def __post_init__(self):
        if self.radius < 0 or self.dimension < 0:
            raise InvalidArgumentError("radius and dimension must be non-negative")

    @property
    def size(self):
        return (2 * self.radius + 1) ** self.dimension

    def grid(self) -> np.ndarray:
        """All winding vectors as a (size, dimension) integer array."""
        steps = range(-self.radius, self.radius + 1)
        return np.array(list(itertools.product(steps, repeat=self.dimension)), dtype=float).reshape(
            -1, self.dimension
        )


def _check_trunc(trunc, p):
    if trunc is None:
        return WindingTruncation(1, p)
    if isinstance(trunc, int):
        return WindingTruncation(trunc, p)
    if trunc.dimension != p:
        raise InvalidArgumentError(f"truncation dimension {trunc.dimension} != {p}")
    return trunc


def _as_rows(theta, p):
    """Reshape to (n, p); ``single`` marks a lone point given as a p-vector."""
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 0 or (theta.ndim == 1 and p > 1)
    return theta.reshape(-1, p), single


def _wrapped_logpdf(theta, mu, L, grid):
    """``log sum_k N(theta + 2 pi k; mu, L L')`` for each row of ``theta``."""
    n, p = theta.shape
    log_norm = -0.5 * p * LOG_2PI - np.sum(np.log(np.diag(L)))
    step = max(1, _CHUNK_ENTRIES // max(1, n * p))
    parts = []
    for start in range(0, grid.shape[0], step):
        k = grid[start:start + step]
        x = (theta - mu)[:, None, :] + TWO_PI * k[None, :, :]
        z = linalg.solve_triangular(L, x.reshape(-1, p).T, lower=True)
        quad = np.sum(z * z, axis=0).reshape(n, -1)
        parts.append(logsumexp(-0.5 * quad, axis=1))
    return log_norm + logsumexp(np.stack(parts, axis=1), axis=1)


def wn_log_density(theta, params: WnParams, trunc: Optional[WindingTruncation] = None):
    """Truncated wrapped Normal log-density.

    ``theta`` is a p-vector (scalar result) or an (n, p) array; for p = 1
    a flat array is read as n points.
    """
    trunc = _check_trunc(trunc, params.p)
    rows, single = _as_rows(theta, params.p)
    out = _wrapped_logpdf(rows, params.mu, _cholesky(params.sigma), trunc.grid())
    return float(out[0]) if single else out


def wn_sample(params: WnParams, n: int, seed):
    """Draw ``n`` angles; returns the wrapped sample and the winding numbers."""
    rng = np.random.default_rng(seed)
    x = rng.multivariate_normal(params.mu, params.sigma, size=int(n), method="cholesky")
    theta = wrap_angle(x)
    k = np.rint((x - theta) / TWO_PI).astype(int)
    return AngleMatrix(theta), k


def _index_list(idx, p, name):
    idx = [int(i) for i in idx]
    if not idx:
        raise InvalidArgumentError(f"index set {name} must be non-empty")
    if len(set(idx)) != len(idx) or any(not 0 <= i < p for i in idx):
        raise InvalidArgumentError(f"invalid index set {name}={idx}")
    return idx


def wn_marginal(params: WnParams, A) -> WnParams:
    A = _index_list(A, params.p, "A")
    return WnParams(params.mu[A], params.sigma[np.ix_(A, A)])


def _gaussian_conditional(mu, sigma, A, B, x_B):
    S_AB = sigma[np.ix_(A, B)]
    S_BB = sigma[np.ix_(B, B)]
    cond = np.linalg.cond(S_BB)
    if cond > 1e12:
        raise NumericalError(f"Sigma_BB is singular (condition number {cond:.3g})", cond)
    reg = linalg.solve(S_BB, S_AB.T, assume_a="pos").T
    mean = mu[A] + reg @ (np.asarray(x_B) - mu[B])
    cov = sigma[np.ix_(A, A)] - reg @ S_AB.T
    return mean, 0.5 * (cov + cov.T)


def wn_conditional_given_unwrapped(params: WnParams, A, B, theta_B, k_B) -> WnParams:
    """Law of ``Theta_A`` given ``Theta_B`` and the winding numbers ``K_B``.

    This is the wrapped image of the Gaussian conditional of ``X_A`` given
    ``X_B = theta_B + 2 pi k_B``.
    """
    A = _index_list(A, params.p, "A")
    B = _index_list(B, params.p, "B")
    if set(A) & set(B):
        raise InvalidArgumentError("A and B must be disjoint")
    x_B = np.asarray(theta_B, dtype=float) + TWO_PI * np.asarray(k_B, dtype=float)
    mean, cov = _gaussian_conditional(params.mu, params.sigma, A, B, x_B)
    return WnParams(mean, cov)


@dataclass(frozen=True)
class ConditionalMixture:
    """Wrapped Gaussian mixture for ``Theta_A | Theta_S``.

    ``windings[m]`` and ``weights[m]`` describe component ``m``, whose law
    is ``components[m]``.
    """

    windings: np.ndarray
    weights: np.ndarray
    components: tuple

    def log_density(self, theta_A, trunc: Optional[WindingTruncation] = None):
        q = self.components[0].p
        trunc = _check_trunc(trunc, q)
        rows, single = _as_rows(theta_A, q)
        logs = np.stack([wn_log_density(rows, comp, trunc) for comp in self.components], axis=1)
        with np.errstate(divide="ignore"):
            out = logsumexp(logs + np.log(self.weights)[None, :], axis=1)
        return float(out[0]) if single else out

    def density(self, theta_A, trunc=None):
        return np.exp(self.log_density(theta_A, trunc))

    def component(self, k_S):
        """The component for winding vector ``k_S``."""
        k_S = np.asarray(k_S, dtype=float)
        for k, comp in zip(self.windings, self.components):
            if np.array_equal(k, k_S):
                return comp
        raise KeyError(tuple(k_S))


def wn_conditional_mixture(params: WnParams, A, S, theta_S, trunc: Optional[WindingTruncation] = None):
    """Conditional law of ``Theta_A`` given ``Theta_S`` as a wrapped mixture.

    Weights are proportional to ``f_{X_S}(theta_S + 2 pi k_S)`` over the
    truncation grid of ``S``; each component is the Gaussian conditional
    at that ``k_S``.
    """
    A = _index_list(A, params.p, "A")
    S = _index_list(S, params.p, "S")
    if set(A) & set(S):
        raise InvalidArgumentError("A and S must be disjoint")
    trunc_S = WindingTruncation(1 if trunc is None else trunc.radius, len(S))
    grid = trunc_S.grid()
    theta_S = np.asarray(theta_S, dtype=float).reshape(len(S))
    marg = wn_marginal(params, S)
    L = _cholesky(marg.sigma)
    x = theta_S[None, :] + TWO_PI * grid - marg.mu
    z = linalg.solve_triangular(L, x.T, lower=True)
    logw = -0.5 * np.sum(z * z, axis=0)
    weights = np.exp(logw - logsumexp(logw))
    comps = tuple(wn_conditional_given_unwrapped(params, A, S, theta_S, k) for k in grid)
    return ConditionalMixture(grid, weights, comps)


# -- likelihood in log-Cholesky coordinates ---------------------------------

def _tril_indices(p):
    return np.tril_indices(p)


def pack_log_cholesky(sigma, scale=None) -> np.ndarray:
    """Unconstrained coordinates of ``sigma``: lower Cholesky factor with a
    log diagonal, optionally after dividing rows/columns by ``scale``."""
    sigma = np.asarray(sigma, dtype=float)
    if scale is not None:
        sigma = sigma / np.outer(scale, scale)
    L = _cholesky(sigma)
    L[np.diag_indices_from(L)] = np.log(np.diag(L))
    return L[_tril_indices(sigma.shape[0])]


def unpack_log_cholesky(vec, p, scale=None) -> np.ndarray:
    """Lower-triangular factor ``L`` with ``Sigma = L L'`` (rows scaled)."""
    L = np.zeros((p, p))
    L[_tril_indices(p)] = vec
    L[np.diag_indices(p)] = np.exp(np.diag(L))
    if scale is not None:
        L = np.asarray(scale)[:, None] * L
    return L


def _loglik_parts(values, mu, L, grid):
    """Total log-likelihood and ``sum_t sum_k w_tk z z'`` with ``z = L^-1 x``."""
    n, p = values.shape
    x = (values - mu)[:, None, :] + TWO_PI * grid[None, :, :]
    z = linalg.solve_triangular(L, x.reshape(-1, p).T, lower=True).T.reshape(n, grid.shape[0], p)
    logk = -0.5 * np.sum(z * z, axis=2)
    row = logsumexp(logk, axis=1)
    w = np.exp(logk - row[:, None])
    Mz = np.einsum("tk,tki,tkj->ij", w, z, z)
    total = float(np.sum(row)) - n * (0.5 * p * LOG_2PI + np.sum(np.log(np.diag(L))))
    return total, Mz


def wn_loglik_log_cholesky(vec, data, mu, trunc: Optional[WindingTruncation] = None, scale=None):
    """Truncated log-likelihood and its gradient in log-Cholesky coordinates.

    Returns ``(loglik, grad)`` where ``grad`` has the layout of ``vec``.
    """
    values = as_angle_matrix(data).values
    n, p = values.shape
    trunc = _check_trunc(trunc, p)
    L = unpack_log_cholesky(vec, p, scale)
    total, Mz = _loglik_parts(values, np.asarray(mu, dtype=float), L, trunc.grid())
    # d loglik / dL = L^-T (Mz - n I)
    dL = linalg.solve_triangular(L, Mz - n * np.eye(p), lower=True, trans="T")
    if scale is not None:
        dL = dL * np.asarray(scale)[:, None]
    base = L if scale is None else L / np.asarray(scale)[:, None]
    dL[np.diag_indices(p)] *= np.diag(base)
    return total, dL[_tril_indices(p)]


def wn_loglik_sigma_grad(sigma, data, mu, trunc: Optional[WindingTruncation] = None):
    """Log-likelihood and its gradient with respect to a symmetric ``sigma``."""
    values = as_angle_matrix(data).values
    n, p = values.shape
    trunc = _check_trunc(trunc, p)
    L = _cholesky(np.asarray(sigma, dtype=float))
    total, Mz = _loglik_parts(values, np.asarray(mu, dtype=float), L, trunc.grid())
    Linv = linalg.solve_triangular(L, np.eye(p), lower=True)
    G = 0.5 * Linv.T @ (Mz - n * np.eye(p)) @ Linv
    return total, 0.5 * (G + G.T)


def nearest_pd(matrix, floor=1e-4):
    """Symmetrize and floor the eigenvalues at ``floor``."""
    m = 0.5 * (matrix + matrix.T)
    vals, vecs = np.linalg.eigh(m)
    return (vecs * np.maximum(vals, floor)) @ vecs.T


def moment_initial_sigma(data, floor=1e-4):
    """Moment-probe starting value for ``Sigma``; identity if undefined."""
    probe = moment_covariance(data)
    if not np.all(np.isfinite(probe)):
        logger.info("moment initialization undefined (zero resultant length); using identity")
        return np.eye(probe.shape[0])
    return nearest_pd(probe, floor)


class WnFit(NamedTuple):
    params: WnParams
    loglik: float
    n_iter: int
    converged: bool
    saturation: float


def truncation_saturation(data, params: WnParams, trunc: WindingTruncation) -> float:
    """Largest relative density change on the data when the radius grows by one."""
    values = as_angle_matrix(data).values
    L = _cholesky(params.sigma)
    a = _wrapped_logpdf(values, params.mu, L, trunc.grid())
    b = _wrapped_logpdf(values, params.mu, L, WindingTruncation(trunc.radius + 1, trunc.dimension).grid())
    return float(np.max(np.abs(np.expm1(a - b))))


def wn_fit_approx_mle(data, trunc: Optional[WindingTruncation] = None, max_iter: int = 1000,
                      gtol: float = 1e-7, check_saturation: bool = True) -> WnFit:
    """Approximate profile maximum likelihood for the wrapped Normal.

    ``mu`` is fixed at the column circular means.  ``Sigma`` maximizes the
    truncated log-likelihood over log-Cholesky coordinates, started from
    the trigonometric-moment probe.  The returned ``saturation`` is the
    relative density change at radius ``r + 1`` (``nan`` when skipped); a
    warning is logged when it exceeds 1e-6.

    Raises
    ------
    ConvergenceError
        If the optimizer reaches ``max_iter``; ``best`` holds the iterate.
    """
    data = as_angle_matrix(data)
    n, p = data.n, data.p
    if n <= p:
        raise InvalidArgumentError(f"need n > p, got n={n}, p={p}")
    trunc = _check_trunc(trunc, p)
    mu = np.atleast_1d(circular_mean(data.values))
    sigma0 = moment_initial_sigma(data)
    scale = np.sqrt(np.diag(sigma0))
    x0 = pack_log_cholesky(sigma0, scale)

    def fun(vec):
        ll, g = wn_loglik_log_cholesky(vec, data, mu, trunc, scale)
        return -ll / n, -g / n

    res = optimize.minimize(fun, x0, jac=True, method="BFGS", options={"maxiter": max_iter, "gtol": gtol})
    L = unpack_log_cholesky(res.x, p, scale)
    params = WnParams(mu, L @ L.T)
    loglik = float(-res.fun * n)
    saturation = truncation_saturation(data, params, trunc) if check_saturation else float("nan")
    if check_saturation and saturation > 1e-6:
        logger.warning("truncation radius %d not saturated: relative density change %.3g",
                       trunc.radius, saturation)
    fit = WnFit(params, loglik, int(res.nit), bool(res.success), saturation)
    if res.status == 1:
        raise ConvergenceError(f"wrapped Normal fit hit the iteration cap ({max_iter})", best=fit)
    return fit


def partial_correlations(sigma) -> np.ndarray:
    omega = np.linalg.inv(sigma)
    d = np.sqrt(np.diag(omega))
    pc = -omega / np.outer(d, d)
    np.fill_diagonal(pc, 1.0)
    return pc


def _observed_information_se(sigma, data, mu, trunc, step=1e-5):
    """Standard errors of the free entries of ``sigma`` from a numerical Hessian."""
    p = sigma.shape[0]
    iu = np.triu_indices(p)
    m = iu[0].size

    def grad(vec):
        s = np.zeros((p, p))
        s[iu] = vec
        s = s + s.T - np.diag(np.diag(s))
        _, G = wn_loglik_sigma_grad(s, data, mu, trunc)
        g = 2.0 * G
        g[np.diag_indices(p)] *= 0.5
        return g[iu]

    base = sigma[iu]
    H = np.empty((m, m))
    for a in range(m):
        h = step * max(1.0, abs(base[a]))
        e = np.zeros(m)
        e[a] = h
        H[:, a] = (grad(base + e) - grad(base - e)) / (2 * h)
    H = 0.5 * (H + H.T)
    cov = np.linalg.inv(-H)
    se = np.zeros((p, p))
    se[iu] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return se + se.T - np.diag(np.diag(se))


def unwrapped_edge_select(params_hat: WnParams, n: int, alpha: float = 0.05, scale: str = "precision",
                          data=None, trunc: Optional[WindingTruncation] = None, labels=()):
    """Edges of the unwrapped Normal graph with Holm-controlled error rate.

    With ``scale="precision"`` (default) each pair is tested through its
    partial correlation with a Fisher z statistic on ``n - p - 1`` degrees
    of freedom.  ``scale="covariance"`` tests ``Sigma_ij = 0`` with Wald
    statistics from the observed information, which needs ``data``.

    Returns
    -------
    (UndirectedGraph, EdgeReport)
    """
    if not 0 < alpha < 1:
        raise InvalidArgumentError("alpha must lie in (0, 1)")
    p = params_hat.p
    if n <= p + 3:
        raise InvalidArgumentError(f"need n > p + 3, got n={n}, p={p}")
    sigma = params_hat.sigma
    cond = np.linalg.cond(sigma)
    if cond > 1e12:
        raise NumericalError(f"estimated Sigma is near-singular (condition number {cond:.3g})", cond)
    pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]
    if scale == "precision":
        pc = partial_correlations(sigma)
        weights = np.array([pc[i, j] for i, j in pairs])
        stat, pvals = fisher_z_pvalue(weights, n - p - 1)
    elif scale == "covariance":
        if data is None:
            raise InvalidArgumentError("covariance-scale tests need the data")
        se = _observed_information_se(sigma, data, params_hat.mu, _check_trunc(trunc, p))
        weights = np.array([sigma[i, j] for i, j in pairs])
        stat = weights / np.array([se[i, j] for i, j in pairs])
        pvals = 2.0 * stats.norm.sf(np.abs(stat))
    else:
        raise InvalidArgumentError(f"unknown test scale {scale!r}")
    adjusted = holm_adjust(pvals)
    records = [
        EdgeRecord(i, j, float(z), float(pv), float(adj), bool(adj < alpha), weight=float(w))
        for (i, j), z, pv, adj, w in zip(pairs, np.atleast_1d(stat), pvals, adjusted, weights)
    ]
    graph = UndirectedGraph(p, frozenset((r.i, r.j) for r in records if r.selected), tuple(labels))
    return graph, EdgeReport(records)
