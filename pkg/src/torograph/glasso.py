"""Adaptive graphical lasso and repeated-CV stability selection."""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import as_angle_matrix
from .errors import ConvergenceError, InvalidArgumentError, TorographError
from .graphs import EdgeRecord, EdgeReport, UndirectedGraph
from .nonparanormal import npn_estimate_transforms, transformed_scores
from .stereographic import DEFAULT_EPSILON, project

logger = logging.getLogger(__name__)

THREADS_ENV = "TOROGRAPH_THREADS"


def _soft(x, t):
    return np.sign(x) * max(abs(x) - t, 0.0)


def _lasso_cd(V, s, pen, beta, tol, max_iter):
    """Minimize ``beta'V beta / 2 - s'beta + sum pen_k |beta_k|`` by coordinate descent."""
    m = s.size
    for _ in range(max_iter):
        delta = 0.0
        for k in range(m):
            old = beta[k]
            r = s[k] - V[k] @ beta + V[k, k] * old
            new = _soft(r, pen[k]) / V[k, k] if np.isfinite(pen[k]) else 0.0
            if new != old:
                beta[k] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            break
    return beta


def duality_gap(S, theta, penalty):
    off = ~np.eye(S.shape[0], dtype=bool) & (theta != 0)
    return float(np.trace(S @ theta) - S.shape[0] + np.sum(penalty[off] * np.abs(theta[off])))


def graphical_lasso(S, penalty, tol=1e-8, max_iter=1000):
    """Block coordinate descent for ``max log det T - tr(S T) - sum_{i!=j} P_ij |T_ij|``.

    ``penalty`` is a full p x p matrix; its diagonal is ignored and
    infinite entries force a zero.  Returns ``(precision, covariance, n_iter)``.
    """
    S = np.asarray(S, dtype=float)
    P = np.asarray(penalty, dtype=float)
    p = S.shape[0]
    W = S.copy()
    betas = np.zeros((p, p - 1))
    others = [np.r_[0:j, j + 1:p] for j in range(p)]
    scale = max(np.mean(np.abs(S[~np.eye(p, dtype=bool)])) if p > 1 else 1.0, 1e-12)
    n_iter = 0
    converged = p == 1
    while not converged and n_iter < max_iter:
        n_iter += 1
        W_old = W.copy()
        for j in range(p):
            idx = others[j]
            V = W[np.ix_(idx, idx)]
            betas[j] = _lasso_cd(V, S[idx, j], P[idx, j], betas[j], tol * 0.1, 1000)
            w12 = V @ betas[j]
            W[idx, j] = w12
            W[j, idx] = w12
        converged = np.mean(np.abs(W - W_old)) < tol * scale
    theta = np.zeros((p, p))
    for j in range(p):
        idx = others[j]
        w12 = W[idx, j]
        theta[j, j] = 1.0 / (W[j, j] - w12 @ betas[j])
        theta[idx, j] = -betas[j] * theta[j, j]
    support = (theta != 0) & (theta.T != 0)
    theta = np.where(support, 0.5 * (theta + theta.T), 0.0)
    if not converged:
        gap = duality_gap(S, theta, P)
        raise ConvergenceError(f"graphical lasso did not converge in {max_iter} sweeps (duality gap {gap:.3g})",
                               best=theta, diagnostic={"duality_gap": gap})
    return theta, W, n_iter


def adaptive_weights(pilot, gamma=1.0):
    """``1 / |pilot_ij|^gamma``; infinite where the pilot is zero."""
    with np.errstate(divide="ignore"):
        w = 1.0 / np.abs(pilot) ** gamma
    np.fill_diagonal(w, 0.0)
    return w


def adaptive_glasso(S, rho: float, weights=None, gamma: float = 1.0, tol: float = 1e-8,
                    max_iter: int = 1000) -> np.ndarray:
    """Weighted graphical lasso precision estimate with exact zeros.

    Maximizes ``log det O - tr(S O) - rho sum_{i!=j} w_ij |O_ij|``.  When
    ``weights`` is omitted, a plain graphical lasso at the same ``rho``
    is run first and ``w_ij = 1 / |O~_ij|^gamma``.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or not np.allclose(S, S.T, atol=1e-10):
        raise InvalidArgumentError("S must be a symmetric square matrix")
    if rho < 0:
        raise InvalidArgumentError("rho must be >= 0")
    p = S.shape[0]
    if weights is None:
        unit = np.ones((p, p))
        np.fill_diagonal(unit, 0.0)
        if rho == 0:
            weights = unit
        else:
            pilot, _, _ = graphical_lasso(S, rho * unit, tol, max_iter)
            weights = adaptive_weights(pilot, gamma)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (p, p) or np.any(weights < 0) or not np.array_equal(weights, weights.T):
        raise InvalidArgumentError("weights must be a symmetric non-negative p x p matrix")
    with np.errstate(invalid="ignore"):
        penalty = np.where(np.isinf(weights), np.inf, rho * weights)
    theta, _, _ = graphical_lasso(S, penalty, tol, max_iter)
    return theta


def kkt_violation(S, theta, penalty):
    """Largest violation of the graphical lasso stationarity conditions."""
    G = np.linalg.inv(theta) - np.asarray(S, dtype=float)
    p = S.shape[0]
    worst = float(np.max(np.abs(np.diag(G))))
    for i in range(p):
        for j in range(p):
            if i == j:
                continue
            if theta[i, j] != 0:
                worst = max(worst, abs(G[i, j] - penalty[i, j] * np.sign(theta[i, j])))
            elif np.isfinite(penalty[i, j]):
                worst = max(worst, abs(G[i, j]) - penalty[i, j])
    return worst


@dataclass
class StabilityReport:
    frequencies: np.ndarray
    chosen_rho: list
    threshold: float
    rho_grid: np.ndarray
    failed: int = 0
    repeats: int = 0
    folds: int = 5
    failures: list = field(default_factory=list)

    @property
    def successes(self):
        return len(self.chosen_rho)

    def edge_report(self) -> EdgeReport:
        p = self.frequencies.shape[0]
        records = []
        for i in range(p):
            for j in range(i + 1, p):
                f = float(self.frequencies[i, j])
                records.append(EdgeRecord(i, j, f, selected=self.successes > 0 and f >= self.threshold,
                                          stability=f))
        return EdgeReport(records)

    def as_dict(self):
        p = self.frequencies.shape[0]
        return {
            "threshold": self.threshold,
            "folds": self.folds,
            "repeats": self.repeats,
            "successful_repeats": self.successes,
            "failed_repeats": self.failed,
            "rho_grid": self.rho_grid.tolist(),
            "chosen_rho": list(self.chosen_rho),
            "frequencies": [
                {"i": i + 1, "j": j + 1, "frequency": float(self.frequencies[i, j])}
                for i in range(p) for j in range(i + 1, p)
            ],
        }


def _cov(z, centre):
    c = z - centre
    return c.T @ c / z.shape[0]


def _heldout_loglik(theta, S_test):
    sign, logdet = np.linalg.slogdet(theta)
    if sign <= 0:
        return -np.inf
    return 0.5 * (logdet - np.sum(S_test * theta))


def default_rho_grid(R, size=12, ratio=0.02):
    """Geometric grid from the smallest full-shrinkage penalty downwards."""
    off = np.abs(R[~np.eye(R.shape[0], dtype=bool)])
    top = float(off.max()) if off.size and off.max() > 0 else 1.0
    return top * np.geomspace(1.0, ratio, size)


def _one_repeat(z, rho_grid, folds, seed_seq, gamma):
    rng = np.random.default_rng(seed_seq)
    n = z.shape[0]
    parts = np.array_split(rng.permutation(n), folds)
    scores = np.zeros(len(rho_grid))
    for test in parts:
        train = np.setdiff1d(np.arange(n), test)
        centre = z[train].mean(axis=0)
        S_train = _cov(z[train], centre)
        S_test = _cov(z[test], centre)
        for g, rho in enumerate(rho_grid):
            theta = adaptive_glasso(S_train, rho, gamma=gamma)
            scores[g] += _heldout_loglik(theta, S_test) * test.size
    # grid runs from large to small rho; only strict improvements move the choice
    best = 0
    for g in range(1, len(rho_grid)):
        if scores[g] > scores[best] + 1e-12 * abs(scores[best]):
            best = g
    rho = float(rho_grid[best])
    theta = adaptive_glasso(_cov(z, z.mean(axis=0)), rho, gamma=gamma)
    return rho, (theta != 0) & ~np.eye(z.shape[1], dtype=bool)


def _thread_count(n_jobs):
    if n_jobs is not None:
        return max(1, int(n_jobs))
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


def standardized_scores(data, model_kind: str = "isnpn", epsilon: float = DEFAULT_EPSILON):
    """Gaussian-scale data used for graph estimation, columns scaled to unit variance."""
    data = as_angle_matrix(data)
    if model_kind == "isn":
        z = project(data.values, epsilon)
    elif model_kind == "isnpn":
        z = transformed_scores(data, npn_estimate_transforms(data, epsilon), epsilon)
    else:
        raise InvalidArgumentError(f"unknown model kind {model_kind!r}")
    sd = z.std(axis=0)
    if np.any(sd == 0):
        raise InvalidArgumentError("constant column on the Gaussian scale")
    return (z - z.mean(axis=0)) / sd


def stability_select(data, model_kind: str = "isnpn", folds: int = 5, repeats: int = 50,
                     threshold: float = 0.5, rho_grid=None, seed=None, gamma: float = 1.0,
                     epsilon: float = DEFAULT_EPSILON, n_jobs: Optional[int] = None):
    """Stable edge set from repeated k-fold cross-validated adaptive graphical lasso.

    Each repeat reshuffles the rows, picks the penalty maximizing the
    held-out Gaussian log-likelihood (ties go to the larger penalty), refits
    on all rows and records the edges.  Edges selected in at least
    ``threshold`` of the successful repeats form the graph.

    Returns
    -------
    (UndirectedGraph, StabilityReport)
    """
    data = as_angle_matrix(data)
    if seed is None:
        raise InvalidArgumentError("stability selection needs an explicit seed")
    if folds < 2 or data.n < 2 * folds:
        raise InvalidArgumentError(f"need folds >= 2 and n >= 2 * folds (n={data.n}, folds={folds})")
    if not 0 <= threshold <= 1:
        raise InvalidArgumentError("threshold must lie in [0, 1]")
    z = standardized_scores(data, model_kind, epsilon)
    R = _cov(z, z.mean(axis=0))
    grid = np.sort(np.asarray(default_rho_grid(R) if rho_grid is None else rho_grid, dtype=float))[::-1]
    seeds = np.random.SeedSequence(seed).spawn(repeats)

    def run(r):
        try:
            return _one_repeat(z, grid, folds, seeds[r], gamma)
        except TorographError as exc:
            return exc

    workers = _thread_count(n_jobs)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, range(repeats)))
    else:
        outcomes = [run(r) for r in range(repeats)]

    p = data.p
    counts = np.zeros((p, p))
    chosen, failures = [], []
    for r, out in enumerate(outcomes):
        if isinstance(out, Exception):
            logger.warning("stability repeat %d failed: %s", r, out)
            failures.append(f"repeat {r}: {out}")
            continue
        rho, edges = out
        chosen.append(rho)
        counts += edges
    freq = counts / len(chosen) if chosen else counts
    report = StabilityReport(freq, chosen, threshold, grid, len(failures), repeats, folds, failures)
    selected = report.edge_report().selected()
    return UndirectedGraph(p, frozenset(selected), data.columns), report
