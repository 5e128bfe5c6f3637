"""Inverse stereographic Normal (ISN) distribution on the torus.

``U = tan(Theta / 2)`` is Gaussian, so marginals, conditionals and
conditional independence all follow from the Gaussian on the projected
scale.  The projection is singular at ``theta = pi``; such points are
moved to ``-pi + epsilon`` before projecting.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .core import as_angle_matrix, wrap_angle
from .errors import InvalidArgumentError, NumericalError

LOG_2PI = np.log(2.0 * np.pi)
DEFAULT_EPSILON = 1e-9


def project(theta, epsilon: float = DEFAULT_EPSILON):
    """Stereographic coordinates ``tan(theta / 2)`` with the cut-point convention."""
    theta = np.asarray(wrap_angle(theta), dtype=float)
    theta = np.where(theta == np.pi, -np.pi + epsilon, theta)
    return np.tan(theta / 2.0)


def log_jacobian(theta, epsilon: float = DEFAULT_EPSILON):
    """``-log(1 + cos theta)``, the log of ``du / dtheta``, per coordinate."""
    theta = np.asarray(wrap_angle(theta), dtype=float)
    theta = np.where(theta == np.pi, -np.pi + epsilon, theta)
    # 1 + cos(theta) = 2 cos^2(theta / 2), accurate near the cut point
    return -np.log(2.0 * np.cos(theta / 2.0) ** 2)


@dataclass(frozen=True)
class IsnParams:
    mu: np.ndarray
    sigma: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (mu.size, mu.size):
            raise InvalidArgumentError("mu and sigma dimensions disagree")
        if not np.allclose(sigma, sigma.T, atol=1e-12):
            raise InvalidArgumentError("sigma must be symmetric")
        if not 0 < self.epsilon <= 1e-3:
            raise InvalidArgumentError("epsilon must lie in (0, 1e-3]")
        try:
            linalg.cholesky(sigma, lower=True)
        except linalg.LinAlgError:
            raise InvalidArgumentError("sigma is not positive definite") from None
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", 0.5 * (sigma + sigma.T))

    @property
    def p(self):
        return self.mu.size

    def as_dict(self):
        return {"mu": self.mu.tolist(), "sigma": self.sigma.tolist(), "epsilon": self.epsilon}


def gaussian_logpdf(x, mu, sigma):
    """Row-wise multivariate Normal log-density."""
    x = np.atleast_2d(x)
    L = linalg.cholesky(sigma, lower=True)
    z = linalg.solve_triangular(L, (x - mu).T, lower=True)
    p = sigma.shape[0]
    return -0.5 * np.sum(z * z, axis=0) - 0.5 * p * LOG_2PI - np.sum(np.log(np.diag(L)))


def _rows(theta, p):
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 0 or (theta.ndim == 1 and p > 1)
    return theta.reshape(-1, p), single


def isn_log_density(theta, params: IsnParams):
    """Log-density: Gaussian at ``u = tan(theta/2)`` plus ``-sum log(1 + cos theta)``."""
    rows, single = _rows(theta, params.p)
    u = project(rows, params.epsilon)
    out = gaussian_logpdf(u, params.mu, params.sigma) + np.sum(log_jacobian(rows, params.epsilon), axis=1)
    return float(out[0]) if single else out


def _gaussian_mle(u):
    n, p = u.shape
    mu = u.mean(axis=0)
    centred = u - mu
    sigma = centred.T @ centred / n
    if np.linalg.matrix_rank(sigma) < p:
        raise NumericalError("sample covariance on the projected scale is rank deficient")
    return mu, sigma


def isn_fit(data, epsilon: float = DEFAULT_EPSILON) -> IsnParams:
    """Maximum likelihood: sample mean and covariance (divisor n) of ``tan(theta/2)``."""
    data = as_angle_matrix(data)
    if data.n <= data.p:
        raise InvalidArgumentError(f"need n > p, got n={data.n}, p={data.p}")
    u = project(data.values, epsilon)
    mu, sigma = _gaussian_mle(u)
    try:
        return IsnParams(mu, sigma, epsilon)
    except InvalidArgumentError as exc:
        raise NumericalError(f"degenerate covariance: {exc}") from None


def _index_list(idx, p, name):
    idx = [int(i) for i in idx]
    if len(set(idx)) != len(idx) or any(not 0 <= i < p for i in idx):
        raise InvalidArgumentError(f"invalid index set {name}={idx}")
    return idx


def isn_marginal(params: IsnParams, A) -> IsnParams:
    A = _index_list(A, params.p, "A")
    if not A:
        raise InvalidArgumentError("A must be non-empty")
    return IsnParams(params.mu[A], params.sigma[np.ix_(A, A)], params.epsilon)


def isn_conditional(params: IsnParams, A, B, theta_B) -> IsnParams:
    """ISN law of ``Theta_A`` given ``Theta_B = theta_B``.

    Mean ``mu_A + Sigma_AB Sigma_BB^-1 (u_B - mu_B)`` and Schur-complement
    covariance, with ``u_B = tan(theta_B / 2)``.
    """
    A = _index_list(A, params.p, "A")
    B = _index_list(B, params.p, "B")
    if not A or not B or set(A) & set(B):
        raise InvalidArgumentError("A and B must be disjoint and non-empty")
    S_BB = params.sigma[np.ix_(B, B)]
    cond = np.linalg.cond(S_BB)
    if cond > 1e12:
        raise NumericalError(f"Sigma_BB is singular (condition number {cond:.3g})", cond)
    S_AB = params.sigma[np.ix_(A, B)]
    reg = linalg.solve(S_BB, S_AB.T, assume_a="pos").T
    u_B = project(np.asarray(theta_B, dtype=float).reshape(len(B)), params.epsilon)
    mean = params.mu[A] + reg @ (u_B - params.mu[B])
    cov = params.sigma[np.ix_(A, A)] - reg @ S_AB.T
    return IsnParams(mean, 0.5 * (cov + cov.T), params.epsilon)


def isn_ci_query(sigma, A, C, S=(), tol: float = 1e-10) -> bool:
    """Whether ``Theta_A`` and ``Theta_C`` are independent given ``Theta_S``.

    Inverts the principal submatrix on ``A + C + S`` and checks that the
    ``(A, C)`` block vanishes, relative to the diagonal scale of the inverse.
    """
    sigma = np.asarray(sigma, dtype=float)
    p = sigma.shape[0]
    A, C, S = (_index_list(x, p, name) for x, name in ((A, "A"), (C, "C"), (S, "S")))
    if not A or not C:
        raise InvalidArgumentError("A and C must be non-empty")
    if set(A) & set(C) or set(A) & set(S) or set(C) & set(S):
        raise InvalidArgumentError("A, C and S must be pairwise disjoint")
    idx = A + C + S
    sub = sigma[np.ix_(idx, idx)]
    cond = np.linalg.cond(sub)
    if cond > 1e12:
        raise NumericalError(f"principal submatrix is singular (condition number {cond:.3g})", cond)
    K = np.linalg.inv(sub)
    d = np.sqrt(np.diag(K))
    block = K[: len(A), len(A): len(A) + len(C)]
    scale = np.outer(d[: len(A)], d[len(A): len(A) + len(C)])
    return bool(np.all(np.abs(block) <= tol * scale))
