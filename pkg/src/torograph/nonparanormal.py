"""Inverse stereographic nonparanormal (ISNPN) model.

Coordinatewise monotone maps ``h_j`` send the stereographic coordinates
``U_j = tan(Theta_j / 2)`` to a joint Gaussian.  The maps are estimated
with a Winsorized empirical CDF followed by the Normal quantile, then
rescaled so that each ``h_j(U_j)`` keeps the sample mean and variance of
``U_j``.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import as_angle_matrix
from .errors import InvalidArgumentError, NumericalError
from .stereographic import DEFAULT_EPSILON, IsnParams, gaussian_logpdf, log_jacobian, project

logger = logging.getLogger(__name__)


def winsorization_level(n: int) -> float:
    """Truncation level ``1 / (4 n^(1/4) sqrt(pi log n))`` of the empirical CDF."""
    return 1.0 / (4.0 * n ** 0.25 * np.sqrt(np.pi * np.log(n)))


class IdentityTransform:
    """``h(u) = u`` in every coordinate."""

    def __call__(self, u):
        return np.asarray(u, dtype=float)

    def derivative(self, u):
        return np.ones_like(np.asarray(u, dtype=float))


@dataclass(frozen=True)
class NpnTransform:
    """Piecewise-linear monotone maps, one per coordinate.

    ``knots[j]`` are the sorted distinct training values of ``U_j`` and
    ``values[j]`` the transformed values there.  Outside the knots the map
    is flat.
    """

    knots: tuple
    values: tuple
    delta: float
    mean: np.ndarray
    std: np.ndarray

    @property
    def p(self):
        return len(self.knots)

    def __call__(self, u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return np.column_stack([np.interp(u[:, j], self.knots[j], self.values[j]) for j in range(self.p)])

    def derivative(self, u):
        """Right derivative of each piecewise-linear map; zero where flat."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        out = np.zeros_like(u)
        for j in range(self.p):
            x, y = self.knots[j], self.values[j]
            if x.size < 2:
                continue
            slopes = np.diff(y) / np.diff(x)
            seg = np.searchsorted(x, u[:, j], side="right") - 1
            inside = (seg >= 0) & (seg < slopes.size)
            out[inside, j] = slopes[seg[inside]]
        return out

    def as_dict(self):
        return {
            "delta": self.delta,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "knots": [k.tolist() for k in self.knots],
            "values": [v.tolist() for v in self.values],
        }


def npn_estimate_transforms(data, epsilon: float = DEFAULT_EPSILON) -> NpnTransform:
    """Estimate the monotone maps ``h_j`` from an angle sample.

    Raises
    ------
    NumericalError
        If a column is constant on the projected scale.
    """
    data = as_angle_matrix(data)
    n = data.n
    if n < 10:
        raise InvalidArgumentError("nonparanormal transforms need n >= 10")
    u = project(data.values, epsilon)
    delta = winsorization_level(n)
    knots, values = [], []
    means, stds = u.mean(axis=0), u.std(axis=0)
    for j in range(data.p):
        col = u[:, j]
        x = np.unique(col)
        if x.size < 2 or stds[j] == 0:
            raise NumericalError(f"column {data.columns[j]} is constant; transform is degenerate")
        cdf = np.searchsorted(np.sort(col), x, side="right") / n
        raw = stats.norm.ppf(np.clip(cdf, delta, 1.0 - delta))
        # standardize on the training sample, not on the distinct knots
        at_sample = np.interp(col, x, raw)
        centre, spread = at_sample.mean(), at_sample.std()
        if spread == 0:
            raise NumericalError(f"column {data.columns[j]} has a degenerate transform")
        knots.append(x)
        values.append(means[j] + stds[j] * (raw - centre) / spread)
    return NpnTransform(tuple(knots), tuple(values), delta, means, stds)


@dataclass(frozen=True)
class IsnpnModel:
    params: IsnParams
    transform: object

    def __post_init__(self):
        p = getattr(self.transform, "p", self.params.p)
        if p != self.params.p:
            raise InvalidArgumentError("transform and parameter dimensions disagree")


def isnpn_log_density(theta, model: IsnpnModel, min_derivative: float = 1e-12):
    """Gaussian log-density at ``h(u)`` plus both log-Jacobians.

    Flat parts of ``h`` have their derivative floored at ``min_derivative``
    so the log stays finite.
    """
    p = model.params.p
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 0 or (theta.ndim == 1 and p > 1)
    rows = theta.reshape(-1, p)
    eps = model.params.epsilon
    u = project(rows, eps)
    hu = np.asarray(model.transform(u)).reshape(-1, p)
    dh = np.maximum(np.abs(np.asarray(model.transform.derivative(u)).reshape(-1, p)), min_derivative)
    out = (
        gaussian_logpdf(hu, model.params.mu, model.params.sigma)
        + np.sum(np.log(dh), axis=1)
        + np.sum(log_jacobian(rows, eps), axis=1)
    )
    return float(out[0]) if single else out


def transformed_scores(data, transform, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """``h(tan(theta / 2))`` row by row."""
    data = as_angle_matrix(data)
    return np.asarray(transform(project(data.values, epsilon))).reshape(data.n, data.p)


def npn_correlation(data, transform, epsilon: float = DEFAULT_EPSILON, floor: float = 1e-8) -> np.ndarray:
    """Covariance (divisor n) of the transformed sample, eigenvalues floored."""
    data = as_angle_matrix(data)
    if data.n < data.p:
        logger.warning("n = %d < p = %d: transformed covariance is rank deficient", data.n, data.p)
    z = transformed_scores(data, transform, epsilon)
    centred = z - z.mean(axis=0)
    cov = centred.T @ centred / data.n
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    out = (vecs * np.maximum(vals, floor)) @ vecs.T
    return 0.5 * (out + out.T)


def isnpn_fit(data, epsilon: float = DEFAULT_EPSILON) -> IsnpnModel:
    data = as_angle_matrix(data)
    transform = npn_estimate_transforms(data, epsilon)
    z = transformed_scores(data, transform, epsilon)
    return IsnpnModel(IsnParams(z.mean(axis=0), npn_correlation(data, transform, epsilon), epsilon), transform)
