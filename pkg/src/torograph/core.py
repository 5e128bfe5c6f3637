"""Circular-statistics primitives shared by the model modules.

Angles live in the half-open interval (-pi, pi] throughout the package.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import InvalidArgumentError, SingularityError, UndefinedDirectionError

TWO_PI = 2.0 * np.pi

__all__ = [
    "AngleMatrix",
    "CircularSummary",
    "ComplexMoments",
    "as_angle_matrix",
    "bessel_i0",
    "bessel_ratio",
    "circular_mean",
    "circular_summary",
    "circular_variance",
    "complex_moments",
    "inverse_stereographic",
    "log_bessel_i0",
    "mean_resultant_length",
    "moment_covariance",
    "stereographic",
    "wrap_angle",
]


def wrap_angle(x):
    """Reduce angles modulo 2*pi into (-pi, pi].

    Parameters
    ----------
    x : float or array_like
        Angles in radians. Must be finite.

    Returns
    -------
    float or np.ndarray
        Wrapped angles, same shape as ``x``.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("wrap_angle requires finite input")
    out = np.pi - np.mod(np.pi - arr, TWO_PI)
    # np.mod can round up to 2*pi for tiny negative remainders
    out = np.where(out <= -np.pi, np.pi, out)
    # values already in range are returned bit for bit
    out = np.where((arr > -np.pi) & (arr <= np.pi), arr, out)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class AngleMatrix:
    """An n x p sample of angles with column labels.

    Values are wrapped into (-pi, pi] on construction, so adding any
    multiple of 2*pi to a raw input gives an identical matrix.
    """

    values: np.ndarray
    columns: tuple = ()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] < 1:
            raise InvalidArgumentError(
                f"angle matrix must be n x p with n, p >= 1, got shape {vals.shape}"
            )
        vals = wrap_angle(vals)
        vals.setflags(write=False)
        cols = tuple(str(c) for c in self.columns) if self.columns else tuple(
            f"theta{j + 1}" for j in range(vals.shape[1])
        )
        if len(cols) != vals.shape[1]:
            raise InvalidArgumentError(
                f"{len(cols)} column names given for {vals.shape[1]} columns"
            )
        if len(set(cols)) != len(cols):
            raise InvalidArgumentError("column names must be distinct")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "columns", cols)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise InvalidArgumentError(f"unknown column {name!r}") from None

    def take_rows(self, idx) -> "AngleMatrix":
        return AngleMatrix(self.values[idx], self.columns)

    def __len__(self):
        return self.n


def as_angle_matrix(data) -> AngleMatrix:
    if isinstance(data, AngleMatrix):
        return data
    return AngleMatrix(np.asarray(data, dtype=float))


def _resultant(angles, axis=0):
    angles = np.asarray(angles, dtype=float)
    return np.mean(np.cos(angles), axis=axis), np.mean(np.sin(angles), axis=axis)


def mean_resultant_length(angles, axis=0):
    c, s = _resultant(angles, axis)
    return np.clip(np.hypot(c, s), 0.0, 1.0)


def circular_mean(angles, axis=0, tol=1e-12):
    """Mean direction ``atan2(mean sin, mean cos)`` as a wrapped angle.

    Raises
    ------
    UndefinedDirectionError
        If the mean resultant length is (numerically) zero.
    """
    angles = np.asarray(angles, dtype=float)
    if angles.size == 0:
        raise InvalidArgumentError("circular_mean needs at least one sample")
    c, s = _resultant(angles, axis)
    if np.any(np.hypot(c, s) <= tol):
        raise UndefinedDirectionError("mean resultant length is zero; direction undefined")
    return wrap_angle(np.arctan2(s, c))


def circular_variance(angles, axis=0):
    """The raw circular variance ``1 - R``."""
    return 1.0 - mean_resultant_length(angles, axis)


@dataclass(frozen=True)
class CircularSummary:
    mean_direction: np.ndarray
    mean_resultant_length: np.ndarray
    mardia_variance: np.ndarray
    circular_variance: np.ndarray
    columns: tuple = ()

    def as_dict(self):
        return {
            "columns": list(self.columns),
            "mean_direction": self.mean_direction.tolist(),
            "mean_resultant_length": self.mean_resultant_length.tolist(),
            "mardia_variance": self.mardia_variance.tolist(),
            "circular_variance": self.circular_variance.tolist(),
        }


def circular_summary(data) -> CircularSummary:
    """Column-wise mean direction, resultant length and variance estimates.

    ``mardia_variance`` is ``-2 log R``, which inverts the wrapped-Normal
    identity ``R = exp(-sigma^2 / 2)``; ``circular_variance`` is ``1 - R``.
    """
    data = as_angle_matrix(data)
    if data.n < 2:
        raise InvalidArgumentError("circular_summary needs n >= 2")
    R = mean_resultant_length(data.values)
    bad = np.flatnonzero(R <= 1e-12)
    if bad.size:
        names = ", ".join(data.columns[j] for j in bad)
        raise UndefinedDirectionError(f"zero resultant length in column(s) {names}")
    mu = circular_mean(data.values)
    with np.errstate(divide="ignore"):
        mardia = np.maximum(-2.0 * np.log(R), 0.0)
    return CircularSummary(
        mean_direction=np.atleast_1d(mu),
        mean_resultant_length=R,
        mardia_variance=mardia,
        circular_variance=1.0 - R,
        columns=data.columns,
    )


def stereographic(theta):
    """``u = tan(theta / 2)``; undefined at theta = pi."""
    theta = np.asarray(wrap_angle(theta))
    if np.any(theta == np.pi):
        raise SingularityError("stereographic projection is singular at theta = pi")
    out = np.tan(theta / 2.0)
    return float(out) if out.ndim == 0 else out


def inverse_stereographic(u):
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise InvalidArgumentError("inverse_stereographic requires finite input")
    out = 2.0 * np.arctan(u)
    return float(out) if out.ndim == 0 else out


def bessel_i0(kappa):
    """Modified Bessel function of the first kind, order 0.

    Overflows to ``inf`` past kappa ~ 713; use :func:`log_bessel_i0`
    for large concentrations.
    """
    k = np.asarray(kappa, dtype=float)
    if np.any(k < 0) or not np.all(np.isfinite(k)):
        raise InvalidArgumentError("bessel_i0 requires finite kappa >= 0")
    out = special.i0(k)
    return float(out) if out.ndim == 0 else out


def log_bessel_i0(kappa):
    """``log I0(kappa)`` computed from the exponentially scaled function."""
    k = np.asarray(kappa, dtype=float)
    if np.any(k < 0) or not np.all(np.isfinite(k)):
        raise InvalidArgumentError("log_bessel_i0 requires finite kappa >= 0")
    out = np.log(special.i0e(k)) + k
    return float(out) if out.ndim == 0 else out


def bessel_ratio(kappa):
    """``A1(kappa) = I1(kappa) / I0(kappa)``, the von Mises mean resultant length."""
    k = np.asarray(kappa, dtype=float)
    out = special.i1e(k) / special.i0e(k)
    return float(out) if out.ndim == 0 else out


class ComplexMoments(NamedTuple):
    """Moduli of empirical trigonometric moments for a pair of columns."""

    first_i: float
    first_j: float
    mixed: float

    @property
    def covariance_probe(self) -> float:
        """``log(|E Zi| |E Zj| / |E Zi Zj|)``, the wrapped-Normal covariance."""
        return float(np.log(self.first_i * self.first_j / self.mixed))


def complex_moments(data, i: int, j: int) -> ComplexMoments:
    data = as_angle_matrix(data)
    if data.n < 2:
        raise InvalidArgumentError("complex_moments needs n >= 2")
    if i == j:
        raise InvalidArgumentError("complex_moments needs two distinct columns")
    for idx in (i, j):
        if not 0 <= idx < data.p:
            raise InvalidArgumentError(f"column index {idx} out of range")
    ti, tj = data.values[:, i], data.values[:, j]
    return ComplexMoments(
        float(np.abs(np.mean(np.exp(1j * ti)))),
        float(np.abs(np.mean(np.exp(1j * tj)))),
        float(np.abs(np.mean(np.exp(1j * (ti + tj))))),
    )


def moment_covariance(data) -> np.ndarray:
    """Wrapped-Normal covariance probe for every column pair.

    Diagonal entries are ``-2 log R_j``; off-diagonal entries come from
    the mixed moment identity. Columns with zero resultant give ``nan``.
    """
    data = as_angle_matrix(data)
    z = np.exp(1j * data.values)
    first = np.abs(z.mean(axis=0))
    mixed = np.abs((z[:, :, None] * z[:, None, :]).mean(axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(np.outer(first, first) / mixed)
        np.fill_diagonal(out, -2.0 * np.log(first))
    return out
