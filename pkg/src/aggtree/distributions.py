"""Marginal distributions and copulas used by aggregation tree models.

Two marginal families (normal, finite discrete) and two copula families
(Gaussian, independence) cover everything the sampling algorithms and the
exact discrete machinery need. All sampling goes through explicit
generator objects, see :mod:`aggtree._rng`.
"""
import math

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr, ndtri

from ._rng import standard_normals
from .errors import UnsupportedModelError

_SQRT2PI = math.sqrt(2.0 * math.pi)


class Normal:
    """Normal marginal with the given mean and variance (not sd)."""

    __slots__ = ("mean", "variance")

    def __init__(self, mean, variance):
        variance = float(variance)
        if not variance > 0.0:
            raise ValueError("variance must be positive")
        self.mean = float(mean)
        self.variance = variance

    @property
    def sd(self):
        return math.sqrt(self.variance)

    def sample(self, n, rng):
        if n < 1:
            raise ValueError("n must be >= 1")
        return self.mean + self.sd * standard_normals(rng, n)

    def quantile(self, u):
        """Generalized inverse CDF; maps 0 to -inf and 1 to +inf."""
        u = float(u)
        if not 0.0 <= u <= 1.0:
            raise ValueError("u must lie in [0, 1]")
        return self.mean + self.sd * float(ndtri(u))

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mean) / self.sd)

    def __repr__(self):
        return f"Normal(mean={self.mean}, variance={self.variance})"


class Discrete:
    """Finite discrete marginal on a strictly increasing support."""

    __slots__ = ("support", "probs", "_cum")

    def __init__(self, support, probs):
        support = np.asarray(support, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if support.ndim != 1 or support.shape != probs.shape or support.size == 0:
            raise ValueError("support and probs must be matching 1-d sequences")
        if np.any(np.diff(support) <= 0.0):
            raise ValueError("support must be strictly increasing")
        if np.any(probs <= 0.0):
            raise ValueError("probabilities must be positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")
        self.support = support
        self.probs = probs
        self._cum = np.cumsum(probs)
        self._cum[-1] = 1.0

    @property
    def mean(self):
        return float(self.support @ self.probs)

    @property
    def variance(self):
        return float(((self.support - self.mean) ** 2) @ self.probs)

    def sample(self, n, rng):
        if n < 1:
            raise ValueError("n must be >= 1")
        u = rng.random(n)
        return self.support[np.searchsorted(self._cum, u, side="right")]

    def quantile(self, u):
        """Generalized inverse CDF, a right-continuous step inverse."""
        u = float(u)
        if not 0.0 <= u <= 1.0:
            raise ValueError("u must lie in [0, 1]")
        if u == 0.0:
            return -math.inf
        return float(self.support[np.searchsorted(self._cum, u, side="left")])

    def cdf(self, x):
        idx = np.searchsorted(self.support, np.asarray(x, dtype=float), side="right")
        full = np.concatenate(([0.0], self._cum))
        return full[idx]

    def __repr__(self):
        return f"Discrete(support={self.support.tolist()}, probs={self.probs.tolist()})"


def _psd_factor(matrix):
    """Lower-triangular factor when possible, eigenvalue factor otherwise."""
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(matrix)
        w = np.clip(w, 0.0, None)
        return v * np.sqrt(w)


class GaussianCopula:
    """Gaussian copula given by a correlation matrix."""

    __slots__ = ("correlation", "_factor")

    def __init__(self, correlation):
        r = np.asarray(correlation, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError("correlation must be square")
        if not np.allclose(r, r.T, atol=1e-12):
            raise ValueError("correlation must be symmetric")
        if not np.allclose(np.diag(r), 1.0, atol=1e-12):
            raise ValueError("correlation must have unit diagonal")
        if np.any(np.abs(r) > 1.0 + 1e-12):
            raise ValueError("correlation entries must lie in [-1, 1]")
        if np.linalg.eigvalsh(r).min() < -1e-9:
            raise ValueError("correlation matrix is not positive semidefinite")
        self.correlation = r
        self._factor = _psd_factor(r)

    @classmethod
    def bivariate(cls, rho):
        rho = float(rho)
        return cls([[1.0, rho], [rho, 1.0]])

    @property
    def dim(self):
        return self.correlation.shape[0]

    def sample(self, n, rng):
        """n rows from the copula; columns are marginally uniform."""
        if n < 1:
            raise ValueError("n must be >= 1")
        z = standard_normals(rng, (n, self.dim))
        return ndtr(z @ self._factor.T)

    def __repr__(self):
        if self.dim == 2:
            return f"GaussianCopula.bivariate({self.correlation[0, 1]})"
        return f"GaussianCopula({self.correlation.tolist()})"


class Independence:
    """Product copula in the given dimension."""

    __slots__ = ("dim",)

    def __init__(self, dim):
        dim = int(dim)
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim

    @property
    def correlation(self):
        return np.eye(self.dim)

    def sample(self, n, rng):
        if n < 1:
            raise ValueError("n must be >= 1")
        return rng.random((n, self.dim))

    def __repr__(self):
        return f"Independence({self.dim})"


def copula_correlation(copula):
    """Correlation matrix of a copula object, identity for independence."""
    corr = getattr(copula, "correlation", None)
    if corr is None:
        raise UnsupportedModelError(f"copula {copula!r} has no correlation matrix")
    return np.asarray(corr, dtype=float)


def bivariate_gaussian_copula_cdf(rho, u1, u2):
    """C(u1, u2) for the bivariate Gaussian copula with correlation rho.

    Computed as the conditional one-dimensional integral
    int Phi((b - rho z)/sqrt(1-rho^2)) phi(z) dz over z <= a with
    a = ndtri(u1), b = ndtri(u2), truncated at |z| = 8.5, to absolute
    error below 1e-10. The degenerate cases |rho| = 1 use the
    comonotone / countermonotone bounds directly.
    """
    rho = float(rho)
    if not -1.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [-1, 1]")
    u1 = min(max(float(u1), 0.0), 1.0)
    u2 = min(max(float(u2), 0.0), 1.0)
    if u1 == 0.0 or u2 == 0.0:
        return 0.0
    if u1 == 1.0:
        return u2
    if u2 == 1.0:
        return u1
    if rho == 0.0:
        return u1 * u2
    if rho >= 1.0 - 1e-12:
        return min(u1, u2)
    if rho <= -1.0 + 1e-12:
        return max(u1 + u2 - 1.0, 0.0)

    a = float(ndtri(u1))
    b = float(ndtri(u2))
    if a <= -8.5:
        return 0.0
    s = math.sqrt(1.0 - rho * rho)

    def integrand(z):
        return ndtr((b - rho * z) / s) * math.exp(-0.5 * z * z) / _SQRT2PI

    value, _ = quad(integrand, -8.5, min(a, 8.5), epsabs=1e-12, limit=200)
    return min(max(value, 0.0), min(u1, u2))
