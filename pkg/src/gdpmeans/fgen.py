"""Monotone functions ``f`` defining f-separable distortion measures.

Three families are provided: :class:`Linear` (plain DP-means),
:class:`PowerMean` ``f(z) = ((z + a)**beta - 1) / beta`` and
:class:`LogSumExp` ``f(z) = (exp((beta - 1) z) - 1) / (beta - 1)``.  The
parameter ``beta`` moves each family from robust (``beta < 1``, concave) over
average distortion (``beta = 1``) to maximum distortion (``beta -> inf``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import exprel, logsumexp

from .errors import DomainError, InfiniteWeight, RangeError

__all__ = [
    "FSpec",
    "Linear",
    "LogSumExp",
    "PowerMean",
    "effective_beta",
    "f_eval",
    "f_inverse",
    "f_mean",
    "f_prime",
]


class FSpec:
    """Common interface; all methods are elementwise over numpy arrays."""

    def value(self, z):
        raise NotImplementedError

    def prime(self, z):
        raise NotImplementedError

    def second(self, z):
        raise NotImplementedError

    def inverse(self, y):
        raise NotImplementedError

    @property
    def shape(self) -> str:
        """One of ``"linear"``, ``"concave"``, ``"convex"``."""
        raise NotImplementedError

    @property
    def infinite_slope_at_zero(self) -> bool:
        """True when ``f'(z) -> inf`` as ``z -> 0``."""
        return False

    @property
    def slope_vanishes_at_infinity(self) -> bool:
        """True when ``f'(z) -> 0`` as ``z -> inf``."""
        return False

    def scaled_terms(self, z, ref=None):
        """Return ``(g, g', g'')`` for a positive affine rescaling ``g`` of ``f``.

        The rescaling is chosen from ``ref`` (default ``z``) so that values
        stay finite; minimizers of ``sum g(z_i)`` and ``sum f(z_i)`` coincide.
        Pass the same ``ref`` to compare sums at different arguments.
        Families that cannot overflow return ``f`` itself.
        """
        z = np.asarray(z, dtype=float)
        return self.value(z), self.prime(z), self.second(z)

    def mean(self, values, weights=None):
        """``f^{-1}(weighted mean of f(values))``."""
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            raise DomainError("f-mean of an empty list")
        w = _normalized_weights(values, weights)
        return float(self.inverse(np.dot(w, self.value(values))))


def _normalized_weights(values, weights):
    if weights is None:
        return np.full(values.shape, 1.0 / values.size)
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape != values.shape or np.any(w < 0) or w.sum() <= 0:
        raise DomainError("weights must be nonnegative, nonzero and match the values")
    return w / w.sum()


def _check_nonneg(z):
    z = np.asarray(z, dtype=float)
    if np.any(~(z >= 0)):
        raise DomainError("f is defined on nonnegative arguments only")
    return z


@dataclass(frozen=True)
class Linear(FSpec):
    """``f(z) = z``."""

    def value(self, z):
        return _check_nonneg(z) * 1.0

    def prime(self, z):
        return np.ones_like(_check_nonneg(z))

    def second(self, z):
        return np.zeros_like(_check_nonneg(z))

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(~(y >= 0)):
            raise RangeError("linear f has range [0, inf)")
        return y * 1.0

    @property
    def shape(self):
        return "linear"

    def describe(self):
        return "linear"


@dataclass(frozen=True)
class PowerMean(FSpec):
    beta: float = 1.0
    a: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.beta):
            raise DomainError("beta must be finite")
        if not (np.isfinite(self.a) and self.a >= 0):
            raise DomainError(f"a must be a nonnegative real, got {self.a}")

    def _shifted(self, z):
        return _check_nonneg(z) + self.a

    def value(self, z):
        u = self._shifted(z)
        b = self.beta
        if b <= 0 and np.any(u == 0):
            raise DomainError("f(0) is -inf for a power mean with a = 0 and beta <= 0")
        if b == 0:
            return np.log(u)
        if np.all(u > 0):
            # ln(u) * (e^x - 1) / x with x = b ln(u) stays exact as b -> 0
            lu = np.log(u)
            return lu * exprel(b * lu)
        return (np.power(u, b) - 1.0) / b

    def prime(self, z):
        u = self._shifted(z)
        if self.beta < 1 and np.any(u == 0):
            raise InfiniteWeight("f'(0) is infinite for a power mean with a = 0 and beta < 1")
        return np.power(u, self.beta - 1.0)

    def second(self, z):
        u = self._shifted(z)
        if self.beta < 2 and self.beta != 1 and np.any(u == 0):
            raise InfiniteWeight("f''(0) is infinite for this power mean")
        return (self.beta - 1.0) * np.power(u, self.beta - 2.0)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        b = self.beta
        if b == 0:
            u = np.exp(y)
        else:
            x = b * y
            if np.any(x < -1) or (b < 0 and np.any(x <= -1)):
                raise RangeError("argument outside the range of the power mean f")
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(x == 0, 1.0, np.log1p(x) / np.where(x == 0, 1.0, x))
            u = np.exp(y * ratio)
        z = u - self.a
        tol = 1e-12 * np.maximum(1.0, np.abs(u))
        if np.any(z < -tol):
            raise RangeError("argument below f(0)")
        return np.maximum(z, 0.0)

    def mean(self, values, weights=None):
        # power-mean form with a max shift keeps large beta finite
        values = _check_nonneg(np.asarray(values, dtype=float).ravel())
        if values.size == 0:
            raise DomainError("f-mean of an empty list")
        w = _normalized_weights(values, weights)
        u = values + self.a
        b = self.beta
        pos = w > 0
        if np.any(u[pos] == 0) and b <= 0:
            return 0.0
        with np.errstate(divide="ignore"):
            logs = np.log(u[pos])
        if abs(b) * np.max(np.abs(logs)) < 1e-12:
            return float(max(np.exp(np.dot(w[pos], logs)) - self.a, 0.0))
        s = u[pos].max() if b > 0 else u[pos].min()
        if s == 0:
            return 0.0
        m = s * np.power(np.dot(w[pos], np.power(u[pos] / s, b)), 1.0 / b) - self.a
        return float(max(m, 0.0))

    def scaled_terms(self, z, ref=None):
        b = self.beta
        if b <= 1:
            return super().scaled_terms(z)
        u = self._shifted(z)
        u_ref = u if ref is None else self._shifted(ref)
        s = float(u_ref.max()) if u_ref.size and u_ref.max() > 0 else 1.0
        r = u / s
        with np.errstate(divide="ignore"):
            return np.power(r, b) / b, np.power(r, b - 1) / s, (b - 1) * np.power(r, b - 2) / s**2

    @property
    def shape(self):
        if self.beta == 1:
            return "linear"
        return "concave" if self.beta < 1 else "convex"

    @property
    def infinite_slope_at_zero(self):
        return self.a == 0 and self.beta < 1

    @property
    def slope_vanishes_at_infinity(self):
        return self.beta < 1

    def describe(self):
        return f"pow(beta={self.beta:g},a={self.a:g})"


@dataclass(frozen=True)
class LogSumExp(FSpec):
    beta: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.beta):
            raise DomainError("beta must be finite")

    @property
    def _k(self):
        return self.beta - 1.0

    def value(self, z):
        z = _check_nonneg(z)
        k = self._k
        if k == 0:
            return z * 1.0
        return np.expm1(k * z) / k

    def prime(self, z):
        return np.exp(self._k * _check_nonneg(z))

    def second(self, z):
        return self._k * np.exp(self._k * _check_nonneg(z))

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        k = self._k
        if k == 0:
            z = y * 1.0
        else:
            arg = k * y
            if np.any(arg <= -1):
                raise RangeError("argument outside the range of the log-sum-exp f")
            z = np.log1p(arg) / k
        if np.any(z < -1e-12 * np.maximum(1.0, np.abs(y))):
            raise RangeError("argument below f(0)")
        return np.maximum(z, 0.0)

    def mean(self, values, weights=None):
        values = _check_nonneg(np.asarray(values, dtype=float).ravel())
        if values.size == 0:
            raise DomainError("f-mean of an empty list")
        w = _normalized_weights(values, weights)
        k = self._k
        if k == 0:
            return float(np.dot(w, values))
        pos = w > 0
        m = logsumexp(k * values[pos], b=w[pos]) / k
        lo, hi = values[pos].min(), values[pos].max()
        return float(min(max(m, lo), hi))

    def scaled_terms(self, z, ref=None):
        k = self._k
        if k <= 0:
            return super().scaled_terms(z)
        z = _check_nonneg(z)
        z_ref = z if ref is None else _check_nonneg(ref)
        m = float(z_ref.max()) if z_ref.size else 0.0
        e = np.exp(k * (z - m))
        return e / k, e, k * e

    @property
    def shape(self):
        if self.beta == 1:
            return "linear"
        return "concave" if self.beta < 1 else "convex"

    @property
    def slope_vanishes_at_infinity(self):
        return self.beta < 1

    def describe(self):
        return f"lse(beta={self.beta:g})"


def f_eval(spec: FSpec, z):
    return spec.value(z)


def f_prime(spec: FSpec, z):
    return spec.prime(z)


def f_inverse(spec: FSpec, y):
    return spec.inverse(y)


def f_mean(spec: FSpec, values) -> float:
    return spec.mean(values)


def effective_beta(beta_star: float, L: int) -> float:
    """Map a requested log-sum-exp ``beta`` onto dimension-averaged divergences."""
    if L < 1:
        raise DomainError("L must be a positive integer")
    return (beta_star - 1.0) / L + 1.0
