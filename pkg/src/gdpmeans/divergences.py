"""Bregman and total Bregman divergences built from scalar convex generators.

Every divergence here is additive over coordinates: a generator supplies the
scalar map ``phi`` and its first three derivatives, and the vector divergence
is the sum of the scalar divergences (optionally divided by the dimension).

Arrays follow one convention throughout: data ``x`` has shape ``(..., L)``,
the center ``theta`` has shape ``(L,)``, and per-point results drop the last
axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, xlogy

from .errors import DimensionMismatch, DomainError

__all__ = [
    "Alpha",
    "Binomial",
    "ConvexGenerator",
    "DivergenceSpec",
    "ExpLoss",
    "SquaredDistance",
    "divergence_eval",
    "divergence_grad_theta",
    "divergence_hess_theta",
]

# centers closer than this to a finite domain boundary are rejected
BOUNDARY_GUARD = 1e-12


class ConvexGenerator:
    """Scalar strictly convex function ``phi`` defining a Bregman divergence.

    Subclasses implement ``phi`` and its derivatives elementwise, the inverse
    of ``phi'`` (needed by the total Bregman center update), the closed-form
    scalar divergence, and two domain checks: one for data values and one for
    centers (which must keep ``phi'`` and ``phi''`` finite).
    """

    name = "generator"

    def phi(self, x):
        raise NotImplementedError

    def d1(self, x):
        raise NotImplementedError

    def d2(self, x):
        raise NotImplementedError

    def d3(self, x):
        raise NotImplementedError

    def d1_inv(self, y):
        raise NotImplementedError

    def bregman(self, x, theta):
        """Elementwise ``phi(x) - phi(theta) - (x - theta) phi'(theta)``."""
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        return self.phi(x) - self.phi(theta) - (x - theta) * self.d1(theta)

    def data_ok(self, x) -> np.ndarray:
        return np.isfinite(x)

    def center_ok(self, theta) -> np.ndarray:
        return np.isfinite(theta)

    def check_data(self, x, what="data"):
        x = np.asarray(x, dtype=float)
        if not np.all(self.data_ok(x)):
            raise DomainError(f"{what} outside the domain of {self.describe()}")

    def check_center(self, theta, what="center"):
        theta = np.asarray(theta, dtype=float)
        if not np.all(self.center_ok(theta)):
            raise DomainError(f"{what} outside the interior domain of {self.describe()}")

    def describe(self) -> str:
        return self.name

    @property
    def unbounded_above(self) -> bool:
        """Whether data may grow without bound (needed for asymptotic probes)."""
        return True


@dataclass(frozen=True)
class SquaredDistance(ConvexGenerator):
    """``phi(x) = x**2``, giving ``(x - theta)**2`` per coordinate."""

    name = "sqdist"

    def phi(self, x):
        return np.square(x)

    def d1(self, x):
        return 2.0 * np.asarray(x, dtype=float)

    def d2(self, x):
        return np.full_like(np.asarray(x, dtype=float), 2.0)

    def d3(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def d1_inv(self, y):
        return 0.5 * np.asarray(y, dtype=float)

    def bregman(self, x, theta):
        return np.square(np.asarray(x, dtype=float) - theta)


@dataclass(frozen=True)
class Alpha(ConvexGenerator):
    """Alpha (beta-) divergence family.

    ``alpha = 0`` is Itakura-Saito, ``alpha = 1`` the generalized KL divergence
    and ``alpha = 2`` half the squared distance.  The domain is the real line
    when ``alpha`` is a positive even integer and the open positive half-line
    otherwise.
    """

    alpha: float = 2.0
    name = "alpha"

    @property
    def real_domain(self) -> bool:
        a = float(self.alpha)
        return a > 0 and a.is_integer() and int(a) % 2 == 0

    @property
    def _generic(self) -> bool:
        return self.alpha not in (0.0, 1.0)

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        a = self.alpha
        if a == 0:
            return -np.log(x) + x - 1.0
        if a == 1:
            return xlogy(x, x) - x + 1.0
        return np.power(x, a) / (a * (a - 1)) - x / (a - 1) + 1.0 / a

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        a = self.alpha
        if a == 0:
            return 1.0 - 1.0 / x
        if a == 1:
            return np.log(x)
        return (np.power(x, a - 1) - 1.0) / (a - 1)

    def d2(self, x):
        x = np.asarray(x, dtype=float)
        a = self.alpha
        if a == 0:
            return 1.0 / np.square(x)
        if a == 1:
            return 1.0 / x
        return np.power(x, a - 2)

    def d3(self, x):
        x = np.asarray(x, dtype=float)
        a = self.alpha
        if a == 0:
            return -2.0 / np.power(x, 3)
        if a == 1:
            return -1.0 / np.square(x)
        return (a - 2) * np.power(x, a - 3)

    def d1_inv(self, y):
        y = np.asarray(y, dtype=float)
        a = self.alpha
        if a == 0:
            return 1.0 / (1.0 - y)
        if a == 1:
            return np.exp(y)
        z = 1.0 + (a - 1) * y
        if self.real_domain:
            # odd power a - 1: real root keeps the sign
            return np.sign(z) * np.power(np.abs(z), 1.0 / (a - 1))
        return np.power(z, 1.0 / (a - 1))

    def bregman(self, x, theta):
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        a = self.alpha
        if a == 0:
            r = x / theta
            return r - np.log(r) - 1.0
        if a == 1:
            return xlogy(x, x / theta) - (x - theta)
        return (
            np.power(x, a) + (a - 1) * np.power(theta, a) - a * x * np.power(theta, a - 1)
        ) / (a * (a - 1))

    def data_ok(self, x):
        x = np.asarray(x, dtype=float)
        if self.real_domain:
            return np.isfinite(x)
        return np.isfinite(x) & (x > 0)

    def center_ok(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.real_domain:
            return np.isfinite(theta)
        return np.isfinite(theta) & (theta > BOUNDARY_GUARD)

    def describe(self):
        return f"alpha({self.alpha:g})"


@dataclass(frozen=True)
class ExpLoss(ConvexGenerator):
    """``phi(x) = exp(x)``."""

    name = "exploss"

    def phi(self, x):
        return np.exp(x)

    d1 = d2 = d3 = phi

    def d1_inv(self, y):
        return np.log(y)

    def bregman(self, x, theta):
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        u = x - theta
        return np.exp(theta) * (np.expm1(u) - u)


@dataclass(frozen=True)
class Binomial(ConvexGenerator):
    """Binomial loss with ``N`` trials.

    Data live in ``[0, N]`` (the ``0 ln 0 = 0`` convention covers both ends);
    centers must lie strictly inside ``(0, N)``.
    """

    n: int = 1
    name = "binomial"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"binomial N must be a positive integer, got {self.n}")

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        return xlogy(x, x) + xlogy(self.n - x, self.n - x)

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        return np.log(x) - np.log(self.n - x)

    def d2(self, x):
        x = np.asarray(x, dtype=float)
        return 1.0 / x + 1.0 / (self.n - x)

    def d3(self, x):
        x = np.asarray(x, dtype=float)
        return -1.0 / np.square(x) + 1.0 / np.square(self.n - x)

    def d1_inv(self, y):
        return self.n * expit(y)

    def bregman(self, x, theta):
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        rest = self.n - x
        return xlogy(x, x / theta) + xlogy(rest, rest / (self.n - theta))

    def data_ok(self, x):
        x = np.asarray(x, dtype=float)
        return np.isfinite(x) & (x >= 0) & (x <= self.n)

    def center_ok(self, theta):
        theta = np.asarray(theta, dtype=float)
        return (
            np.isfinite(theta)
            & (theta > BOUNDARY_GUARD)
            & (theta < self.n - BOUNDARY_GUARD)
        )

    def describe(self):
        return f"binomial(N={self.n})"

    @property
    def unbounded_above(self):
        return False


@dataclass(frozen=True)
class DivergenceSpec:
    """A divergence: generator, optional total Bregman wrapper, averaging flag.

    With ``tbd_c`` set the divergence is the total Bregman divergence
    ``d_phi(theta, x) / sqrt(1 + c**2 |phi'(x)|**2)``; note the swapped
    arguments in the numerator.  ``dim_average`` divides value, gradient and
    Hessian by the dimension ``L``.
    """

    generator: ConvexGenerator
    tbd_c: float | None = None
    dim_average: bool = False

    def __post_init__(self):
        if self.tbd_c is not None and not (np.isfinite(self.tbd_c) and self.tbd_c >= 0):
            raise DomainError(f"tbd_c must be a nonnegative real, got {self.tbd_c}")

    @property
    def is_tbd(self) -> bool:
        return self.tbd_c is not None

    def describe(self) -> str:
        s = self.generator.describe()
        if self.is_tbd:
            s = f"tbd[c={self.tbd_c:g}]({s})"
        if self.dim_average:
            s += "/L"
        return s

    # -- validation ---------------------------------------------------------

    def check_data(self, x):
        """Reject data outside the domain (interior domain for tBD)."""
        if self.is_tbd:
            self.generator.check_center(x, what="data")
        else:
            self.generator.check_data(x)

    def check_center(self, theta):
        self.generator.check_center(theta)

    def _prepare(self, x, theta, check):
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if x.ndim == 0 or theta.ndim != 1 or x.shape[-1] != theta.shape[0]:
            raise DimensionMismatch(
                f"data shape {x.shape} incompatible with center shape {theta.shape}"
            )
        if check:
            self.check_data(x)
            self.check_center(theta)
        return x, theta

    def _scale(self, L):
        return 1.0 / L if self.dim_average else 1.0

    def tbd_norm(self, x):
        """``sqrt(1 + c**2 |phi'(x)|**2)`` per point, shape ``x.shape[:-1]``."""
        g = self.generator.d1(x)
        return np.sqrt(1.0 + self.tbd_c**2 * np.sum(np.square(g), axis=-1))

    # -- value and derivatives with respect to theta -------------------------

    def value(self, x, theta, check=True):
        x, theta = self._prepare(x, theta, check)
        gen = self.generator
        if self.is_tbd:
            d = np.sum(gen.bregman(theta, x), axis=-1) / self.tbd_norm(x)
        else:
            d = np.sum(gen.bregman(x, theta), axis=-1)
        return np.maximum(d, 0.0) * self._scale(theta.shape[0])

    def grad(self, x, theta, check=True):
        x, theta = self._prepare(x, theta, check)
        gen = self.generator
        if self.is_tbd:
            g = (gen.d1(theta) - gen.d1(x)) / self.tbd_norm(x)[..., None]
        else:
            g = -gen.d2(theta) * (x - theta)
        return g * self._scale(theta.shape[0])

    def hess_diag(self, x, theta, check=True):
        """Diagonal of the (diagonal) Hessian with respect to ``theta``."""
        x, theta = self._prepare(x, theta, check)
        gen = self.generator
        if self.is_tbd:
            h = gen.d2(theta) / self.tbd_norm(x)[..., None]
        else:
            h = gen.d2(theta) - gen.d3(theta) * (x - theta)
        return h * self._scale(theta.shape[0])

    __call__ = value


def divergence_eval(spec: DivergenceSpec, x, theta) -> float:
    """Divergence between one point ``x`` and a center ``theta``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("divergence_eval expects a single vector")
    return float(spec.value(x, theta))


def divergence_grad_theta(spec: DivergenceSpec, x, theta) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("divergence_grad_theta expects a single vector")
    return spec.grad(x, theta)


def divergence_hess_theta(spec: DivergenceSpec, x, theta) -> np.ndarray:
    """Hessian with respect to ``theta`` as a full (diagonal) matrix."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("divergence_hess_theta expects a single vector")
    return np.diag(spec.hess_diag(x, theta))
