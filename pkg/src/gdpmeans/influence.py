"""Influence functions of cluster centers and robustness classification.

The analytic influence function of a center ``theta`` fitted to ``m`` points
is ``-m G^{-1} f'(d(x*, theta)) grad_theta d(x*, theta)`` with
``G = sum_i hess_theta f(d(x_i, theta))``.  The empirical counterpart (the
sensitivity curve) refits the center after appending ``x*`` and returns
``m`` times the shift.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .core import NEWTON, WEIGHTED, refine_center
from .divergences import Alpha, Binomial, DivergenceSpec, ExpLoss, SquaredDistance
from .errors import DomainError, SingularG, Unsupported
from .fgen import FSpec, Linear, LogSumExp, PowerMean

__all__ = [
    "InfluenceReport",
    "Robustness",
    "analytic_influence",
    "classify_robustness",
    "empirical_influence",
    "influence_curve_1d",
    "influence_report",
    "numeric_robustness",
    "trace_if_trend",
    "write_curve_csv",
]


class Robustness(str, enum.Enum):
    DIVERGENT = "divergent"
    BOUNDED = "bounded"
    REDESCENDING = "redescending"


@dataclass
class InfluenceReport:
    analytic_if: np.ndarray
    empirical_if: np.ndarray | None
    robustness_class: Robustness | None
    curve: list = field(default_factory=list)


def _as_cluster(cluster_data):
    X = np.asarray(cluster_data, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def _second_derivative_sum(f: FSpec, div: DivergenceSpec, X, theta):
    """``G = sum_i f''(d_i) g_i g_i^T + f'(d_i) diag(h_i)``."""
    d = div.value(X, theta)
    g = div.grad(X, theta)
    h = div.hess_diag(X, theta)
    fp = f.prime(d)
    fpp = f.second(d)
    G = (g.T * fpp) @ g
    G[np.diag_indices_from(G)] += fp @ h
    return G


def analytic_influence(f: FSpec, div: DivergenceSpec, cluster_data, theta, x_star) -> np.ndarray:
    """Influence of an added point ``x_star`` on a converged center ``theta``."""
    X = _as_cluster(cluster_data)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    div.check_data(x_star)
    m = len(X)
    G = _second_derivative_sum(f, div, X, theta)
    if not np.all(np.isfinite(G)):
        raise SingularG("G is not finite at this center")
    d_star = div.value(x_star, theta)
    grad_f = f.prime(d_star) * div.grad(x_star, theta)
    try:
        cond = np.linalg.cond(G)
        if not np.isfinite(cond) or cond > 1e14:
            raise SingularG(f"G is singular (condition number {cond:.3g})")
        return -m * np.linalg.solve(G, grad_f)
    except np.linalg.LinAlgError as exc:
        raise SingularG(str(exc)) from exc


def _tight_center(f, div, X, theta0):
    optimizer = NEWTON if f.shape == "convex" else WEIGHTED
    r = refine_center(
        f,
        div,
        X,
        theta0,
        optimizer=optimizer,
        delta=1e-12 * (len(X) if optimizer == NEWTON else 1.0),
        max_iter=20000,
        step_tol=1e-15,
    )
    return _polish(f, div, X, r.theta)


def _polish(f, div, X, theta, max_iter=20):
    """Newton iterations on the stationarity equation ``sum f'(d_i) grad d_i = 0``.

    The descent loop stops on objective decrease, which only pins the center
    to about the square root of its tolerance; the sensitivity curve needs
    the shift itself resolved, so finish with a few quadratically convergent
    steps.  Stops as soon as a step fails to shrink the gradient.
    """

    def gradient(t):
        d = div.value(X, t, check=False)
        with np.errstate(divide="ignore", invalid="ignore"):
            return f.prime(d) @ div.grad(X, t, check=False)

    g = gradient(theta)
    for _ in range(max_iter):
        if not np.all(np.isfinite(g)) or not np.any(g):
            break
        with np.errstate(all="ignore"):
            try:
                step = np.linalg.solve(_second_derivative_sum(f, div, X, theta), g)
            except np.linalg.LinAlgError:
                break
        cand = theta - step
        if not np.all(np.isfinite(cand)) or not np.all(div.generator.center_ok(cand)):
            break
        g_new = gradient(cand)
        if not np.linalg.norm(g_new) < np.linalg.norm(g):
            break
        theta, g = cand, g_new
    return theta


def empirical_influence(f: FSpec, div: DivergenceSpec, cluster_data, x_star, theta=None) -> np.ndarray:
    """Sensitivity curve value ``m (theta_tilde - theta)``.

    ``theta`` (the center of ``cluster_data``) is refined to a tight
    tolerance, from the data mean unless supplied; ``theta_tilde`` is refined
    from ``theta`` after appending ``x_star``.
    """
    X = _as_cluster(cluster_data)
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    div.check_data(X)
    div.check_data(x_star)
    start = X.mean(axis=0) if theta is None else np.atleast_1d(np.asarray(theta, dtype=float))
    theta = _tight_center(f, div, X, start)
    theta_tilde = _tight_center(f, div, np.vstack([X, x_star]), theta)
    return len(X) * (theta_tilde - theta)


def classify_robustness(f: FSpec, div: DivergenceSpec) -> Robustness:
    """Asymptotic behaviour of ``|IF(x*)|`` as ``|x*| -> inf``.

    Closed-form rules: necessary condition ``f'(z) -> 0``; power mean with
    ``beta < 0`` and log-sum-exp with ``beta < 1`` redescend for every
    Bregman divergence; alpha divergences and exp-loss follow their
    per-family tables; total Bregman divergences are bounded for linear or
    concave ``f`` and redescending when additionally ``f'(z) -> 0``.
    """
    gen = div.generator
    if isinstance(gen, Binomial):
        raise Unsupported("binomial loss has bounded data; no asymptotic rule applies")
    if div.is_tbd:
        if f.shape == "convex":
            return Robustness.DIVERGENT
        if f.slope_vanishes_at_infinity:
            return Robustness.REDESCENDING
        return Robustness.BOUNDED
    if isinstance(f, Linear):
        return Robustness.DIVERGENT
    if isinstance(f, LogSumExp):
        return Robustness.REDESCENDING if f.beta < 1 else Robustness.DIVERGENT
    if not isinstance(f, PowerMean):
        raise Unsupported(f"no rule for {f!r}")
    beta = f.beta
    if beta >= 1:
        return Robustness.DIVERGENT
    if beta < 0:
        return Robustness.REDESCENDING
    if isinstance(gen, ExpLoss):
        # beta = 0 is bounded when some coordinate runs to -inf, the worst case
        return Robustness.BOUNDED if beta == 0 else Robustness.REDESCENDING
    if isinstance(gen, SquaredDistance):
        alpha = 2.0
    elif isinstance(gen, Alpha):
        alpha = float(gen.alpha)
    else:
        raise Unsupported(f"no rule for {gen.describe()}")
    if alpha < 1:
        pivot = 0.0
    elif alpha == 1:
        return Robustness.DIVERGENT if beta > 0 else Robustness.REDESCENDING
    else:
        pivot = 1.0 - 1.0 / alpha
    if math.isclose(beta, pivot, rel_tol=0.0, abs_tol=1e-12):
        return Robustness.BOUNDED
    return Robustness.DIVERGENT if beta > pivot else Robustness.REDESCENDING


def if_factor_1d(f: FSpec, div: DivergenceSpec, theta: float, x_star):
    """Signed one-dimensional influence factor (the influence without ``G``).

    Bregman: ``f'(d) phi''(theta) (x* - theta)``; total Bregman:
    ``f'(tBD) (phi'(x*) - phi'(theta)) / sqrt(1 + c^2 phi'(x*)^2)``.
    """
    x = np.asarray(x_star, dtype=float)
    gen = div.generator
    th = np.array([float(theta)])
    d = div.value(x[:, None], th)
    fp = f.prime(d)
    if div.is_tbd:
        g1 = gen.d1(x)
        return fp * (g1 - gen.d1(th[0])) / np.sqrt(1.0 + div.tbd_c**2 * g1**2)
    return fp * gen.d2(th[0]) * (x - th[0])


def influence_curve_1d(
    f: FSpec,
    div: DivergenceSpec,
    theta: float,
    x_range,
    exclusion: float = 1e-12,
):
    """Sample the one-dimensional influence factor over a grid.

    ``x_range`` is an iterable of grid points or a ``(start, stop, num)``
    triple for ``numpy.linspace``.  When ``f'(0)`` is infinite the points
    with ``d(x*, theta) <= exclusion`` are dropped.  Returns a list of
    ``(x_star, value)`` pairs.
    """
    if isinstance(x_range, tuple) and len(x_range) == 3:
        start, stop, num = x_range
        grid = np.linspace(float(start), float(stop), int(num))
    else:
        grid = np.asarray(list(x_range), dtype=float)
    div.check_center(np.array([float(theta)]))
    div.check_data(grid)
    if f.infinite_slope_at_zero:
        d = div.value(grid[:, None], np.array([float(theta)]))
        grid = grid[d > exclusion]
    values = if_factor_1d(f, div, theta, grid)
    return [(float(x), float(v)) for x, v in zip(grid, values)]


def write_curve_csv(path, curve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_star", "value"])
        for x, v in curve:
            w.writerow([repr(x), repr(v)])


# -- numerical trend of the influence factor ---------------------------------

DIVERGENT_RATIO = 2.0
REDESCENDING_RATIO = 0.5


def _probe_limit(gen, theta):
    if isinstance(gen, ExpLoss):
        return 700.0
    return max(abs(theta), 1.0) * 1e6


def trace_if_trend(f: FSpec, div: DivergenceSpec, theta: float = 1.0, points_per_decade: int = 20):
    """Trend ratio of ``|IF factor|`` over the last decade of the probe range.

    The probe runs from ``theta`` out to ``theta * 1e6`` (``1e6`` when
    ``|theta| < 1``, and ``700`` for exp-loss, where ``exp`` overflows).
    The last decade's ratio ``r = |IF(x_end)| / |IF(x_end / 10)|`` is
    extrapolated over as many decades as were traced, which separates slow
    logarithmic decay from convergence to a constant.
    """
    gen = div.generator
    if not gen.unbounded_above:
        raise Unsupported(f"{gen.describe()} data cannot grow without bound")
    x_end = _probe_limit(gen, theta)
    start = max(abs(theta), 1.0)
    decades = math.log10(x_end / start) if x_end > start else 1.0
    if x_end / 10 <= theta:
        raise DomainError("probe range too short for this center")
    grid = np.geomspace(x_end / 10, x_end, points_per_decade + 1)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        values = np.abs(if_factor_1d(f, div, theta, grid))
    lo, hi = values[0], values[-1]
    if hi == 0:
        return 0.0
    if not np.isfinite(hi) or lo == 0:
        return math.inf
    return float((hi / lo) ** decades)


def numeric_robustness(f: FSpec, div: DivergenceSpec, theta: float = 1.0) -> Robustness:
    ratio = trace_if_trend(f, div, theta)
    if ratio > DIVERGENT_RATIO:
        return Robustness.DIVERGENT
    if ratio < REDESCENDING_RATIO:
        return Robustness.REDESCENDING
    return Robustness.BOUNDED


def influence_report(
    f: FSpec,
    div: DivergenceSpec,
    cluster_data,
    x_star,
    x_range=None,
) -> InfluenceReport:
    """Analytic and empirical influence at ``x_star`` plus the class label."""
    X = _as_cluster(cluster_data)
    theta = _tight_center(f, div, X, X.mean(axis=0))
    analytic = analytic_influence(f, div, X, theta, x_star)
    empirical = empirical_influence(f, div, X, x_star, theta=theta)
    try:
        label = classify_robustness(f, div)
    except Unsupported:
        label = None
    curve = []
    if x_range is not None and X.shape[1] == 1:
        curve = influence_curve_1d(f, div, float(theta[0]), x_range)
    return InfluenceReport(analytic, empirical, label, curve)
