"""Generalized DP-means for f-separable distortion measures.

The solver alternates a sequential assignment pass, which opens a new
cluster at any point farther than ``lam`` from every center, with a per-cluster
center refinement.  For linear and concave ``f`` the refinement is the
reweighted mean (a majorization-minimization step, so the objective never
increases); for convex ``f`` it is a safeguarded Newton iteration.

Labels are 0-based throughout.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .divergences import Alpha, Binomial, DivergenceSpec
from .errors import (
    DomainError,
    EmptyCluster,
    InputError,
    LineSearchFailure,
    OverlapStall,
)
from .fgen import FSpec

__all__ = [
    "ClusterState",
    "ClusteringConfig",
    "FitResult",
    "RefineResult",
    "assign_step",
    "center_update_newton",
    "center_update_weighted",
    "fit",
    "fit_to_target_k",
    "objective_eval",
    "refine_center",
    "resolve_overlap",
    "restricted_objective",
]

logger = logging.getLogger(__name__)

OVERLAP_TOL = 1e-15
MAX_HALVINGS = 60
MIN_STEP = 1e-14

WEIGHTED = "weighted"
NEWTON = "newton"
AUTO = "auto"
SHIFT = "shift"
ERROR = "error"


@dataclass(frozen=True)
class ClusteringConfig:
    """Solver settings.

    ``delta=None`` means ``1e-6 * n``.  ``optimizer="auto"`` picks the weighted
    mean for linear/concave ``f`` and Newton for convex ``f``.
    """

    lam: float
    delta: float | None = None
    max_outer_iter: int = 300
    max_inner_iter: int = 100
    optimizer: str = AUTO
    overlap_policy: str = SHIFT
    rng_seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InputError(f"lambda must be a positive real, got {self.lam}")
        if self.delta is not None and not self.delta > 0:
            raise InputError("delta must be positive")
        if self.max_outer_iter < 1 or self.max_inner_iter < 1:
            raise InputError("iteration caps must be positive")
        if self.optimizer not in (AUTO, WEIGHTED, NEWTON):
            raise InputError(f"unknown optimizer {self.optimizer!r}")
        if self.overlap_policy not in (SHIFT, ERROR):
            raise InputError(f"unknown overlap policy {self.overlap_policy!r}")

    def resolve_optimizer(self, f: FSpec) -> str:
        if self.optimizer == AUTO:
            return NEWTON if f.shape == "convex" else WEIGHTED
        if self.optimizer == WEIGHTED and f.shape == "convex":
            raise InputError("the weighted-mean update needs a linear or concave f; use Newton")
        return self.optimizer


@dataclass
class ClusterState:
    centers: np.ndarray  # (K, L)
    labels: np.ndarray  # (n,), values in [0, K)

    @property
    def K(self) -> int:
        return len(self.centers)

    def copy(self) -> ClusterState:
        return ClusterState(self.centers.copy(), self.labels.copy())


@dataclass
class FitResult:
    state: ClusterState
    objective: float
    avg_distortion: float
    max_distortion: float
    iterations: int
    converged: bool
    fmean_objective: float = math.nan
    history: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.state.K


@dataclass
class RefineResult:
    theta: np.ndarray
    objective: float
    iterations: int
    converged: bool
    overlap_shifted: bool = False
    reverted: bool = False
    notes: list = field(default_factory=list)


# -- objective ---------------------------------------------------------------


def point_distortions(div: DivergenceSpec, data, state: ClusterState) -> np.ndarray:
    """``d(x_i, theta_{c(i)})`` for every point."""
    data = np.asarray(data, dtype=float)
    d = np.empty(len(data))
    for k in range(state.K):
        idx = state.labels == k
        if np.any(idx):
            d[idx] = div.value(data[idx], state.centers[k], check=False)
    return d


def objective_eval(f: FSpec, div: DivergenceSpec, data, state: ClusterState, lam: float) -> float:
    """``sum_i f(d(x_i, theta_{c(i)})) + f(lam) K``."""
    if len(state.labels) != len(data):
        raise InputError("state and data sizes differ")
    if not lam > 0:
        raise InputError("lambda must be positive")
    d = point_distortions(div, data, state)
    with np.errstate(over="ignore"):
        return float(np.sum(f.value(d)) + float(f.value(lam)) * state.K)


def restricted_objective(f: FSpec, div: DivergenceSpec, members, theta) -> float:
    """The part of the objective that depends on one center."""
    d = div.value(members, theta, check=False)
    with np.errstate(over="ignore"):
        return float(np.sum(f.value(d)))


def _fmean_objective(f, d, lam, K):
    values = np.append(d, lam)
    weights = np.append(np.ones(len(d)), K)
    try:
        return f.mean(values, weights)
    except InputError:
        return math.nan


# -- assignment --------------------------------------------------------------


def _interior(div: DivergenceSpec, theta):
    """Move a center off a finite domain boundary, where phi' is infinite."""
    gen = div.generator
    theta = np.asarray(theta, dtype=float)
    if isinstance(gen, Binomial):
        eps = 1e-9 * gen.n
        return np.clip(theta, eps, gen.n - eps)
    if isinstance(gen, Alpha) and not gen.real_domain:
        return np.maximum(theta, 2e-12)
    return theta


def assign_step(div: DivergenceSpec, data, state: ClusterState, lam: float) -> ClusterState:
    """Sequential DP-means assignment pass with cluster creation.

    Points are visited in order; a point whose nearest center is farther
    than ``lam`` opens a new cluster centered on itself, visible to every
    later point.  Ties go to the lowest cluster index.  Clusters left empty
    are pruned and labels compacted.
    """
    data = np.asarray(data, dtype=float)
    n = len(data)
    centers = [c for c in state.centers]
    if centers:
        D = np.stack([div.value(data, c, check=False) for c in centers], axis=1)
        best = D.min(axis=1)
        arg = D.argmin(axis=1)
    else:
        best = np.full(n, np.inf)
        arg = np.full(n, -1)
    labels = np.empty(n, dtype=np.intp)
    p = 0
    while p < n:
        over = np.flatnonzero(best[p:] > lam)
        if over.size == 0:
            labels[p:] = arg[p:]
            break
        i = p + int(over[0])
        labels[p:i] = arg[p:i]
        centers.append(_interior(div, data[i]))
        k_new = len(centers) - 1
        labels[i] = k_new
        if i + 1 < n:
            col = div.value(data[i + 1 :], centers[-1], check=False)
            tail_best = best[i + 1 :]
            tail_arg = arg[i + 1 :]
            closer = col < tail_best
            tail_best[closer] = col[closer]
            tail_arg[closer] = k_new
        p = i + 1
    used = np.unique(labels)
    remap = np.full(len(centers), -1, dtype=np.intp)
    remap[used] = np.arange(len(used))
    return ClusterState(np.array([centers[k] for k in used]), remap[labels])


# -- center updates ----------------------------------------------------------


def _members(data, state: ClusterState, k: int):
    members = np.asarray(data, dtype=float)[state.labels == k]
    if len(members) == 0:
        raise EmptyCluster(f"cluster {k} has no members")
    return members


def _overlaps(f: FSpec, div: DivergenceSpec, members, theta) -> bool:
    if not f.infinite_slope_at_zero:
        return False
    return bool(np.any(div.value(members, theta, check=False) < OVERLAP_TOL))


def _weighted_step(f: FSpec, div: DivergenceSpec, members, theta):
    d = div.value(members, theta, check=False)
    w = f.prime(d)
    if div.is_tbd:
        w = w / div.tbd_norm(members)
        gen = div.generator
        g = np.dot(w, gen.d1(members)) / w.sum()
        return _interior(div, gen.d1_inv(g))
    return _interior(div, np.dot(w, members) / w.sum())


def center_update_weighted(f: FSpec, div: DivergenceSpec, data, state: ClusterState, k: int):
    """One reweighted-mean update of center ``k``.

    Raises :class:`OverlapStall` when the center sits on a member and
    ``f'(0)`` is infinite, since the update would then be a fixed point.
    """
    if f.shape == "convex":
        raise InputError("the weighted-mean update needs a linear or concave f")
    members = _members(data, state, k)
    theta = state.centers[k]
    if _overlaps(f, div, members, theta):
        raise OverlapStall(f"center {k} coincides with a member point")
    return _weighted_step(f, div, members, theta)


def _newton_step(f: FSpec, div: DivergenceSpec, members, theta):
    """Return ``(theta_new, rel_decrease)``; ``rel_decrease = 0`` means stationary."""
    d = div.value(members, theta, check=False)
    g0, g1, g2 = f.scaled_terms(d)
    G = div.grad(members, theta, check=False)
    Hd = div.hess_diag(members, theta, check=False)
    zero = d == 0
    g1 = np.where(zero & ~np.isfinite(g1), 0.0, g1)
    g2 = np.where(zero, 0.0, g2)
    grad = g1 @ G
    if not np.all(np.isfinite(grad)) or not np.any(grad):
        return theta, 0.0
    H = (G.T * g2) @ G
    H[np.diag_indices_from(H)] += g1 @ Hd
    current = float(np.sum(g0))
    step = -_regularized_solve(H, grad)
    t = 1.0
    for _ in range(MAX_HALVINGS):
        if t * np.linalg.norm(step) < MIN_STEP:
            return theta, 0.0
        trial = theta + t * step
        if np.all(div.generator.center_ok(trial)):
            with np.errstate(over="ignore", invalid="ignore"):
                value = float(np.sum(f.scaled_terms(div.value(members, trial, check=False), d)[0]))
            if value < current:
                return trial, (current - value) / max(abs(current), 1e-300)
        t *= 0.5
    raise LineSearchFailure(f"no decrease after {MAX_HALVINGS} halvings")


def _regularized_solve(H, g):
    """Solve ``(H + tau I) p = g``, doubling ``tau`` until Cholesky succeeds."""
    tau = 0.0
    scale = max(float(np.max(np.abs(np.diag(H)))), 1e-300)
    for _ in range(200):
        try:
            c = cho_factor(H + tau * np.eye(len(H)), lower=True, check_finite=True)
            return cho_solve(c, g)
        except (LinAlgError, ValueError):
            tau = max(2.0 * tau, 1e-10 * scale)
    raise LineSearchFailure("Hessian could not be regularized")


def center_update_newton(f: FSpec, div: DivergenceSpec, data, state: ClusterState, k: int):
    """One damped, descent-guaranteed Newton update of center ``k``.

    An indefinite Hessian is shifted by ``tau I`` (``tau`` doubling) until it
    factorizes; the step is halved until the restricted objective strictly
    decreases and the trial point stays inside the domain.
    """
    members = _members(data, state, k)
    theta, _ = _newton_step(f, div, members, np.asarray(state.centers[k], dtype=float))
    return theta


def resolve_overlap(f: FSpec, div: DivergenceSpec, data, state: ClusterState, k: int):
    """Shift a stalled center to the plain mean of its members.

    A single-member cluster is already optimal and keeps its center.
    """
    members = _members(data, state, k)
    if len(members) == 1:
        return members[0].copy()
    return _interior(div, members.mean(axis=0))


def refine_center(
    f: FSpec,
    div: DivergenceSpec,
    members,
    theta,
    *,
    optimizer: str = WEIGHTED,
    delta: float = 1e-6,
    max_iter: int = 100,
    overlap_policy: str = SHIFT,
    step_tol: float = 0.0,
) -> RefineResult:
    """Iterate center updates until the decrease of the restricted objective
    falls below ``delta``.

    The weighted path compares absolute decreases with ``delta``.  The
    Newton path compares relative decreases with ``delta / m`` because its
    objective may be astronomically large for big ``beta``.  ``step_tol``
    optionally stops once the center moves less than that (relative).

    With the shift overlap policy a stalled center is moved once to the
    member mean; if the refinement from there ends above the stalled
    objective (both finite), the stalled center is restored.
    """
    members = np.asarray(members, dtype=float)
    m = len(members)
    if m == 0:
        raise EmptyCluster("cannot refine an empty cluster")
    theta = np.asarray(theta, dtype=float).copy()
    res = RefineResult(theta, math.nan, 0, False)
    stalled = None
    obj = _safe_objective(f, div, members, theta)
    for it in range(1, max_iter + 1):
        res.iterations = it
        if _overlaps(f, div, members, theta):
            if m == 1:
                theta = members[0].copy()
                obj = _safe_objective(f, div, members, theta)
                res.converged = True
                break
            if overlap_policy == ERROR:
                raise OverlapStall("center coincides with a member point")
            if stalled is not None:
                res.converged = True
                break
            stalled = (theta, obj)
            theta = _interior(div, members.mean(axis=0))
            obj = _safe_objective(f, div, members, theta)
            res.overlap_shifted = True
            continue
        if optimizer == NEWTON:
            try:
                new, rel = _newton_step(f, div, members, theta)
            except LineSearchFailure as exc:
                res.notes.append(str(exc))
                break
            moved = np.linalg.norm(new - theta)
            theta = new
            obj = _safe_objective(f, div, members, theta)
            if rel <= delta / m or moved <= step_tol * (1 + np.linalg.norm(theta)):
                res.converged = True
                break
        else:
            new = _weighted_step(f, div, members, theta)
            new_obj = _safe_objective(f, div, members, new)
            moved = np.linalg.norm(new - theta)
            dec = obj - new_obj
            theta, obj = new, new_obj
            if not dec >= delta or moved <= step_tol * (1 + np.linalg.norm(theta)):
                res.converged = True
                break
    if stalled is not None and math.isfinite(stalled[1]) and math.isfinite(obj) and stalled[1] < obj:
        theta, obj = stalled
        res.reverted = True
    res.theta = theta
    res.objective = obj
    return res


def _safe_objective(f, div, members, theta):
    d = div.value(members, theta, check=False)
    try:
        with np.errstate(over="ignore"):
            return float(np.sum(f.value(d)))
    except DomainError:
        # power mean with a = 0, beta <= 0 on an exact overlap
        return -math.inf


# -- driver --------------------------------------------------------------------


def _refine_all(f, div, data, state, optimizer, delta, config, notes, cache=None):
    """Refine every center.

    ``cache`` maps a cluster's member indices to the center its last
    refinement produced; a cluster whose members and center are both
    unchanged is already converged and is skipped.
    """
    centers = state.centers.copy()
    for k in range(state.K):
        mask = state.labels == k
        key = np.flatnonzero(mask).tobytes()
        if cache is not None and key in cache and np.array_equal(cache[key], centers[k]):
            continue
        members = data[mask]
        r = refine_center(
            f,
            div,
            members,
            centers[k],
            optimizer=optimizer,
            delta=delta,
            max_iter=config.max_inner_iter,
            overlap_policy=config.overlap_policy,
        )
        centers[k] = r.theta
        if cache is not None:
            cache[key] = r.theta
        notes.extend(f"cluster {k}: {msg}" for msg in r.notes)
    return ClusterState(centers, state.labels)


def fit(f: FSpec, div: DivergenceSpec, data, config: ClusteringConfig) -> FitResult:
    """Run generalized DP-means on ``data`` (shape ``(n, L)``).

    Starts from one cluster at the data mean, refines it, then alternates
    assignment and refinement until the objective decrease between outer
    passes drops below ``delta`` or the labels stop changing.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if data.ndim != 2 or len(data) == 0:
        raise InputError("data must be a nonempty (n, L) array")
    div.check_data(data)
    optimizer = config.resolve_optimizer(f)
    n = len(data)
    delta = config.delta if config.delta is not None else 1e-6 * n
    lam = config.lam
    notes: list = []

    state = ClusterState(_interior(div, data.mean(axis=0))[None, :], np.zeros(n, dtype=np.intp))
    cache: dict = {}
    state = _refine_all(f, div, data, state, optimizer, delta, config, notes, cache)
    obj = objective_eval(f, div, data, state, lam)
    history = [("init", obj)]
    converged = False
    it = 0
    for it in range(1, config.max_outer_iter + 1):
        prev_obj, prev_labels, prev_K = obj, state.labels, state.K
        state = assign_step(div, data, state, lam)
        history.append(("assign", objective_eval(f, div, data, state, lam)))
        state = _refine_all(f, div, data, state, optimizer, delta, config, notes, cache)
        obj = objective_eval(f, div, data, state, lam)
        history.append(("refine", obj))
        if state.K == prev_K and np.array_equal(state.labels, prev_labels):
            converged = True
            break
        if math.isfinite(prev_obj) and math.isfinite(obj) and prev_obj - obj < delta:
            converged = True
            break
    d = point_distortions(div, data, state)
    return FitResult(
        state=state,
        objective=obj,
        avg_distortion=float(d.mean()),
        max_distortion=float(d.max()),
        iterations=it,
        converged=converged,
        fmean_objective=_fmean_objective(f, d, lam, state.K),
        history=history,
        notes=notes,
    )


def single_cluster_max_distortion(f: FSpec, div: DivergenceSpec, data, config: ClusteringConfig) -> float:
    """Maximum distortion of the refined one-cluster solution."""
    data = np.asarray(data, dtype=float)
    optimizer = config.resolve_optimizer(f)
    delta = config.delta if config.delta is not None else 1e-6 * len(data)
    r = refine_center(
        f,
        div,
        data,
        _interior(div, data.mean(axis=0)),
        optimizer=optimizer,
        delta=delta,
        max_iter=config.max_inner_iter,
        overlap_policy=config.overlap_policy,
    )
    return float(np.max(div.value(data, r.theta, check=False)))


def fit_to_target_k(
    f: FSpec,
    div: DivergenceSpec,
    data,
    k_target: int,
    config: ClusteringConfig,
    max_bisections: int = 60,
) -> FitResult:
    """Search ``lam`` (bisection in log space) for a fit with ``k_target`` clusters.

    Returns the exact match when found, otherwise the fit whose ``K`` is
    closest to the target.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if not 1 <= k_target <= len(data):
        raise InputError("target K must lie in [1, n]")
    hi = single_cluster_max_distortion(f, div, data, config) * (1 + 1e-9) + 1e-300
    best = fit(f, div, data, replace(config, lam=hi))
    if best.K == k_target:
        return best
    lo = hi
    res = best
    while res.K < k_target and lo > hi * 1e-12:
        lo *= 0.1
        res = fit(f, div, data, replace(config, lam=lo))
        best = _closer(best, res, k_target)
    if res.K < k_target:
        return best
    if res.K == k_target:
        return res
    a, b = math.log(lo), math.log(hi)
    for _ in range(max_bisections):
        mid = 0.5 * (a + b)
        res = fit(f, div, data, replace(config, lam=math.exp(mid)))
        best = _closer(best, res, k_target)
        if res.K == k_target:
            return res
        if res.K > k_target:
            a = mid
        else:
            b = mid
    return best


def _closer(a: FitResult, b: FitResult, k: int) -> FitResult:
    return b if abs(b.K - k) < abs(a.K - k) else a
