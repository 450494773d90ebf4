"""Unscented Kalman filter with adaptive process noise and fuzzy supervision.

Generic over user-supplied process/measurement models.  The effective
process-noise covariance each prediction is ``(phi * A) @ Q`` where ``A``
is a diagonal adaptation matrix driven by innovation statistics and
``phi`` a scalar tracking-strength factor from a small fuzzy rule base
(steady dynamics -> smooth estimates, intense dynamics -> fast tracking).

A FilterState is treated as a value: ``predict`` and ``update`` return new
states instead of mutating.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np


class DecompositionFailure(np.linalg.LinAlgError):
    """Covariance not positive semi-definite within jitter tolerance."""


class SingularInnovationCov(np.linalg.LinAlgError):
    """Predicted output covariance cannot be inverted."""


class InsufficientSamples(RuntimeError):
    """Innovation window not yet full; keep the previous adaptation."""


@dataclass(frozen=True)
class UnscentedScaling:
    """Sigma-point spread parameters (standard scaled unscented transform)."""

    alpha: float = 0.1
    beta: float = 2.0
    kappa: float = 0.0


@dataclass(frozen=True)
class AdaptationConfig:
    """Innovation-matching adaptation of the process-noise scale.

    ``window`` innovations form the sample output covariance; the diagonal
    adaptation entries relax toward the ratio of observed vs. modelled
    innovation spread with relaxation ``gain`` per step, clamped to
    [a_min, a_max].  ``leak`` pulls entries toward 1 so that a
    statistically consistent run holds A near identity instead of letting
    the window noise (successive windows share most samples) random-walk
    it away; a sustained mismatch still dominates the leak.
    """

    window: int = 30
    a_min: float = 0.01
    a_max: float = 100.0
    gain: float = 0.1
    leak: float = 0.05


@dataclass(frozen=True)
class FuzzySupervisor:
    """Triangular memberships (steady/moderate/intense) over a normalized
    dynamics-intensity signal in [0, 1], with singleton rule outputs combined
    by centroid defuzzification."""

    centers: tuple[float, float, float] = (0.0, 0.5, 1.0)
    outputs: tuple[float, float, float] = (0.2, 1.0, 5.0)

    @property
    def phi_low(self) -> float:
        return self.outputs[0]

    @property
    def phi_high(self) -> float:
        return self.outputs[2]


@dataclass(frozen=True)
class NonlinearModel:
    """Discrete-time model x' = f(x, u) + q, y = h(x) + r.

    ``f`` and ``h`` must accept state arrays of shape (n,) or (N, n) and
    map them row-wise (the filter propagates all sigma points in one call).
    """

    state_dim: int
    input_dim: int
    output_dim: int
    f: Callable[[np.ndarray, np.ndarray | None], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self) -> None:
        if min(self.state_dim, self.input_dim, self.output_dim) < 1:
            raise ValueError("all dimensions must be >= 1")


@dataclass(frozen=True)
class NoiseSpec:
    """Process (Q) and measurement (R) noise covariances."""

    q: np.ndarray
    r: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=float)
        r = np.asarray(self.r, dtype=float)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)
        if not np.allclose(q, q.T, atol=1e-12):
            raise ValueError("Q must be symmetric")
        if not np.allclose(r, r.T, atol=1e-12):
            raise ValueError("R must be symmetric")
        if np.any(np.linalg.eigvalsh(q) < -1e-10):
            raise ValueError("Q must be positive semi-definite")
        if np.any(np.linalg.eigvalsh(r) <= 0.0):
            raise ValueError("R must be positive definite")


@dataclass(frozen=True)
class SigmaSet:
    """2n+1 sigma points with their mean and covariance weights."""

    points: np.ndarray   # (2n+1, n)
    w_mean: np.ndarray   # (2n+1,)
    w_cov: np.ndarray    # (2n+1,)


@dataclass(frozen=True)
class FilterState:
    """The estimator's belief plus adaptation bookkeeping.

    ``residuals`` is the ring buffer of recent innovations (most recent
    last).  ``gain`` and ``pred_cov`` cache the last update's Kalman gain
    and a-priori covariance for the adaptation step.  ``predicted`` tracks
    the predict/update alternation.
    """

    mean: np.ndarray
    cov: np.ndarray
    a_diag: np.ndarray
    phi: float = 1.0
    residuals: tuple = field(default_factory=tuple)
    gain: np.ndarray | None = None
    pred_cov: np.ndarray | None = None
    innov_cov: np.ndarray | None = None
    predicted: bool = False

    @classmethod
    def initial(cls, mean: np.ndarray, cov: np.ndarray) -> "FilterState":
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        return cls(mean=mean, cov=cov, a_diag=np.ones(mean.shape[0]))


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _cholesky_with_jitter(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, escalating diagonal jitter 1e-12 -> 1e-6."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    n = cov.shape[0]
    jitter = 1e-12
    while jitter <= 1e-6:
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise DecompositionFailure(
        "covariance not PSD within jitter tolerance (filter divergence?)")


def sigma_points(mean: np.ndarray, cov: np.ndarray,
                 scaling: UnscentedScaling = UnscentedScaling()) -> SigmaSet:
    """Scaled-unscented sigma points for N(mean, cov).

    lambda = alpha^2 (n + kappa) - n; points are mean +/- the columns of
    the Cholesky factor of (n + lambda) cov.  Weighted mean reproduces
    ``mean`` exactly and the weighted covariance reproduces ``cov`` up to
    floating-point error.
    """
    mean = np.asarray(mean, dtype=float)
    cov = _symmetrize(np.asarray(cov, dtype=float))
    n = mean.shape[0]
    lam = scaling.alpha ** 2 * (n + scaling.kappa) - n
    scale = n + lam
    if scale <= 0.0:
        raise ValueError("alpha^2 (n + kappa) must be positive")
    root = _cholesky_with_jitter(scale * cov)

    points = np.empty((2 * n + 1, n))
    points[0] = mean
    points[1:n + 1] = mean + root.T
    points[n + 1:] = mean - root.T

    w_mean = np.full(2 * n + 1, 0.5 / scale)
    w_cov = w_mean.copy()
    w_mean[0] = lam / scale
    w_cov[0] = lam / scale + (1.0 - scaling.alpha ** 2 + scaling.beta)
    return SigmaSet(points=points, w_mean=w_mean, w_cov=w_cov)


def _weighted_moments(points: np.ndarray, w_mean: np.ndarray,
                      w_cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = w_mean @ points
    dev = points - mean
    cov = (dev * w_cov[:, None]).T @ dev
    return mean, _symmetrize(cov)


def predict(fs: FilterState, model: NonlinearModel, u: np.ndarray | None,
            noise: NoiseSpec,
            scaling: UnscentedScaling = UnscentedScaling()) -> FilterState:
    """Time update: propagate sigma points through f and add (phi*A)Q."""
    ss = sigma_points(fs.mean, fs.cov, scaling)
    propagated = np.asarray(model.f(ss.points, u), dtype=float)
    mean, cov = _weighted_moments(propagated, ss.w_mean, ss.w_cov)
    cov = cov + (fs.phi * fs.a_diag)[:, None] * noise.q
    return replace(fs, mean=mean, cov=_symmetrize(cov), predicted=True)


def update(fs: FilterState, model: NonlinearModel, y: np.ndarray,
           noise: NoiseSpec,
           scaling: UnscentedScaling = UnscentedScaling(),
           residual_window: int = AdaptationConfig.window) -> FilterState:
    """Measurement update from the predicted belief.

    Sigma points are redrawn from (mean, cov) of the prediction; the
    innovation y - y_hat is pushed into the residual ring buffer.
    """
    if not fs.predicted:
        raise ValueError("update requires a predicted FilterState")
    y = np.asarray(y, dtype=float)
    ss = sigma_points(fs.mean, fs.cov, scaling)
    outputs = np.asarray(model.h(ss.points), dtype=float)

    y_hat = ss.w_mean @ outputs
    dev_y = outputs - y_hat
    s_cov = (dev_y * ss.w_cov[:, None]).T @ dev_y + noise.r
    s_cov = _symmetrize(s_cov)
    dev_x = ss.points - fs.mean
    cross = (dev_x * ss.w_cov[:, None]).T @ dev_y

    try:
        gain = np.linalg.solve(s_cov, cross.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularInnovationCov(str(exc)) from exc
    cond = np.linalg.cond(s_cov)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularInnovationCov(f"innovation covariance condition {cond:.2e}")

    innovation = y - y_hat
    mean = fs.mean + gain @ innovation
    cov = _symmetrize(fs.cov - gain @ s_cov @ gain.T)

    residuals = (fs.residuals + (innovation,))[-residual_window:]
    return replace(fs, mean=mean, cov=cov, residuals=residuals,
                   gain=gain, pred_cov=fs.cov, innov_cov=s_cov,
                   predicted=False)


def adapt_q(fs: FilterState,
            cfg: AdaptationConfig = AdaptationConfig()) -> np.ndarray:
    """Diagonal adaptation entries from innovation matching.

    The sample output covariance over the window and the covariance the
    filter predicted for the same innovations are both mapped to state
    space through the last Kalman gain; each diagonal adaptation entry
    relaxes toward their ratio.  Innovations larger than modelled
    (process noise understated) grow A, smaller ones shrink it; a
    statistically consistent filter holds A at its fixed point.  Raises
    InsufficientSamples until the window is full (caller keeps the
    previous adaptation).
    """
    if len(fs.residuals) < cfg.window:
        raise InsufficientSamples(
            f"{len(fs.residuals)} residuals buffered, {cfg.window} required")
    if fs.gain is None or fs.innov_cov is None:
        raise InsufficientSamples("no update has run yet")

    res = np.asarray(fs.residuals[-cfg.window:])
    s_bar = res.T @ res / (cfg.window - 1)
    actual = np.diag(fs.gain @ s_bar @ fs.gain.T)
    expected = np.diag(fs.gain @ fs.innov_cov @ fs.gain.T)

    a_new = fs.a_diag.copy()
    usable = expected > 1e-300
    ratio = actual[usable] / expected[usable]
    a_new[usable] = (fs.a_diag[usable] ** (1.0 - cfg.leak)
                     * (1.0 - cfg.gain + cfg.gain * ratio))
    return np.clip(a_new, cfg.a_min, cfg.a_max)


def fuzzy_factor(dynamics_signal: float,
                 supervisor: FuzzySupervisor = FuzzySupervisor()) -> float:
    """Tracking-strength multiplier from the dynamics-intensity signal.

    Membership degrees of the (clamped) signal in the steady/moderate/
    intense triangles weight the singleton rule outputs; the centroid of
    those weighted outputs is the factor.  Monotone nondecreasing, equal
    to phi_low at 0 and phi_high from the intense center on.
    """
    if dynamics_signal < 0.0:
        raise ValueError("dynamics_signal must be non-negative")
    x = min(dynamics_signal, supervisor.centers[2])
    c = supervisor.centers

    def triangle(left: float, center: float, right: float) -> float:
        if x <= left or x >= right:
            return 1.0 if x == center else 0.0
        if x <= center:
            return (x - left) / (center - left) if center > left else 1.0
        return (right - x) / (right - center)

    memberships = (
        triangle(c[0] - (c[1] - c[0]), c[0], c[1]),
        triangle(c[0], c[1], c[2]),
        triangle(c[1], c[2], c[2] + (c[2] - c[1])),
    )
    total = sum(memberships)
    return sum(m * out for m, out in zip(memberships, supervisor.outputs)) / total
