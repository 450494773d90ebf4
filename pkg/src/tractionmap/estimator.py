"""Online traction-parameter estimation from drive-train and speed signals.

The 10-entry state is [omega_w1..4, v, mu_1..4, rho_s]: wheel speeds,
vehicle ground speed, per-wheel adhesion coefficients and the soil
rolling-resistance coefficient.  Wheel and vehicle dynamics are integrated
with a single fourth-order Runge-Kutta step per sample; the unknown
parameters are modelled as constant over a step.  Wheel speeds and ground
speed are measured; drive torques, front axle load and drawbar pull are
known inputs.

Per sample the estimator also extracts the adhesion-curve scale parameter
from the estimated (mu, slip) pairs, given a fixed curve family
(p, alpha1, alpha2).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from . import ukf
from .dynamics import (
    GRAVITY,
    DegenerateSlip,
    VehicleParams,
    invert_mu_for_a,
    rolling_radius,
    slip,
    wheel_vertical_forces,
)

STATE_DIM = 10
# State-vector layout.
IDX_OMEGA = slice(0, 4)
IDX_V = 4
IDX_MU = slice(5, 9)
IDX_RHO_S = 9

# Soft bounds on the parameter estimates; excursions are clamped and counted.
MU_BOUNDS = (-0.2, 1.5)
RHO_S_BOUNDS = (0.0, 0.5)

# Acceptance range for a per-wheel curve-scale extraction; the curve scale
# is positive by definition and values far above any plausible adhesion
# asymptote indicate a degenerate (mu, slip) geometry, not information.
CURVE_SCALE_RANGE = (0.0, 5.0)

# Saturation scales of the dynamics-intensity signal.
TORQUE_RATE_SCALE = 1000.0   # N*m/s per wheel
ACCEL_SCALE = 1.0            # m/s^2

_SAMPLE_PERIOD = 0.1  # s, 10 Hz


@dataclass(frozen=True)
class TractionState:
    """Named view of the 10-entry state vector (layout above)."""

    omega_w: tuple[float, float, float, float]
    v: float
    mu: tuple[float, float, float, float]
    rho_s: float

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "TractionState":
        x = np.asarray(x, dtype=float)
        return cls(omega_w=tuple(x[IDX_OMEGA]), v=float(x[IDX_V]),
                   mu=tuple(x[IDX_MU]), rho_s=float(x[IDX_RHO_S]))

    def as_vector(self) -> np.ndarray:
        return np.array([*self.omega_w, self.v, *self.mu, self.rho_s])


@dataclass(frozen=True)
class TractionInput:
    """Known inputs for one sample: drive torques, front axle load, drawbar."""

    m_d: tuple[float, float, float, float]   # N*m per wheel
    f_zf: float                              # N, front axle vertical force
    f_dx: float                              # N, longitudinal drawbar pull

    def __post_init__(self) -> None:
        if self.f_zf < 0.0:
            raise ValueError("f_zf must be non-negative")


@dataclass(frozen=True)
class TractionMeasurement:
    """Measured outputs for one sample: wheel speeds and ground speed."""

    omega_w: tuple[float, float, float, float]   # rad/s
    v: float                                     # m/s

    def __post_init__(self) -> None:
        if not all(map(math.isfinite, (*self.omega_w, self.v))):
            raise ValueError("measurement must be finite")

    def as_vector(self) -> np.ndarray:
        return np.array([*self.omega_w, self.v])


@dataclass(frozen=True)
class EstimateRecord:
    """One estimation result: traction parameters plus extraction metadata.

    ``curve_scale`` is the adhesion-curve parameter averaged over the
    wheels whose slip allowed inversion; None when no wheel did.
    """

    t: float
    position: tuple[float, float]
    mu: tuple[float, float, float, float]
    rho_s: float
    slip: tuple[float, float, float, float]
    curve_scale: float | None
    cov_diag: tuple[float, ...]


def process_model(x: np.ndarray, u: TractionInput, dt: float,
                  params: VehicleParams) -> np.ndarray:
    """One RK4 step of the wheel/vehicle dynamics; parameters held constant.

    Accepts a single state (10,) or a stack (N, 10) and advances each row.
    Vertical forces come from the front-axle measurement and static rear
    balance, so the rolling radii are constant over the step.
    """
    if not 0.0 < dt <= 0.1:
        raise ValueError("dt must be in (0, 0.1]")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("state must be finite")

    f_z = np.array(wheel_vertical_forces(u.f_zf, params))
    r_d = np.array([rolling_radius(f, params) for f in f_z])
    m_d = np.asarray(u.m_d, dtype=float)
    m = params.vehicle_mass

    def deriv(state: np.ndarray) -> np.ndarray:
        mu = state[..., IDX_MU]
        rho_s = state[..., IDX_RHO_S]
        out = np.zeros_like(state)
        out[..., IDX_OMEGA] = (m_d - r_d * (mu + params.tire_rr_coeff) * f_z) \
            / params.wheel_inertia
        out[..., IDX_V] = ((mu * f_z).sum(axis=-1) - u.f_dx
                           - rho_s * m * GRAVITY) / m
        return out

    k1 = deriv(x)
    k2 = deriv(x + 0.5 * dt * k1)
    k3 = deriv(x + 0.5 * dt * k2)
    k4 = deriv(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def measurement_model(x: np.ndarray) -> np.ndarray:
    """Output projection: the five measured speeds [omega_1..4, v]."""
    return np.asarray(x, dtype=float)[..., :5]


def dynamics_intensity(recent_inputs, recent_measurements) -> float:
    """Normalized maneuver-intensity signal in [0, 1].

    Combines the largest per-wheel torque rate of change (consecutive
    samples) with the window-averaged speed change; each term saturates at
    its scale, the sum is clamped.  Constant inputs and speeds give 0.
    """
    inputs = list(recent_inputs)
    meas = list(recent_measurements)
    if not inputs or not meas:
        raise ValueError("windows must be nonempty")

    torque_rate = 0.0
    for prev, cur in zip(inputs, inputs[1:]):
        for a, b in zip(prev.m_d, cur.m_d):
            torque_rate = max(torque_rate, abs(b - a))
    torque_rate /= _SAMPLE_PERIOD

    if len(meas) >= 2:
        span = (len(meas) - 1) * _SAMPLE_PERIOD
        accel = abs(meas[-1].v - meas[0].v) / span
    else:
        accel = 0.0

    raw = torque_rate / TORQUE_RATE_SCALE + accel / ACCEL_SCALE
    return min(1.0, max(0.0, raw))


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning of the traction AUKF-FS."""

    dt: float = _SAMPLE_PERIOD
    q_diag: tuple = (1e-2,) * 5 + (1e-4,) * 4 + (1e-5,)
    sigma_omega: float = 0.01     # rad/s measurement noise
    sigma_v: float = 0.02         # m/s measurement noise
    init_mu: float = 0.3
    init_rho_s: float = 0.05
    init_p_diag: tuple = (0.1 ** 2,) * 5 + (0.2 ** 2,) * 4 + (0.05 ** 2,)
    scaling: ukf.UnscentedScaling = ukf.UnscentedScaling()
    adaptation: ukf.AdaptationConfig = ukf.AdaptationConfig()
    supervisor: ukf.FuzzySupervisor = ukf.FuzzySupervisor()
    adapt_enabled: bool = True
    fuzzy_enabled: bool = True
    intensity_window: int = 10

    def noise_spec(self) -> ukf.NoiseSpec:
        r = np.diag([max(self.sigma_omega ** 2, 1e-8)] * 4
                    + [max(self.sigma_v ** 2, 1e-8)])
        return ukf.NoiseSpec(q=np.diag(self.q_diag), r=r)


class TractionEstimator:
    """Sequential AUKF-FS over one telemetry stream.

    The curve family (p, alpha1, alpha2) is fixed for the run; only the
    scale parameter is identified per sample.  One instance is owned by
    one stream; instances are independent.
    """

    def __init__(self, vehicle: VehicleParams,
                 curve_family: tuple[float, float, float],
                 config: EstimatorConfig = EstimatorConfig()):
        self.vehicle = vehicle
        self.curve_family = curve_family
        self.config = config
        self.noise = config.noise_spec()
        self.model = ukf.NonlinearModel(
            state_dim=STATE_DIM, input_dim=6, output_dim=5,
            f=lambda x, u: process_model(x, u, config.dt, vehicle),
            h=measurement_model)
        self.state: ukf.FilterState | None = None
        self.clamp_violations = 0
        self._inputs: deque = deque(maxlen=config.intensity_window)
        self._measurements: deque = deque(maxlen=config.intensity_window)

    def initialize(self, y: TractionMeasurement) -> None:
        """Seed speeds from the first measurement, parameters from priors."""
        mean = np.empty(STATE_DIM)
        mean[:5] = y.as_vector()
        mean[IDX_MU] = self.config.init_mu
        mean[IDX_RHO_S] = self.config.init_rho_s
        self.state = ukf.FilterState.initial(
            mean, np.diag(self.config.init_p_diag))
        self._measurements.append(y)

    def step(self, u: TractionInput, y: TractionMeasurement,
             t: float = 0.0,
             position: tuple[float, float] = (0.0, 0.0)) -> EstimateRecord:
        """One supervise/adapt/predict/update cycle, then parameter extraction."""
        if self.state is None:
            raise RuntimeError("call initialize() with the first measurement")
        cfg = self.config
        self._inputs.append(u)
        fs = self.state

        if cfg.fuzzy_enabled:
            signal = dynamics_intensity(self._inputs, self._measurements)
            fs = replace(fs, phi=ukf.fuzzy_factor(signal, cfg.supervisor))
        if cfg.adapt_enabled:
            try:
                fs = replace(fs, a_diag=ukf.adapt_q(fs, cfg.adaptation))
            except ukf.InsufficientSamples:
                pass

        fs = ukf.predict(fs, self.model, u, self.noise, cfg.scaling)
        fs = ukf.update(fs, self.model, y.as_vector(), self.noise, cfg.scaling,
                        residual_window=cfg.adaptation.window)
        fs = self._clamp_parameters(fs)
        self.state = fs
        self._measurements.append(y)
        return self._make_record(fs, u, t, position)

    def _clamp_parameters(self, fs: ukf.FilterState) -> ukf.FilterState:
        mean = fs.mean
        clipped = mean.copy()
        clipped[IDX_MU] = np.clip(mean[IDX_MU], *MU_BOUNDS)
        clipped[IDX_RHO_S] = np.clip(mean[IDX_RHO_S], *RHO_S_BOUNDS)
        if not np.array_equal(clipped, mean):
            self.clamp_violations += 1
            return replace(fs, mean=clipped)
        return fs

    def _make_record(self, fs: ukf.FilterState, u: TractionInput,
                     t: float, position: tuple[float, float]) -> EstimateRecord:
        f_z = wheel_vertical_forces(u.f_zf, self.vehicle)
        v_hat = float(fs.mean[IDX_V])
        mu_hat = [float(m) for m in fs.mean[IDX_MU]]
        slips = tuple(
            slip(v_hat, float(fs.mean[i]), rolling_radius(f_z[i], self.vehicle))
            for i in range(4))

        p, alpha1, alpha2 = self.curve_family
        scales = []
        for mu_i, s_i in zip(mu_hat, slips):
            try:
                scale = invert_mu_for_a(mu_i, s_i, p, alpha1, alpha2)
            except DegenerateSlip:
                continue
            if CURVE_SCALE_RANGE[0] < scale <= CURVE_SCALE_RANGE[1]:
                scales.append(scale)
        curve_scale = float(np.mean(scales)) if scales else None

        return EstimateRecord(
            t=t, position=position, mu=tuple(mu_hat),
            rho_s=float(fs.mean[IDX_RHO_S]), slip=slips,
            curve_scale=curve_scale,
            cov_diag=tuple(np.diag(fs.cov)))


def observability_check(params: VehicleParams, x0: np.ndarray,
                        dt: float = _SAMPLE_PERIOD,
                        f_zf: float | None = None) -> bool:
    """Numerical observability of the linearized model at ``x0``.

    Builds the discrete observability matrix [C; CA; ...; CA^(n-1)] from a
    central-difference Jacobian of the process model and checks for full
    rank.  The Jacobian does not depend on torques or drawbar, so a static
    front-axle load is a sufficient stand-in input.
    """
    x0 = np.asarray(x0, dtype=float)
    if f_zf is None:
        f_zf = 0.5 * (params.vehicle_mass - 4.0 * params.wheel_mass) * GRAVITY
    u = TractionInput(m_d=(0.0,) * 4, f_zf=f_zf, f_dx=0.0)

    n = STATE_DIM
    jac = np.empty((n, n))
    for j in range(n):
        h = 1e-6 * max(1.0, abs(x0[j]))
        xp, xm = x0.copy(), x0.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (process_model(xp, u, dt, params)
                     - process_model(xm, u, dt, params)) / (2.0 * h)

    c = np.zeros((5, n))
    c[:5, :5] = np.eye(5)
    blocks = [c]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ jac)
    obs = np.vstack(blocks)
    return int(np.linalg.matrix_rank(obs)) == n
