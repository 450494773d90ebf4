"""Independent reference implementations used to check the package.

Everything here is deliberately written with a different algorithm than
the code under test: the Kalman filter in closed matrix form, the band
interpolation over an explicit all-pairs distance matrix, and the traction
equilibrium by bisection on the adhesion curve.
"""

from __future__ import annotations

import numpy as np


class LinearKalmanFilter:
    """Textbook closed-form Kalman filter for x' = F x + q, y = H x + r."""

    def __init__(self, f_mat, h_mat, q, r, x0, p0):
        self.f = np.asarray(f_mat, dtype=float)
        self.h = np.asarray(h_mat, dtype=float)
        self.q = np.asarray(q, dtype=float)
        self.r = np.asarray(r, dtype=float)
        self.x = np.asarray(x0, dtype=float).copy()
        self.p = np.asarray(p0, dtype=float).copy()

    def predict(self):
        self.x = self.f @ self.x
        self.p = self.f @ self.p @ self.f.T + self.q

    def update(self, y):
        s = self.h @ self.p @ self.h.T + self.r
        k = self.p @ self.h.T @ np.linalg.inv(s)
        self.x = self.x + k @ (np.asarray(y) - self.h @ self.x)
        self.p = self.p - k @ s @ k.T


def brute_force_interpolate(values: np.ndarray, counts: np.ndarray,
                            resolution: float, eps: tuple[float, float, float],
                            weights: tuple[float, float, float]):
    """Reference band interpolation via an explicit all-pairs distance matrix.

    eps = (low, mid, high) in meters, weights = (low, mid, high).  Returns
    (values, counts) arrays of the interpolated map.
    """
    w, l, layers = values.shape
    eps_low, eps_mid, eps_high = (e / resolution for e in eps)
    w_low, w_mid, w_high = weights

    idx = np.array([(i, j) for i in range(w) for j in range(l)])
    dist = (np.abs(idx[:, None, 0] - idx[None, :, 0])
            + np.abs(idx[:, None, 1] - idx[None, :, 1])).astype(float)
    filled = (counts > 0).reshape(-1)
    flat = values.reshape(-1, layers)

    bands = [
        (dist <= eps_high, w_high),
        ((dist > eps_high) & (dist <= eps_mid), w_mid),
        ((dist > eps_mid) & (dist <= eps_low), w_low),
    ]
    out_vals = np.zeros_like(flat)
    out_counts = np.zeros(w * l, dtype=int)
    for cell in range(w * l):
        acc = np.zeros(layers)
        weight_sum = 0.0
        for mask, band_w in bands:
            sel = mask[cell] & filled
            if np.any(sel):
                acc += band_w * flat[sel].mean(axis=0)
                weight_sum += band_w
        if weight_sum > 0.0:
            out_vals[cell] = acc / weight_sum
            out_counts[cell] = 1
    return out_vals.reshape(w, l, layers), out_counts.reshape(w, l)


def steady_state_slip(soil, vehicle, f_dx: float, tol: float = 1e-12) -> float:
    """Cruise-equilibrium slip: mu(s) * m g = F_dx + rho_s m g, by bisection."""
    from tractionmap.dynamics import GRAVITY, mu_curve

    mg = vehicle.vehicle_mass * GRAVITY
    target = (f_dx + soil.rho_s * mg) / mg
    lo, hi = 0.0, 0.999999
    if mu_curve(hi, soil) < target:
        raise ValueError("drawbar exceeds traction capability")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mu_curve(mid, soil) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
