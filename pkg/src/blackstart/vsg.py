"""Second-order frequency response of a VSG-controlled grid-forming BESS.

The inverter (virtual inertia ``H``, damping ``D_p``) plus a droop governor
(``K_fp``) measured through a PLL lag (``T_PLL``) reduces to

    df(s) = (1 + s T) / (s^2 + 2 xi wn s + wn^2) * wn^2 dp(s) / (D_p + K_fp)

All internal quantities are per unit; exposed frequency indices are in Hz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class VsgParams:
    inertia: float = 8.0            # H, s
    pll_time_constant: float = 0.05  # T_PLL, s
    damping: float = 1.0            # D_p, pu
    droop_gain: float = 89.0        # K_fp, pu
    base_frequency: float = 60.0    # Hz

    def __post_init__(self):
        if not self.inertia > 0:
            raise ValueError("inertia must be positive")
        if not self.pll_time_constant > 0:
            raise ValueError("PLL time constant must be positive")
        if self.damping < 0 or self.droop_gain < 0:
            raise ValueError("damping and droop gain must be non-negative")
        if not self.damping + self.droop_gain > 0:
            raise ValueError("damping + droop gain must be positive")

    @property
    def stiffness(self) -> float:
        return self.damping + self.droop_gain


@dataclass(frozen=True)
class ResponseShape:
    natural_frequency: float
    damping_ratio: float
    damped_frequency: float
    nadir_time: float
    nadir_ratio: float
    alpha: float
    overdamped: bool = False


@dataclass(frozen=True)
class FreqIndices:
    rocof_max: float  # Hz/s
    f_qss: float      # Hz
    f_nadir: float    # Hz


def response_shape(p: VsgParams) -> ResponseShape:
    """Natural frequency, damping ratio and nadir overshoot constants.

    For an overdamped parameterisation (damping ratio >= 1) the step response
    approaches its final value monotonically; the nadir ratio is then 0 and the
    result is flagged ``overdamped``.
    """
    h, tp, k = p.inertia, p.pll_time_constant, p.stiffness
    wn = math.sqrt(k / (2.0 * h * tp))
    xi = wn * (2.0 * h + p.damping * tp) / (2.0 * k)
    if xi >= 1.0:
        return ResponseShape(wn, xi, 0.0, math.inf, 0.0, 0.0, overdamped=True)
    root = math.sqrt(1.0 - xi * xi)
    wr = wn * root
    alpha = math.sqrt((1.0 - 2.0 * tp * xi * wn + (tp * wn) ** 2) / (1.0 - xi * xi))
    # atan2 picks the branch in (0, pi): the first strictly positive extremum
    t_nadir = math.atan2(wr * tp, xi * wn * tp - 1.0) / wr
    lam = alpha * root * math.exp(-xi * wn * t_nadir)
    return ResponseShape(wn, xi, wr, t_nadir, lam, alpha)


def freq_indices(p: VsgParams, shape: ResponseShape, f_prev: float, delta_p: float,
                 s_nom: float) -> FreqIndices:
    """RoCoF, quasi-steady-state frequency and nadir after a step ``delta_p`` (MW).

    ``delta_p`` is the step change of BESS electrical output; load pick-up is
    positive and drives frequency down.
    """
    if not s_nom > 0:
        raise ValueError("s_nom must be positive")
    fb = p.base_frequency
    dp = delta_p / s_nom
    rocof = -dp / (2.0 * p.inertia) * fb
    qss_dev = dp / p.stiffness * fb
    return FreqIndices(
        rocof_max=rocof,
        f_qss=f_prev - qss_dev,
        f_nadir=f_prev - qss_dev * (1.0 + shape.nadir_ratio),
    )


@dataclass(frozen=True)
class StepResponse:
    t: np.ndarray
    df: np.ndarray     # frequency deviation, pu
    slope: np.ndarray  # d(df)/dt, pu/s

    @property
    def extremum(self) -> float:
        """Deviation of largest magnitude (signed)."""
        return float(self.df[np.argmax(np.abs(self.df))])

    @property
    def asymptote(self) -> float:
        return float(self.df[-1])

    @property
    def peak_slope(self) -> float:
        return float(self.slope[np.argmax(np.abs(self.slope))])


def _state_space(p: VsgParams):
    shape_wn2 = p.stiffness / (2.0 * p.inertia * p.pll_time_constant)
    wn = math.sqrt(shape_wn2)
    xi = wn * (2.0 * p.inertia + p.damping * p.pll_time_constant) / (2.0 * p.stiffness)
    # controllable canonical form of (b1 s + b0)/(s^2 + a1 s + a0)
    a1, a0 = 2.0 * xi * wn, shape_wn2
    gain = shape_wn2 / p.stiffness
    b1, b0 = gain * p.pll_time_constant, gain
    a = np.array([[0.0, 1.0], [-a0, -a1]])
    b = np.array([0.0, 1.0])
    c = np.array([b0, b1])
    return a, b, c, wn


def _rk4_states(a: np.ndarray, g: np.ndarray, dt: float, n: int) -> np.ndarray:
    """States 0..n of classic RK4 on ``x' = a x + g`` from ``x = 0``.

    For a linear system one RK4 step is the affine map ``x -> m x + r``.
    Steps are taken in blocks of about sqrt(n): ``x[iB + j] = m^j x[iB] + z[j]``
    where ``z`` is the trajectory from zero, so only O(sqrt n) Python steps run.
    """
    h = dt * a
    eye = np.eye(len(g))
    h2 = h @ h
    h3 = h2 @ h
    m = eye + h + h2 / 2 + h3 / 6 + h3 @ h / 24
    r = dt * (eye + h / 2 + h2 / 6 + h3 / 24) @ g
    size = max(1, int(math.isqrt(n)))
    powers = np.empty((size, len(g), len(g)))
    z = np.empty((size, len(g)))
    powers[0], z[0] = eye, 0.0
    for j in range(1, size):
        powers[j] = m @ powers[j - 1]
        z[j] = m @ z[j - 1] + r
    m_block = m @ powers[-1]
    z_block = m @ z[-1] + r
    anchors = np.empty((n // size + 1, len(g)))
    anchors[0] = 0.0
    for i in range(1, len(anchors)):
        anchors[i] = m_block @ anchors[i - 1] + z_block
    xs = np.einsum("jkl,il->ijk", powers, anchors) + z[None]
    return xs.reshape(-1, len(g))[:n + 1]


def step_response_oracle(p: VsgParams, delta_p_pu: float, horizon: float | None = None,
                         dt: float | None = None) -> StepResponse:
    """Integrate the frequency model under a load step of ``delta_p_pu`` with RK4.

    The input to the transfer function is ``-delta_p_pu`` (a load increase
    lowers frequency).  ``dt`` must not exceed ``0.05 / wn``.
    """
    a, b, c, wn = _state_space(p)
    dt_max = 0.05 / wn
    if dt is None:
        dt = dt_max / 4.0
    if dt > dt_max * (1 + 1e-12):
        raise ValueError(f"dt={dt} too large; must be <= 0.05/wn = {dt_max:.6g}")
    if horizon is None:
        shape = response_shape(p)
        decay = shape.damping_ratio * wn if not shape.overdamped else wn * (
            shape.damping_ratio - math.sqrt(shape.damping_ratio ** 2 - 1.0))
        horizon = max(25.0 / decay, 5.0 * p.pll_time_constant)
    n = int(math.ceil(horizon / dt))
    u = -delta_p_pu
    xs = _rk4_states(a, b * u, dt, n)
    t = np.arange(n + 1) * dt
    df = xs @ c
    slope = (xs @ a.T + b * u) @ c
    return StepResponse(t=t, df=df, slope=slope)


@dataclass(frozen=True)
class VoltageBound:
    """``lower <= v_sq <= upper``, each side as constant + coefficient on the increment."""
    lower: float
    upper: float


def voltage_bounds(installed: bool, base: float, delta_inc: float, big_m: float) -> VoltageBound:
    """Squared-voltage window imposed by the grid-forming voltage controller.

    An installed BESS pins its bus at ``base + delta_inc``; otherwise the window
    is relaxed by ``big_m`` on both sides.
    """
    if not base > 0:
        raise ValueError("base voltage must be positive")
    target = base + delta_inc
    relax = 0.0 if installed else big_m
    return VoltageBound(target - relax, target + relax)


def droop_voltage_sq(base_voltage: float, droop: float, q: float) -> tuple[float, float]:
    """Squared terminal voltage under V-Q droop and its increment over ``base^2``."""
    v = base_voltage - droop * q
    v_sq = v * v
    return v_sq, v_sq - base_voltage ** 2
