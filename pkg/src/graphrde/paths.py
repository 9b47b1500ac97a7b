"""Continuous paths from discrete, possibly partially observed series.

Each node's observed samples are interpolated with a natural cubic
spline (zero second derivative at both ends), one spline per channel.
A normalized time channel is appended as the last path channel, so a
series with D data channels yields a (D+1)-channel path.  The time
channel is the identity map rescaled to [0, 1] over the window and is
evaluated exactly rather than splined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError


@dataclass
class RawSeries:
    """Discrete multichannel series on a shared time grid.

    ``values``: (nodes, timesteps, channels) float64.
    ``mask``: (nodes, timesteps) bool; True where observed.
    ``times``: (timesteps,) strictly increasing float64.
    """

    values: np.ndarray
    mask: np.ndarray
    times: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        self.times = np.asarray(self.times, dtype=np.float64)
        if self.values.ndim != 3:
            raise DataError(f"values must be (nodes, timesteps, channels), got {self.values.shape}")
        nodes, steps, _ = self.values.shape
        if self.mask.shape != (nodes, steps):
            raise DataError(f"mask shape {self.mask.shape} does not match values {self.values.shape}")
        if self.times.shape != (steps,):
            raise DataError(f"times shape {self.times.shape} does not match {steps} timesteps")
        if steps < 2:
            raise DataError("a series needs at least two timesteps")
        if not np.all(np.diff(self.times) > 0):
            raise DataError("times must be strictly increasing")
        if not np.isfinite(self.values[self.mask]).all():
            raise DataError("observed values must be finite")
        for v in range(nodes):
            if not self.mask[v, 0] or not self.mask[v, -1]:
                raise DataError(f"node {v}: first and last timestep must be observed")
            if int(self.mask[v].sum()) < 2:
                raise DataError(f"node {v}: needs at least two observed timesteps")

    @property
    def num_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def num_channels(self) -> int:
        return self.values.shape[2]


@dataclass
class SplinePath:
    """Natural cubic interpolant per node/channel plus an exact time channel.

    For node v the spline knots are that node's observed timesteps.  On
    interval i the channel value is ``a + b*dt + c*dt^2 + d*dt^3`` with
    ``dt = t - knot_i``.  ``coeffs[v]`` has shape (intervals, channels, 4)
    storing (a, b, c, d); ``knots[v]`` the observed times.  ``grid`` is
    the full shared time grid (including unobserved points), used for
    window placement downstream.
    """

    knots: list[np.ndarray]
    coeffs: list[np.ndarray]
    grid: np.ndarray
    t_start: float
    t_end: float
    data_channels: int

    @property
    def num_nodes(self) -> int:
        return len(self.knots)

    @property
    def num_channels(self) -> int:
        """Path dimensionality: data channels plus the time channel."""
        return self.data_channels + 1


def _natural_coefficients(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Natural cubic coefficients for knots x (n,) and values y (n, C).

    Returns (n-1, C, 4) arrays of (a, b, c, d).  The tridiagonal system
    for the quadratic coefficients is solved with the Thomas algorithm,
    shared across channels.
    """
    n = len(x)
    h = np.diff(x)  # (n-1,)
    c = np.zeros((n, y.shape[1]))
    if n > 2:
        slopes = np.diff(y, axis=0) / h[:, None]
        rhs = 3.0 * (slopes[1:] - slopes[:-1])  # (n-2, C)
        lower = h[:-1].copy()  # sub-diagonal
        diag = 2.0 * (h[:-1] + h[1:])
        upper = h[1:].copy()
        m = n - 2
        # Thomas forward sweep
        cp = np.zeros(m)
        dp = np.zeros((m, y.shape[1]))
        cp[0] = upper[0] / diag[0]
        dp[0] = rhs[0] / diag[0]
        for i in range(1, m):
            denom = diag[i] - lower[i] * cp[i - 1]
            cp[i] = upper[i] / denom
            dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / denom
        sol = np.zeros((m, y.shape[1]))
        sol[m - 1] = dp[m - 1]
        for i in range(m - 2, -1, -1):
            sol[i] = dp[i] - cp[i] * sol[i + 1]
        c[1:-1] = sol
    a = y[:-1]
    b = np.diff(y, axis=0) / h[:, None] - h[:, None] * (2.0 * c[:-1] + c[1:]) / 3.0
    d = (c[1:] - c[:-1]) / (3.0 * h[:, None])
    return np.stack([a, b, c[:-1], d], axis=-1)


def fit_spline(series: RawSeries) -> SplinePath:
    """Interpolate every node's observed samples with natural cubic splines."""
    knots: list[np.ndarray] = []
    coeffs: list[np.ndarray] = []
    for v in range(series.num_nodes):
        obs = series.mask[v]
        x = series.times[obs]
        y = series.values[v][obs]  # (n_obs, C)
        knots.append(x)
        coeffs.append(_natural_coefficients(x, y))
    return SplinePath(
        knots=knots,
        coeffs=coeffs,
        grid=series.times.copy(),
        t_start=float(series.times[0]),
        t_end=float(series.times[-1]),
        data_channels=series.num_channels,
    )


def eval_path(path: SplinePath, node: int, t: float) -> np.ndarray:
    """Path value at time t for one node: D spline channels plus time.

    No extrapolation: t outside [t_start, t_end] is a domain error.
    """
    if not (path.t_start <= t <= path.t_end):
        raise DomainError(
            f"t={t} outside path domain [{path.t_start}, {path.t_end}]"
        )
    x = path.knots[node]
    i = int(np.clip(np.searchsorted(x, t, side="right") - 1, 0, len(x) - 2))
    dt = t - x[i]
    a, b, c, d = (path.coeffs[node][i, :, k] for k in range(4))
    value = a + dt * (b + dt * (c + dt * d))
    span = path.t_end - path.t_start
    time_channel = (t - path.t_start) / span
    return np.concatenate([value, [time_channel]])


def sample_chords(path: SplinePath, node: int, window: tuple[float, float], substeps: int) -> np.ndarray:
    """``substeps + 1`` evenly spaced path samples over a window.

    Returns an array of shape (substeps + 1, D + 1) whose rows are the
    vertices of the chord polyline approximating the path on the window.
    """
    lo, hi = window
    if substeps < 1:
        raise DomainError(f"substeps must be >= 1, got {substeps}")
    if not (path.t_start <= lo < hi <= path.t_end):
        raise DomainError(
            f"window [{lo}, {hi}] outside path domain [{path.t_start}, {path.t_end}]"
        )
    ts = np.linspace(lo, hi, substeps + 1)
    return np.stack([eval_path(path, node, float(t)) for t in ts])
