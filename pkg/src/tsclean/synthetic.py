"""Seeded synthetic load-like series for tests, studies and the sample file."""
from __future__ import annotations

import numpy as np


def ar1(n: int, phi: float, sd: float, rng) -> np.ndarray:
    """Stationary AR(1) path with innovation standard deviation ``sd``."""
    e = rng.normal(0.0, sd, n)
    out = np.empty(n)
    out[0] = e[0] / np.sqrt(1 - phi**2)
    for t in range(1, n):
        out[t] = phi * out[t - 1] + e[t]
    return out


def seasonal_profile(n: int, period: int, amplitude: float, harmonics: int = 3, phase: float = 0.0):
    t = np.arange(n)
    out = np.zeros(n)
    for h in range(1, harmonics + 1):
        out += amplitude / h * np.sin(2 * np.pi * h * t / period + phase * h)
    return out


def make_load_series(n: int = 17520, seasonalities=(48, 336), seed: int = 0, level: float = 1000.0,
                     daily_amplitude: float = 200.0, weekly_amplitude: float = 80.0,
                     trend_amplitude: float = 100.0, phi: float = 0.8, noise_sd: float = 15.0):
    """Trend + daily/weekly seasonality + AR(1) noise, half-hourly by default.

    Returns
    -------
    y : ndarray of shape (n,)
    parts : dict
        ``trend``, ``seasonal`` (list per period) and ``noise`` generators.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    trend = level + trend_amplitude * np.cos(2 * np.pi * t / max(n, 1)) + 0.002 * t
    seasonal = []
    amps = [daily_amplitude, weekly_amplitude]
    for k, s in enumerate(seasonalities):
        amp = amps[k] if k < len(amps) else weekly_amplitude
        seasonal.append(seasonal_profile(n, s, amp, phase=0.3 * (k + 1)))
    noise = ar1(n, phi, noise_sd, rng)
    y = trend + np.sum(seasonal, axis=0) + noise
    return y, {"trend": trend, "seasonal": seasonal, "noise": noise}
