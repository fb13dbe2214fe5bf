"""Synthetic traffic generator: a desk-scale stand-in for real sensor data.

Each node carries a daily sinusoid with its own phase and amplitude,
modulated by a day-of-week factor, plus Gaussian noise and occasional
upward pulses (short spikes are a normal feature of real flow data).
With ``noise`` = 0 the signal is an exact deterministic function of the
(time-of-day, day-of-week) phase: no noise, no pulses.
"""
from __future__ import annotations

import numpy as np

from .data import TrafficSeries

# Monday 2021-01-04 00:00 UTC; keeps day-of-week phases aligned to Monday=0
DEFAULT_START = 1609718400

DOW_FACTOR = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 0.8, 0.75])

PULSE_RATE = 0.04


def generate_series(n_nodes, days, frequency, noise, seed, start=DEFAULT_START):
    if n_nodes < 1 or days < 1 or frequency < 1:
        raise ValueError("n_nodes, days, frequency must all be >= 1")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    steps = days * frequency
    base = rng.uniform(80.0, 120.0, size=n_nodes)
    amp = rng.uniform(20.0, 50.0, size=n_nodes)
    phase = rng.uniform(0.0, 1.0, size=n_nodes)

    series = TrafficSeries(np.zeros((steps, n_nodes)), frequency=frequency, start=start)
    t = np.arange(steps)
    tod = np.array([series.tod_index(k) for k in t])
    dow = np.array([series.dow_index(k) for k in t])
    frac = tod / frequency
    values = base[None, :] + (
        amp[None, :]
        * np.sin(2.0 * np.pi * (frac[:, None] + phase[None, :]))
        * DOW_FACTOR[dow][:, None]
    )
    if noise > 0:
        values = values + rng.normal(0.0, noise, size=values.shape)
        pulses = rng.random(values.shape) < PULSE_RATE
        values = values + pulses * rng.uniform(30.0, 60.0, size=values.shape)
    return TrafficSeries(values, frequency=frequency, start=start)
