"""Nonlinear least-squares backend shared by the calibration routines.

Four model shapes cover everything the calibration pipeline fits: a
Lorentzian resonance line, a plain cosine (period-parametrized, for Rabi
amplitude sweeps), a damped cosine with a decaying offset (error
amplification), and a straight line.  Starting values come from deterministic
heuristics (peak position, FFT period, log-envelope slope) plus a small fixed
multistart, so fits are reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit


class FitError(RuntimeError):
    """Raised when no start converges; carries the best residual seen."""

    def __init__(self, message: str, best_residual: float = math.inf):
        super().__init__(message)
        self.best_residual = best_residual


def lorentzian(x, amplitude, center, width, offset):
    return amplitude * width**2 / ((x - center) ** 2 + width**2) + offset


def cosine(x, amplitude, period, phase, offset):
    return amplitude * np.cos(2.0 * np.pi * x / period + phase) + offset


def damped_cosine(x, amplitude, decay, omega, phase, offset, offset_decay):
    """amplitude e^{-decay x} cos(omega x + phase) + offset + offset_decay e^{-decay x}.

    The decaying offset term tracks populations relaxing toward the uniform
    mixture rather than toward a constant.
    """
    env = np.exp(-decay * np.asarray(x, dtype=float))
    return amplitude * env * np.cos(omega * np.asarray(x, dtype=float) + phase) \
        + offset + offset_decay * env


def line(x, slope, intercept):
    return slope * np.asarray(x, dtype=float) + intercept


MODELS = {
    "lorentzian": lorentzian,
    "cosine": cosine,
    "damped_cosine": damped_cosine,
    "line": line,
}

_N_PARAMS = {"lorentzian": 4, "cosine": 4, "damped_cosine": 6, "line": 2}


@dataclass(frozen=True)
class FitResult:
    model: str
    params: np.ndarray
    covariance: np.ndarray
    residual_norm: float

    def __getitem__(self, i):
        return self.params[i]


def _fft_period(xs: np.ndarray, ys: np.ndarray) -> float:
    """Dominant oscillation period from the discrete spectrum (uniform grids)."""
    n = len(xs)
    detrended = ys - ys.mean()
    spec = np.abs(np.fft.rfft(detrended))
    if len(spec) <= 1:
        return xs.max() - xs.min() or 1.0
    k = int(np.argmax(spec[1:])) + 1
    span = xs.max() - xs.min()
    return span / k if k else span


def _starts_lorentzian(xs, ys):
    k = int(np.argmax(ys))
    off = float(np.min(ys))
    amp = float(ys[k] - off)
    span = xs.max() - xs.min()
    for width in (span / 20, span / 8, span / 4):
        yield [amp, float(xs[k]), width, off]
    k2 = int(np.argmin(ys))
    yield [float(ys[k2] - np.max(ys)), float(xs[k2]), span / 10, float(np.max(ys))]


def _starts_cosine(xs, ys):
    off = float(ys.mean())
    amp = float((ys.max() - ys.min()) / 2.0) or 1.0
    p = _fft_period(xs, ys)
    for period in (p, p / 2, 2 * p):
        for phase in (0.0, math.pi):
            yield [amp, period, phase, off]


def _starts_damped_cosine(xs, ys):
    off = float(ys[-max(1, len(ys) // 5):].mean())
    amp = float(ys.max() - off) or 1.0
    p = _fft_period(xs, ys)
    span = float(xs.max() - xs.min()) or 1.0
    for period in (p, p / 2, 2 * p):
        omega = 2 * math.pi / period if period else 1.0
        for decay in (0.0, 1.0 / span, 5.0 / span):
            yield [amp, decay, omega, 0.0, off, 0.0]


def _starts_line(xs, ys):
    a = np.polyfit(xs, ys, 1)
    yield [float(a[0]), float(a[1])]


_STARTS = {
    "lorentzian": _starts_lorentzian,
    "cosine": _starts_cosine,
    "damped_cosine": _starts_damped_cosine,
    "line": _starts_line,
}


def fit_curve(model: str, xs, ys, p0=None, sigma=None,
              bounds=(-np.inf, np.inf)) -> FitResult:
    """Least-squares fit of one of the named models.

    Tries the caller-supplied start first, then the model's deterministic
    heuristic starts, and keeps the best converged solution.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {sorted(MODELS)}")
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-d arrays of equal length")
    npar = _N_PARAMS[model]
    if len(xs) < npar + 1:
        raise ValueError(f"{model} fit needs at least {npar + 1} points, got {len(xs)}")
    fn = MODELS[model]

    starts = []
    if p0 is not None:
        starts.append(list(p0))
    starts.extend(_STARTS[model](xs, ys))

    best = None
    best_residual = math.inf
    for start in starts:
        try:
            popt, pcov = curve_fit(fn, xs, ys, p0=start, sigma=sigma,
                                   bounds=bounds, maxfev=20000,
                                   absolute_sigma=sigma is not None,
                                   ftol=1e-14, xtol=1e-14, gtol=1e-14)
        except (RuntimeError, ValueError):
            continue
        if not np.all(np.isfinite(popt)):
            continue
        resid = float(np.linalg.norm(fn(xs, *popt) - ys))
        best_residual = min(best_residual, resid)
        if best is None or resid < best[0]:
            best = (resid, popt, pcov)
        if resid < 1e-12:
            break
    if best is None:
        raise FitError(f"{model} fit failed to converge", best_residual)
    resid, popt, pcov = best
    if not np.all(np.isfinite(pcov)) and resid > 1e-8 * max(1.0, float(np.abs(ys).max())):
        # singular Jacobian with a poor fit: rank-deficient data; a singular
        # covariance alongside an essentially perfect fit just marks unused
        # directions (e.g. the phase of a zero-amplitude cosine) and passes
        raise FitError(f"{model} fit is rank deficient (singular covariance)", resid)
    return FitResult(model=model, params=popt, covariance=pcov, residual_norm=resid)
