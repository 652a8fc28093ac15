"""
Coincidence counting, joint spectral intensity and fringe analysis.

The count model is linear: a channel pair with two-photon probability ``p``
collects ``flux * T * eta_s * eta_i * p`` true coincidences on top of a
constant accidental floor ``accidental_rate * T``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .lattice import _check_idler, _check_signal


@dataclass(frozen=True)
class DetectionConfig:
    """Detector pair and source settings.

    Rates are per second; ``accidental_rate`` is per channel pair.
    """

    eta_signal: float = 1.0
    eta_idler: float = 1.0
    pair_flux: float = 1.0
    integration_time: float = 1.0
    accidental_rate: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("eta_signal", "eta_idler"):
            eta = getattr(self, name)
            if not 0 < eta <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {eta}")
        for name in ("pair_flux", "integration_time", "accidental_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    @property
    def pair_counts(self):
        """Detected pairs per unit two-photon probability."""
        return self.pair_flux * self.integration_time * self.eta_signal * self.eta_idler

    @property
    def accidental_counts(self):
        return self.accidental_rate * self.integration_time

    def with_car(self, car, probability=1.0):
        """Copy whose accidental floor gives coincidence-to-accidental ratio ``car`` at ``probability``."""
        rate = self.pair_flux * self.eta_signal * self.eta_idler * probability / car
        return replace(self, accidental_rate=rate)


@dataclass(frozen=True)
class CoincidenceRecord:
    signal_channel: object
    idler_channel: object
    counts: int
    accidentals: float = 0.0
    clipped: bool = False

    def __post_init__(self):
        if self.counts < 0:
            raise ValueError(f"counts must be >= 0, got {self.counts}")


@dataclass(frozen=True)
class CoincidenceTable:
    records: tuple = field(default_factory=tuple)
    integration_time: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def counts(self):
        return np.array([r.counts for r in self.records])


def coincidence_probability(state, signal_bin, idler_bin):
    """``|c[signal_bin, idler_bin]|^2`` before detector efficiency."""
    _check_signal(state.lattice, signal_bin)
    _check_idler(state.lattice, idler_bin)
    return abs(state[(signal_bin, idler_bin)]) ** 2


def expected_counts(state, signal_bin, idler_bin, cfg):
    return counts_from_probability(coincidence_probability(state, signal_bin, idler_bin), cfg)


def counts_from_probability(probability, cfg):
    return cfg.pair_counts * probability + cfg.accidental_counts


def make_rng(cfg=None, seed=None):
    if seed is None:
        seed = 0 if cfg is None else cfg.rng_seed
    return np.random.default_rng(seed)


def sample_counts(expected, cfg=None, rng=None, size=None):
    """Poisson draw(s) with mean ``expected``.

    A fresh generator seeded from ``cfg.rng_seed`` is used unless ``rng`` is
    given, so repeated calls with the same config are reproducible.
    """
    expected = np.asarray(expected, dtype=float)
    if np.any(expected < 0):
        raise ValueError("expected counts must be >= 0")
    if rng is None:
        rng = make_rng(cfg)
    draw = rng.poisson(expected, size=size)
    if np.ndim(draw) == 0:
        return int(draw)
    return draw


def build_table(state, channels, cfg, sample=True):
    """Coincidence table over ``channels`` = [(signal_bin, idler_bin), ...].

    One seeded generator serves the whole table, so the result depends only on
    the seed and the record order.
    """
    rng = make_rng(cfg)
    records = []
    for s, i in channels:
        mean = expected_counts(state, s, i, cfg)
        n = sample_counts(mean, rng=rng) if sample else int(round(mean))
        records.append(CoincidenceRecord(s, i, n, cfg.accidental_counts))
    return CoincidenceTable(records, cfg.integration_time)


def subtract_background(table):
    """Subtract each record's accidental estimate, flooring at zero and flagging clipped rows."""
    out = []
    for r in table.records:
        if r.accidentals == 0:
            out.append(r)
            continue
        diff = r.counts - r.accidentals
        clipped = diff < 0
        out.append(replace(r, counts=max(0.0, diff), accidentals=0.0, clipped=clipped or r.clipped))
    return CoincidenceTable(out, table.integration_time)


def compute_jsi(state, signal_bins, idler_bins, cfg):
    """Expected coincidence counts on the grid ``signal_bins x idler_bins``."""
    signal_bins = list(signal_bins)
    idler_bins = list(idler_bins)
    if not signal_bins or not idler_bins:
        raise ValueError("signal_bins and idler_bins must be non-empty")
    jsi = np.empty((len(signal_bins), len(idler_bins)))
    for a, s in enumerate(signal_bins):
        for b, i in enumerate(idler_bins):
            jsi[a, b] = expected_counts(state, s, i, cfg)
    return jsi


def schmidt_bound(jsi, background=0.0):
    """Schmidt-number lower bound from a joint spectral intensity.

    The amplitude is approximated by ``sqrt(JSI - background)`` with flat phase;
    with ``s_i`` its singular values normalized to ``sum s_i^2 = 1`` the bound is
    ``K = 1 / sum s_i^4``.
    """
    jsi = np.asarray(jsi, dtype=float) - background
    if np.any(jsi < 0):
        jsi = np.clip(jsi, 0.0, None)
    if not np.any(jsi > 0):
        raise ValueError("JSI is identically zero")
    s = np.linalg.svd(np.sqrt(jsi), compute_uv=False)
    p = s**2 / np.sum(s**2)
    return float(1.0 / np.sum(p**2))


def visibility(c_max, c_min):
    """``(C_max - C_min) / (C_max + C_min)``."""
    total = c_max + c_min
    if total == 0:
        raise ValueError("visibility undefined for C_max + C_min = 0")
    return (c_max - c_min) / total


def coincidence_to_accidental(jsi, background):
    return float(np.max(jsi) - background) / background


def fringe_scan(state_builder: Callable, phases: Sequence[float], channel, cfg, sample=False):
    """Coincidences at ``channel = (signal_bin, idler_bin)`` as the programmed phase varies.

    ``state_builder(phase)`` must return the state arriving at the detectors.
    With ``sample=True`` counts are Poisson draws from a single seeded generator.
    """
    phases = list(phases)
    if not phases:
        raise ValueError("phases must be non-empty")
    rng = make_rng(cfg) if sample else None
    s, i = channel
    out = []
    for phi in phases:
        mean = expected_counts(state_builder(phi), s, i, cfg)
        out.append((phi, sample_counts(mean, rng=rng) if sample else mean))
    return out


@dataclass(frozen=True)
class FringeFit:
    amplitude: float
    visibility: float
    offset: float
    floor: float
    residual: float


def fit_fringe(phases, counts, floor=0.0):
    """Least-squares fit of ``A (1 + V cos(phi + phi0)) / 2 + B`` with ``B`` held at ``floor``.

    The model is linear in ``(A/2, A V cos(phi0)/2, -A V sin(phi0)/2)``, so the
    fit is solved exactly with a linear least-squares step.
    """
    phases = np.asarray(phases, dtype=float)
    y = np.asarray(counts, dtype=float) - floor
    if phases.size < 3:
        raise ValueError("need at least three phase points to fit a fringe")
    X = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    c0, c1, c2 = coef
    amp = 2 * c0
    r = np.hypot(c1, c2)
    vis = r / c0 if c0 != 0 else np.nan
    phi0 = float(np.arctan2(-c2, c1))
    resid = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    return FringeFit(float(amp), float(vis), phi0, float(floor), resid)


def dip_metrics(scan):
    """Location, depth and full width at half depth of a dip in ``[(x, y), ...]``.

    The baseline is the larger of the two end points; the width is found by
    linear interpolation of the half-depth crossings on either side of the minimum.

    Returns
    -------
    dict with ``x_min``, ``y_min``, ``baseline``, ``visibility`` and ``fwhm``
    (``nan`` if a crossing is not bracketed by the scan).
    """
    x = np.array([p[0] for p in scan], dtype=float)
    y = np.array([p[1] for p in scan], dtype=float)
    i = int(np.argmin(y))
    base = max(y[0], y[-1])
    half = (base + y[i]) / 2

    def crossing(idx):
        for a, b in zip(idx[:-1], idx[1:]):
            if (y[a] - half) * (y[b] - half) <= 0 and y[a] != y[b]:
                return x[a] + (half - y[a]) * (x[b] - x[a]) / (y[b] - y[a])
        return np.nan

    left = crossing(list(range(i, -1, -1)))
    right = crossing(list(range(i, len(x))))
    return {
        "x_min": float(x[i]),
        "y_min": float(y[i]),
        "baseline": float(base),
        "visibility": float(visibility(base, y[i])) if base + y[i] > 0 else np.nan,
        "fwhm": float(right - left),
    }

