"""
Optical elements acting on frequency-bin two-photon states.

``apply_mask``       -- programmable pulse shaper (amplitude and phase per bin)
``apply_modulator``  -- single-tone electro-optic phase modulator (frequency splitter)
``dispersion_mask``  -- quadratic spectral phase of a length of fiber
``overlap_kernel``   -- overlap of two detuned Lorentzian lines
``dip_scan``         -- two-pair interference versus sideband offset
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np
from scipy import constants
from scipy.optimize import bisect, minimize_scalar
from scipy.special import jv

from .errors import DomainError, LatticeRangeError, NotFoundError
from .lattice import BiphotonState

BESSEL_MAX_ORDER = 60
BESSEL_MAX_ARG = 20.0
TRUNCATION_TOL = 1e-9
# automatic orders leave headroom so that the two-photon loss also stays below TRUNCATION_TOL
AUTO_TRUNCATION_TOL = 1e-12


@dataclass(frozen=True)
class SpectralMask:
    """Per-index complex transmission of a pulse shaper.

    Indices not listed in ``transmission`` get ``0`` in ``"block"`` mode
    and ``1`` in ``"phase"`` mode.
    """

    transmission: Mapping = field(default_factory=dict)
    mode: str = "phase"
    lattice: object = None

    def __post_init__(self):
        if self.mode not in ("block", "phase"):
            raise ValueError(f"mask mode must be 'block' or 'phase', got {self.mode!r}")
        clean = {}
        for j, t in self.transmission.items():
            t = complex(t)
            if abs(t) > 1 + 1e-12:
                raise ValueError(f"|t({j})| = {abs(t):.6g} > 1; masks are passive")
            clean[int(j)] = t
        object.__setattr__(self, "transmission", MappingProxyType(clean))

    @property
    def default(self):
        return 1.0 + 0j if self.mode == "phase" else 0j

    def __call__(self, index):
        return self.transmission.get(index, self.default)

    def __mul__(self, other):
        """Cascade of two shapers (transmissions multiply)."""
        mode = "phase" if self.mode == other.mode == "phase" else "block"
        keys = set(self.transmission) | set(other.transmission)
        mask = SpectralMask({j: self(j) * other(j) for j in keys}, mode, self.lattice or other.lattice)
        return mask

    @classmethod
    def phases(cls, phases: Mapping[int, float], lattice=None):
        """Phase-only mask ``t(j) = exp(i phases[j])``."""
        return cls({j: np.exp(1j * p) for j, p in phases.items()}, "phase", lattice)

    @classmethod
    def passband(cls, indices, lattice=None):
        """Blocking mask that transmits only ``indices``."""
        return cls({j: 1.0 for j in indices}, "block", lattice)

    @classmethod
    def pair_phases(cls, lattice, phases: Mapping[int, float], photons="both"):
        """Phase-only mask putting ``phases[k]`` on comb pair ``k``.

        ``photons`` picks which lines of the pair carry the phase:
        ``"both"``, ``"signal"`` or ``"idler"``.
        """
        t = {}
        for k, p in phases.items():
            if photons in ("both", "signal"):
                t[lattice.signal_index(k)] = np.exp(1j * p)
            if photons in ("both", "idler"):
                t[lattice.idler_index(k)] = np.exp(1j * p)
        return cls(t, "phase", lattice)

    @classmethod
    def select_pairs(cls, lattice, weights: Mapping[int, complex]):
        """Blocking mask keeping comb pairs ``k`` with complex amplitude weight ``weights[k]`` per line."""
        t = {}
        for k, w in weights.items():
            t[lattice.signal_index(k)] = w
            t[lattice.idler_index(k)] = w
        return cls(t, "block", lattice)


@dataclass(frozen=True)
class ModulatorDrive:
    """Sinusoidal phase-modulator drive.

    Parameters
    ----------
    rf_steps : int
        RF frequency in lattice steps; sideband ``n`` shifts a photon by ``n * rf_steps``.
    mod_index : float
        Modulation index (peak phase deviation, rad).
    rf_phase : float
        RF phase; sideband ``n`` picks up ``exp(i n rf_phase)``.
    truncation_order : int or None
        Highest sideband order kept; an explicit order must discard less than
        1e-9 of the single-photon power. ``None`` picks the smallest order
        discarding less than 1e-12, so a photon pair loses less than 1e-9.
    """

    rf_steps: int = 1
    mod_index: float = 0.0
    rf_phase: float = 0.0
    truncation_order: int | None = None

    def __post_init__(self):
        if int(self.rf_steps) != self.rf_steps or self.rf_steps < 1:
            raise ValueError(f"rf_steps must be a positive integer, got {self.rf_steps}")
        if self.mod_index < 0:
            raise ValueError(f"mod_index must be >= 0, got {self.mod_index}")
        if self.truncation_order is not None:
            lost = 1.0 - sideband_power(self.mod_index, self.truncation_order)
            if lost >= TRUNCATION_TOL:
                raise ValueError(
                    f"truncation_order {self.truncation_order} discards {lost:.3g} of the power at "
                    f"mod_index {self.mod_index}; need < {TRUNCATION_TOL:g}"
                )

    @property
    def order(self):
        if self.truncation_order is not None:
            return int(self.truncation_order)
        return required_order(self.mod_index, AUTO_TRUNCATION_TOL)


@dataclass(frozen=True)
class DispersionSpec:
    """Fiber length (m), dispersion parameter D (ps/nm/km) and reference wavelength (nm)."""

    fiber_length_m: float = 0.0
    dispersion_ps_nm_km: float = 17.0
    ref_wavelength_nm: float = 1550.0

    def __post_init__(self):
        if self.fiber_length_m < 0:
            raise ValueError(f"fiber_length_m must be >= 0, got {self.fiber_length_m}")

    @property
    def beta2(self):
        """Group-velocity dispersion in s^2/m."""
        d = self.dispersion_ps_nm_km * 1e-6  # ps/(nm km) -> s/m^2
        lam = self.ref_wavelength_nm * 1e-9
        return -d * lam**2 / (2 * np.pi * constants.c)


def apply_mask(state, mask):
    """Pass both photons through one shaper: ``c'[m, n] = t(m) t(n) c[m, n]``."""
    if mask.lattice is not None and mask.lattice != state.lattice:
        raise ValueError("mask and state are defined on different lattices")
    return BiphotonState(
        state.lattice,
        {(m, n): mask(m) * mask(n) * c for (m, n), c in state.amplitudes.items()},
    )


def bessel_j(n, x):
    """Bessel function of the first kind ``J_n(x)`` for integer ``n``.

    Supported envelope is ``|n| <= 60`` and ``0 <= x <= 20``; ``x`` may be an array.
    """
    if int(n) != n or abs(n) > BESSEL_MAX_ORDER:
        raise DomainError(f"order {n} outside |n| <= {BESSEL_MAX_ORDER}")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(xa > BESSEL_MAX_ARG) or np.any(~np.isfinite(xa)):
        raise DomainError(f"argument outside [0, {BESSEL_MAX_ARG}]")
    out = jv(int(n), xa)
    return float(out) if out.ndim == 0 else out


def sideband_power(mu, order):
    """Fraction of power in sidebands ``|n| <= order``."""
    j = jv(np.arange(0, order + 1), mu) ** 2
    return float(j[0] + 2 * j[1:].sum())


def required_order(mu, tol=TRUNCATION_TOL):
    """Smallest sideband order whose discarded power is below ``tol``."""
    n = 0
    while 1.0 - sideband_power(mu, n) >= tol:
        n += 1
        if n > BESSEL_MAX_ORDER:
            raise DomainError(f"mod_index {mu} needs more than {BESSEL_MAX_ORDER} sidebands")
    return n


def sideband_weights(drive):
    """``{n: J_n(mu) exp(i n theta)}`` for every kept order."""
    order = drive.order
    return {
        n: bessel_j(n, drive.mod_index) * np.exp(1j * n * drive.rf_phase)
        for n in range(-order, order + 1)
    }


def modulator_matrix(lattice, drive, photon="signal"):
    """Single-photon transfer matrix on one half-band.

    For ``"signal"`` row/column ``r`` is index ``r + 1``; for ``"idler"`` it is
    index ``-(r + 1)``. Sidebands that leave the half-band are dropped.
    """
    M = lattice.max_index
    U = np.zeros((M, M), dtype=complex)
    p = drive.rf_steps
    for n, w in sideband_weights(drive).items():
        shift = n * p if photon == "signal" else -n * p
        # position r holds index +/-(r+1); an up-shift of the idler index moves it toward 0
        lo, hi = max(0, -shift), min(M, M - shift)
        if lo < hi:
            r = np.arange(lo, hi)
            U[r + shift, r] += w
    return U


def apply_modulator(state, drive):
    """Phase-modulate both co-propagating photons.

    Each photon maps ``|j> -> sum_n J_n(mu) exp(i n theta) |j + n p>``. The pair
    map is the tensor product of the single-photon maps. Amplitude pushed off
    a half-band is discarded, so the norm deficit measures edge loss.
    """
    if drive.mod_index == 0:
        return state
    Us = modulator_matrix(state.lattice, drive, "signal")
    Ui = modulator_matrix(state.lattice, drive, "idler")
    dense = Us @ state.to_dense() @ Ui.T
    return BiphotonState.from_dense(state.lattice, dense)


def equalize_sidebands(orders, mu_max=BESSEL_MAX_ARG, grid_step=1e-3, tol=1e-9):
    """Modulation index at which the given sideband orders carry equal power.

    For two orders this is the smallest ``mu > 0`` with ``|J_a(mu)| = |J_b(mu)|``,
    located by bisection to ``tol``. For more orders it is the ``mu`` minimizing
    the largest relative spread of ``|J_n(mu)|`` across the orders.
    """
    orders = [int(o) for o in orders]
    if len(orders) < 2:
        raise ValueError("need at least two sideband orders")
    if any(o < 1 for o in orders):
        raise ValueError("sideband orders must be >= 1")
    if len(set(orders)) != len(orders):
        raise NotFoundError(f"orders {orders} are not distinct; no positive crossing exists")

    grid = np.arange(grid_step, mu_max + grid_step / 2, grid_step)
    if len(orders) == 2:
        a, b = orders

        def gap(mu):
            return abs(jv(a, mu)) - abs(jv(b, mu))

        g = np.abs(jv(a, grid)) - np.abs(jv(b, grid))
        flips = np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]
        if flips.size == 0:
            raise NotFoundError(f"|J_{a}| and |J_{b}| do not cross in (0, {mu_max}]")
        i = flips[0]
        return float(bisect(gap, grid[i], grid[i + 1], xtol=tol, rtol=4 * np.finfo(float).eps))

    def spread(mu):
        w = np.abs(jv(orders, mu))
        return (w.max() - w.min()) / w.max()

    s = np.array([spread(mu) for mu in grid])
    i = int(np.argmin(s))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(spread, bounds=(lo, hi), method="bounded", options={"xatol": tol})
    return float(res.x)


def dispersion_mask(lattice, spec, compensate=False):
    """Quadratic spectral phase ``exp(i beta2 L / 2 (2 pi f_j)^2)`` over the whole lattice.

    ``compensate=True`` returns the conjugate phase, which undoes the fiber.
    """
    phi = dispersion_phases(lattice, spec)
    if compensate:
        phi = {j: -p for j, p in phi.items()}
    return SpectralMask.phases(phi, lattice)


def dispersion_phases(lattice, spec):
    coeff = spec.beta2 * spec.fiber_length_m / 2
    M = lattice.max_index
    return {
        j: coeff * (2 * np.pi * lattice.offset_ghz(j) * 1e9) ** 2
        for j in range(-M, M + 1)
        if j != 0
    }


def pair_dispersion_shift(spec, fsr_ghz, pair_a, pair_b):
    """Relative two-photon phase between comb pairs ``pair_b`` and ``pair_a`` from fiber dispersion."""
    w = 2 * np.pi * fsr_ghz * 1e9
    return spec.beta2 * spec.fiber_length_m * w**2 * (pair_b**2 - pair_a**2)


def overlap_kernel(lineshape, detune_mhz):
    """Normalized amplitude overlap of a line with a copy detuned by ``detune_mhz``.

    Lorentzian amplitude lines give ``1 / (1 - i eps / gamma)`` with ``gamma`` the
    intensity FWHM. Delta lines overlap only at zero detuning.
    """
    if lineshape.kind == "delta":
        return 1.0 + 0j if detune_mhz == 0 else 0j
    return 1.0 / (1.0 - 1j * detune_mhz / lineshape.fwhm_mhz)


def dip_scan(pair_a, pair_b, lineshape, offsets_ghz, relative_phase, fsr_ghz=49.6):
    """Coincidence probability of two interfering comb pairs versus sideband offset.

    The signal sideband of ``pair_a`` shifted up by ``f`` and the one of ``pair_b``
    shifted down by ``f`` miss each other by ``eps = (pair_b - pair_a) * FSR - 2 f``
    (the idlers by the same amount, in the opposite direction). With a CW pump
    signal and idler share one frequency variable, so the pair picks up a single
    overlap factor ``K(eps)``::

        P(f) = (1 + Re[exp(i phi) K(eps)]) / 2

    normalized so that full constructive overlap gives 1 and distinguishable
    sidebands give 1/2.

    Returns
    -------
    list of (offset_ghz, probability), sorted by offset.
    """
    span = (pair_b - pair_a) * fsr_ghz
    out = []
    for f in sorted(float(x) for x in offsets_ghz):
        eps_mhz = (span - 2 * f) * 1e3
        k = overlap_kernel(lineshape, eps_mhz)
        out.append((f, 0.5 * (1 + (np.exp(1j * relative_phase) * k).real)))
    return out


def midpoint_channel(lattice, pair_a, pair_b, photon="signal"):
    """Lattice index midway between the lines of two comb pairs."""
    total = (pair_a + pair_b) * lattice.subdivision
    if total % 2:
        raise LatticeRangeError(
            f"pairs {pair_a} and {pair_b} have no common midpoint on a subdivision-{lattice.subdivision} lattice"
        )
    mid = total // 2
    return mid if photon == "signal" else -mid


def best_single_order_index(order):
    """Modulation index maximizing ``|J_order|`` (first maximum)."""
    res = minimize_scalar(lambda mu: -abs(jv(order, mu)), bounds=(0.0, order + 3.0), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x)

