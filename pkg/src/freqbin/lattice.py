"""
Frequency-bin lattice and two-photon amplitudes.

All frequencies are referenced to the pump. Lattice index ``j`` sits at an
offset of ``j * fsr / subdivision`` from the pump; comb line pair ``k`` puts
its signal photon at ``+k * subdivision`` and its idler at ``-k * subdivision``.
Signal photons live on the positive half-band ``(0, M]`` and idler photons on
the negative half-band ``[-M, 0)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidStateError, LatticeRangeError


@dataclass(frozen=True)
class FrequencyLattice:
    """Pump-symmetric grid of frequency bins.

    Parameters
    ----------
    pump_thz : float
        Pump optical frequency in THz.
    fsr_ghz : float
        Comb line spacing (free spectral range) in GHz.
    subdivision : int
        Number of lattice steps per FSR.
    max_index : int
        Largest lattice index ``M``; the lattice spans ``[-M, M]``.
    """

    pump_thz: float = 193.4
    fsr_ghz: float = 49.6
    subdivision: int = 2
    max_index: int = 90

    def __post_init__(self):
        if not self.fsr_ghz > 0:
            raise ValueError(f"fsr_ghz must be positive, got {self.fsr_ghz}")
        if int(self.subdivision) != self.subdivision or self.subdivision < 1:
            raise ValueError(f"subdivision must be a positive integer, got {self.subdivision}")
        if int(self.max_index) != self.max_index or self.max_index < self.subdivision:
            raise ValueError(
                f"max_index must be an integer >= subdivision ({self.subdivision}), got {self.max_index}"
            )

    @classmethod
    def for_pairs(cls, n_pairs, margin=4, **kwargs):
        """Lattice large enough for ``n_pairs`` comb pairs plus ``margin`` spare steps."""
        s = kwargs.get("subdivision", 2)
        return cls(max_index=n_pairs * s + margin, **kwargs)

    @property
    def step_ghz(self):
        return self.fsr_ghz / self.subdivision

    @property
    def n_pairs(self):
        """Number of comb pairs representable on the lattice."""
        return self.max_index // self.subdivision

    def contains(self, index):
        return -self.max_index <= index <= self.max_index

    def offset_ghz(self, index):
        return index * self.step_ghz

    def frequency_thz(self, index):
        return self.pump_thz + index * self.step_ghz * 1e-3

    def signal_index(self, k):
        """Lattice index of the signal line of comb pair ``k``."""
        self._check_pair(k)
        return k * self.subdivision

    def idler_index(self, k):
        self._check_pair(k)
        return -k * self.subdivision

    def pair_of(self, index):
        """Comb pair owning ``index``, or None if the index is between comb lines."""
        if index == 0 or index % self.subdivision:
            return None
        return abs(index) // self.subdivision

    def _check_pair(self, k):
        if k < 1 or k > self.n_pairs:
            raise LatticeRangeError(f"comb pair {k} not representable (1..{self.n_pairs})")


@dataclass(frozen=True)
class Lineshape:
    """Single-line spectral amplitude profile.

    ``kind`` is ``"delta"`` or ``"lorentzian"``; ``fwhm_mhz`` is the intensity
    full width at half maximum and is required for Lorentzian lines.
    """

    kind: str = "lorentzian"
    fwhm_mhz: float | None = None

    def __post_init__(self):
        if self.kind not in ("delta", "lorentzian"):
            raise ValueError(f"unknown lineshape kind {self.kind!r}")
        if self.kind == "lorentzian" and not (self.fwhm_mhz is not None and self.fwhm_mhz > 0):
            raise ValueError("lorentzian lineshape needs fwhm_mhz > 0")

    @classmethod
    def from_quality_factor(cls, pump_thz=193.4, q=2e6):
        # loaded-Q linewidth: nu / Q
        return cls("lorentzian", pump_thz * 1e6 / q)


def _check_signal(lattice, m):
    if not (0 < m <= lattice.max_index):
        raise LatticeRangeError(f"signal index {m} outside (0, {lattice.max_index}]")


def _check_idler(lattice, n):
    if not (-lattice.max_index <= n < 0):
        raise LatticeRangeError(f"idler index {n} outside [-{lattice.max_index}, 0)")


@dataclass(frozen=True)
class BiphotonState:
    """Sparse joint amplitude ``c[m, n]`` over (signal index, idler index).

    The squared norm of a freshly prepared state is 1. After lossy elements it
    drops below 1 and equals the survival probability of the pair.
    """

    lattice: FrequencyLattice
    amplitudes: Mapping = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (m, n), c in self.amplitudes.items():
            m, n = int(m), int(n)
            _check_signal(self.lattice, m)
            _check_idler(self.lattice, n)
            c = complex(c)
            if c != 0:
                clean[(m, n)] = c
        object.__setattr__(self, "amplitudes", MappingProxyType(clean))

    def __getitem__(self, key):
        return self.amplitudes.get(key, 0j)

    def __len__(self):
        return len(self.amplitudes)

    def norm(self):
        return state_norm(self)

    def to_dense(self):
        """Dense ``(M, M)`` array; row ``m-1`` is signal ``m``, column ``q`` is idler ``-(q+1)``."""
        M = self.lattice.max_index
        out = np.zeros((M, M), dtype=complex)
        for (m, n), c in self.amplitudes.items():
            out[m - 1, -n - 1] = c
        return out

    @classmethod
    def from_dense(cls, lattice, dense):
        rows, cols = np.nonzero(dense)
        amps = {(int(r) + 1, -int(q) - 1): dense[r, q] for r, q in zip(rows, cols)}
        return cls(lattice, amps)

    def scaled(self, factor):
        return BiphotonState(self.lattice, {k: factor * c for k, c in self.amplitudes.items()})


def make_comb_state(lattice, alphas):
    """Energy-matched comb state ``sum_k alpha_k |k, k>``, normalized to unit norm.

    Parameters
    ----------
    lattice : FrequencyLattice
    alphas : sequence or mapping
        A sequence is read as ``alpha_1, alpha_2, ...``; a mapping gives
        ``{k: alpha_k}`` for selected pairs. Phases are preserved.

    Returns
    -------
    BiphotonState
    """
    if isinstance(alphas, Mapping):
        items = [(int(k), complex(a)) for k, a in alphas.items()]
    else:
        items = [(k, complex(a)) for k, a in enumerate(alphas, start=1)]
    if not items:
        raise InvalidStateError("no comb amplitudes given")
    norm2 = sum(abs(a) ** 2 for _, a in items)
    if norm2 == 0:
        raise InvalidStateError("all comb amplitudes are zero")
    for k, _ in items:
        lattice._check_pair(k)
    scale = 1 / np.sqrt(norm2)
    amps = {(lattice.signal_index(k), lattice.idler_index(k)): a * scale for k, a in items if a != 0}
    return BiphotonState(lattice, amps)


def state_norm(state):
    """Squared norm ``sum |c_mn|^2`` (the pair survival probability)."""
    return float(sum(abs(c) ** 2 for c in state.amplitudes.values()))


def reduce_to_subspace(state, signal_bins, idler_bins):
    """Amplitude block ``c[signal_bins[i], idler_bins[j]]`` as a matrix, not renormalized."""
    signal_bins = list(signal_bins)
    idler_bins = list(idler_bins)
    for m in signal_bins:
        _check_signal(state.lattice, m)
    for n in idler_bins:
        _check_idler(state.lattice, n)
    block = np.zeros((len(signal_bins), len(idler_bins)), dtype=complex)
    for i, m in enumerate(signal_bins):
        for j, n in enumerate(idler_bins):
            block[i, j] = state[(m, n)]
    return block


def embed_subspace(state, block, signal_bins, idler_bins):
    """Inverse of :func:`reduce_to_subspace`: overwrite the selected block of ``state``."""
    block = np.asarray(block, dtype=complex)
    amps = dict(state.amplitudes)
    for i, m in enumerate(signal_bins):
        for j, n in enumerate(idler_bins):
            amps[(m, n)] = block[i, j]
    return BiphotonState(state.lattice, amps)


def product_state(lattice, signal_amps: Mapping[int, complex], idler_amps: Mapping[int, complex]):
    """Uncorrelated pair ``(sum_m a_m |m>) (x) (sum_n b_n |n>)``, no renormalization."""
    return BiphotonState(
        lattice,
        {(m, n): complex(a) * complex(b) for m, a in signal_amps.items() for n, b in idler_amps.items()},
    )


def comb_pairs(first: int, last: int) -> Iterable[int]:
    """Inclusive range of comb pair numbers."""
    return range(first, last + 1)


def flat_alphas(pairs: Sequence[int]):
    return {k: 1.0 for k in pairs}
