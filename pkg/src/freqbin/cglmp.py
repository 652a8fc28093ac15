"""
CGLMP Bell test for two frequency-bin qutrits.

Measurement bases are realized by spectral phases on a comb-line triplet:
line ``k`` of the signal carries ``(k - k0) * phi_S`` and of the idler
``(k - k0) * phi_I``, with

    phi_S = 2 pi / 3 * (a + alpha_x)
    phi_I = 2 pi / 3 * (-b + beta_y)

A frequency splitter whose first and third sidebands are equally strong then
maps the triplet onto one detection channel per photon, which implements the
rank-one projector onto ``(|k0> + e^{i phi}|k0+1> + e^{2 i phi}|k0+2>) / sqrt(3)``.

For the white-noise mixture ``lam |psi><psi| + (1 - lam) I / 9`` the outcome
probabilities depend on ``a - b`` only, and the 24-term CGLMP expression
collapses to eight terms (:data:`TERMS`). For arbitrary states use
:func:`probability_table` with :func:`cglmp_full`; the eight-term form is not
a Bell inequality outside that symmetric family.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping

import numpy as np

from .detection import DetectionConfig, counts_from_probability, make_rng, sample_counts
from .lattice import BiphotonState, FrequencyLattice, make_comb_state
from .optics import ModulatorDrive, SpectralMask, apply_mask, apply_modulator, equalize_sidebands

# (label, sign, x, y, a, b)
TERMS = (
    ("P11(0,0)", +1, 1, 1, 0, 0),
    ("P21(0,1)", +1, 2, 1, 0, 1),
    ("P22(0,0)", +1, 2, 2, 0, 0),
    ("P12(0,0)", +1, 1, 2, 0, 0),
    ("P11(0,1)", -1, 1, 1, 0, 1),
    ("P21(0,0)", -1, 2, 1, 0, 0),
    ("P22(0,1)", -1, 2, 2, 0, 1),
    ("P12(1,0)", -1, 1, 2, 1, 0),
)
TERM_LABELS = tuple(t[0] for t in TERMS)

# reference settings (phi_S, phi_I) for the largest and smallest coincidence rate
REFERENCE_PHASES = {"P_max": (0.0, 0.0), "P_min": (np.pi / 3, np.pi / 3)}


@dataclass(frozen=True)
class CGLMPBasis:
    alpha: tuple = (0.0, 0.5)
    beta: tuple = (0.25, -0.25)
    triplet: tuple = (5, 6, 7)

    def __post_init__(self):
        t = tuple(int(k) for k in self.triplet)
        if len(t) != 3 or t[1] != t[0] + 1 or t[2] != t[0] + 2:
            raise ValueError(f"triplet must be three consecutive comb pairs, got {self.triplet}")
        object.__setattr__(self, "triplet", t)


@dataclass(frozen=True)
class NoiseMixture:
    """Weight ``lam`` of the maximally entangled qutrit state against white noise."""

    lam: float = 1.0

    def __post_init__(self):
        if not 0 <= self.lam <= 1:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")


def wrap_phase(phi):
    """Reduce to ``(-pi, pi]``."""
    w = np.mod(phi + np.pi, 2 * np.pi) - np.pi
    w = np.where(np.isclose(w, -np.pi, atol=1e-12, rtol=0), np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class BasisPhases:
    phi_s: float
    phi_i: float
    signal_lines: Mapping = field(default_factory=dict)
    idler_lines: Mapping = field(default_factory=dict)


def basis_phases(basis, x, y, a, b):
    """Fundamental and per-line phases for signal basis ``x``/outcome ``a`` and idler ``y``/``b``."""
    if x not in (1, 2) or y not in (1, 2) or a not in (0, 1, 2) or b not in (0, 1, 2):
        raise ValueError(f"invalid setting x={x} y={y} a={a} b={b}")
    phi_s = 2 * np.pi / 3 * (a + basis.alpha[x - 1])
    phi_i = 2 * np.pi / 3 * (-b + basis.beta[y - 1])
    k0 = basis.triplet[0]
    return BasisPhases(
        wrap_phase(phi_s),
        wrap_phase(phi_i),
        {k: wrap_phase((k - k0) * phi_s) for k in basis.triplet},
        {k: wrap_phase((k - k0) * phi_i) for k in basis.triplet},
    )


def model_probability(noise, phi_s, phi_i):
    """``lam |1 + e^{iD} + e^{2iD}|^2 / 27 + (1 - lam) / 9`` with ``D = phi_s + phi_i``."""
    d = phi_s + phi_i
    pure = abs(1 + np.exp(1j * d) + np.exp(2j * d)) ** 2 / 27
    return float(noise.lam * pure + (1 - noise.lam) / 9)


def projector(phi, dim=3):
    """Rank-one projector ``v v^dag`` with ``v = (1, e^{i phi}, ..., e^{i (dim-1) phi}) / sqrt(dim)``."""
    v = np.exp(1j * phi * np.arange(dim)) / np.sqrt(dim)
    return np.outer(v, v.conj())


def maximally_entangled(dim=3):
    psi = np.eye(dim).reshape(-1) / np.sqrt(dim)
    return np.outer(psi, psi).astype(complex)


def mixture_density(noise, dim=3):
    return noise.lam * maximally_entangled(dim) + (1 - noise.lam) * np.eye(dim * dim) / dim**2


@lru_cache(maxsize=32)
def _measurement_operators(basis):
    ops = np.empty((2, 2, 3, 3, 9, 9), dtype=complex)
    for x in (1, 2):
        for y in (1, 2):
            for a in range(3):
                for b in range(3):
                    bp = basis_phases(basis, x, y, a, b)
                    ops[x - 1, y - 1, a, b] = np.kron(projector(bp.phi_s), projector(bp.phi_i))
    ops.setflags(write=False)
    return ops


def probability_table(rho, basis=None):
    """``P[x-1, y-1, a, b] = Tr(rho Pi_S^x(a) (x) Pi_I^y(b))`` for a 9x9 ``rho``."""
    basis = basis or CGLMPBasis()
    rho = np.asarray(rho)
    if rho.shape != (9, 9):
        raise ValueError(f"need a 9x9 density matrix, got shape {rho.shape}")
    return np.einsum("kl,xyablk->xyab", rho, _measurement_operators(basis)).real


def i3_from_probabilities(p):
    """Eight-term CGLMP value ``3 (sum of first four - sum of last four)``."""
    p = np.asarray(p, dtype=float)
    if p.shape != (8,):
        raise ValueError(f"need eight probabilities, got shape {p.shape}")
    return float(3 * (p[:4].sum() - p[4:].sum()))


def term_probabilities(table):
    """Pick the eight reduced terms out of a full ``(2, 2, 3, 3)`` probability table."""
    return np.array([table[x - 1, y - 1, a, b] for _, _, x, y, a, b in TERMS])


def cglmp_full(table):
    """Full 24-probability CGLMP value for ``d = 3``; local models satisfy ``<= 2``."""
    P = np.asarray(table)

    def prob(x, y, shift):
        # probability that B_y = A_x + shift (mod 3)
        return sum(P[x - 1, y - 1, a, (a + shift) % 3] for a in range(3))

    return float(
        prob(1, 1, 0) + prob(2, 1, 1) + prob(2, 2, 0) + prob(1, 2, 0)
        - prob(1, 1, 1) - prob(2, 1, 0) - prob(2, 2, 1) - prob(1, 2, -1)
    )


def model_term_probabilities(noise, basis=None):
    basis = basis or CGLMPBasis()
    out = []
    for _, _, x, y, a, b in TERMS:
        bp = basis_phases(basis, x, y, a, b)
        out.append(model_probability(noise, bp.phi_s, bp.phi_i))
    return np.array(out)


def model_i3(noise, basis=None):
    return i3_from_probabilities(model_term_probabilities(noise, basis))


@dataclass(frozen=True)
class CGLMPCounts:
    """Coincidences for the eight terms plus the two reference settings.

    ``stds`` (optional) holds a standard deviation per term label and for
    ``"P_max"``/``"P_min"``. ``scale`` (optional) is the expected number of
    counts per unit model probability, known only for simulated runs.
    """

    counts: Mapping
    n_max: float
    n_min: float = 0.0
    stds: Mapping | None = None
    scale: float | None = None

    def __post_init__(self):
        missing = [t for t in TERM_LABELS if t not in self.counts]
        if missing:
            raise ValueError(f"missing CGLMP terms: {missing}")
        if any(self.counts[t] < 0 for t in TERM_LABELS) or self.n_min < 0:
            raise ValueError("counts must be >= 0")
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")

    def term_counts(self):
        return np.array([self.counts[t] for t in TERM_LABELS], dtype=float)

    def term_stds(self, errors="auto"):
        """Per-term and reference standard deviations as ``(terms, ref_max)``."""
        if errors == "auto":
            errors = "listed" if self.stds else "poisson"
        if errors == "listed":
            if not self.stds:
                raise ValueError("no listed standard deviations available")
            return np.array([self.stds[t] for t in TERM_LABELS], dtype=float), float(self.stds["P_max"])
        if errors == "poisson":
            return np.sqrt(self.term_counts()), float(np.sqrt(self.n_max))
        raise ValueError(f"unknown error mode {errors!r}")


def i3_from_counts(counts, errors="auto", normalization="reference"):
    """CGLMP value and first-order uncertainty from measured coincidences.

    With ``normalization="reference"`` each count is turned into a probability
    ``n / (3 n_max)``, so ``I3 = (sum n_plus - sum n_minus) / n_max``; the
    uncertainty includes the ``n_max`` term. With ``"absolute"`` the counts
    are divided by ``counts.scale`` instead (simulated runs only).

    ``errors`` is ``"listed"`` (the stored standard deviations), ``"poisson"``
    (``sqrt(n)``) or ``"auto"`` (listed when available).

    Returns
    -------
    (i3, sigma)
    """
    n = counts.term_counts()
    sd, sd_max = counts.term_stds(errors)
    signs = np.array([t[1] for t in TERMS], dtype=float)
    diff = float(signs @ n)
    if normalization == "reference":
        if counts.n_max <= 0:
            raise ValueError("n_max must be positive")
        i3 = diff / counts.n_max
        var = np.sum(sd**2) / counts.n_max**2 + (i3 * sd_max / counts.n_max) ** 2
    elif normalization == "absolute":
        if not counts.scale:
            raise ValueError("absolute normalization needs counts.scale")
        i3 = 3 * diff / counts.scale
        var = 9 * np.sum(sd**2) / counts.scale**2
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    return float(i3), float(np.sqrt(var))


# -- optics chain ----------------------------------------------------------

def cglmp_lattice(basis=None, margin=4, **kwargs):
    """Half-FSR lattice wide enough for the triplet and its third sidebands."""
    basis = basis or CGLMPBasis()
    return FrequencyLattice(subdivision=2, max_index=2 * basis.triplet[2] + 3 + margin, **kwargs)


def detection_channels(basis, lattice):
    """Signal and idler indices where sidebands +1, -1, -3 of the triplet lines coincide."""
    k0 = basis.triplet[0]
    mid = k0 * lattice.subdivision + 1
    return mid, -mid


def _check_chain_lattice(lattice):
    if lattice.subdivision != 2:
        raise ValueError("the CGLMP chain needs a half-FSR lattice (subdivision 2)")


def triplet_mask(lattice, basis, phi_s, phi_i):
    """Shaper program selecting the triplet and writing the basis phases."""
    k0 = basis.triplet[0]
    t = {}
    for k in basis.triplet:
        t[lattice.signal_index(k)] = np.exp(1j * (k - k0) * phi_s)
        t[lattice.idler_index(k)] = np.exp(1j * (k - k0) * phi_i)
    return SpectralMask(t, "block", lattice)


def chain_probability(source, phi_s, phi_i, basis=None, lattice=None, mod_index=None):
    """Coincidence probability through shaper -> modulator -> midpoint channels.

    ``source`` is a :class:`NoiseMixture` or a pure :class:`BiphotonState`.
    White noise is propagated as the uniform mixture of the nine product
    states ``|m>|n>`` on the triplet lines.
    """
    basis = basis or CGLMPBasis()
    lattice = lattice or cglmp_lattice(basis)
    _check_chain_lattice(lattice)
    mu = equalize_sidebands([1, 3]) if mod_index is None else mod_index
    drive = ModulatorDrive(rf_steps=1, mod_index=mu)
    mask = triplet_mask(lattice, basis, phi_s, phi_i)
    s_ch, i_ch = detection_channels(basis, lattice)

    def detect(state):
        out = apply_modulator(apply_mask(state, mask), drive)
        return abs(out[(s_ch, i_ch)]) ** 2

    if isinstance(source, BiphotonState):
        return detect(source)
    pure = make_comb_state(lattice, {k: 1.0 for k in basis.triplet})
    p = source.lam * detect(pure) if source.lam else 0.0
    if source.lam < 1:
        noise = 0.0
        for m in basis.triplet:
            for n in basis.triplet:
                state = BiphotonState(lattice, {(lattice.signal_index(m), lattice.idler_index(n)): 1.0})
                noise += detect(state)
        p += (1 - source.lam) * noise / 9
    return float(p)


def chain_constant(basis=None, lattice=None, mod_index=None):
    """Ratio of chain probability to model probability (same for every setting)."""
    return chain_probability(NoiseMixture(1.0), 0.0, 0.0, basis, lattice, mod_index) / (1 / 3)


def simulate_cglmp_run(source, basis=None, cfg=None, lattice=None, mod_index=None, sample=True):
    """Simulated coincidences for the eight terms and the two reference settings.

    Expected counts follow the detection model of ``cfg``; with ``sample=True``
    they are Poisson draws from one generator seeded by ``cfg.rng_seed``. The
    returned ``scale`` allows absolute normalization in :func:`i3_from_counts`.
    """
    basis = basis or CGLMPBasis()
    cfg = cfg or DetectionConfig()
    lattice = lattice or cglmp_lattice(basis)
    mu = equalize_sidebands([1, 3]) if mod_index is None else mod_index
    rng = make_rng(cfg) if sample else None

    def measure(phi_s, phi_i):
        mean = counts_from_probability(chain_probability(source, phi_s, phi_i, basis, lattice, mu), cfg)
        return sample_counts(mean, rng=rng) if sample else mean

    counts = {}
    for label, _, x, y, a, b in TERMS:
        bp = basis_phases(basis, x, y, a, b)
        counts[label] = measure(bp.phi_s, bp.phi_i)
    n_max = measure(*REFERENCE_PHASES["P_max"])
    n_min = measure(*REFERENCE_PHASES["P_min"])
    scale = cfg.pair_counts * chain_constant(basis, lattice, mu)
    return CGLMPCounts(counts, n_max, n_min, None, scale)
