"""
Two-qubit frequency-bin state tomography.

Sixteen projections are built from the single-photon settings ``1``, ``2``,
``+`` and ``L``. Superposition settings are realized by programming a phase of
0 (``+``) or pi/2 (``L``) onto the second bin of each photon before the
frequency splitter, so each projection is measured in one, two or four of the
phase configurations ``(phi_S, phi_I)``. Counts from the configurations that
contribute to a projection are summed.

Because the phase is written onto the *state* rather than onto the analyzer,
the vector actually projected onto is the complex conjugate of the nominal
setting vector: a pi/2 phase on bin 2 followed by the splitter detects
``|1> - i|2>`` even though the setting is labelled ``L = |1> + i|2>``.
``convention="shaper"`` (the default) uses the realized projector;
``convention="label"`` uses the nominal vectors.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.optimize import minimize

from .errors import ConvergenceError, IncompleteDataError

PHASE_CONFIGS = ((0.0, 0.0), (0.0, np.pi / 2), (np.pi / 2, 0.0), (np.pi / 2, np.pi / 2))

_S = 1 / np.sqrt(2)
SETTINGS = {
    "1": np.array([1, 0], dtype=complex),
    "2": np.array([0, 1], dtype=complex),
    "+": np.array([_S, _S], dtype=complex),
    "L": np.array([_S, 1j * _S], dtype=complex),
}
# phase that a setting needs on the second bin; None means any
_SETTING_PHASE = {"1": None, "2": None, "+": 0.0, "L": np.pi / 2}

# (signal, idler) settings in measurement order
PROJECTION_ORDER = (
    ("1", "1"), ("1", "2"), ("2", "1"), ("2", "2"),
    ("2", "+"), ("1", "+"), ("+", "+"), ("L", "+"),
    ("L", "1"), ("L", "2"), ("L", "L"), ("1", "L"),
    ("2", "L"), ("+", "L"), ("+", "1"), ("+", "2"),
)


@dataclass(frozen=True)
class ProjectionSpec:
    """One tomographic projection.

    ``coefficients`` are ``(<11|P>, <12|P>, <21|P>, <22|P>)``; ``phase_configs``
    are indices into :data:`PHASE_CONFIGS` whose counts contribute.
    """

    label: int
    signal_setting: str
    idler_setting: str
    coefficients: np.ndarray
    phase_configs: tuple

    def analyzer(self, convention="shaper"):
        if convention == "shaper":
            return self.coefficients.conj()
        if convention == "label":
            return self.coefficients
        raise ValueError(f"unknown convention {convention!r}")


@dataclass(frozen=True)
class TomographyData:
    counts: np.ndarray
    normalization: float

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if counts.shape != (16,):
            raise ValueError(f"expected 16 projection totals, got shape {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("projection counts must be >= 0")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_totals(cls, totals):
        totals = np.asarray(totals, dtype=float)
        return cls(totals, float(totals[:4].sum()))

    def scaled(self, factor):
        return TomographyData(self.counts * factor, self.normalization * factor)


def _configs_for(sig, idl):
    ps, pi = _SETTING_PHASE[sig], _SETTING_PHASE[idl]
    return tuple(
        c for c, (a, b) in enumerate(PHASE_CONFIGS)
        if (ps is None or a == ps) and (pi is None or b == pi)
    )


def build_projection_set():
    """The 16 two-qubit projections with their contributing phase configurations."""
    out = []
    for nu, (sig, idl) in enumerate(PROJECTION_ORDER, start=1):
        vec = np.kron(SETTINGS[sig], SETTINGS[idl])
        out.append(ProjectionSpec(nu, sig, idl, vec, _configs_for(sig, idl)))
    return out


def tally_projection_counts(raw: Mapping, projections=None):
    """Sum per-configuration counts into projection totals.

    Parameters
    ----------
    raw : mapping
        ``{(nu, config_index): counts}`` covering exactly the configurations
        each projection uses.

    Returns
    -------
    TomographyData
        Totals ``n_nu`` and normalization ``C = n_1 + n_2 + n_3 + n_4``.
    """
    projections = projections or build_projection_set()
    expected = {(p.label, c) for p in projections for c in p.phase_configs}
    got = set(raw)
    missing = sorted(expected - got)
    extra = sorted(got - expected)
    if missing:
        raise IncompleteDataError(f"missing (projection, configuration) cells: {missing}")
    if extra:
        raise IncompleteDataError(f"cells not used by any projection: {extra}")
    totals = np.zeros(len(projections))
    for (nu, _), n in raw.items():
        if n < 0:
            raise ValueError(f"negative count in cell {nu}")
        totals[nu - 1] += n
    return TomographyData.from_totals(totals)


def analyzer_matrix(projections, convention="shaper"):
    return np.array([p.analyzer(convention) for p in projections])


def projection_probabilities(rho, projections, convention="shaper"):
    V = analyzer_matrix(projections, convention)
    return np.einsum("ni,ij,nj->n", V.conj(), rho, V).real


PROB_FLOOR = 1e-12


def likelihood(rho, data, projections=None, convention="shaper"):
    """Weighted squared residual ``sum (C p - n)^2 / (2 C p)`` over the projections."""
    projections = projections or build_projection_set()
    pred = data.normalization * projection_probabilities(rho, projections, convention)
    return _likelihood_terms(pred, data.counts)


def _likelihood_terms(pred, counts):
    pred = np.maximum(pred, 0.0)
    out = 0.0
    for m, n in zip(pred, counts):
        if m == 0 and n == 0:
            continue
        d = max(m, PROB_FLOOR)
        out += (m - n) ** 2 / (2 * d)
    return float(out)


_TRIL = np.tril_indices(4, -1)


def rho_from_params(t, dim=4):
    """``T^dag T / Tr(T^dag T)`` for lower-triangular ``T`` built from ``dim^2`` reals."""
    il = _TRIL if dim == 4 else np.tril_indices(dim, -1)
    k = len(il[0])
    T = np.zeros((dim, dim), dtype=complex)
    T[np.diag_indices(dim)] = t[:dim]
    T[il] = t[dim:dim + k] + 1j * t[dim + k:dim + 2 * k]
    r = T.conj().T @ T
    return r / np.trace(r).real


def params_from_rho(rho, eps=1e-6):
    """Parameters whose :func:`rho_from_params` image is ``rho`` (regularized to full rank)."""
    dim = rho.shape[0]
    r = rho + eps * np.eye(dim)
    J = np.eye(dim)[::-1]
    L = np.linalg.cholesky(J @ r @ J)
    T = (J @ L @ J).conj().T  # lower triangular, T^dag T = r
    il = np.tril_indices(dim, -1)
    return np.concatenate([np.diag(T).real, T[il].real, T[il].imag])


def linear_inversion(data, projections=None, convention="shaper"):
    """Unconstrained least-squares density matrix, projected onto the physical set."""
    projections = projections or build_projection_set()
    V = analyzer_matrix(projections, convention)
    basis = _hermitian_basis(4)
    A = np.array([[np.real(v.conj() @ B @ v) for B in basis] for v in V])
    p = data.counts / data.normalization
    x, *_ = np.linalg.lstsq(A, p, rcond=None)
    rho = sum(c * B for c, B in zip(x, basis))
    return nearest_physical(rho)


def _hermitian_basis(d):
    out = []
    for j in range(d):
        E = np.zeros((d, d), dtype=complex)
        E[j, j] = 1
        out.append(E)
    for j in range(d):
        for k in range(j + 1, d):
            E = np.zeros((d, d), dtype=complex)
            E[j, k] = E[k, j] = 1
            out.append(E)
            F = np.zeros((d, d), dtype=complex)
            F[j, k], F[k, j] = -1j, 1j
            out.append(F)
    return out


def nearest_physical(rho):
    """Hermitize, clip negative eigenvalues and renormalize."""
    rho = (rho + rho.conj().T) / 2
    w, U = np.linalg.eigh(rho)
    w = np.clip(w, 0, None)
    if w.sum() == 0:
        return np.eye(rho.shape[0]) / rho.shape[0]
    w /= w.sum()
    return (U * w) @ U.conj().T


@dataclass(frozen=True)
class MLEFit:
    rho: np.ndarray
    likelihood: float
    evaluations: int
    restarts: int
    converged: bool


def mle_fit(data, projections=None, convention="shaper", restarts=8, seed=0,
            tol=1e-10, max_evals=200_000, sweep_evals=5_000):
    """Maximum-likelihood density matrix over the Cholesky parameters.

    One start comes from linear inversion, ``restarts`` more are random. Each
    start runs sweeps of a bounded Nelder-Mead simplex search followed by a
    BFGS polish, restarting the simplex from the best point, until a sweep
    improves the objective by less than ``tol``. At most ``max_evals``
    objective evaluations are spent per start. The best converged start wins.

    The parameterization is invariant under scaling of ``T`` and has flat
    directions for rank-deficient states, so the simplex alone rarely meets a
    parameter tolerance; the sweep criterion only looks at the objective.
    """
    if data.normalization <= 0:
        raise ValueError("normalization C must be positive")
    projections = projections or build_projection_set()
    V = analyzer_matrix(projections, convention)
    Vc = V.conj()
    C = data.normalization
    n = data.counts
    zero = n == 0

    def objective(t):
        rho = rho_from_params(t)
        pred = C * np.einsum("ni,ij,nj->n", Vc, rho, V).real
        pred = np.maximum(pred, 0.0)
        denom = np.maximum(pred, PROB_FLOOR)
        terms = (pred - n) ** 2 / (2 * denom)
        terms[zero & (pred == 0)] = 0.0
        return terms.sum()

    rng = np.random.default_rng(seed)
    starts = [params_from_rho(linear_inversion(data, projections, convention))]
    starts += [rng.normal(size=16) for _ in range(restarts)]

    best = None  # best converged start
    best_any = None
    total_evals = 0
    for x in starts:
        fx = objective(x)
        evals = 1
        converged = False
        while evals < max_evals:
            res = minimize(objective, x, method="Nelder-Mead",
                           options={"maxfev": min(sweep_evals, max_evals - evals),
                                    "xatol": 1e-8, "fatol": 1e-12, "adaptive": True})
            evals += res.nfev
            y, fy = res.x, res.fun
            if evals < max_evals:
                pol = minimize(objective, y, method="BFGS", options={"maxiter": 200})
                evals += pol.nfev
                if pol.fun < fy:
                    y, fy = pol.x, pol.fun
            improvement = fx - fy
            if fy <= fx:
                x, fx = y / np.linalg.norm(y), fy
            if improvement < tol:
                converged = True
                break
        total_evals += evals
        if best_any is None or fx < best_any[0]:
            best_any = (fx, x)
        if converged and (best is None or fx < best[0]):
            best = (fx, x)
    if best is None:
        f, x = best_any
        raise ConvergenceError(
            f"no start converged within {max_evals} evaluations",
            best=MLEFit(rho_from_params(x), float(f), total_evals, len(starts), False),
        )
    return MLEFit(rho_from_params(best[1]), float(best[0]), total_evals, len(starts), True)


def mle_estimate(data, projections=None, convention="shaper", **kwargs):
    """Physical density matrix maximizing the likelihood of ``data``."""
    return mle_fit(data, projections, convention, **kwargs).rho


def synthetic_data(rho, normalization=1e6, projections=None, convention="shaper", rng=None):
    """Projection totals ``C <P|rho|P>``; Poisson-sampled when ``rng`` is given."""
    projections = projections or build_projection_set()
    mean = normalization * projection_probabilities(rho, projections, convention)
    mean = np.clip(mean, 0, None)
    counts = mean if rng is None else rng.poisson(mean).astype(float)
    return TomographyData(counts, normalization if rng is None else float(counts[:4].sum()))


def check_density_matrix(rho, atol=1e-9):
    """Raise ``ValueError`` unless ``rho`` is Hermitian, PSD and unit-trace."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if not np.allclose(rho, rho.conj().T, atol=1e-10):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1) > atol:
        raise ValueError(f"trace {np.trace(rho).real} != 1")
    w = np.linalg.eigvalsh(rho)
    if w.min() < -atol or w.max() > 1 + atol:
        raise ValueError(f"eigenvalues outside [0, 1]: {w}")
    return rho


def partial_transpose(rho, dims=(2, 2), side="idler"):
    d_s, d_i = dims
    rho = np.asarray(rho)
    if rho.shape != (d_s * d_i, d_s * d_i):
        raise ValueError(f"rho of shape {rho.shape} does not match dims {dims}")
    t = rho.reshape(d_s, d_i, d_s, d_i)
    if side == "idler":
        t = t.transpose(0, 3, 2, 1)
    elif side == "signal":
        t = t.transpose(2, 1, 0, 3)
    else:
        raise ValueError(f"side must be 'signal' or 'idler', got {side!r}")
    return t.reshape(d_s * d_i, d_s * d_i)


def negativity(rho, dims=(2, 2)):
    """Sum of the magnitudes of the negative eigenvalues of the partial transpose."""
    lam = np.linalg.eigvalsh(partial_transpose(rho, dims))
    return float(np.sum(np.abs(lam) - lam) / 2)


def fidelity(rho_a, rho_b):
    """Uhlmann fidelity ``(Tr sqrt(sqrt(a) b sqrt(a)))^2``.

    Evaluated as ``(sum_i sqrt(lambda_i))^2`` over the eigenvalues of ``a b``,
    which share the spectrum of ``sqrt(a) b sqrt(a)``. Eigenvalues at round-off
    level are dropped, since their square roots would otherwise bias the sum.
    """
    rho_a = np.asarray(rho_a)
    rho_b = np.asarray(rho_b)
    if rho_a.shape != rho_b.shape:
        raise ValueError(f"shape mismatch {rho_a.shape} vs {rho_b.shape}")
    w = np.linalg.eigvals(rho_a @ rho_b).real
    w[w < 64 * np.finfo(float).eps * max(w.max(), 0.0)] = 0.0
    return float(min(1.0, np.sum(np.sqrt(np.clip(w, 0, None))) ** 2))


def bell_state(dim=2):
    """Maximally entangled ``sum_k |kk> / sqrt(dim)`` as a density matrix."""
    psi = np.eye(dim).reshape(-1) / np.sqrt(dim)
    return np.outer(psi, psi.conj()).astype(complex)
