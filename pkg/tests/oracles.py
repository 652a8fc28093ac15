"""Independent reference computations used by the tests."""
import mpmath
import numpy as np


def bessel_series(n, x, dps=50):
    """``J_n(x)`` from its power series in extended precision."""
    m = abs(int(n))
    with mpmath.workdps(dps):
        x = mpmath.mpf(x)
        half = x / 2
        term = half**m / mpmath.factorial(m)
        total = term
        k = 0
        while abs(term) > mpmath.mpf(10) ** (-dps + 5) or k < 5:
            k += 1
            term *= -half * half / (k * (k + m))
            total += term
        if n < 0 and m % 2:
            total = -total
        return float(total)


def schmidt_diagonal(weights):
    """Schmidt number of a diagonal JSI with weights ``p``: ``(sum p)^2 / sum p^2``."""
    p = np.asarray(weights, dtype=float)
    return float(p.sum() ** 2 / np.sum(p**2))


def cglmp_deterministic_max():
    """Largest full CGLMP value over all 3^4 x 3^4 deterministic local strategies."""
    best = -np.inf
    for A in np.ndindex(3, 3):
        for B in np.ndindex(3, 3):
            def agree(x, y, shift):
                return float((B[y] - A[x] - shift) % 3 == 0)

            v = (agree(0, 0, 0) + agree(1, 0, 1) + agree(1, 1, 0) + agree(0, 1, 0)
                 - agree(0, 0, 1) - agree(1, 0, 0) - agree(1, 1, 1) - agree(0, 1, -1))
            best = max(best, v)
    return best


def random_density(rng, dim, rank=None):
    """Random density matrix from a Ginibre draw."""
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    r = g @ g.conj().T
    return r / np.trace(r).real


def random_pure(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


# closed-form density matrix of the reference two-qubit estimate (4 decimals)
REFERENCE_RHO = np.array([
    [0.4388, -0.0115 - 0.0699j, -0.0721 - 0.0193j, 0.3745 + 0.0166j],
    [-0.0115 + 0.0699j, 0.0574, 0.0279 - 0.0244j, 0.0084 - 0.0227j],
    [-0.0721 + 0.0193j, 0.0279 + 0.0244j, 0.0281, -0.0280 - 0.0211j],
    [0.3745 - 0.0166j, 0.0084 + 0.0227j, -0.0280 + 0.0211j, 0.4757],
])
