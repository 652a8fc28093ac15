"""Two-qutrit CGLMP test: measured counts, the ideal model and the optical chain."""
# %%
import numpy as np

from freqbin.cglmp import (
    CGLMPBasis,
    NoiseMixture,
    TERMS,
    basis_phases,
    chain_constant,
    chain_probability,
    i3_from_counts,
    model_i3,
    model_probability,
    simulate_cglmp_run,
)
from freqbin.detection import DetectionConfig
from freqbin.fixtures import data_path, parse_fixture

# %% counts normalized by the constructive reference setting
counts = parse_fixture(data_path("table2.csv"), "table2").counts()
for mode in ("poisson", "listed"):
    i3, sigma = i3_from_counts(counts, mode)
    print(f"I3 = {i3:.3f} +- {sigma:.3f} ({mode}); {(i3 - 2) / sigma:.1f} sigma above 2")

# %% the noisy maximally entangled state violates the bound above lambda ~ 0.70
top = model_i3(NoiseMixture(1.0))
print("I3 max", top, " threshold lambda", 2 / top)

# %% every term from the mask, modulator and detector chain, up to one constant
basis = CGLMPBasis()
K = chain_constant(basis)
for label, _, x, y, a, b in TERMS:
    bp = basis_phases(basis, x, y, a, b)
    print(f"{label}: chain/K {chain_probability(NoiseMixture(1), bp.phi_s, bp.phi_i, basis) / K:.6f} "
          f"model {model_probability(NoiseMixture(1), bp.phi_s, bp.phi_i):.6f}")

# %% a simulated 10 minute run per setting at lambda 0.85
cfg = DetectionConfig(pair_flux=50.0, integration_time=600.0, rng_seed=3)
sim = simulate_cglmp_run(NoiseMixture(0.85), basis, cfg)
i3, sigma = i3_from_counts(sim, "poisson", "absolute")
print(f"simulated I3 = {i3:.3f} +- {sigma:.3f}, model {0.85 * top:.3f}")
