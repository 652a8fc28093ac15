"""A biphoton frequency comb and what a phase modulator does to it."""
# %%
import numpy as np

from freqbin.detection import DetectionConfig, compute_jsi, schmidt_bound
from freqbin.lattice import FrequencyLattice, flat_alphas, make_comb_state, state_norm
from freqbin.optics import ModulatorDrive, apply_modulator, bessel_j, equalize_sidebands, sideband_power

# %% 38 energy-matched pairs on a 49.6 GHz grid, one lattice step per line
lat = FrequencyLattice(subdivision=1, max_index=44)
comb = make_comb_state(lat, flat_alphas(range(3, 41)))
print("norm", state_norm(comb))

# %% the joint spectrum is diagonal, so the Schmidt bound counts the pairs
cfg = DetectionConfig(pair_flux=1e4, integration_time=1.0)
bins = list(range(1, 45))
jsi = compute_jsi(comb, bins, [-b for b in bins], cfg)
print("Schmidt bound", schmidt_bound(jsi))

# %% unequal brightness lowers it; the bound is (sum p)^2 / sum p^2
rng = np.random.default_rng(1)
weights = rng.uniform(0.2, 1.0, 38)
tilted = make_comb_state(lat, {k: np.sqrt(w) for k, w in zip(range(3, 41), weights)})
print("tilted", schmidt_bound(compute_jsi(tilted, bins, [-b for b in bins], cfg)),
      "closed form", weights.sum() ** 2 / np.sum(weights**2))

# %% sideband amplitudes are Bessel functions of the modulation index
for mu in (0.5, 1.5, 3.0):
    amps = [f"{bessel_j(n, mu):+.3f}" for n in range(-3, 4)]
    print(f"mu={mu}: J_-3..J_3 =", " ".join(amps), f" power in |n|<=3: {sideband_power(mu, 3):.4f}")

# %% orders 1 and 3 carry equal power at one index, used for qutrit mixing
mu_star = equalize_sidebands([1, 3])
print("mu*", mu_star, "J1^2", bessel_j(1, mu_star) ** 2, "J3^2", bessel_j(3, mu_star) ** 2)

# %% the modulator is unitary as long as the sidebands stay on the lattice
wide = FrequencyLattice(subdivision=1, max_index=70)
state = make_comb_state(wide, flat_alphas(range(20, 41)))
out = apply_modulator(state, ModulatorDrive(rf_steps=1, mod_index=mu_star))
print("norm after modulation", state_norm(out))
