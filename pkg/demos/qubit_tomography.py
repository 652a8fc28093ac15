"""Maximum-likelihood reconstruction of a two-qubit frequency-bin state."""
# %%
import numpy as np

from freqbin.fixtures import data_path, parse_fixture, read_matrix
from freqbin.tomography import bell_state, fidelity, linear_inversion, mle_fit, negativity, synthetic_data

# %% 16 projections, each a sum over the phase configurations it uses
table = parse_fixture(data_path("table1.csv"), "table1")
for row in table.rows[:6]:
    print(row.nu, row.signal, row.idler, row.cells, row.total)
data = table.data()
print("C =", data.normalization)

# %% linear inversion is fast but need not be physical
lin = linear_inversion(data)
print("linear inversion eigenvalues", np.round(np.linalg.eigvalsh(lin), 4))

# %% the likelihood fit stays on the Cholesky manifold
fit = mle_fit(data, restarts=8, seed=0)
ref = read_matrix(data_path("qubit_rho_reference.txt"))
np.set_printoptions(precision=3, suppress=True)
print(fit.rho)
print("max |rho - ref|", np.abs(fit.rho - ref).max(), " F(rho, ref)", fidelity(fit.rho, ref))
print("negativity", negativity(fit.rho), " F(rho, Bell)", fidelity(fit.rho, bell_state(2)))

# %% forward-inverse check with noiseless synthetic counts
for name, rho in (("Bell", bell_state(2)), ("reference", ref)):
    back = mle_fit(synthetic_data(rho, 1e6), seed=1).rho
    print(name, "recovered with fidelity", round(fidelity(back, rho), 6))
