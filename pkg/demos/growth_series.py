"""Critical exponents of a few length spectra and a free product tube check."""
import math

from minentlab import entropy as E

print("F2      ", E.critical_exponent(E.FreeGroupOracle(2), 1e-3, 18), "vs ln 3 =", math.log(3))
print("H^3     ", E.critical_exponent(E.hyperbolic3_oracle(), 1e-3, 20))
print("Z^2 R=60 slope", E.growth_regression(E.z2_oracle(), 60).slope)
Z = E.FreeGroupOracle(1)
for L in (0.5, 1.0, 1.2, 3.0):
    row = E.free_product_exponent_check(Z, Z, L, [0.5], cutoff=12).rows[0]
    print(f"Z*Z L={L:<4g} partial={row.partial_sum:.4f} bound={row.bound:.4f} converged={row.converged}")
