"""Walk through the cusp cap, conformal change and flattening for a torus cusp."""
from minentlab import profiles as P
from minentlab import surgery as S

spec = S.TorusCuspSpec((0.3, 0.7), 1.0, 1.0)
print("delta   ell'       T          log10|dVol|  bound ok")
for delta in (0.2, 0.1, 0.05):
    _, par = P.cusp_cap_profile(1.0, delta)
    m = S.conformal_change(spec, delta)
    vd = S.volume_defect(S.hyperbolic_flatten(m, delta))
    print(f"{delta:<7g} {par.ell_prime:<10.6f} {m.meta['T']:<10.4f} {vd.log10_defect:<12.2f} {vd.ok}")
