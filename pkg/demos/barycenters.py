"""Barycenters on the bundled wedge fixtures, with their certificates."""
import numpy as np

from minentlab import cat0 as C

rng = np.random.default_rng(0)
for name, make in sorted(C.FIXTURES.items()):
    X = make()
    mu = C.PointedMeasure.of([(C.random_point(X, rng), rng.uniform(0.5, 2.0)) for _ in range(5)])
    b, rep = C.barycenter(X, mu, tol=1e-9)
    print(f"{name:12s} leaf={b.leaf} coords={np.round(b.coords, 6)} iters={rep.iterations} cert={rep.certificate:.1e}")
