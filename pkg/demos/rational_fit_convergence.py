"""Sup-error of the rational fit of exp(-x) on [0, 40] as the degree grows, checked on the spectrum of a sphere."""

import numpy as np

from spectral_dist.filters import Filter, fit_rational
from spectral_dist.laplacian import lambda_max_bound, laplacian_pair
from spectral_dist.shapes import sphere
from spectral_dist.spectrum import eigendecompose

unit = Filter("diffusion", t=1.0)
print("degree   sigma on [0, 40]   equioscillation ratio")
for r in range(1, 9):
    fit = fit_rational(unit, (r, r), (0.0, 40.0))
    print(f"({r}, {r})   {fit.sigma:12.3e}       {fit.ratio:.3f}")

# the uniform bound transfers to every eigenvalue of the discrete operator
pair = laplacian_pair(sphere(800))
lam = lambda_max_bound(pair)
heat = Filter("diffusion", t=0.05)
fit = fit_rational(heat, (5, 5), (0.0, lam))
w = eigendecompose(pair, pair.n_vertices).eigenvalues
print(f"\nsphere(800): lambda_max bound {lam:.1f}, fit sigma {fit.sigma:.2e}, "
      f"max error over the spectrum {np.abs(fit(w) - heat.inverse(w)).max():.2e}")
