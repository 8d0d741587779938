"""Dispersion of the frequency-localized half-Klein-Gordon kernel.

    K_{μ,c}(t, x) = ∫ e^{ix·ξ} e^{ith_c(ξ)} β(|ξ|/μ) dξ

For μ ≲ c the symbol behaves like |ξ|²/2 on the band and sup_x |K| decays like
μ/t; for μ ≫ c it is nearly linear (wave-like) and the decay is μ²/(ct).  The
decay only starts once the phase t·h_c turns a full cycle across the band;
before that K is essentially the bump itself and |K|·t grows linearly.

Run:  python demos/04_kernel_decay.py
"""
import numpy as np

from nrlimit.estimates import sup_abs_kernel, dispersive_onset

# %%
for mu in (0.25, 1.0, 4.0):
    power = 1 if mu <= 1.0 else 2
    onset = dispersive_onset(mu)
    print(f"mu = {mu:g}  (normalized by mu^{power}/t, dispersive from t ≈ {onset:.3g})")
    for e in range(0, 11, 2):
        t = 2.0**e
        sup, at = sup_abs_kernel(mu, 1.0, t)
        mark = "*" if t >= onset else " "
        print(f"   t={t:7g} {mark} sup|K|={sup:10.4e} at |x|={at:8.3f}  |K| t/mu^{power}={sup * t / mu**power:8.4f}")

# %%
# Rows marked * are past the onset: the normalized sup stops growing there and
# then keeps falling, since μ/t and μ²/(ct) are upper rates, not the sharp
# asymptotics (the stationary-phase decay in three dimensions is t^{-3/2}).
