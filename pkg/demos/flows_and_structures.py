"""
Flows of tensors along a family of metrics
==========================================

Transports tensors with ``eta_dot = -1/2 hdot^sharp . eta`` and checks a few
closed-form answers: the volume form of a conformal family, the Kaehler lemma
on random instances, and the G2 decomposition of ``Id . phi``.
"""

import numpy as np

from nullcauchy.flows import endo_action, g2_decompose, g2_projectors, kaehler_checks, \
    kaehler_instance, phi0, reference_comparison, volume_flow_error

rng = np.random.default_rng(0)

# h_s = exp(2s) delta on T^3, so the volume form scales like exp(3s)
print(f"volume form, relative error      {volume_flow_error(200):.1e}")
# random polynomial families against a dense matrix-exponential reference
print(f"generic flows vs reference       {reference_comparison(rng, 200, 6):.1e}")

# %%
# Kaehler lemma: J and omega are transported exactly when hdot has no (2,0)+(0,2) part.
for flow in (True, False):
    res = kaehler_checks(*kaehler_instance(rng, 4, flow=flow))
    print(f"flow={flow!s:5}  residual J {res.flow_res_J:.1e}, omega {res.flow_res_omega:.1e}, "
          f"minus part {res.minus_mass:.1e}, lemma holds: {res.lemma_verdict}")

# %%
# G2: the three projectors on 3-forms and the image of the identity endomorphism.
print("projector ranks", [int(np.linalg.matrix_rank(P)) for P in g2_projectors()])
print("Id . phi  ->  r =", g2_decompose(endo_action(np.eye(7), phi0(), "lll")).r)
