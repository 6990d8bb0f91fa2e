"""
Splitting a Lagrangian family of Jacobi fields
==============================================

With non-negative curvature, a Lagrangian space of Jacobi fields on the whole
line splits into the fields that vanish somewhere and the parallel fields.
On a finite window we look for zeros and for fields with J' = 0 and RJ = 0.

The mixed triple R = diag(1, 0) with L spanned by sin(t) e1 and e2 is the
simplest case with both pieces.  We also show the Riccati operator of the
parallel piece, which vanishes identically, and what happens when the
curvature has a negative direction.
"""
import math

import numpy as np

from finsler import PreconditionError, Subspace, catalog, riccati_operator, wilking_decompose
from finsler.jacobi import trace_riccati_check

mixed = catalog("mixed")
L = Subspace([[0, 1, 1, 0], [0, 1, -1, 0]], mixed)  # deliberately mixed-up basis
w = wilking_decompose(mixed, L)
print("dims (vanishing, parallel):", w.dims)
print("vanishing part:", w.null_span.basis.round(6))
print("parallel part: ", w.parallel_span.basis.round(6))
for key in ("singular_instants", "reconstruction_error", "curvature_residual", "a_tensor_residual",
            "transverse_riccati_norm"):
    val = w.diagnostics[key]
    print(f"  {key}: {np.round(val, 9) if isinstance(val, list) else f'{val:.2e}'}")
print(" ", w.diagnostics["note"])

# The Riccati operator of the point Lagrangian on the unit sphere is cot(t) I.
sphere = catalog("sphere")
point = Subspace([[0, 0, 1, 0], [0, 0, 0, 1]], sphere)
print("S(pi/4) on the sphere:", riccati_operator(sphere, point, math.pi / 4).round(12).tolist())
print("sphere point Lagrangian splits as", wilking_decompose(sphere, point).dims)

flat = catalog("flat", domain=(0, 20))
rep = trace_riccati_check(flat, Subspace([[1, 0, 0, 0], [0, 1, 0, 0]], flat))
print(f"flat parallel Lagrangian: applicable={rep.applicable}, max |S| = {rep.max_norm:.1e}")

indefinite = catalog({"diag": [1.0, -1.0]})
try:
    wilking_decompose(indefinite, Subspace([[0, 0, 1, 0], [0, 0, 0, 1]], indefinite))
except PreconditionError as exc:
    print("indefinite curvature:", exc)
