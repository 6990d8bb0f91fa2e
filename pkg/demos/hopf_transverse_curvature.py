"""
Curvature 4 from a rotating line
================================

Take the Jacobi triple with R = I on R^2 (unit curvature) and the isotropic
line spanned by the field J(t) = (cos t, sin t).  The vertical bundle V_t is
that rotating line and the horizontal bundle is its orthogonal complement.
Differentiating the horizontal field X(t) = (-sin t, cos t) gives a vertical
vector, so the mixing tensor A is non-zero with A^2 = -I on the horizontal part.
The transverse triple therefore carries curvature 1 - 3(-1) = 4, the same
jump from 1 to 4 as for the Hopf fibration S^3 -> S^2(1/2).
"""
import math

import numpy as np

from finsler import a_tensor, catalog, singular_instants, transverse_triple
from finsler.jacobi import _omega_matrix, hopf_line, symplectic_isomorphism_check

triple = catalog("hopf", domain=(0.0, 2 * math.pi))
line = hopf_line(triple)
print("singular instants of the line:", singular_instants(line))

X0 = np.array([0.0, 1.0])
print("A X(0)   =", a_tensor(line, 0.0, X0).round(9))
print("A^2 X(0) =", a_tensor(line, 0.0, a_tensor(line, 0.0, X0)).round(9))

tt = transverse_triple(triple, line)
ts = np.linspace(0, 2 * math.pi, 9)
print("transverse curvature:", tt.R(ts)[:, 0, 0].round(8))

# Fields symplectically orthogonal to the line descend to the transverse
# triple without changing their symplectic products.
_, _, Vh = np.linalg.svd(line.basis @ _omega_matrix(2))
rng = np.random.default_rng(0)
fields = [rng.normal(size=3) @ Vh[1:] for _ in range(3)]
print(f"symplectic isomorphism error: {symplectic_isomorphism_check(tt, fields):.1e}")
