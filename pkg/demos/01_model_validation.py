"""Build the reference models and check their geometric contract.

The built-in chart models are the Heisenberg groups and their gauge
rotations.  The validator checks that the contact form annihilates the
frame, the transverse field is normalized, the Christoffel symbols
satisfy the metric antisymmetry, and the Levi gram is positive definite.
The Levi constant depends on wedge conventions and is reported, never
pinned.
"""

import numpy as np

from crdiff import heisenberg_model, phase_rotated_heisenberg, validate_model
from crdiff.models import levi_gram

rng = np.random.default_rng(1)

for model in (heisenberg_model(1), heisenberg_model(2), phase_rotated_heisenberg(1, 0.9)):
    points = rng.uniform(-1.5, 1.5, size=(25, model.dim))
    report = validate_model(model, points)
    print(report.as_text())
    print()

m = heisenberg_model(1)
print("frame field at the origin:", m.frame(np.zeros(3))[:, 0])
print("Levi gram at the origin:\n", levi_gram(m, np.zeros(3)))

mr = phase_rotated_heisenberg(1, 0.9)
x = np.array([0.3, -0.2, 0.5])
print("\nrotated-frame Christoffel symbols at", x)
gam = mr.christoffel(x)
for a_idx, label in enumerate(["T", "Z1", "Z1*"]):
    print(f"  Gamma_[{label}, 1]^1 = {gam[a_idx, 0, 0]:.6f}")
