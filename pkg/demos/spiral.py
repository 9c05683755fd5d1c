"""The exponential spiral: a local diffeomorphism that is not injective.

F(x1, x2) = e^{x1} (cos x2, sin x2) has det DF = e^{2 x1} > 0 everywhere, yet
F(0, 0) = F(0, 2 pi). This script walks through what the toolkit sees.

    python demos/spiral.py [OUT_DIR]
"""

import sys
from pathlib import Path

import numpy as np

from foliation_lab import gallery
from foliation_lab.cli import dumps
from foliation_lab.expr import to_text
from foliation_lab.fibers import FiberSpec, fiber_report
from foliation_lab.fields import cofactor_field, jacobian, verify_duality
from foliation_lab.injectivity import collision_search
from foliation_lab.solvability import classify, default_policy, replay_witness
from foliation_lab.svg import curves_svg

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

e2 = gallery.gallery("spiral2")
F = e2.map()
print("map:", F.to_text().replace("\n", "; "))
print("det DF =", to_text(jacobian(F).det))
print("V1 =", cofactor_field(F, 1), " V2 =", cofactor_field(F, 2))
print("Kronecker identity:", verify_duality(F, samples=200)["verdict"])

# f2 = 0 is e^{x1} sin x2 = 0: the lines x2 = 0, pi, 2 pi inside the window x2 in [-1, 7]
rep = fiber_report(F, FiberSpec(F.name, 1, {2: 0.0}, F.box))
print(f"fiber f2 = 0: {rep.count} components, one point each:",
      [[round(float(v), 4) for v in p] for p in rep.representatives])

hit = collision_search(F, n_samples=20000)
print("collision:", hit.a.round(12).tolist(), "and", hit.b.round(12).tolist())

# non-solvability of V1: a curve leaves and returns to K after escaping far away
v = classify(F, 1, default_policy(2, e2.K))
w = v.witness
print(f"V1: {v.verdict}; curve from {w.a_prime.round(3).tolist()} to {w.b_prime.round(3).tolist()} "
      f"reaches |z| = {np.linalg.norm(w.z):.2f}")
print("replay:", replay_witness(cofactor_field(F, 1), w)["verdict"])
lo, hi = w.curve.points.min(axis=0) - 0.5, w.curve.points.max(axis=0) + 0.5
(out / "spiral_witness.svg").write_text(curves_svg([w.curve], tuple(zip(lo, hi))))
(out / "spiral_solvable.json").write_text(dumps(v.to_json()))
print("wrote", out / "spiral_witness.svg")
