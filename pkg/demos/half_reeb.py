"""Half-Reeb components of planar submersions.

g = x1 (1 - x1 x2^2) has no critical points, but its zero level splits into
three curves. Two of them bound a half-Reeb component: a transversal edge
from p to q whose leaves all turn back. The same level structure makes the
paired Hamiltonian field non-solvable.

    python demos/half_reeb.py [OUT_DIR]
"""

import sys
from pathlib import Path

from foliation_lab import gallery
from foliation_lab.expr import parse
from foliation_lab.fibers import level_set_components_2d
from foliation_lab.reeb import detect_hrc_2d
from foliation_lab.solvability import classify, default_policy
from foliation_lab.svg import hrc_svg

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)
box = ((-2.0, 2.0), (-2.0, 2.0))

for name, text in (("x1", "x1"), ("g", "x1*(1 - x1*x2^2)"), ("braun", "x1*(1 + x1*x2)")):
    f = parse(text, 2)
    zero = level_set_components_2d(f, 0.0, box)
    h = detect_hrc_2d(f, box)
    print(f"{name}: level 0 has {zero.count} piece(s); ", end="")
    if h is None:
        print("no half-Reeb component found")
        continue
    checks = {k: v["pass"] for k, v in h.validity.items() if isinstance(v, dict)}
    print(f"half-Reeb component on level {h.level:.4g}, p = {h.p.round(3).tolist()}, "
          f"q = {h.q.round(3).tolist()}, checks {checks}")
    (out / f"hrc_{name}.svg").write_text(hrc_svg(h))

# the triangle: disconnected level <=> hRc <=> non-solvable Hamiltonian field
for entry in ("identity2", "g_pair", "braun"):
    F = gallery.gallery(entry).map()
    print(f"{entry}: H_f1 = V2 is {classify(F, 2, default_policy(2)).verdict}")
