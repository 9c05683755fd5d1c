"""Which Jacobians can a given first component carry?

Take f = x1 (1 + x1 x2). Its foliation contains a mild half-Reeb region
exhausted by pieces P_k. If F = (f, f2) had det DF = h, the divergence
theorem bounds the integral of h over every P_k by a flux M through a fixed
bounded hypersurface. So a density h whose integrals grow without bound
cannot be a Jacobian determinant for any such F.

    python demos/obstruction.py
"""

from foliation_lab import gallery
from foliation_lab.expr import parse
from foliation_lab.regions import divergence_closure, flux_bound, load_region, obstruction_integral

strip = load_region(gallery.region_path("braun_strip"))
capped = load_region(gallery.region_path("braun"))
F = gallery.gallery("braun").map()
ks = [2, 4, 8, 16, 32]

for text in ("1", "x1^2"):
    rep = obstruction_integral(strip, parse(text, 2), 32, ks=ks)
    vals = ", ".join(f"{v:.4f}" for v in rep.values)
    print(f"h = {text}: s_k = [{vals}] -> {rep.verdict} (R^2 {rep.fit['r2']:.4f}, limit {rep.limit})")

# the actual Jacobian of F = (f, x2) is 1 + 2 x1 x2; its integrals respect the bound
rep = flux_bound(F, capped, ks=ks)
print(f"M = {rep.M:.6f}; int det DF over P_k:", ", ".join(f"{v:.5f}" for v in rep.det_integrals),
      "->", rep.verdict)
for k in (2, 8):
    c = divergence_closure(F, capped, k)
    print(f"k = {k}: volume {c['volume']:.10f}, boundary flux {c['boundary_flux']:.10f}, "
          f"relative gap {c['relative_residual']:.1e}")
