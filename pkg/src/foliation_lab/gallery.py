"""Named example maps with their declared verdicts.

Each entry lists checks the pipeline must reproduce. Verdict kinds:

``det``       det DF equals the given expression
``fibers``    fiber (i, values) has ``count`` components in ``box``
``solvable``  classify(F, i) under the default policy gives ``verdict``
``hrc``       detect_hrc_2d on f_j (the submersion) finds one or not
``collision`` collision_search finds a pair (``pair`` if exact) or not
``evidence``  connected_fiber_injectivity_evidence(F, i) gives ``verdict``
``region``    the named region file is valid and closes the divergence identity
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

from .maps import SmoothMap, make_box

PI = 3.141592653589793


@dataclass(frozen=True)
class GalleryEntry:
    name: str
    components: tuple
    box: tuple
    anchors: tuple
    verdicts: tuple = ()
    submersion: int | None = None  # index j of the 2D submersion f_j, if any
    regions: tuple = ()
    description: str = ""
    aliases: tuple = field(default=())
    K: tuple | None = None  # compact K for the solvability policy; default [-1,1]^n

    def map(self) -> SmoothMap:
        return SmoothMap.from_strings(self.components, self.name, make_box(self.box))

    def to_json(self) -> dict:
        return {"name": self.name, "components": list(self.components), "box": [list(b) for b in self.box],
                "anchors": list(self.anchors), "verdicts": [dict(v) for v in self.verdicts],
                "submersion": self.submersion, "regions": list(self.regions),
                "description": self.description, "aliases": list(self.aliases),
                "K": [list(b) for b in self.K] if self.K else None}


_ENTRIES = [
    GalleryEntry(
        "identity2", ("x1", "x2"), ((-2, 2), (-2, 2)),
        ("identity map: every fiber is a line",),
        (
            {"kind": "det", "expr": "1"},
            {"kind": "fibers", "i": 1, "values": {2: 0.0}, "count": 1},
            {"kind": "fibers", "i": 2, "values": {1: 0.0}, "count": 1},
            {"kind": "hrc", "present": False},
            {"kind": "solvable", "i": 2, "verdict": "NO_OBSTRUCTION_FOUND"},
            {"kind": "collision", "found": False},
            {"kind": "evidence", "i": 1, "verdict": "EVIDENCE_PASS"},
        ),
        submersion=1, regions=("identity_square",),
        description="f = x1 with its paired map; all levels connected",
        aliases=("x1_pair",),
    ),
    GalleryEntry(
        "identity3", ("x1", "x2", "x3"), ((-2, 2), (-2, 2), (-2, 2)),
        ("identity map of R^3",),
        (
            {"kind": "det", "expr": "1"},
            {"kind": "fibers", "i": 1, "values": {2: 0.0, 3: 0.0}, "count": 1},
            {"kind": "evidence", "i": 1, "verdict": "EVIDENCE_PASS", "c_samples": 20},
        ),
    ),
    GalleryEntry(
        "spiral2", ("exp(x1)*cos(x2)", "exp(x1)*sin(x2)"), ((-1, 1), (-1, 7)),
        ("det DF(x)=e^{2x_1}>0", "x_2=2k pi periodicity"),
        (
            {"kind": "det", "expr": "exp(2*x1)"},
            {"kind": "fibers", "i": 1, "values": {2: 0.0}, "count": 3},
            {"kind": "collision", "found": True, "pair": [[0.0, 0.0], [0.0, 2 * PI]]},
            {"kind": "evidence", "i": 1, "verdict": "HYPOTHESIS_FAILS"},
        ),
        description="planar exponential map; not injective",
        K=((-0.1, 0.1), (-PI / 2, PI)),
    ),
    GalleryEntry(
        "spiral3", ("exp(x1)*cos(x2)", "exp(x1)*sin(x2)", "x3"), ((-2, 2), (-7, 7), (-2, 2)),
        ("det DF(x)=e^{2x_1}>0", "is disconnected", "are not globally solvable", "globally solvable"),
        (
            {"kind": "det", "expr": "exp(2*x1)"},
            {"kind": "fibers", "i": 3, "values": {1: 1.0, 2: 0.0}, "count": 3},
            {"kind": "solvable", "i": 1, "verdict": "NOT_SOLVABLE"},
            {"kind": "solvable", "i": 2, "verdict": "NOT_SOLVABLE"},
            {"kind": "solvable", "i": 3, "verdict": "NO_OBSTRUCTION_FOUND"},
            {"kind": "collision", "found": True},
            {"kind": "evidence", "i": 3, "verdict": "HYPOTHESIS_FAILS"},
        ),
        description="exponential map times the identity; leaves are planes, V1 and V2 not solvable",
        K=((-0.1, 0.1), (-PI / 2, PI), (-0.1, 0.1)),
    ),
    GalleryEntry(
        "g_pair", ("x1*(1 - x1*x2^2)", "x2"), ((-2, 2), (-2, 2)),
        ("g(x,y)=x(1-xy^2)", "compact edge being the segment"),
        (
            {"kind": "det", "expr": "1 - 2*x1*x2^2"},
            {"kind": "fibers", "i": 2, "values": {1: 0.0}, "count": 3},
            {"kind": "hrc", "present": True},
            {"kind": "solvable", "i": 2, "verdict": "NOT_SOLVABLE"},
        ),
        submersion=1,
        description="submersion g paired with x2; g = 0 has three branches",
    ),
    GalleryEntry(
        "braun", ("x1*(1 + x1*x2)", "x2"), ((-2, 2), (-2, 2)),
        ("f(x,y) = x(1+xy)",),
        (
            {"kind": "det", "expr": "1 + 2*x1*x2"},
            {"kind": "fibers", "i": 2, "values": {1: 0.0}, "count": 3},
            {"kind": "hrc", "present": True},
            {"kind": "solvable", "i": 2, "verdict": "NOT_SOLVABLE"},
            {"kind": "collision", "found": True, "box": [[-3, 3], [-3, 3]]},
            {"kind": "evidence", "i": 1, "verdict": "EVIDENCE_PASS"},
            {"kind": "evidence", "i": 2, "verdict": "HYPOTHESIS_FAILS"},
        ),
        submersion=1, regions=("braun_strip", "braun"),
        description="cubic submersion x(1+xy) paired with x2; F(0,1) = F(-1,1)",
        aliases=("braun_cubic",),
    ),
    GalleryEntry(
        "paraboloid3", ("x1^2 + x2^2 - exp(x3)", "x1", "x2"), ((-2, 2), (-2, 2), (-2, 2)),
        ("f_1(x)=x_1^2+x_2^2-e^{x_3}", "half-Reeb component"),
        (
            {"kind": "det", "expr": "-exp(x3)"},
            {"kind": "fibers", "i": 1, "values": {2: 0.0, 3: 0.0}, "count": 1},
            {"kind": "solvable", "i": 2, "verdict": "NOT_SOLVABLE"},
            {"kind": "solvable", "i": 3, "verdict": "NOT_SOLVABLE"},
            {"kind": "collision", "found": False},
        ),
        regions=("paraboloid3",),
        description="leaves x1^2+x2^2 = e^x3 + c; the solid below the compact disc is an hRc",
    ),
    GalleryEntry(
        "rotated_g", ("x1 - x1^2*(x2^2 + x3^2)^2", "x2", "x3"), ((-2, 2), (-2, 2), (-2, 2)),
        ("x-x^2(y^2+z^2)^2",),
        (
            {"kind": "det", "expr": "1 - 2*x1*(x2^2 + x3^2)^2"},
            {"kind": "fibers", "i": 2, "values": {1: 0.0, 3: 0.0}, "count": 3},
            {"kind": "solvable", "i": 2, "verdict": "NOT_SOLVABLE"},
            {"kind": "solvable", "i": 3, "verdict": "NOT_SOLVABLE"},
        ),
        description="g rotated about the x1 axis; hRc with compact face {x1=1, x2^2+x3^2<=1}",
    ),
]

_BY_NAME = {}
for _e in _ENTRIES:
    _BY_NAME[_e.name] = _e
    for _a in _e.aliases:
        _BY_NAME[_a] = _e


class UnknownGalleryEntry(KeyError):
    pass


def names() -> list:
    return [e.name for e in _ENTRIES]


def entries() -> list:
    return list(_ENTRIES)


def gallery(name: str) -> GalleryEntry:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise UnknownGalleryEntry(f"unknown gallery entry {name!r}; known: {', '.join(sorted(_BY_NAME))}") from None


def region_path(name: str):
    return resources.files("foliation_lab") / "data" / "regions" / f"{name}.json"


def region_names() -> list:
    d = resources.files("foliation_lab") / "data" / "regions"
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".json"))


def _det_check(F: SmoothMap, text: str, seed: int = 0) -> dict:
    import numpy as np

    from .expr import lambdify, parse
    from .fields import jacobian

    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in F.box])
    hi = np.array([b[1] for b in F.box])
    X = lo + (hi - lo) * rng.random((200, F.n))
    got = jacobian(F).det_at(X)
    want = np.broadcast_to(lambdify(parse(text, F.n), F.n)(*X.T), got.shape)
    err = float(np.max(np.abs(got - want) / (1 + np.abs(want))))
    return {"max_relative_difference": err, "pass": err <= 1e-12}


def reproduce(entry: GalleryEntry, v: dict, seed: int = 0) -> dict:
    """Run the pipeline for one declared verdict; returns the observed value and ``pass``."""
    import numpy as np

    from .fibers import FiberSpec, fiber_report
    from .fields import cofactor_field
    from .injectivity import collision_search, connected_fiber_injectivity_evidence
    from .regions import divergence_closure, exhaustion, load_region

    F = entry.map()
    kind = v["kind"]
    box = make_box(v.get("box", entry.box))
    if kind == "det":
        return _det_check(F, v["expr"], seed)
    if kind == "fibers":
        spec = FiberSpec(F.name, v["i"], {int(j): float(c) for j, c in v["values"].items()}, box,
                         v.get("resolution", 512))
        rep = fiber_report(F, spec, seed=seed)
        return {"count": rep.count, "method": rep.method, "pass": rep.count == v["count"]}
    if kind == "solvable":
        from .solvability import classify, default_policy, replay_witness

        res = classify(F, v["i"], default_policy(F.n, entry.K), seed=seed)
        out = {"verdict": res.verdict, "pass": res.verdict == v["verdict"]}
        if res.witness is not None:
            rep = replay_witness(cofactor_field(F, v["i"]), res.witness)
            out["replay"] = rep["verdict"]
            out["z"] = [float(x) for x in res.witness.z]
            out["pass"] = out["pass"] and rep["verdict"] == "PASS"
        return out
    if kind == "hrc":
        from .reeb import detect_hrc_2d

        h = detect_hrc_2d(F.components[entry.submersion - 1], box, seed=seed)
        present = h is not None
        ok = present == v["present"] and (not present or h.validity.get("verdict") == "PASS")
        return {"present": present, "validity": h.validity.get("verdict") if h else None, "pass": ok}
    if kind == "collision":
        hit = collision_search(F, box, v.get("n_samples", 20000), seed)
        ok = (hit is not None) == v["found"]
        if ok and hit is not None and "pair" in v:
            a, b = (np.array(p, float) for p in v["pair"])
            ok = bool(np.allclose(hit.a, a, atol=1e-9) and np.allclose(hit.b, b, atol=1e-9))
        return {"found": hit is not None, "witness": hit.to_json() if hit else None, "pass": ok}
    if kind == "evidence":
        rep = connected_fiber_injectivity_evidence(F, v["i"], v.get("c_samples", 200), box, seed)
        return {"verdict": rep["verdict"], "pass": rep["verdict"] == v["verdict"]}
    if kind == "region":
        R = load_region(region_path(v["name"]))
        exhaustion(R, v.get("k", 4))
        cl = divergence_closure(F, R, v.get("k", 4))
        return {"relative_residual": cl["relative_residual"], "pass": cl["pass"]}
    raise ValueError(f"unknown verdict kind {kind!r}")


def declared_checks() -> list:
    """(entry, verdict) for every declared verdict, with region files as ``region`` verdicts."""
    out = []
    for e in _ENTRIES:
        for v in e.verdicts:
            out.append((e, v))
        for r in e.regions:
            out.append((e, {"kind": "region", "name": r}))
    return out
