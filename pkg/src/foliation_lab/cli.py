"""Command line entry point: ``foliation-lab <command> [flags]``.

Exit codes: 0 the analysis completed, 1 the verdict is negative and
``--strict`` was given (or a construction failed), 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import gallery as gal
from .expr import ParseError, evaluate, parse
from .maps import MapFormatError, SmoothMap, load_map, make_box, parse_box

EXIT_OK, EXIT_NEGATIVE, EXIT_INPUT = 0, 1, 2
THREADS_ENV = "FOLIATION_LAB_THREADS"


class InputError(Exception):
    pass


# ------------------------------------------------------------------ output

def clean(obj):
    """JSON-ready copy: numpy scalars and arrays to Python, keys to str, inf/nan to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_curve_csv(curve, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    curve.to_csv(tmp)
    os.replace(tmp, path)


def emit(args, name: str, payload: dict) -> None:
    text = dumps(payload)
    write_atomic(Path(args.out) / f"{name}.json", text)
    if not args.quiet:
        sys.stdout.write(text)


# ------------------------------------------------------------------ inputs

def resolve_map(text: str | None, box=None) -> SmoothMap:
    if not text:
        raise InputError("--map is required for this command")
    if text.startswith("gallery:"):
        try:
            F = gal.gallery(text.split(":", 1)[1]).map()
        except gal.UnknownGalleryEntry as exc:
            raise InputError(str(exc.args[0])) from None
    elif Path(text).is_file():
        try:
            F = load_map(text)
        except (OSError, MapFormatError, ValueError) as exc:
            raise InputError(f"cannot read map file {text}: {exc}") from None
    else:
        body = text.strip()
        if body.startswith("["):
            try:
                comps = json.loads(body)
            except json.JSONDecodeError as exc:
                raise InputError(f"bad inline map: {exc}") from None
        else:
            comps = [c.strip() for c in body.split(";") if c.strip()]
        if len(comps) < 2:
            raise InputError(f"{text!r} is neither a map file, gallery:NAME, nor a ';'-separated list "
                             "of at least two components")
        try:
            F = SmoothMap.from_strings(comps, "inline")
        except (ParseError, ValueError) as exc:
            raise InputError(f"bad inline map: {exc}") from None
    if box is not None:
        if len(box) != F.n:
            raise InputError(f"--box has {len(box)} intervals but the map has dimension {F.n}")
        F = SmoothMap(F.components, F.name, box)
    elif F.box is None:
        F = SmoothMap(F.components, F.name, make_box([(-2.0, 2.0)] * F.n))
    return F


def resolve_box(args, n: int | None = None):
    if not args.box:
        return None
    try:
        box = parse_box(args.box, n)
    except (ValueError, MapFormatError) as exc:
        raise InputError(f"bad --box: {exc}") from None
    return box


def parse_point(text: str, n: int, what: str) -> np.ndarray:
    """Comma-separated numbers; constant expressions such as 2*pi are allowed."""
    try:
        vals = [evaluate(parse(t.strip(), 1), [0.0]) for t in text.split(",")]
    except (ParseError, ValueError) as exc:
        raise InputError(f"bad {what}: {exc}") from None
    if len(vals) != n:
        raise InputError(f"{what} needs {n} numbers, got {len(vals)}")
    return np.array(vals, dtype=float)


def check_index(i, n):
    if i is None:
        raise InputError("--i is required for this command")
    if not 1 <= i <= n:
        raise InputError(f"--i must be in 1..{n}")
    return i


def threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        t = int(raw)
    except ValueError:
        raise InputError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if t < 1:
        raise InputError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return t


# ---------------------------------------------------------------- commands

def cmd_verify_identities(args) -> bool:
    from .fields import verify_divergence_identity, verify_duality

    F = resolve_map(args.map, resolve_box(args))
    results = [verify_duality(F, args.samples, args.seed)]
    modes = ["numeric", "symbolic"] if args.mode == "both" else [args.mode]
    for i in range(1, F.n + 1):
        for m in modes:
            results.append(verify_divergence_identity(F, i, m, args.samples, args.seed))
    ok = all(r["verdict"] == "PASS" for r in results)
    emit(args, "identities", {"map": F.name, "components": F.to_text(), "samples": args.samples,
                              "seed": args.seed, "checks": results, "verdict": "PASS" if ok else "FAIL"})
    return ok


def cmd_trace(args) -> bool:
    from .flow import TraceOptions, ZeroFieldError, boundary_exit_check, monotonicity_diagnostics, trace, trace_both
    from .fields import cofactor_field
    from .svg import curves_svg

    F = resolve_map(args.map, resolve_box(args))
    i = check_index(args.i, F.n)
    if not args.x0:
        raise InputError("--x0 is required for trace")
    x0 = parse_point(args.x0, F.n, "--x0")
    V = cofactor_field(F, i)
    opts = TraceOptions(box=F.box, rtol=args.rtol, max_steps=args.max_steps)
    try:
        c = trace_both(V, x0, opts) if args.direction == "both" else trace(V, x0, opts, args.direction)
    except ZeroFieldError as exc:
        raise InputError(str(exc)) from None
    diag = monotonicity_diagnostics(c, F, i)
    exit_check = boundary_exit_check(V, x0, F.box, opts)
    out = Path(args.out)
    write_curve_csv(c, out / "trace.csv")
    write_atomic(out / "trace.svg", curves_svg([c], F.box, F.components[0] if F.n == 2 else None,
                                                float(F(x0)[0]) if F.n == 2 else None))
    emit(args, "trace", {
        "map": F.name, "i": i, "x0": x0, "box": F.box, "direction": args.direction,
        "termination": c.termination.value,
        "termination_backward": c.termination_backward.value if c.termination_backward else None,
        "points": len(c), "arclength": c.arclength, "loop_flag": c.loop_flag,
        "monotonicity": diag, "boundary_exit": exit_check, "curve_csv_path": "trace.csv"})
    return diag["verdict"] == "PASS" and exit_check["verdict"] == "PASS"


def cmd_fibers(args) -> bool:
    from .fibers import FiberSpec, find_disconnected_fiber, fiber_report, level_set_components_2d

    if args.f:
        try:
            f = parse(args.f, 2)
        except ParseError as exc:
            raise InputError(f"bad --f: {exc}") from None
        box = resolve_box(args, 2) or make_box([(-2.0, 2.0)] * 2)
        c = float(parse_point(args.c or "0", 1, "--c")[0])
        rep = level_set_components_2d(f, c, box, args.res)
        emit(args, "fibers", {"f": args.f, "level": c, **rep.to_json()})
        return rep.count <= 1
    F = resolve_map(args.map, resolve_box(args))
    i = check_index(args.i, F.n)
    if args.c:
        vals = parse_point(args.c, F.n - 1, "--c (one value per j != i)")
        js = [j for j in range(1, F.n + 1) if j != i]
        spec = FiberSpec(F.name, i, dict(zip(js, map(float, vals))), F.box, args.res)
        rep = fiber_report(F, spec, args.method, seed=args.seed)
        emit(args, "fibers", rep.to_json())
        return rep.count <= 1
    found = find_disconnected_fiber(F, i, budget=args.budget, seed=args.seed, resolution=args.res,
                                    method=args.method)
    payload = {"map": F.name, "i": i, "search_budget": args.budget, "seed": args.seed,
               "box": F.box, "disconnected_found": found is not None,
               "report": found[1].to_json() if found else None}
    emit(args, "fibers", payload)
    return found is None


def cmd_solvable(args) -> bool:
    from .fields import cofactor_field
    from .solvability import classify, default_policy, replay_witness

    F = resolve_map(args.map, resolve_box(args))
    i = check_index(args.i, F.n)
    if args.K:
        try:
            K = parse_box(args.K, F.n)
        except (ValueError, MapFormatError) as exc:
            raise InputError(f"bad --K: {exc}") from None
    elif args.map.startswith("gallery:"):
        K = gal.gallery(args.map.split(":", 1)[1]).K
    else:
        K = None
    res = classify(F, i, default_policy(F.n, K), budget=args.budget, seed=args.seed)
    csv = None
    payload = None
    if res.witness is not None:
        csv = "witness_curve.csv"
        write_curve_csv(res.witness.curve, Path(args.out) / csv)
        payload = res.to_json(csv)
        payload["replay"] = replay_witness(cofactor_field(F, i), res.witness)
    emit(args, "solvable", payload or res.to_json())
    return res.verdict != "NOT_SOLVABLE"


def cmd_hrc(args) -> bool:
    from .reeb import ConstructionFailed, SubmersionViolation, construct_hrc_edges, detect_hrc_2d
    from .svg import hrc_svg

    if args.f:
        try:
            f = parse(args.f, 2)
        except ParseError as exc:
            raise InputError(f"bad --f: {exc}") from None
        text = args.f
    else:
        F = resolve_map(args.map)
        if F.n != 2:
            raise InputError("hrc works on planar submersions")
        j = args.i or 1
        check_index(j, 2)
        f, text = F.components[j - 1], F.to_text()
    box = resolve_box(args, 2) or make_box([(-2.0, 2.0)] * 2)
    try:
        if args.p or args.q:
            if not (args.p and args.q):
                raise InputError("--p and --q go together")
            h = construct_hrc_edges(f, parse_point(args.p, 2, "--p"), parse_point(args.q, 2, "--q"), box,
                                    resolution=args.res)
        else:
            h = detect_hrc_2d(f, box, resolution=args.res, budget=args.budget, seed=args.seed)
    except SubmersionViolation as exc:
        raise InputError(f"SUBMERSION_VIOLATION: {exc}") from None
    except ConstructionFailed as exc:
        emit(args, "hrc", {"f": text, "box": box, "status": "CONSTRUCTION_FAILED", "reason": str(exc)})
        raise _Negative() from None
    if h is None:
        emit(args, "hrc", {"f": text, "box": box, "status": "NONE",
                           "note": "no disconnected level among the sampled values"})
        return True
    write_atomic(Path(args.out) / "hrc.svg", hrc_svg(h))
    emit(args, "hrc", {"status": "FOUND", "svg_path": "hrc.svg", **h.to_json()})
    return False


def _load_region(text):
    from .regions import RegionInvalid, load_region

    path = Path(text)
    if not path.is_file():
        if text not in gal.region_names():
            raise InputError(f"unknown region {text!r}; known: {', '.join(gal.region_names())}")
        path = gal.region_path(text)
    try:
        return load_region(path)
    except (RegionInvalid, ParseError, ValueError, KeyError) as exc:
        raise InputError(f"REGION_INVALID: {exc}") from None


def cmd_region(args) -> bool:
    from .regions import (NegativeH, RegionInvalid, TangencyViolation, divergence_closure, exhaustion,
                          flux_bound, obstruction_integral)
    from .svg import region_svg

    if not args.region:
        raise InputError("--region is required")
    R = _load_region(args.region)
    k_max = args.k or (32 if R.dim == 2 else 6)
    if k_max < R.k_min:
        raise InputError(f"--k must be at least {R.k_min} for region {R.name}")
    try:
        mesh = exhaustion(R, k_max)
        h = parse(args.h, R.dim)
        obs = obstruction_integral(R, h, k_max)
    except RegionInvalid as exc:
        raise InputError(f"REGION_INVALID: {exc}") from None
    except NegativeH as exc:
        raise InputError(f"NEGATIVE_H: {exc}") from None
    except ParseError as exc:
        raise InputError(f"bad --h: {exc}") from None
    payload = {"region": R.name, "dim": R.dim, "strict": R.strict, "k_max": k_max,
               "checks": mesh.checks, "obstruction": obs.to_json()}
    ok = obs.verdict == "BOUNDED_TREND"
    if args.map:
        F = resolve_map(args.map)
        if F.n != R.dim:
            raise InputError("map and region dimensions differ")
        try:
            fr = flux_bound(F, R, k_max)
        except TangencyViolation as exc:
            raise InputError(f"TANGENCY_VIOLATION: {exc}") from None
        except ValueError as exc:
            raise InputError(str(exc)) from None
        payload["flux"] = fr.to_json()
        payload["closure"] = [divergence_closure(F, R, k) for k in sorted({R.k_min, max(R.k_min, min(4, k_max)), max(R.k_min, min(8, k_max))})]
        ok = ok and fr.verdict == "PASS" and all(c["pass"] for c in payload["closure"])
    if R.dim == 2:
        write_atomic(Path(args.out) / "region.svg", region_svg(exhaustion(R, min(k_max, 8))))
    emit(args, "region", payload)
    return ok


def cmd_inject(args) -> bool:
    from .injectivity import collision_search, connected_fiber_injectivity_evidence

    F = resolve_map(args.map, resolve_box(args))
    payload = {"map": F.name, "box": F.box, "seed": args.seed}
    hit = None
    if args.mode in ("collision", "both"):
        hit = collision_search(F, F.box, args.samples, args.seed)
        payload["collision"] = {"mode": "collision", "verdict": "COLLISION_FOUND" if hit else "NONE",
                                "witness": hit.to_json() if hit else None, "samples": args.samples,
                                "note": ("F(a) = F(b) with a != b: the map is not injective" if hit else
                                         "no collision among the samples; not a proof of injectivity")}
    if args.mode in ("evidence", "both"):
        idx = [check_index(args.i, F.n)] if args.i else list(range(1, F.n + 1))
        payload["evidence"] = [connected_fiber_injectivity_evidence(
            F, i, args.c_samples, F.box, args.seed, args.res,
            collision=hit if args.mode == "both" else "skip") for i in idx]
        all_pass = all(e["verdict"] == "EVIDENCE_PASS" for e in payload["evidence"])
        payload["all_indices_evidence_pass"] = all_pass
        if args.mode == "both":
            payload["consistent"] = not (all_pass and hit is not None)
    emit(args, "inject", payload)
    return hit is None


def cmd_gallery(args) -> bool:
    if args.list or not args.name:
        items = []
        for e in gal.entries():
            items.append({"name": e.name, "aliases": list(e.aliases), "anchors": list(e.anchors),
                          "dimension": len(e.components), "description": e.description})
        emit(args, "gallery", {"entries": items, "regions": gal.region_names()})
        return True
    try:
        e = gal.gallery(args.name)
    except gal.UnknownGalleryEntry as exc:
        raise InputError(str(exc.args[0])) from None
    payload = e.to_json()
    ok = True
    if args.check:
        payload["results"] = []
        for v in list(e.verdicts) + [{"kind": "region", "name": r} for r in e.regions]:
            r = gal.reproduce(e, v, args.seed)
            payload["results"].append({"declared": v, "observed": r})
            ok = ok and r["pass"]
    emit(args, "gallery", payload)
    return ok


def cmd_report(args) -> bool:
    if args.map:
        if not args.map.startswith("gallery:"):
            raise InputError("report takes --map gallery:NAME (or no --map for the whole gallery)")
        try:
            chosen = [gal.gallery(args.map.split(":", 1)[1])]
        except gal.UnknownGalleryEntry as exc:
            raise InputError(str(exc.args[0])) from None
    else:
        chosen = gal.entries()
    rows = []
    for e in chosen:
        for v in list(e.verdicts) + [{"kind": "region", "name": r} for r in e.regions]:
            r = gal.reproduce(e, v, args.seed)
            rows.append({"entry": e.name, "declared": v, "observed": r, "pass": r["pass"]})
    ok = all(r["pass"] for r in rows)
    emit(args, "report", {"entries": [e.name for e in chosen], "seed": args.seed, "results": rows,
                          "passed": sum(r["pass"] for r in rows), "total": len(rows),
                          "verdict": "PASS" if ok else "FAIL"})
    return ok


class _Negative(Exception):
    pass


COMMANDS = {
    "verify-identities": cmd_verify_identities,
    "trace": cmd_trace,
    "fibers": cmd_fibers,
    "solvable": cmd_solvable,
    "hrc": cmd_hrc,
    "region": cmd_region,
    "inject": cmd_inject,
    "gallery": cmd_gallery,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="foliation-lab",
                                description="Foliations by cofactor fields: identities, fibers, "
                                            "solvability witnesses, half-Reeb components, regions.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(sp):
        sp.add_argument("--map", help="map file, gallery:NAME, or inline 'f1; f2; ...'")
        sp.add_argument("--box", help="box as 'lo1,hi1,lo2,hi2,...'")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("--strict", action="store_true", help="exit 1 when the verdict is negative")
        sp.add_argument("--quiet", action="store_true", help="do not echo the JSON report")
        return sp

    sp = common(sub.add_parser("verify-identities", help="check V_i(f_j) = delta_ij det DF and div(f_i V_i) = det DF"))
    sp.add_argument("--samples", type=int, default=500)
    sp.add_argument("--mode", choices=["numeric", "symbolic", "both"], default="both")

    sp = common(sub.add_parser("trace", help="integral curve of V_i with diagnostics"))
    sp.add_argument("--i", type=int)
    sp.add_argument("--x0", help="start point 'a,b,...'")
    sp.add_argument("--direction", choices=["both", "forward", "backward"], default="both")
    sp.add_argument("--rtol", type=float, default=1e-9)
    sp.add_argument("--max-steps", type=int, default=20000)

    sp = common(sub.add_parser("fibers", help="connected components of a fiber or a planar level set"))
    sp.add_argument("--i", type=int)
    sp.add_argument("--f", help="single planar function (level set mode)")
    sp.add_argument("--c", help="fiber values c_j, j != i (or the level with --f)")
    sp.add_argument("--res", type=int, default=512)
    sp.add_argument("--budget", type=int, default=200)
    sp.add_argument("--method", choices=["auto", "GRID2D", "CURVE_ID"], default="auto")

    sp = common(sub.add_parser("solvable", help="search for a non-solvability witness of V_i"))
    sp.add_argument("--i", type=int)
    sp.add_argument("--K", help="compact box K (default [-1,1]^n)")
    sp.add_argument("--budget", type=int, default=256)

    sp = common(sub.add_parser("hrc", help="detect or construct a planar half-Reeb component"))
    sp.add_argument("--f", help="planar submersion")
    sp.add_argument("--i", type=int, help="component of --map to use (default 1)")
    sp.add_argument("--p")
    sp.add_argument("--q")
    sp.add_argument("--res", type=int, default=512)
    sp.add_argument("--budget", type=int, default=64)

    sp = common(sub.add_parser("region", help="exhaustion checks, obstruction integral, flux bound"))
    sp.add_argument("--region", help="region name or JSON file")
    sp.add_argument("--h", default="1", help="density h (default 1)")
    sp.add_argument("--k", type=int, help="largest exhaustion index")

    sp = common(sub.add_parser("inject", help="collision search and connected-fiber evidence"))
    sp.add_argument("--mode", choices=["collision", "evidence", "both"], default="both")
    sp.add_argument("--i", type=int, help="evidence index (default: all)")
    sp.add_argument("--samples", type=int, default=20000)
    sp.add_argument("--c-samples", type=int, default=200)
    sp.add_argument("--res", type=int, default=512)

    sp = common(sub.add_parser("gallery", help="list or show gallery entries"))
    sp.add_argument("name", nargs="?")
    sp.add_argument("--list", action="store_true")
    sp.add_argument("--check", action="store_true", help="reproduce the declared verdicts")

    common(sub.add_parser("report", help="reproduce every declared gallery verdict"))
    return p


VALUE_FLAGS = ("--box", "--K", "--x0", "--c", "--p", "--q", "--h", "--f")


def _glue_values(argv):
    """Let values that start with '-' (such as '--box -2,2,-2,2') follow their flag."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok in VALUE_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _glue_values(sys.argv[1:] if argv is None else list(argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        threads()
        ok = COMMANDS[args.command](args)
    except _Negative:
        return EXIT_NEGATIVE
    except InputError as exc:
        print(f"foliation-lab: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ParseError, MapFormatError) as exc:
        print(f"foliation-lab: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not ok and args.strict:
        return EXIT_NEGATIVE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
