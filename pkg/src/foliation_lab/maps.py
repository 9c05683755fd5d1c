"""Smooth maps F = (f1, ..., fn) and their text file format.

A map file looks like::

    # the spiral map
    dim = 3
    f1 = exp(x1)*cos(x2)
    f2 = exp(x1)*sin(x2)
    f3 = x3
    box = [-2,2] x [-7,7] x [-2,2]
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .expr import Expr, ParseError, lambdify, parse, to_text, variables


class MapFormatError(ValueError):
    pass


Box = tuple  # tuple of (lo, hi) pairs


def make_box(intervals) -> tuple:
    box = tuple((float(lo), float(hi)) for lo, hi in intervals)
    for lo, hi in box:
        if not lo < hi:
            raise ValueError(f"empty box interval [{lo}, {hi}]")
    return box


def parse_box(text: str, n: int | None = None) -> tuple:
    """Accept ``[a,b] x [c,d]`` or the flat CLI form ``a,b,c,d``."""
    text = text.strip()
    if "[" in text:
        parts = re.findall(r"\[\s*([^,\]]+)\s*,\s*([^\]]+)\]", text)
        vals = [(float(a), float(b)) for a, b in parts]
    else:
        nums = [float(t) for t in text.split(",") if t.strip()]
        if len(nums) % 2:
            raise ValueError("box needs an even number of bounds")
        vals = list(zip(nums[::2], nums[1::2]))
    if n is not None and len(vals) != n:
        raise ValueError(f"box has {len(vals)} intervals, expected {n}")
    return make_box(vals)


def box_contains(box, x, slack: float = 0.0) -> bool:
    return all(lo - slack <= xi <= hi + slack for (lo, hi), xi in zip(box, x))


def box_radius(box) -> float:
    """Circumscribed radius of the box about the origin."""
    return float(np.sqrt(sum(max(lo * lo, hi * hi) for lo, hi in box)))


def box_diameter(box) -> float:
    return float(np.sqrt(sum((hi - lo) ** 2 for lo, hi in box)))


def scale_box(box, factor: float) -> tuple:
    out = []
    for lo, hi in box:
        c, h = 0.5 * (lo + hi), 0.5 * (hi - lo) * factor
        out.append((c - h, c + h))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class SmoothMap:
    components: tuple
    name: str = "map"
    box: tuple = field(default=None)

    def __post_init__(self):
        n = len(self.components)
        if n < 2:
            raise ValueError("a map needs dimension n >= 2")
        for e in self.components:
            if variables(e) and max(variables(e)) > n:
                raise ValueError(f"component {to_text(e)} uses a variable beyond x{n}")
        if self.box is None:
            object.__setattr__(self, "box", make_box([(-1.0, 1.0)] * n))
        else:
            object.__setattr__(self, "box", make_box(self.box))
            if len(self.box) != n:
                raise ValueError("box dimension does not match the map")

    @property
    def n(self) -> int:
        return len(self.components)

    @classmethod
    def from_strings(cls, texts: Sequence[str], name: str = "map", box=None) -> "SmoothMap":
        n = len(texts)
        return cls(tuple(parse(t, n) for t in texts), name=name, box=box)

    @cached_property
    def _numeric(self):
        return lambdify(self.components, self.n)

    def __call__(self, x) -> np.ndarray:
        """Evaluate F at a point (shape (n,)) or points (shape (m, n))."""
        x = np.asarray(x, dtype=float)
        cols = [x[..., j] for j in range(self.n)]
        out = self._numeric(*cols)
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), x.shape[:-1]) for v in out], axis=-1)

    def to_text(self) -> str:
        lines = [f"dim = {self.n}"]
        lines += [f"f{i} = {to_text(e)}" for i, e in enumerate(self.components, 1)]
        lines.append("box = " + " x ".join(f"[{lo!r},{hi!r}]" for lo, hi in self.box))
        return "\n".join(lines) + "\n"


def parse_map_text(text: str, name: str = "map") -> SmoothMap:
    dim = None
    comps: dict[int, str] = {}
    box_text = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MapFormatError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "dim":
            dim = int(val)
            if dim < 2:
                raise MapFormatError(f"line {lineno}: dimension must be at least 2")
        elif key == "box":
            box_text = val
        elif re.fullmatch(r"f\d+", key):
            comps[int(key[1:])] = val
        elif key == "name":
            name = val
        else:
            raise MapFormatError(f"line {lineno}: unknown key {key!r}")
    if dim is None:
        raise MapFormatError("missing 'dim = n' line")
    if sorted(comps) != list(range(1, dim + 1)):
        raise MapFormatError(f"expected components f1..f{dim}, found {sorted(comps)}")
    try:
        exprs = tuple(parse(comps[i], dim) for i in range(1, dim + 1))
    except ParseError as exc:
        raise MapFormatError(str(exc)) from exc
    box = parse_box(box_text, dim) if box_text else None
    return SmoothMap(exprs, name=name, box=box)


def load_map(path) -> SmoothMap:
    path = Path(path)
    return parse_map_text(path.read_text(encoding="utf-8"), name=path.stem)
