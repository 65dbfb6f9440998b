"""Line-oriented system definition files (``.sys``).

::

    dim 2
    vars x y
    domain x in (0.1, 10)      # ends may be inf / -inf
    field X = [x, y]
    symmetry X1 = [y, x]
    hamiltonian H = x/y        # optional, repeatable
    probe C = 5                # optional, repeatable
"""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .calculus import ScalarFn, VectorField
from .expr import ParseError, parse_expr
from .sampling import Box

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_NUM = r"[-+]?(?:inf|(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
_RE = {
    "dim": re.compile(r"dim\s+(\d+)$"),
    "vars": re.compile(rf"vars((?:\s+{_IDENT})+)$"),
    "domain": re.compile(rf"domain\s+({_IDENT})\s+in\s+\(\s*({_NUM})\s*,\s*({_NUM})\s*\)$"),
    "field": re.compile(rf"field\s+({_IDENT})\s*=\s*\[(.*)\]$"),
    "symmetry": re.compile(rf"symmetry\s+({_IDENT})\s*=\s*\[(.*)\]$"),
    "hamiltonian": re.compile(rf"hamiltonian\s+({_IDENT})\s*=\s*(.+)$"),
    "probe": re.compile(rf"probe\s+({_IDENT})\s*=\s*(.+)$"),
}


class SystemDefError(ValueError):
    """All problems found in a definition, each tagged with a line number (0 = whole file)."""

    def __init__(self, errors: list[tuple[int, str]], source: str = "<string>"):
        self.errors = errors
        self.source = source
        lines = [f"{source}:{ln}: {msg}" if ln else f"{source}: {msg}" for ln, msg in errors]
        super().__init__("\n".join(lines))


@dataclass
class SystemDef:
    label: str
    variables: tuple[str, ...]
    domain: Box
    X: VectorField
    symmetries: list[VectorField]
    hamiltonians: list[ScalarFn] = field(default_factory=list)
    probes: list[ScalarFn] = field(default_factory=list)
    source_sha256: str = ""

    @property
    def dim(self) -> int:
        return len(self.variables)

    @property
    def p(self) -> int:
        return len(self.symmetries)

    def to_dict(self) -> dict:
        def bound(v):
            return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")

        return {
            "label": self.label,
            "dim": self.dim,
            "vars": list(self.variables),
            "domain": {v: [bound(lo), bound(hi)]
                       for v, (lo, hi) in zip(self.variables, self.domain.intervals)},
            "field": {self.X.label: [str(c) for c in self.X.components]},
            "symmetries": {Y.label: [str(c) for c in Y.components] for Y in self.symmetries},
            "hamiltonians": {H.label: str(H.expr) for H in self.hamiltonians},
            "probes": {C.label: str(C.expr) for C in self.probes},
            "source_sha256": self.source_sha256,
        }


def _split_components(body: str) -> list[str]:
    parts = [s.strip() for s in body.split(",")]
    return [] if parts == [""] else parts


def parse_system(text: str, label: str = "system", source: str = "<string>") -> SystemDef:
    """Parse and validate; every error in the file is reported at once."""
    errors: list[tuple[int, str]] = []
    dim: Optional[int] = None
    variables: Optional[tuple[str, ...]] = None
    domains: dict[str, tuple[float, float, int]] = {}
    decls: list[tuple[str, int, str, str]] = []

    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key = line.split(None, 1)[0]
        rx = _RE.get(key)
        m = rx.match(line) if rx else None
        if rx is None:
            errors.append((ln, f"unknown directive {key!r}"))
        elif m is None:
            errors.append((ln, f"malformed {key} line: {line!r}"))
        elif key == "dim":
            if dim is not None:
                errors.append((ln, "duplicate dim"))
            dim = int(m.group(1))
        elif key == "vars":
            names = tuple(m.group(1).split())
            if variables is not None:
                errors.append((ln, "duplicate vars"))
            elif len(set(names)) != len(names):
                errors.append((ln, "repeated variable name"))
            variables = names
        elif key == "domain":
            lo, hi = float(m.group(2)), float(m.group(3))
            if m.group(1) in domains:
                errors.append((ln, f"duplicate domain for {m.group(1)}"))
            elif not lo < hi:
                errors.append((ln, f"empty interval ({lo}, {hi}) for {m.group(1)}"))
            domains[m.group(1)] = (lo, hi, ln)
        else:
            decls.append((key, ln, m.group(1), m.group(2)))

    if variables is None:
        errors.append((0, "missing vars"))
    elif dim is not None and dim != len(variables):
        errors.append((0, f"dimension mismatch: dim {dim} but {len(variables)} vars"))
    if not any(k == "field" for k, *_ in decls):
        errors.append((0, "missing field"))
    if not any(k == "symmetry" for k, *_ in decls):
        errors.append((0, "missing symmetry"))
    if variables is None:
        raise SystemDefError(errors, source)

    n = len(variables)
    for name, (_, _, ln) in domains.items():
        if name not in variables:
            errors.append((ln, f"domain for undeclared variable {name!r}"))
    X, syms, hams, probes, labels = None, [], [], [], set()
    for key, ln, name, body in decls:
        if name in labels:
            errors.append((ln, f"duplicate label {name!r}"))
        labels.add(name)
        try:
            if key in ("field", "symmetry"):
                comps = [parse_expr(c, variables) for c in _split_components(body)]
                if len(comps) != n:
                    errors.append((ln, f"dimension mismatch: {key} {name} has {len(comps)} "
                                       f"components, expected {n}"))
                    continue
                vf = VectorField(comps, variables, name)
                if key == "field":
                    if X is not None:
                        errors.append((ln, "more than one field"))
                    X = vf
                else:
                    syms.append(vf)
            else:
                fn = ScalarFn(variables, expr=parse_expr(body.strip(), variables), label=name)
                (hams if key == "hamiltonian" else probes).append(fn)
        except ParseError as err:
            errors.append((ln, f"{key} {name}: {err}"))
    if errors:
        raise SystemDefError(errors, source)

    intervals = [domains.get(v, (-math.inf, math.inf, 0))[:2] for v in variables]
    return SystemDef(label, variables, Box(variables, intervals), X, syms, hams, probes,
                     hashlib.sha256(text.encode("utf-8")).hexdigest())


def bundled_systems() -> dict[str, Path]:
    root = resources.files("liesym") / "systems"
    return {p.name: Path(str(p)) for p in root.iterdir() if p.name.endswith(".sys")}


def resolve_path(path: Union[str, Path]) -> Path:
    """The path itself if it exists, else a bundled system with the same file name."""
    p = Path(path)
    if p.exists():
        return p
    bundled = bundled_systems().get(p.name)
    if bundled is not None:
        return bundled
    raise FileNotFoundError(f"no such system file: {path}")


def load_system(path: Union[str, Path]) -> SystemDef:
    p = resolve_path(path)
    text = p.read_text(encoding="utf-8")
    return parse_system(text, label=p.stem, source=p.name)
