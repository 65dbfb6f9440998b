"""End-to-end analysis of a system definition, producing a serializable run report."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

import numpy as np

from . import __version__
from .calculus import TAU_RANK, independence_rank, lie_bracket
from .flow import DEFAULT_FLOW_TOL, FlowError, conservation_drift, integrate_flow, pushforward_check
from .poisson import (ClosureError, IndependenceError, PathDependenceError, is_casimir,
                      hamiltonian_realization_check, is_poisson_vector_field, make_poisson_pair,
                      poisson_bracket, poisson_rank, reconstruct_hamiltonian_2d,
                      trivector_norm)
from .report import Report
from .sampling import DEFAULT_SEED, SampleSet, evaluate_over
from .symmetry import (TAU_COMMUTE, TAU_DECOMP, TAU_FI, DecompositionError, FrameDegenerateError,
                       PreconditionError, check_commutes, extract_structure_functions,
                       first_integral_candidates, independence_filter, verify_first_integral)
from .system import SystemDef

STAGES = ("independence", "commutation", "structure_functions", "integral_candidates",
          "verification", "independence_filter", "poisson_pair", "poisson_rank", "casimir",
          "poisson_vector_field", "hamiltonian", "reconstruction", "flow")

DEPENDS = {
    "independence": (),
    "commutation": (),
    "structure_functions": ("independence",),
    "integral_candidates": ("commutation", "structure_functions"),
    "verification": ("integral_candidates",),
    "independence_filter": ("verification",),
    "poisson_pair": ("independence",),
    "poisson_rank": ("poisson_pair",),
    "casimir": ("poisson_pair",),
    "poisson_vector_field": ("poisson_pair",),
    "hamiltonian": ("poisson_pair",),
    "reconstruction": ("poisson_vector_field", "poisson_rank"),
    "flow": (),
}

COMMANDS = {
    "check": ("independence", "commutation"),
    "integrals": ("independence_filter",),
    "poisson": ("poisson_rank", "casimir", "poisson_vector_field"),
    "hamcheck": ("hamiltonian", "reconstruction"),
    "flow": ("flow", "verification", "poisson_vector_field"),
    "report": STAGES,
}

DRIFT_TOL = 1e-6
RECONSTRUCTION_TOL = 1e-5
CASIMIR_BRACKET_TOL = 1e-10
RECONSTRUCTION_SAMPLES = 50
RECONSTRUCTION_NODES = 1024


def _clean(x):
    """JSON-native copy: tuples to lists, numpy scalars to Python, non-finite floats to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if x is None or isinstance(x, str):
        return x
    return str(x)


@dataclass
class RunConfig:
    n_construction: int = 100
    n_verification: int = 200
    seed: int = DEFAULT_SEED
    tolerances: dict[str, float] = field(default_factory=dict)
    flow_x0: Optional[list[list[float]]] = None
    flow_t_end: float = 1.0
    flow_tol: float = DEFAULT_FLOW_TOL
    output: str = "text"

    def __post_init__(self):
        if self.n_construction < 10 or self.n_verification < 10:
            raise ValueError("sample counts must be at least 10")
        for k, v in self.tolerances.items():
            if not v > 0:
                raise ValueError(f"tolerance {k} must be positive")
        if self.output not in ("text", "json"):
            raise ValueError("output must be 'text' or 'json'")

    def tol(self, name: str) -> float:
        defaults = {"decomp": TAU_DECOMP, "fi": TAU_FI, "rank": TAU_RANK, "commute": TAU_COMMUTE}
        return float(self.tolerances.get(name, defaults[name]))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("output")
        return _clean(d)

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class StageResult:
    name: str
    status: str  # pass | fail | skipped
    residuals: dict[str, Any] = field(default_factory=lambda: {"max": None, "mean": None,
                                                                "argmax_point": None})
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "residuals": self.residuals,
                "details": self.details}


@dataclass
class RunReport:
    system: dict
    config: dict
    stages: list[StageResult]
    candidates: list[dict]

    @property
    def failed(self) -> list[str]:
        return [s.name for s in self.stages if s.status == "fail"]

    @property
    def passed(self) -> bool:
        return not self.failed

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def stage(self, name: str) -> StageResult:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"system": self.system, "config": self.config,
                "stages": [s.to_dict() for s in self.stages], "candidates": self.candidates}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(d["system"], d["config"], [StageResult(**s) for s in d["stages"]],
                   d["candidates"])

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))

    def to_text(self) -> str:
        lines = [f"system {self.system['label']}  (seed {self.config['seed']}, "
                 f"{self.config['n_construction']}/{self.config['n_verification']} samples)"]
        for s in self.stages:
            r = s.residuals
            res = "".join(f"  {k}={r[k]:.3e}" for k in ("max", "mean") if r[k] is not None)
            note = s.details.get("error") or s.details.get("reason") or ""
            lines.append(f"  [{s.status.upper():7s}] {s.name}{res}" + (f"  ({note})" if note else ""))
        if self.candidates:
            lines.append("  candidates:")
            for c in self.candidates:
                flags = "".join([
                    "V" if c["verified"] else "-",
                    "I" if c["independent"] else "-",
                    "T" if c["trivial"] else "-"])
                lines.append(f"    {flags} {c['provenance']:<16} {c['expression_or_null']}")
        lines.append("PASS" if self.passed else "FAIL: " + ", ".join(self.failed))
        return "\n".join(lines) + "\n"


def _from_report(name: str, rep: Report, **extra) -> StageResult:
    return StageResult(
        name, "pass" if rep.passed else "fail",
        _clean({"max": rep.max_residual, "mean": rep.mean_residual, "argmax_point": rep.argmax_point}),
        _clean({"scaled_max": rep.max_scaled, "tolerance": rep.tolerance,
                "n_samples": rep.n_samples, "rejected": rep.rejected, **rep.details, **extra}))


def _merge(name: str, reports: list[Report], **extra) -> StageResult:
    """One stage from several reports: worst max, pooled mean, all must pass."""
    if not reports:
        return StageResult(name, "pass", details=_clean(extra))
    worst = max(reports, key=lambda r: r.max_scaled)
    n = sum(r.n_samples for r in reports)
    mean = sum(r.mean_residual * r.n_samples for r in reports) / n if n else 0.0
    return StageResult(
        name, "pass" if all(r.passed for r in reports) else "fail",
        _clean({"max": max(r.max_residual for r in reports), "mean": mean,
                "argmax_point": worst.argmax_point}),
        _clean({"checks": {r.name: {"passed": r.passed, "max": r.max_residual,
                                    "scaled_max": r.max_scaled, "tolerance": r.tolerance}
                           for r in reports}, **extra}))


def _default_x0(system: SystemDef) -> list[float]:
    b = system.domain.capped_bounds()
    return [float(lo + 0.3 * (hi - lo)) for lo, hi in b]


def _closure(targets) -> set[str]:
    need, todo = set(), list(targets)
    while todo:
        s = todo.pop()
        if s not in need:
            need.add(s)
            todo.extend(DEPENDS[s])
    return need


class _Run:
    def __init__(self, system: SystemDef, cfg: RunConfig):
        self.sys, self.cfg = system, cfg
        self.samples = SampleSet(system.domain, cfg.n_construction, cfg.seed)
        self.verify = SampleSet(system.domain, cfg.n_verification, cfg.seed + 1)
        self.frame = system.symmetries
        self.structure: dict = {}
        self.candidates: list = []
        self.pair = None
        self.results: dict[str, StageResult] = {}

    # each stage returns a StageResult

    def independence(self):
        rep = independence_rank(self.frame, self.samples, self.cfg.tol("rank"))
        return _from_report("independence", rep)

    def commutation(self):
        reps = [check_commutes(self.sys.X, Y, self.samples, self.cfg.tol("commute"))
                for Y in self.frame]
        return _merge("commutation", reps)

    def structure_functions(self):
        p = len(self.frame)
        probe_pts = self.cfg.flow_x0 or [_default_x0(self.sys)]
        reps, table = [], {}
        for i in range(p):
            for j in range(i + 1, p):
                try:
                    sc = extract_structure_functions(self.frame, i, j, self.samples,
                                                     self.cfg.tol("decomp"))
                except DecompositionError as err:
                    details = {"error": "closure-failure",
                               "pair": [self.frame[i].label, self.frame[j].label],
                               "point": err.point, "residual": err.residual}
                    if p == 2 and err.point is not None:
                        X1, X2 = self.frame
                        details["trivector_norm"] = trivector_norm(X1, X2, lie_bracket(X1, X2),
                                                                   err.point)
                    res = {"max": err.residual, "mean": None, "argmax_point": err.point}
                    return StageResult("structure_functions", "fail", _clean(res), _clean(details))
                except FrameDegenerateError as err:
                    return StageResult("structure_functions", "fail",
                                       details=_clean({"error": "frame-degenerate",
                                                       "point": err.point, "message": str(err)}))
                self.structure[(i, j)] = sc
                reps.append(sc.report)
                for k, fn in enumerate(sc.coeffs):
                    tag = f"F_{i + 1}{j + 1}^{k + 1}"
                    table[tag] = {"expression": str(fn.expr) if fn.symbolic else None,
                                  "at_probe_points": [fn(q) for q in probe_pts]}
        return _merge("structure_functions", reps, table=table, probe_points=probe_pts)

    def integral_candidates(self):
        try:
            self.candidates = first_integral_candidates(
                self.sys.X, self.frame, self.samples, self.verify, self.cfg.tol("fi"),
                structure=self.structure)
        except (PreconditionError, DecompositionError) as err:
            return StageResult("integral_candidates", "fail", details={"error": str(err)})
        return StageResult("integral_candidates", "pass", details={
            "count": len(self.candidates),
            "symbolic": sum(c.fn.symbolic for c in self.candidates),
            "trivial": sum(c.trivial for c in self.candidates)})

    def verification(self):
        return _merge("verification", [c.report for c in self.candidates],
                      verified=sum(c.verified for c in self.candidates))

    def independence_filter(self):
        res = independence_filter(self.candidates, self.verify)
        return StageResult("independence_filter", "pass", details=_clean({
            "independent_count": res.count,
            "independent": [c.tag for c in res.independent],
            "rank_profile": res.rank_profile}))

    def poisson_pair(self):
        if len(self.frame) != 2:
            return StageResult("poisson_pair", "skipped",
                               details={"reason": f"needs exactly two symmetries, got {len(self.frame)}"})
        try:
            self.pair = make_poisson_pair(self.frame[0], self.frame[1], self.sys.domain, self.samples)
        except ClosureError as err:
            return StageResult("poisson_pair", "fail", {"max": _clean(err.trivector_norm), "mean": None,
                                                       "argmax_point": _clean(err.point)},
                               {"error": "closure-failure", "message": str(err)})
        except IndependenceError as err:
            return StageResult("poisson_pair", "fail", details={"error": "independence-failure",
                                                                "message": str(err)})
        return _from_report("poisson_pair", self.pair.closure)

    def poisson_rank(self):
        _, ranks, _ = evaluate_over(self.samples, lambda q: poisson_rank(self.pair, q))
        ok = bool(ranks) and all(r == 2 for r in ranks)
        return StageResult("poisson_rank", "pass" if ok else "fail",
                           details={"min_rank": min(ranks) if ranks else None,
                                    "max_rank": max(ranks) if ranks else None,
                                    "n_samples": len(ranks)})

    def casimir(self):
        if not self.sys.probes:
            return StageResult("casimir", "skipped", details={"reason": "no probe functions"})
        probes, reps = {}, []
        for C in self.sys.probes:
            cas = is_casimir(self.pair, C, self.verify, self.cfg.tol("fi"))
            conserved = verify_first_integral(self.sys.X, C, self.verify, self.cfg.tol("fi"))
            entry = {"casimir": cas.passed, "first_integral": conserved.passed}
            if cas.passed:
                for H in self.sys.hamiltonians:
                    # Casimirs Poisson-commute with every function
                    b = poisson_bracket(self.pair, C, H)
                    _, vals, _ = evaluate_over(self.verify, lambda q: abs(b(q)))
                    rep = Report(f"{{{C.label},{H.label}}}", max(vals) <= CASIMIR_BRACKET_TOL,
                                 max(vals), float(np.mean(vals)), max(vals), CASIMIR_BRACKET_TOL,
                                 n_samples=len(vals))
                    reps.append(rep)
                    entry[f"bracket_with_{H.label}"] = rep.max_residual
            probes[C.label] = entry
        return _merge("casimir", reps, probes=probes)

    def poisson_vector_field(self):
        return _from_report("poisson_vector_field",
                            is_poisson_vector_field(self.pair, self.sys.X, self.verify))

    def hamiltonian(self):
        if not self.sys.hamiltonians:
            return StageResult("hamiltonian", "skipped", details={"reason": "no hamiltonian declared"})
        reps = [hamiltonian_realization_check(self.pair, self.sys.X, H, self.verify)
                for H in self.sys.hamiltonians]
        return _merge("hamiltonian", reps)

    def reconstruction(self):
        if self.sys.dim != 2:
            return StageResult("reconstruction", "skipped", details={"reason": "dimension is not 2"})
        base = _default_x0(self.sys)
        pts = self.samples.points[:RECONSTRUCTION_SAMPLES]
        try:
            rec = reconstruct_hamiltonian_2d(self.pair, self.sys.X, base, pts,
                                             nodes=RECONSTRUCTION_NODES)
        except (PreconditionError, PathDependenceError) as err:
            return StageResult("reconstruction", "fail", details={"error": str(err)})
        extra = {"basepoint": base, "path_independence": rec.path_report.max_scaled,
                 "realization": rec.realization.max_scaled}
        reps = [rec.path_report, rec.realization]
        for H in self.sys.hamiltonians:
            h0 = H(base)
            _, errs, _ = evaluate_over(pts, lambda q: (abs(rec.H(q) - (H(q) - h0)), abs(H(q) - h0)))
            raw = [e for e, _ in errs]
            scaled = max(e / (1.0 + h) for e, h in errs)
            reps.append(Report(f"agrees_with[{H.label}]", scaled <= RECONSTRUCTION_TOL, max(raw),
                               float(np.mean(raw)), scaled, RECONSTRUCTION_TOL, n_samples=len(raw)))
        return _merge("reconstruction", reps, **extra)

    def flow(self):
        x0s = self.cfg.flow_x0 or [_default_x0(self.sys)]
        conserved = [c.fn for c in self.candidates if c.verified and not c.trivial]
        realized = self.results.get("hamiltonian")
        if realized is not None and realized.status == "pass":
            conserved += list(self.sys.hamiltonians)
        pvf = self.results.get("poisson_vector_field")
        use_pair = self.pair is not None and pvf is not None and pvf.status == "pass"
        runs, reps = [], []
        for x0 in x0s:
            try:
                traj = integrate_flow(self.sys.X, x0, self.cfg.flow_t_end, self.cfg.flow_tol,
                                      self.sys.domain)
            except (FlowError, ValueError) as err:
                return StageResult("flow", "fail", details=_clean({"error": str(err), "x0": x0}))
            drifts = {F.label: conservation_drift(self.sys.X, F, traj) for F in conserved}
            worst = max(drifts.values(), default=0.0)
            reps.append(Report(f"drift@{x0}", worst <= DRIFT_TOL, worst, worst, worst, DRIFT_TOL,
                               tuple(x0), n_samples=len(traj.times)))
            run = {"x0": x0, "status": traj.status, "t_final": traj.t_final, "steps": traj.steps,
                   "max_local_error": traj.max_local_error, "endpoint": traj.endpoint,
                   "drift": drifts}
            if use_pair:
                t = traj.t_final if traj.completed else 0.5 * traj.t_final
                try:
                    pf = pushforward_check(self.pair, self.sys.X, x0, t, domain=self.sys.domain,
                                           flow_tol=self.cfg.flow_tol)
                except FlowError as err:
                    return StageResult("flow", "fail", details=_clean({"error": str(err), "x0": x0}))
                reps.append(pf)
                run["pushforward"] = {"t": t, "max": pf.max_residual, "passed": pf.passed}
            runs.append(run)
        return _merge("flow", reps, runs=runs, t_end=self.cfg.flow_t_end)


def run_pipeline(system: SystemDef, cfg: Optional[RunConfig] = None,
                 targets=STAGES) -> RunReport:
    """Run the requested stages (plus what they depend on) in canonical order.

    A stage whose dependency did not pass is marked ``skipped``; analysis
    failures never raise.
    """
    cfg = cfg or RunConfig()
    run = _Run(system, cfg)
    wanted = _closure(targets)
    stages = []
    for name in STAGES:
        if name not in wanted:
            continue
        blocked = [d for d in DEPENDS[name] if run.results[d].status != "pass"]
        if blocked:
            res = StageResult(name, "skipped", details={"reason": "blocked by " + ", ".join(blocked)})
        else:
            res = getattr(run, name)()
        run.results[name] = res
        stages.append(res)
    candidates = [_clean({"provenance": c.tag, "expression_or_null": c.expression,
                          "verified": c.verified, "independent": bool(c.independent),
                          "trivial": c.trivial,
                          "residual": c.report.max_scaled if c.report is not None else None})
                  for c in run.candidates]
    config = {"version": __version__, "config_hash": cfg.config_hash, **cfg.to_dict()}
    return RunReport(_clean(system.to_dict()), config, stages, candidates)
