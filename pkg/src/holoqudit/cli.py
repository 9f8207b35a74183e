"""Scenario-driven command line front end.

A scenario is one JSON file declaring level graphs, pulses, gate requests,
block plans and effective-model sweeps. Each subcommand runs one family of
checks and writes a versioned report. Exit status: 0 when every check is
within tolerance, 1 when a check fails (the report is still written), 2 on
malformed input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import blockseq as bs
from . import effective as ef
from . import gatelib as gl
from . import states as st
from .errors import CheckFailure, InputError, ParseError
from .hamiltonian import h1_spec, h2_spec, h3_spec, h4_spec, h5_spec
from .holonomy import holonomy_report
from .levelspace import PRESETS, ProductBasis, build_level_graph, chain
from .propagate import evolve_dense
from .pulses import pulse_from_segments, two_interval_schedule

SCHEMA_VERSION = 1
REPORT_VERSION = 1
SUBCOMMANDS = ("verify-gate", "holonomy-check", "plan", "execute-plan", "effective-check")

DEFAULT_GATE_TOL = {"fidelity": 1e-8, "leakage": 1e-9, "parallel_transport": 1e-9}
DEFAULT_EFFECTIVE_TOL = {"relative_error": 0.05, "leakage_constant": 4.0, "norm": 1e-10}
SECOND_MECHANISM_NOTE = "second mechanism: the l <-> a drive is assumed to act on ion 2"

_amp = {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}]}
_state = {"oneOf": [{"type": "string"}, {"type": "object", "additionalProperties": _amp, "minProperties": 1}]}
_num4 = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}

SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "systems": {
            "type": "object",
            "additionalProperties": {
                "oneOf": [
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["preset"],
                        "properties": {"preset": {"enum": sorted(PRESETS)}},
                    },
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["computational", "auxiliary"],
                        "properties": {
                            "computational": {"type": "array", "items": {"type": "string"}},
                            "auxiliary": {"type": "array", "items": {"type": "string"}},
                            "edges": {
                                "type": "array",
                                "items": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
                            },
                        },
                    },
                ]
            },
        },
        "pulses": {
            "type": "object",
            "additionalProperties": {
                "oneOf": [
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["kind", "gamma"],
                        "properties": {
                            "kind": {"const": "calibrated"},
                            "gamma": {"type": "number"},
                            "shape": {"type": "string"},
                            "area": {"type": "number"},
                        },
                    },
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["kind", "area", "phases"],
                        "properties": {
                            "kind": {"const": "two_interval"},
                            "area": {"type": "number"},
                            "phases": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                            "shape": {"type": "string"},
                            "interval_duration": {"type": "number"},
                        },
                    },
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["kind", "segments"],
                        "properties": {
                            "kind": {"const": "segments"},
                            "segments": {
                                "type": "array",
                                "minItems": 1,
                                "items": {
                                    "type": "object",
                                    "additionalProperties": False,
                                    "required": ["peak_amplitude", "duration"],
                                    "properties": {
                                        "shape": {"type": "string"},
                                        "peak_amplitude": {"type": "number"},
                                        "duration": {"type": "number"},
                                        "phase": {"type": "number"},
                                    },
                                },
                            },
                        },
                    },
                ]
            },
        },
        "gates": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "type", "system", "states", "pulses"],
                "properties": {
                    "name": {"type": "string"},
                    "type": {"enum": ["u1", "u2", "u3", "u4", "u5"]},
                    "system": {"type": "string"},
                    "states": {"type": "array", "items": _state, "minItems": 1},
                    "pulses": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                    "phases": {"type": "array", "items": {"type": "number"}},
                    "samples_per_segment": {"type": "integer", "minimum": 1},
                    "tolerances": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {k: {"type": "number", "minimum": 0} for k in DEFAULT_GATE_TOL},
                    },
                },
            },
        },
        "plans": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "blocks"],
                "properties": {
                    "name": {"type": "string"},
                    "blocks": {"type": "integer", "minimum": 2},
                    "d": {"enum": [2, 3]},
                    "ion_counts": {"type": "array", "items": {"type": "integer"}},
                    "generic": {"type": "boolean"},
                    "samples": {"type": "integer", "minimum": 1},
                    "expected_steps": {"type": "integer", "minimum": 1},
                },
            },
        },
        "effective": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "eta", "omegas", "ratios"],
                "properties": {
                    "name": {"type": "string"},
                    "eta": {"type": "number"},
                    "omegas": _num4,
                    "n_max": {"type": "integer", "minimum": 0},
                    "mechanism": {"enum": ["first", "second"]},
                    "system": {"type": "string"},
                    "levels": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {"k": {"type": "string"}, "l": {"type": "string"}, "a": {"type": "string"}},
                    },
                    "ratios": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                    "check_from_ratio": {"type": "number"},
                    "cutoff_check": {"type": "boolean"},
                    "tolerances": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {k: {"type": "number", "minimum": 0} for k in DEFAULT_EFFECTIVE_TOL},
                    },
                },
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"format": {"enum": ["json", "text"]}, "basename": {"type": "string"}},
        },
    },
}


@dataclass
class Scenario:
    raw: dict
    systems: dict = field(default_factory=dict)
    pulses: dict = field(default_factory=dict)

    @property
    def seed(self):
        return self.raw.get("seed")


def _fmt_path(path) -> str:
    return "/".join(str(p) for p in path) or "<root>"


def parse_scenario(text: str) -> Scenario:
    """Strictly parse a scenario document and resolve every name it references."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"scenario is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(raw, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        best = jsonschema.exceptions.best_match([exc])
        raise ParseError(f"scenario field {_fmt_path(best.absolute_path)}: {best.message}") from None
    sc = Scenario(raw)
    for name, decl in raw.get("systems", {}).items():
        if "preset" in decl:
            sc.systems[name] = PRESETS[decl["preset"]]()
        else:
            sc.systems[name] = build_level_graph(decl["computational"], decl["auxiliary"], decl.get("edges"))
    for name, decl in raw.get("pulses", {}).items():
        sc.pulses[name] = decl
    for g in raw.get("gates", []):
        if g["system"] not in sc.systems:
            raise ParseError(f"gate {g['name']!r} references undefined system {g['system']!r}")
        for p in g["pulses"]:
            if p not in sc.pulses:
                raise ParseError(f"gate {g['name']!r} references undefined pulse {p!r}")
    for e in raw.get("effective", []):
        if "system" in e and e["system"] not in sc.systems:
            raise ParseError(f"effective sweep {e['name']!r} references undefined system {e['system']!r}")
    return sc


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read scenario {path}: {exc.strerror}") from None
    return parse_scenario(text)


# ----------------------------------------------------------------------------
# building blocks


def _check(name, value, tol, op="<=") -> dict:
    ok = value is not None and (value <= tol if op == "<=" else value >= tol if op == ">=" else value == tol)
    return {"name": name, "value": value, "tolerance": tol, "comparison": op, "passed": bool(ok)}


def _state_from_json(obj, n_sites):
    if isinstance(obj, str):
        return st.as_state(obj, n_sites=n_sites)
    return st.as_state({k: complex(*v) if isinstance(v, list) else v for k, v in obj.items()}, n_sites=n_sites)


def _build_pulse(decl):
    kind = decl["kind"]
    if kind == "calibrated":
        return gl.calibrated_schedule(decl["gamma"], decl.get("shape", "constant"), decl.get("area", math.pi / 2))
    if kind == "two_interval":
        p1, p2 = decl["phases"]
        return two_interval_schedule(
            decl["area"], p1, p2, decl.get("shape", "constant"), decl.get("interval_duration", 1.0)
        )
    return pulse_from_segments(decl["segments"])


_GATE_SHAPE = {"u1": (1, 1), "u2": (2, 2), "u3": (2, 3), "u4": (1, 2), "u5": (2, 3)}


def build_gate(sc: Scenario, g: dict):
    """(spec, target-or-None) for one gate request."""
    n_sites, n_states = _GATE_SHAPE[g["type"]]
    if len(g["states"]) != n_states:
        raise InputError(f"gate {g['name']!r}: {g['type']} needs {n_states} states, got {len(g['states'])}")
    n_pulses = 1 if g["type"] == "u1" else n_states
    if len(g["pulses"]) != n_pulses:
        raise InputError(f"gate {g['name']!r}: {g['type']} needs {n_pulses} pulses, got {len(g['pulses'])}")
    graph = sc.systems[g["system"]]
    basis = chain(graph, n_sites) if n_sites > 1 else ProductBasis((graph,))
    states = [_state_from_json(s, n_sites) for s in g["states"]]
    pulses = [_build_pulse(sc.pulses[p]) for p in g["pulses"]]
    phases = g.get("phases")
    if phases is not None and len(phases) != n_states:
        raise InputError(f"gate {g['name']!r}: expected {n_states} target phases")
    t = g["type"]
    if t == "u1":
        vec = st.to_vector(st.normalize(states[0]), [("0",), ("1",)])
        amps = [pulses[0].scaled(abs(c)).shifted_phase(-np.angle(c)) for c in vec]
        spec = h1_spec(basis, *amps)
        target = None if phases is None else gl.u1_target(vec, phases[0])
    elif t == "u2":
        spec = h2_spec(basis, *states, *pulses)
        target = None if phases is None else gl.u2_target(*states, *phases)
    elif t == "u3":
        spec = h3_spec(basis, *states, pulses)
        target = None if phases is None else gl.u3_target(*states, *phases)
    elif t == "u4":
        spec = h4_spec(basis, *states, *pulses)
        target = None if phases is None else gl.u4_target(*states, *phases)
    else:
        spec = h5_spec(basis, *states, pulses)
        target = None if phases is None else gl.u5_target(*states, *phases)
    return spec, target


def _target_subspace(spec, target):
    if target is None:
        return None
    return np.array([spec.basis.index_of(lab) for lab in target.basis_labels])


def _run_gate(sc: Scenario, g: dict, with_target: bool) -> dict:
    tol = {**DEFAULT_GATE_TOL, **g.get("tolerances", {})}
    out = {"name": g["name"], "type": g["type"]}
    try:
        spec, target = build_gate(sc, g)
        if with_target and target is None:
            raise InputError(f"gate {g['name']!r} needs target phases for verify-gate")
        prop = evolve_dense(spec, samples_per_segment=g.get("samples_per_segment", 64))
        sub = _target_subspace(spec, target)
        rep = holonomy_report(spec, prop, target.matrix if (with_target and target) else None, sub)
    except CheckFailure as exc:
        out["error"] = str(exc)
        out["checks"] = [{"name": "run", "value": None, "tolerance": None, "comparison": "ok", "passed": False}]
        return out
    checks = [
        _check("parallel_transport", rep.max_dynamical_element, tol["parallel_transport"]),
        _check("cyclicity_leakage", rep.cyclicity_leakage, tol["leakage"]),
    ]
    if with_target:
        checks.append(_check("fidelity", rep.fidelity_vs_target, 1.0 - tol["fidelity"], ">="))
    out["report"] = rep.to_dict()
    out["checks"] = checks
    return out


def _plan_from_request(req: dict):
    m, d = req["blocks"], req.get("d", 2)
    counts = req.get("ion_counts")
    generic = req.get("generic", False)
    if d == 3:
        return bs.qutrit_plan(m, counts, generic=generic)
    return bs.plan_m_blocks(m, counts, generic=generic)


def _plan_summary(plan, req) -> dict:
    m = len(plan.blocks)
    out = {
        "name": req["name"],
        "m": m,
        "d": plan.d,
        "ion_counts": [n for _, n in plan.blocks],
        "steps": plan.n_steps,
        "prep_steps": plan.info["prep_steps"],
        "extrapolated": plan.info["extrapolated"],
        "table": plan.table(),
    }
    if plan.d == 2 and m in bs.THREE_LEVEL_REFERENCE_STEPS and not plan.info["extrapolated"]:
        out["step_count_report"] = bs.step_count_report(m)
    return out


def _run_plan(req: dict) -> dict:
    plan = _plan_from_request(req)
    out = _plan_summary(plan, req)
    expected = req.get("expected_steps")
    if expected is None and "step_count_report" in out:
        expected = 2 * len(plan.blocks) + 3
    out["checks"] = [] if expected is None else [_check("steps", plan.n_steps, expected, "==")]
    return out


def _run_execute(req: dict, seed, threads: int) -> dict:
    plan = _plan_from_request(req)
    samples = req.get("samples")
    if samples is not None and seed is None:
        raise InputError(f"plan {req['name']!r} samples inputs; a seed is required")
    ver = bs.verify_plan(plan, n_samples=samples, seed=seed if samples else None, workers=threads)
    flip = "".join([plan.flip_label] * plan.n_sites)
    flipped = ["".join(x) for x in ver.flipped]
    return {
        "name": req["name"],
        "m": len(plan.blocks),
        "d": plan.d,
        "steps": plan.n_steps,
        "verification": ver.to_dict(),
        "checks": [
            _check("max_leakage", ver.max_leakage, 0.0),
            _check("max_gate_error", ver.max_gate_error, 1e-12),
            _check("intermediate_populated", ver.intermediate_populated, 0, "=="),
            _check("only_all_flip_flipped", flipped == [flip], True, "=="),
        ],
    }


def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def _run_effective_point(sweep: dict, ratio: float, systems: dict) -> dict:
    tol = {**DEFAULT_EFFECTIVE_TOL, **sweep.get("tolerances", {})}
    eta = sweep["eta"]
    omegas = tuple(sweep["omegas"])
    scale = abs(eta) * max(abs(w) for w in omegas)
    levels = sweep.get("levels", {})
    kwargs = {k: levels[k] for k in ("k", "l", "a") if k in levels}
    if "system" in sweep:
        kwargs["site_graph"] = systems[sweep["system"]]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ef.RegimeWarning)
        model = ef.IonPhononModel(
            eta, ratio * scale, omegas, sweep.get("n_max", 3), sweep.get("mechanism", "first"), **kwargs
        )
        val = ef.validate_effective(model)
        cutoff = ef.cutoff_sensitivity(model) if sweep.get("cutoff_check", False) else None
    out = {"ratio": ratio, "delta": model.delta, **{k: _finite(v) for k, v in val.to_dict().items()}}
    gated = ratio >= sweep.get("check_from_ratio", 20.0)
    checks = [_check("norm_error", val.max_norm_error, tol["norm"])]
    if gated:
        checks += [
            _check("relative_error", val.relative_error, tol["relative_error"]),
            _check("single_excitation", val.max_single_excitation, tol["leakage_constant"] * (scale / model.delta) ** 2),
        ]
    if cutoff is not None:
        out["cutoff_sensitivity"] = cutoff
        checks.append(_check("cutoff_sensitivity", cutoff, 1e-6))
    for c in checks:
        c["name"] = f"{c['name']}@ratio={ratio:g}"
    out["gated"] = gated
    out["checks"] = checks
    return out


def _run_effective(sweep: dict, systems: dict, threads: int) -> dict:
    ratios = sweep["ratios"]
    run = lambda r: _run_effective_point(sweep, r, systems)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            points = list(ex.map(run, ratios))
    else:
        points = [run(r) for r in ratios]
    out = {
        "name": sweep["name"],
        "mechanism": sweep.get("mechanism", "first"),
        "eta": sweep["eta"],
        "omegas": list(sweep["omegas"]),
        "n_max": sweep.get("n_max", 3),
        "points": points,
        "checks": [c for p in points for c in p["checks"]],
    }
    if out["mechanism"] == "second":
        out["assumptions"] = [SECOND_MECHANISM_NOTE]
    return out


# ----------------------------------------------------------------------------
# reports


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return _finite(float(obj))
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def comparable(report: dict) -> dict:
    """The report without its header, which holds the only run-dependent fields."""
    return {k: v for k, v in report.items() if k != "header"}


def dumps_report(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


def render_text(report: dict) -> str:
    lines = [f"{report['subcommand']}  passed={report['passed']}  report_version={report['report_version']}"]
    for res in report["results"]:
        lines.append(f"[{res['name']}]")
        if "table" in res:
            lines.append(f"  steps: {res['steps']}")
            rows = [[str(r["step"]), ",".join(map(str, r["blocks"])), " ".join(r["ions"]), r["from"], r["to"],
                     f"{r['area']:.4f}", f"{r['phase']:.4f}"] for r in res["table"]]
            head = ["step", "blocks", "ions", "from", "to", "area", "phase"]
            widths = [max(len(x) for x in col) for col in zip(head, *rows)]
            for row in [head, *rows]:
                lines.append("  " + "  ".join(x.ljust(w) for x, w in zip(row, widths)).rstrip())
        if "error" in res:
            lines.append(f"  error: {res['error']}")
        for c in res.get("checks", []):
            mark = "PASS" if c["passed"] else "FAIL"
            lines.append(f"  {mark}  {c['name']:<24} {c['value']!s:<24} {c['comparison']} {c['tolerance']}")
    return "\n".join(lines) + "\n"


def run(subcommand: str, scenario: Scenario | None, *, seed=None, threads: int = 1, blocks=None,
        d: int = 2, ion_counts=None) -> dict:
    """Execute one subcommand and return the report (header included)."""
    if subcommand not in SUBCOMMANDS:
        raise InputError(f"unknown subcommand {subcommand!r}")
    raw = scenario.raw if scenario else {}
    seed = seed if seed is not None else (scenario.seed if scenario else None)
    if subcommand in ("plan", "execute-plan") and blocks is not None:
        req = {"name": f"m{blocks}-d{d}", "blocks": blocks, "d": d}
        if ion_counts:
            req["ion_counts"] = list(ion_counts)
        requests = [req]
    else:
        if scenario is None:
            raise InputError(f"{subcommand} needs --scenario")
        key = {"verify-gate": "gates", "holonomy-check": "gates", "plan": "plans",
               "execute-plan": "plans", "effective-check": "effective"}[subcommand]
        requests = raw.get(key, [])
        if not requests:
            raise ParseError(f"scenario has no {key!r} entries for {subcommand}")
    if subcommand in ("verify-gate", "holonomy-check"):
        fn = lambda g: _run_gate(scenario, g, subcommand == "verify-gate")  # noqa: E731
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                results = list(ex.map(fn, requests))
        else:
            results = [fn(g) for g in requests]
    elif subcommand == "plan":
        results = [_run_plan(r) for r in requests]
    elif subcommand == "execute-plan":
        results = [_run_execute(r, seed, threads) for r in requests]
    else:
        systems = scenario.systems if scenario else {}
        results = [_run_effective(s, systems, threads) for s in requests]
    passed = all(c["passed"] for r in results for c in r.get("checks", []))
    return {
        "header": {"timestamp": datetime.now(timezone.utc).isoformat(), "tool_version": __version__},
        "report_version": REPORT_VERSION,
        "subcommand": subcommand,
        "scenario": raw.get("name"),
        "seed": seed,
        "passed": passed,
        "results": results,
    }


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="holoqudit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--scenario", type=Path)
        s.add_argument("--out", type=Path)
        s.add_argument("--seed", type=int)
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--format", choices=["json", "text"])
        if name in ("plan", "execute-plan"):
            s.add_argument("--blocks", type=int)
            s.add_argument("--d", type=int, default=2, choices=[2, 3])
            s.add_argument("--ion-counts", type=lambda v: [int(x) for x in v.split(",")])
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise InputError("--seed must fit in an unsigned 64-bit integer")
        if args.threads < 1:
            raise InputError("--threads must be >= 1")
        scenario = load_scenario(args.scenario) if args.scenario else None
        extra = {}
        if args.subcommand in ("plan", "execute-plan"):
            extra = {"blocks": args.blocks, "d": args.d, "ion_counts": args.ion_counts}
        report = run(args.subcommand, scenario, seed=args.seed, threads=args.threads, **extra)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CheckFailure as exc:
        print(f"check failure: {exc}", file=sys.stderr)
        return 1
    out_opts = scenario.raw.get("output", {}) if scenario else {}
    fmt = args.format or out_opts.get("format", "json")
    text = dumps_report(report) if fmt == "json" else render_text(report)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        base = out_opts.get("basename", args.subcommand)
        (args.out / f"{base}.json").write_text(dumps_report(report))
        if fmt == "text":
            (args.out / f"{base}.txt").write_text(text)
    sys.stdout.write(text)
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
