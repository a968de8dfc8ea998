"""Command-line front end.

Every command reads one JSON document (``--input``), writes one artifact
(``--output``, JSON or CSV) and prints a short summary.  JSON outputs echo
the input keys so they can be fed straight back into another command; for
example the output of ``synthesize`` is a valid input for ``analyze``.

Exit codes: 0 success, 1 input error, 2 infeasible, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from . import examples, sim, synthesis
from .errors import (FixedPointDivergence, Infeasible, LowGainError, NoCrossover,
                     NonFiniteState, NumericalFailure, RankDeficient,
                     StepSizeUnderflow)
from .lfr import DeltaMap, Lfr, cone_from_dict, cone_to_dict, make_lfr
from .model import (DcGains, IntegralController, StateSpace, dc_gains, random_stable_system,
                    sensitivity_response)

log = logging.getLogger("lowgain")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 1, 2, 3

COMMANDS = ("analyze", "synthesize", "simulate", "freqresp", "example")
EXAMPLES = ("pendulum", "power-system", "saturated", "lti", "lti-steps")
DEFAULTS = {"seed": 0, "eps": None, "gamma_tol": 1e-3, "structure": None, "mode": None,
            "t_final": None, "fixed_step": None, "name": None}


class InputError(Exception):
    """Malformed or inconsistent input; maps to exit code 1."""


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def _configure_logging() -> None:
    level = os.environ.get("LOWGAIN_LOG", "error").lower()
    if level not in ("error", "info", "debug"):
        level = "error"
    logging.basicConfig(level=getattr(logging, level.upper()),
                        format="%(levelname)s %(name)s: %(message)s")


def atomic_write(path: Path, text: str) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_json(path: Path | None, what: str) -> dict:
    if path is None:
        raise InputError(f"--{what} is required")
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"{what} file not found: {path}")
    except json.JSONDecodeError as exc:
        raise InputError(f"{what} file {path} is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise InputError(f"{what} file {path} must contain a JSON object")
    return doc


def _field(doc: dict, key: str, parse=None):
    if key not in doc:
        raise InputError(f"missing key {key!r}")
    try:
        return doc[key] if parse is None else parse(doc[key])
    except KeyError as exc:
        raise InputError(f"missing key {exc.args[0]!r} inside {key!r}")
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid value for {key!r}: {exc}")


def _matrix(value) -> np.ndarray:
    return np.atleast_2d(np.asarray(value, float))


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _dump(doc: dict) -> str:
    return json.dumps(_jsonable(doc), indent=2) + "\n"


def _dc_from(doc: dict) -> DcGains:
    if "state_space" in doc:
        return dc_gains(_field(doc, "state_space", StateSpace.from_dict))
    if "dc_gains" in doc:
        dc = _field(doc, "dc_gains", lambda d: DcGains(_matrix(d["G0"]), _matrix(d["Gw0"])))
        return dc
    raise InputError("missing key 'state_space' (or 'dc_gains')")


def _lfr_from(doc: dict) -> Lfr:
    if "lfr" in doc:
        return _field(doc, "lfr", Lfr.from_dict)
    dc = _dc_from(doc)
    return make_lfr(dc.G0, E1=dc.Gw0)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_analyze(cfg: dict) -> int:
    doc = _read_json(cfg["input"], "input")
    lfr = _lfr_from(doc)
    K = _field(doc, "K", _matrix)
    pair = _field(doc, "cone", cone_from_dict) if doc.get("cone") else None
    cone = None if pair is None else pair.analysis_cone
    if cone is None and not lfr.is_lti:
        raise InputError("missing key 'cone' (the LFR has uncertainty channels)")
    try:
        res = synthesis.robust_analysis(lfr, cone, K)
    except Infeasible as exc:
        out = dict(doc, gamma=None, P=None, theta=None, status="infeasible")
        _emit(cfg, _dump(out))
        print(f"analyze: infeasible ({exc})")
        return EXIT_INFEASIBLE
    out = dict(doc, **res.to_dict())
    _emit(cfg, _dump(out))
    rho = "" if res.rho_s is None else f" rho_s={res.rho_s:.6g}"
    print(f"analyze: gamma={res.gamma:.6g} status={res.status}{rho}")
    return EXIT_OK


def _structure(cfg: dict, doc: dict):
    if cfg.get("structure"):
        return synthesis.StructureSpec.from_dict(_read_json(cfg["structure"], "structure"))
    if doc.get("structure"):
        return _field(doc, "structure", synthesis.StructureSpec.from_dict)
    return None


def cmd_synthesize(cfg: dict) -> int:
    doc = _read_json(cfg["input"], "input")
    mode = cfg.get("mode") or doc.get("mode") or ("robust" if "lfr" in doc else "lti-hinf")
    try:
        structure = _structure(cfg, doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid structure: {exc}")
    try:
        if mode == "lti-hinf":
            res = synthesis.hinf_lti_synthesis(_dc_from(doc), structure)
        elif mode == "robust":
            lfr = _lfr_from(doc)
            pair = _field(doc, "cone", cone_from_dict) if doc.get("cone") else None
            res = synthesis.robust_synthesis(lfr, pair, structure,
                                             rel_tol=float(cfg.get("gamma_tol") or 1e-3))
        else:
            raise InputError(f"unknown mode {mode!r} (expected lti-hinf or robust)")
    except (Infeasible, RankDeficient) as exc:
        sol = getattr(exc, "solution", None)
        detail = "" if sol is None else f" [solver status {sol.status}]"
        _emit(cfg, _dump(dict(doc, K=None, gamma=None, status="infeasible", mode=mode)))
        print(f"synthesize: infeasible ({exc}){detail}")
        return EXIT_INFEASIBLE
    out = dict(doc, **res.to_dict())
    if structure is None:
        out.pop("structure", None)
    _emit(cfg, _dump(out))
    extra = "" if res.gamma_analysis is None else f" gamma_analysis={res.gamma_analysis:.6g}"
    print(f"synthesize: mode={mode} gamma={res.gamma:.6g}{extra} status={res.status}")
    return EXIT_OK


def _plant_from(spec: dict):
    kind = spec.get("kind")
    if kind == "pendulum":
        return examples.pendulum_plant(float(spec["beta"]), float(spec.get("gamma_dom", 1.4)))
    if kind == "state_space":
        return StateSpace.from_dict(spec)
    raise ValueError(f"unknown plant kind {kind!r}")


def cmd_simulate(cfg: dict) -> int:
    doc = _read_json(cfg["input"], "input")
    K = _field(doc, "K", _matrix)
    w = _field(doc, "signal", sim.SignalSpec.from_dict)
    t_final = float(cfg.get("t_final") or _field(doc, "t_final", float))
    fixed = cfg.get("fixed_step") or doc.get("fixed_step")
    if "plant" in doc:
        plant = _field(doc, "plant", _plant_from)
        eps = cfg.get("eps")
        eps = float(eps if eps is not None else _field(doc, "epsilon", float))
        try:
            ctrl = IntegralController(K, eps)
        except ValueError as exc:
            raise InputError(f"invalid value for 'epsilon': {exc}")
        runner = lambda: sim.simulate_closed_loop(  # noqa: E731
            plant, ctrl, w, t_final, doc.get("x0"), doc.get("eta0"), fixed_step=fixed)
    elif "reduced" in doc:
        red = doc["reduced"]
        lfr = _field(red, "lfr", Lfr.from_dict)
        delta = _field(red, "delta", DeltaMap.from_dict) if red.get("delta") else None
        eta0 = doc.get("eta0", np.zeros(lfr.p))
        runner = lambda: sim.simulate_reduced(  # noqa: E731
            (lfr, delta), K, w, eta0, t_final, fixed_step=fixed)
    else:
        raise InputError("missing key 'plant' (or 'reduced')")
    try:
        res = runner()
    except (NonFiniteState, StepSizeUnderflow) as exc:
        print(f"simulate: integration failed, last valid time {exc.t:g}", file=sys.stderr)
        return EXIT_NUMERIC
    _emit(cfg, res.to_csv())
    for k, ev in enumerate(sim.settling_report(res, tol=float(doc.get("settle_tol", 1e-4)))):
        when = "not settled" if ev["settled_at"] is None else f"settled at t={ev['settled_at']:.6g}"
        print(f"interval {k + 1} [{ev['start']:g}, {ev['end']:g}]: {when}, "
              f"final |e|={ev['final_abs_error']:.3e}")
    return EXIT_OK


def cmd_freqresp(cfg: dict) -> int:
    doc = _read_json(cfg["input"], "input")
    dc = _dc_from(doc)
    K = _field(doc, "K", _matrix) if doc.get("K") is not None else synthesis.davison_gain(dc)
    eps = cfg.get("eps")
    eps = float(eps if eps is not None else doc.get("epsilon", 1.0))
    if not eps > 0:
        raise InputError("epsilon must be positive for a frequency response")
    fr = sensitivity_response(dc, K, eps)
    _emit(cfg, fr.to_csv())
    print(f"freqresp: {fr.omega.size} points, max sigma_max={fr.hinf_estimate:.8g}, "
          f"||Gw0||={np.linalg.norm(dc.Gw0, 2):.8g}")
    return EXIT_OK


def example_document(name: str, seed: int = 0) -> dict[str, Any]:
    """Self-contained input document for one of the built-in instances."""
    if name == "pendulum":
        return {"plant": {"kind": "pendulum", "beta": 2.0}, "K": [[1.0]], "epsilon": 0.05,
                "signal": {"kind": "constant", "value": [1.0]}, "t_final": 800.0,
                "settle_tol": 1e-6}
    if name == "power-system":
        spec = examples.PowerSystemSpec(1.0, (1.0,), (1.0,))
        lfr, delta, pair = examples.power_system_lfr(spec)
        return {"lfr": lfr.to_dict(), "cone": cone_to_dict(pair), "delta": delta.to_dict(),
                "K": [[1.0]]}
    if name == "saturated":
        lfr, delta, pair = examples.saturated_uncertain_example(seed if seed else 1)
        return {"lfr": lfr.to_dict(), "cone": cone_to_dict(pair), "delta": delta.to_dict(),
                "mode": "robust"}
    if name == "lti":
        ss = random_stable_system(seed, 30, 7, 5, 5)
        return {"state_space": ss.to_dict(), "mode": "lti-hinf", "epsilon": 0.1}
    if name == "lti-steps":
        ss = random_stable_system(seed, 30, 7, 5, 5)
        dc = dc_gains(ss)
        eps = 0.1
        K = synthesis.davison_gain(dc)
        # unit-size error transients: the Davison loop then decays as exp(-eps t)
        amp = 1.0 / float(np.linalg.norm(dc.Gw0, 2))
        w = sim.SignalSpec.step_sequence(5, 10.0 / eps, amplitude=amp)
        return {"plant": dict(ss.to_dict(), kind="state_space"), "K": K.tolist(),
                "epsilon": eps, "signal": w.to_dict(), "t_final": 5 * 10.0 / eps}
    raise InputError(f"unknown example {name!r} (choose from {', '.join(EXAMPLES)})")


def cmd_example(cfg: dict) -> int:
    name = cfg.get("name")
    if not name:
        raise InputError("example name is required")
    doc = example_document(name, int(cfg.get("seed") or 0))
    _emit(cfg, _dump(doc))
    print(f"example: wrote {name}")
    return EXIT_OK


def _emit(cfg: dict, text: str) -> None:
    out = cfg.get("output")
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write(Path(out), text)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lowgain",
                                 description="Low-gain integral control analysis and synthesis")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("name", nargs="?", help="example name (for the example command)")
    ap.add_argument("--input", type=Path)
    ap.add_argument("--output", type=Path)
    ap.add_argument("--config", type=Path, help="JSON file of defaults; flags take precedence")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--eps", type=float)
    ap.add_argument("--gamma-tol", type=float)
    ap.add_argument("--structure", type=Path)
    ap.add_argument("--mode", choices=("lti-hinf", "robust"))
    ap.add_argument("--t-final", type=float)
    ap.add_argument("--fixed-step", type=float)
    return ap


def _config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config is not None:
        cfg.update(_read_json(args.config, "config"))
    for key, value in vars(args).items():
        if key != "config" and value is not None:
            cfg[key] = value
    for key in ("input", "structure"):
        if cfg.get(key) is not None and not Path(cfg[key]).is_file():
            raise InputError(f"{key} file not found: {cfg[key]}")
    if cfg.get("output") is not None and not Path(cfg["output"]).parent.resolve().is_dir():
        raise InputError(f"output directory does not exist: {Path(cfg['output']).parent}")
    for key in ("eps", "gamma_tol", "t_final", "fixed_step"):
        v = cfg.get(key)
        if v is not None and (not np.isfinite(float(v)) or float(v) < 0):
            raise InputError(f"--{key.replace('_', '-')} must be a nonnegative number")
    return cfg


HANDLERS = {"analyze": cmd_analyze, "synthesize": cmd_synthesize, "simulate": cmd_simulate,
            "freqresp": cmd_freqresp, "example": cmd_example}


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        return HANDLERS[args.command](cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NonFiniteState, StepSizeUnderflow) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NumericalFailure, FixedPointDivergence, NoCrossover) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LowGainError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
