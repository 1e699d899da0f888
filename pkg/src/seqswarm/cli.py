"""Operator entry point: run/resume design campaigns and export analyses.

Configuration lives in a YAML file; every run field has a flag override and
precedence is flags > file > defaults. Credentials are never read from the
config itself, only from the environment variable it names.

Exit codes: 0 success, 2 campaign terminated early (evaluator loss),
3 invalid configuration, 1 other errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import yaml

from . import analysis
from .agents import policy_from_dict
from .bridge import EvaluationError, validate_bridge
from .core import DesignObjective, InvalidResidue, parse_sequence
from .engine import (BuiltinEvaluatorConfig, ExternalEvaluatorConfig,
                     InvalidConfig, RunConfig, config_hash, resume_campaign,
                     run_campaign, validate_config)
from .scorers import scorer_from_dict
from .trajectory import CorruptTrajectory, read_trajectory

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INCOMPLETE = 2
EXIT_BAD_CONFIG = 3


def _policy_from_flag(text: str) -> dict:
    parts = text.split(":")
    kind = parts[0]
    if kind == "keep":
        return {"type": "keep"}
    if kind == "random":
        return {"type": "random", "seed": int(parts[1]) if len(parts) > 1 else 0}
    if kind == "propensity":
        if len(parts) < 2:
            raise ValueError("propensity policy needs a target label, e.g. propensity:H")
        d = {"type": "propensity", "target_ss": parts[1]}
        if len(parts) > 2:
            d["temperature"] = float(parts[2])
        return d
    raise ValueError(f"unknown policy override {text!r} (llm policies go in the config file)")


def _evaluator_from_flag(text: str) -> dict:
    if text == "builtin":
        return {"type": "builtin"}
    if text.startswith("external:"):
        return {"type": "external", "command": text.split(":", 1)[1]}
    raise ValueError(f"unknown evaluator override {text!r}")


def load_config(path: str, overrides: argparse.Namespace) -> RunConfig:
    """Build a RunConfig from the YAML file plus flag overrides.

    Raises InvalidConfig with field-level messages.
    """
    errors: list[str] = []
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise InvalidConfig([f"config: file not found: {path}"])
    except yaml.YAMLError as exc:
        raise InvalidConfig([f"config: not valid YAML: {exc}"])
    if not isinstance(raw, dict):
        raise InvalidConfig(["config: top level must be a mapping"])

    if getattr(overrides, "seed", None) is not None:
        raw["seed"] = overrides.seed
    if getattr(overrides, "iterations", None) is not None:
        raw["iterations"] = overrides.iterations
    if getattr(overrides, "epsilon", None) is not None:
        raw["epsilon"] = overrides.epsilon
    if getattr(overrides, "policy", None) is not None:
        try:
            raw["policy"] = _policy_from_flag(overrides.policy)
        except ValueError as exc:
            errors.append(f"policy: {exc}")
    if getattr(overrides, "evaluator", None) is not None:
        try:
            raw["evaluator"] = _evaluator_from_flag(overrides.evaluator)
        except ValueError as exc:
            errors.append(f"evaluator: {exc}")
    if getattr(overrides, "output", None) is not None:
        raw["output"] = overrides.output
    if getattr(overrides, "start_sequence", None) is not None:
        raw["start_sequence"] = overrides.start_sequence

    objective = None
    obj_raw = raw.get("objective")
    if not isinstance(obj_raw, dict):
        errors.append("objective: required mapping with name, prompt, scorer")
    else:
        try:
            scorer = scorer_from_dict(obj_raw.get("scorer") or {})
            objective = DesignObjective(
                name=str(obj_raw.get("name", "")),
                prompt_text=str(obj_raw.get("prompt", obj_raw.get("prompt_text", ""))),
                scorer=scorer)
        except (ValueError, KeyError) as exc:
            errors.append(f"objective: {exc}")

    start = None
    if "start_sequence" not in raw:
        errors.append("start_sequence: required")
    else:
        try:
            start = parse_sequence(str(raw["start_sequence"]))
        except (InvalidResidue, ValueError) as exc:
            errors.append(f"start_sequence: {exc}")

    policy = None
    try:
        policy = policy_from_dict(raw.get("policy") or {"type": "keep"})
    except (ValueError, KeyError) as exc:
        errors.append(f"policy: {exc}")

    evaluator = None
    eval_raw = raw.get("evaluator") or {"type": "builtin"}
    if eval_raw.get("type") == "builtin":
        evaluator = BuiltinEvaluatorConfig()
    elif eval_raw.get("type") == "external":
        evaluator = ExternalEvaluatorConfig(
            command=str(eval_raw.get("command", "")),
            timeout=float(eval_raw.get("timeout", 30.0)))
    else:
        errors.append(f"evaluator.type: unknown {eval_raw.get('type')!r}")

    if "output" not in raw:
        errors.append("output: required (trajectory file path)")

    if errors:
        raise InvalidConfig(errors)

    config = RunConfig(
        objective=objective,
        start_sequence=start,
        output_path=Path(raw["output"]),
        iterations=int(raw.get("iterations", 64)),
        seed=int(raw.get("seed", 0)),
        policy=policy,
        evaluator=evaluator,
        r=int(raw.get("r", 2)),
        cutoff=float(raw.get("cutoff", 8.0)),
        epsilon=float(raw.get("epsilon", 0.01)),
        theta=float(raw.get("theta", 0.5)),
        min_support=int(raw.get("min_support", 3)),
    )
    field_errors = validate_config(config)
    if field_errors:
        raise InvalidConfig(field_errors)
    return config


def _print_summary(result) -> None:
    print(f"trajectory: {result.output_path}")
    print(f"iterations recorded: {len(result.records)}")
    print(f"acceptance rate: {result.acceptance_rate:.3f}")
    if result.best is not None:
        print(f"best sequence: {result.best.sequence}")
        print(f"best objective score: {result.best.objective_score:.4f}")
        print(f"best total energy: {result.best.total_energy:.3f}")
    if not result.complete:
        print(f"campaign terminated early: {result.exit_reason}")


def _cmd_design(args) -> int:
    config = load_config(args.config, args)
    result = run_campaign(config)
    _print_summary(result)
    return EXIT_OK if result.complete else EXIT_INCOMPLETE


def _cmd_resume(args) -> int:
    config = load_config(args.config, args)
    result = resume_campaign(config)
    _print_summary(result)
    return EXIT_OK if result.complete else EXIT_INCOMPLETE


def _parse_labeled_inputs(pairs: list[str]) -> list[tuple[str, str]]:
    out = []
    for item in pairs:
        if "=" in item:
            label, path = item.split("=", 1)
        else:
            label, path = Path(item).stem, item
        out.append((label, path))
    return out


def _inputs_hash(labeled: list[tuple[str, str]]) -> str:
    blob = json.dumps(labeled, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _cmd_analyze_embed(args) -> int:
    labeled = _parse_labeled_inputs(args.input)
    pairs = []
    for label, path in labeled:
        pairs.extend(analysis.load_source(path, label))
    fm = analysis.preprocess(analysis.FeatureMatrix.from_sequences(pairs))
    result = analysis.embed(fm, perplexity_cap=args.perplexity,
                            max_iter=args.max_iter, seed=args.seed)
    meta = {"config_hash": _inputs_hash(labeled), "seed": args.seed,
            "perplexity": result.effective_perplexity}
    analysis.write_embedding_csv(args.output, result, fm.labels, meta)
    print(f"wrote {args.output} ({fm.matrix.shape[0]} points, "
          f"perplexity {result.effective_perplexity})")
    return EXIT_OK


def _cmd_analyze_tree(args) -> int:
    labeled = _parse_labeled_inputs(args.input)
    pairs = []
    for label, path in labeled:
        pairs.extend(analysis.load_source(path, label))
    fm = analysis.preprocess(analysis.FeatureMatrix.from_sequences(pairs))
    tree, idx = analysis.feature_tree(fm, seed=args.seed)
    meta = {"config_hash": _inputs_hash(labeled), "seed": args.seed,
            "leaves": len(idx)}
    analysis.write_newick(args.output, tree, meta)
    print(f"wrote {args.output} ({len(idx)} leaves)")
    return EXIT_OK


def _trajectory_meta(path, seed=0) -> dict:
    header = read_trajectory(path).header
    return {"config_hash": header.get("config_hash", "unknown"), "seed": seed}


def _cmd_analyze_hamming(args) -> int:
    seqs = analysis.trajectory_sequences(args.trajectory)
    matrix = analysis.hamming_matrix(seqs)
    analysis.write_matrix_csv(args.output, matrix, _trajectory_meta(args.trajectory))
    print(f"wrote {args.output} ({matrix.shape[0]}x{matrix.shape[1]})")
    return EXIT_OK


def _cmd_analyze_logo(args) -> int:
    pairs = analysis.load_source(args.input, "logo", deduplicate=False)
    counts = analysis.logo_counts([seq for _, seq in pairs])
    meta = {"config_hash": _inputs_hash([("logo", args.input)]), "seed": 0,
            "sequences": len(pairs)}
    analysis.write_logo_csv(args.output, counts, meta)
    print(f"wrote {args.output} ({counts.shape[0]} positions, {len(pairs)} sequences)")
    return EXIT_OK


def _cmd_analyze_convergence(args) -> int:
    rows = analysis.convergence_series(args.trajectory)
    analysis.write_convergence_csv(args.output, rows,
                                   _trajectory_meta(args.trajectory))
    print(f"wrote {args.output} ({len(rows)} rows)")
    return EXIT_OK


def _cmd_validate_bridge(args) -> int:
    try:
        info = validate_bridge(args.command, timeout=args.timeout)
    except EvaluationError as exc:
        print(f"bridge validation failed: {exc}", file=sys.stderr)
        return 1
    print(f"protocol version: {info['protocol']}")
    print(f"round trip ({info['sequence']}): {info['round_trip_ms']:.1f} ms")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqswarm")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p):
        p.add_argument("--config", required=True, help="YAML campaign config")
        p.add_argument("--seed", type=int)
        p.add_argument("--iterations", type=int)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--policy", help="keep | random[:seed] | propensity:<H|E|L>[:temp]")
        p.add_argument("--evaluator", help="builtin | external:<command>")
        p.add_argument("--output", help="trajectory file path")
        p.add_argument("--start-sequence", dest="start_sequence")

    p = sub.add_parser("design", help="run a design campaign")
    add_run_flags(p)
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("resume", help="continue an interrupted campaign")
    add_run_flags(p)
    p.set_defaults(func=_cmd_resume)

    p = sub.add_parser("analyze-embed", help="t-SNE embedding CSV from labeled sources")
    p.add_argument("--input", action="append", required=True,
                   help="label=path (trajectory or FASTA); repeatable")
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--max-iter", type=int, default=1000)
    p.set_defaults(func=_cmd_analyze_embed)

    p = sub.add_parser("analyze-tree", help="neighbor-joining Newick tree from labeled sources")
    p.add_argument("--input", action="append", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_analyze_tree)

    p = sub.add_parser("analyze-hamming", help="pairwise Hamming matrix of a trajectory")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_analyze_hamming)

    p = sub.add_parser("analyze-logo", help="per-position residue counts")
    p.add_argument("--input", required=True, help="trajectory or FASTA file")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_analyze_logo)

    p = sub.add_parser("analyze-convergence", help="energy/score series of a trajectory")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_analyze_convergence)

    p = sub.add_parser("validate-bridge", help="handshake and one round-trip with a bridge")
    p.add_argument("--command", required=True)
    p.add_argument("--timeout", type=float, default=10.0)
    p.set_defaults(func=_cmd_validate_bridge)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidConfig as exc:
        for err in exc.errors:
            print(f"invalid config: {err}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except CorruptTrajectory as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
