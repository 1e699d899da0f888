"""The four-phase design campaign loop.

Each iteration: (1) every agent proposes a residue for its position against
the last accepted structure, (2) the proposals are assembled into a
candidate and evaluated, (3) the candidate's objective score and energy are
read off, (4) the candidate is accepted or rejected, state and memory are
updated, and the record is flushed to the trajectory file.

A candidate is accepted when its objective score strictly improves, or when
its total energy strictly improves while the score stays within epsilon.
The start sequence is evaluated once up front to give that comparison a
baseline; iteration-1 agents still see the no-structure sentinel context.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from hashlib import sha256
from pathlib import Path

from . import memory as memory_mod
from .agents import AgentPolicySpec, KeepPolicy, collect_proposals, policy_to_dict
from .anm import DisconnectedStructure, InsufficientModes
from .bridge import BridgeEvaluator
from .context import (DegenerateStructure, MissingCoordinates,
                      StructureSnapshot, build_snapshot, residue_context,
                      sentinel_snapshot)
from .core import (DesignObjective, IterationRecord, LengthMismatch,
                   ProteinSequence, apply_proposals, parse_sequence)
from .evaluation import BuiltinEvaluator, EvaluationError, EvaluationResult
from .scorers import MissingField, scorer_to_dict
from .trajectory import (MEMORY_SNAPSHOT_EVERY, TrajectoryWriter,
                         prepare_resume)

# anything evaluation may legitimately produce instead of a usable result;
# one of these aborts the iteration (recorded as failed), not the campaign
EVALUATOR_FAILURES = (EvaluationError, DisconnectedStructure,
                      InsufficientModes, MissingField, LengthMismatch,
                      DegenerateStructure, MissingCoordinates)

DEFAULT_ITERATIONS = 64
DEFAULT_EPSILON = 0.01
MAX_CONSECUTIVE_FAILURES = 5

TRAJECTORY_PROTOCOL_VERSION = 1


class InvalidConfig(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class BuiltinEvaluatorConfig:
    pass


@dataclass(frozen=True)
class ExternalEvaluatorConfig:
    command: str
    timeout: float = 30.0


EvaluatorConfig = BuiltinEvaluatorConfig | ExternalEvaluatorConfig


@dataclass(frozen=True)
class RunConfig:
    objective: DesignObjective
    start_sequence: ProteinSequence
    output_path: Path
    iterations: int = DEFAULT_ITERATIONS
    seed: int = 0
    policy: AgentPolicySpec = field(default_factory=KeepPolicy)
    evaluator: EvaluatorConfig = field(default_factory=BuiltinEvaluatorConfig)
    r: int = 2
    cutoff: float = 8.0
    epsilon: float = DEFAULT_EPSILON
    theta: float = 0.5
    min_support: int = 3


def validate_config(config: RunConfig) -> list[str]:
    """Field-level validation messages; empty means the config is runnable."""
    errors = []
    if config.iterations < 1:
        errors.append("iterations: must be >= 1")
    if config.epsilon < 0:
        errors.append("epsilon: must be >= 0")
    if not 0.0 < config.theta < 1.0:
        errors.append("theta: must lie in (0, 1)")
    if config.r < 1:
        errors.append("r: must be >= 1")
    if config.cutoff <= 0:
        errors.append("cutoff: must be positive")
    if config.min_support < 1:
        errors.append("min_support: must be >= 1")
    if isinstance(config.evaluator, ExternalEvaluatorConfig):
        if not config.evaluator.command.strip():
            errors.append("evaluator.command: must be non-empty")
        if config.evaluator.timeout <= 0:
            errors.append("evaluator.timeout: must be positive")
    return errors


def evaluator_to_dict(cfg: EvaluatorConfig) -> dict:
    if isinstance(cfg, BuiltinEvaluatorConfig):
        return {"type": "builtin"}
    return {"type": "external", "command": cfg.command, "timeout": cfg.timeout}


def config_to_dict(config: RunConfig) -> dict:
    return {
        "objective": {"name": config.objective.name,
                      "prompt_text": config.objective.prompt_text,
                      "scorer": scorer_to_dict(config.objective.scorer)},
        "start_sequence": str(config.start_sequence),
        "iterations": config.iterations,
        "seed": config.seed,
        "policy": policy_to_dict(config.policy),
        "evaluator": evaluator_to_dict(config.evaluator),
        "r": config.r,
        "cutoff": config.cutoff,
        "epsilon": config.epsilon,
        "theta": config.theta,
        "min_support": config.min_support,
    }


def config_hash(config: RunConfig) -> str:
    import json
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return sha256(canonical.encode()).hexdigest()[:16]


def make_evaluator(config: RunConfig):
    if isinstance(config.evaluator, ExternalEvaluatorConfig):
        return BridgeEvaluator(config.evaluator.command, config.objective.scorer,
                               timeout=config.evaluator.timeout)
    return BuiltinEvaluator(config.objective.scorer)


def accept_decision(new: tuple[float, float], old: tuple[float, float],
                    epsilon: float) -> bool:
    """Accept when the score strictly improves, or the energy strictly
    improves while the score moves by at most epsilon."""
    new_score, new_energy = new
    old_score, old_energy = old
    if new_score > old_score:
        return True
    if new_energy < old_energy and abs(new_score - old_score) <= epsilon:
        return True
    return False


@dataclass
class BestSoFar:
    sequence: str
    objective_score: float
    total_energy: float
    iteration: int  # 0 marks the start-sequence baseline


def _better(candidate: BestSoFar, incumbent: BestSoFar | None) -> bool:
    if incumbent is None:
        return True
    if candidate.objective_score != incumbent.objective_score:
        return candidate.objective_score > incumbent.objective_score
    return candidate.total_energy < incumbent.total_energy  # ties keep the earlier one


@dataclass
class CampaignState:
    current: ProteinSequence
    current_eval: EvaluationResult | None
    snapshot: StructureSnapshot
    best: BestSoFar | None
    memory: memory_mod.GlobalMemory
    locals: list[memory_mod.LocalHistory]
    iteration: int = 0
    consecutive_failures: int = 0


def new_state(config: RunConfig) -> CampaignState:
    n = config.start_sequence.n
    return CampaignState(
        current=config.start_sequence,
        current_eval=None,
        snapshot=sentinel_snapshot(n),
        best=None,
        memory=memory_mod.GlobalMemory(theta=config.theta, min_support=config.min_support),
        locals=memory_mod.new_locals(n),
    )


def _build_contexts(state: CampaignState, config: RunConfig):
    contexts = []
    for i in range(state.current.n):
        key = memory_mod.context_key(str(state.current), state.snapshot.ss_string, i)
        dg = memory_mod.digest(state.memory, state.locals[i], key)
        contexts.append(residue_context(state.snapshot, state.current, i,
                                        r=config.r, cutoff=config.cutoff, digest=dg))
    return contexts


def run_iteration(state: CampaignState, config: RunConfig, evaluator,
                  iteration: int) -> IterationRecord:
    """Run one full iteration and apply its state transition in place."""
    started = time.perf_counter()
    prev_sequence = state.current
    seen_ss = state.snapshot.ss_string

    # Phase 1: collect proposals (read-only against state and memory)
    contexts = _build_contexts(state, config)
    proposals = collect_proposals(config.policy, contexts, config.objective,
                                  last_eval=state.current_eval,
                                  campaign_seed=config.seed, iteration=iteration)

    # Phase 2: assemble and evaluate the candidate
    proposed = apply_proposals(prev_sequence, proposals)
    changed = tuple(i for i in range(prev_sequence.n)
                    if proposed[i] != prev_sequence[i])
    fallbacks = tuple(p.position for p in proposals if p.fallback)

    try:
        result = evaluator.evaluate(proposed)
        candidate_snapshot = build_snapshot(result)
    except EVALUATOR_FAILURES as exc:
        state.consecutive_failures += 1
        return IterationRecord(
            iteration=iteration, proposed_sequence=proposed, evaluation=None,
            accepted=False, current_best=state.current,
            wall_time_ms=(time.perf_counter() - started) * 1000.0,
            changed_positions=changed, fallback_positions=fallbacks,
            error=str(exc))

    # Phase 3: objective score and energy come with the evaluation
    state.consecutive_failures = 0

    # Phase 4: decision, state transition, memory update
    if state.current_eval is None:
        accepted = True  # no evaluated baseline exists; adopt the first evaluated state
    else:
        accepted = accept_decision(
            (result.objective_score, result.total_energy),
            (state.current_eval.objective_score, state.current_eval.total_energy),
            config.epsilon)

    if accepted:
        state.current = proposed
        state.current_eval = result
        state.snapshot = candidate_snapshot
    candidate_best = BestSoFar(str(proposed), result.objective_score,
                               result.total_energy, iteration)
    if accepted and _better(candidate_best, state.best):
        state.best = candidate_best

    record = IterationRecord(
        iteration=iteration, proposed_sequence=proposed, evaluation=result,
        accepted=accepted, current_best=state.current,
        wall_time_ms=(time.perf_counter() - started) * 1000.0,
        changed_positions=changed, fallback_positions=fallbacks)
    memory_mod.record_iteration(state.memory, state.locals,
                                str(prev_sequence), seen_ss, record)
    state.iteration = iteration
    return record


def _record_to_dict(record: IterationRecord, timestamp: float) -> dict:
    ev = record.evaluation
    out = {
        "iteration": record.iteration,
        "proposed_sequence": str(record.proposed_sequence),
        "accepted": record.accepted,
        "total_energy": None if ev is None else ev.total_energy,
        "objective_score": None if ev is None else ev.objective_score,
        "ss": None if ev is None else ev.ss_string,
        "changed_positions": list(record.changed_positions),
        "fallback_positions": list(record.fallback_positions),
        "timestamp": timestamp,
    }
    if record.error is not None:
        out["error"] = record.error
    return out


@dataclass
class CampaignResult:
    complete: bool
    records: list[IterationRecord]
    best: BestSoFar | None
    output_path: Path
    exit_reason: str = "complete"
    memory: memory_mod.GlobalMemory | None = None

    @property
    def acceptance_rate(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.accepted for r in self.records) / len(self.records)


def _write_memory_snapshot(writer: TrajectoryWriter, state: CampaignState,
                           iteration: int) -> None:
    writer.write_line({
        "memory_at": iteration,
        "memory": memory_mod.memory_to_dict(state.memory),
        "locals": [memory_mod.local_to_dict(l) for l in state.locals],
    })


def _header(config: RunConfig) -> dict:
    return {
        "config_hash": config_hash(config),
        "start_sequence": str(config.start_sequence),
        "objective": {"name": config.objective.name,
                      "prompt_text": config.objective.prompt_text,
                      "scorer": scorer_to_dict(config.objective.scorer)},
        "protocol_version": TRAJECTORY_PROTOCOL_VERSION,
    }


def _run_loop(state: CampaignState, config: RunConfig, evaluator,
              writer: TrajectoryWriter, clock, first_iteration: int,
              records: list[IterationRecord]) -> CampaignResult:
    for iteration in range(first_iteration, config.iterations + 1):
        record = run_iteration(state, config, evaluator, iteration)
        records.append(record)
        writer.write_line(_record_to_dict(record, timestamp=clock()))
        if iteration % MEMORY_SNAPSHOT_EVERY == 0:
            _write_memory_snapshot(writer, state, iteration)
        if state.consecutive_failures >= MAX_CONSECUTIVE_FAILURES:
            writer.write_line({"terminated": "evaluator_loss",
                               "completed_iterations": iteration})
            return CampaignResult(complete=False, records=records,
                                  best=state.best, output_path=writer.path,
                                  exit_reason="evaluator_loss",
                                  memory=state.memory)
    return CampaignResult(complete=True, records=records, best=state.best,
                          output_path=writer.path, memory=state.memory)


def run_campaign(config: RunConfig, clock=time.time, evaluator=None) -> CampaignResult:
    """Run a full campaign, writing the trajectory as it goes.

    `clock` stamps persisted records and exists so tests can pin it;
    `evaluator` overrides the one implied by the config (used for fault
    injection in tests).
    """
    errors = validate_config(config)
    if errors:
        raise InvalidConfig(errors)

    own_evaluator = evaluator is None
    if own_evaluator:
        evaluator = make_evaluator(config)
    state = new_state(config)
    try:
        try:
            baseline = evaluator.evaluate(config.start_sequence)
            state.current_eval = baseline
            state.best = BestSoFar(str(config.start_sequence),
                                   baseline.objective_score,
                                   baseline.total_energy, 0)
        except EVALUATOR_FAILURES:
            pass  # no baseline; the first evaluated candidate will be adopted

        with TrajectoryWriter(config.output_path) as writer:
            writer.write_line(_header(config))
            return _run_loop(state, config, evaluator, writer, clock, 1, [])
    finally:
        if own_evaluator:
            evaluator.close()


class _EvalSummary:
    """Minimal stand-in for EvaluationResult during memory replay."""

    def __init__(self, total_energy: float, objective_score: float):
        self.total_energy = total_energy
        self.objective_score = objective_score


def _replay_state(config: RunConfig, data, evaluator) -> CampaignState:
    state = new_state(config)
    n = config.start_sequence.n

    snapshot_at = 0
    usable = [k for k in data.memory_snapshots if k <= len(data.records)]
    if usable:
        snapshot_at = max(usable)
        snap = data.memory_snapshots[snapshot_at]
        state.memory = memory_mod.memory_from_dict(snap["memory"])
        state.locals = [memory_mod.local_from_dict(d) for d in snap["locals"]]

    current = str(config.start_sequence)
    last_accepted_ss: str | None = None
    last_accepted_rec: dict | None = None
    for rec in data.records:
        if rec["iteration"] > snapshot_at and rec.get("total_energy") is not None:
            shim = IterationRecord(
                iteration=rec["iteration"],
                proposed_sequence=parse_sequence(rec["proposed_sequence"]),
                evaluation=_EvalSummary(rec["total_energy"], rec["objective_score"]),
                accepted=rec["accepted"],
                current_best=parse_sequence(current),
                wall_time_ms=0.0,
                changed_positions=tuple(rec["changed_positions"]),
                fallback_positions=tuple(rec["fallback_positions"]))
            memory_mod.record_iteration(
                state.memory, state.locals, current,
                last_accepted_ss or "L" * n, shim)
        if rec["accepted"]:
            current = rec["proposed_sequence"]
            last_accepted_ss = rec["ss"]
            last_accepted_rec = rec
        state.iteration = rec["iteration"]

    state.current = parse_sequence(current)
    # Re-evaluate the start sequence (baseline) and the retained sequence to
    # rebuild their full evaluations; records persist only summary fields.
    # Deterministic evaluators make this exact.
    best: BestSoFar | None = None
    baseline_eval = None
    try:
        baseline_eval = evaluator.evaluate(config.start_sequence)
        best = BestSoFar(str(config.start_sequence),
                         baseline_eval.objective_score,
                         baseline_eval.total_energy, 0)
    except EVALUATOR_FAILURES:
        pass
    try:
        if state.current == config.start_sequence and baseline_eval is not None:
            state.current_eval = baseline_eval
        else:
            state.current_eval = evaluator.evaluate(state.current)
        if last_accepted_rec is not None:
            state.snapshot = build_snapshot(state.current_eval)
    except EVALUATOR_FAILURES:
        state.current_eval = None

    for rec in data.records:
        if rec["accepted"] and rec.get("objective_score") is not None:
            cand = BestSoFar(rec["proposed_sequence"], rec["objective_score"],
                             rec["total_energy"], rec["iteration"])
            if _better(cand, best):
                best = cand
    state.best = best
    return state


def resume_campaign(config: RunConfig, clock=time.time, evaluator=None) -> CampaignResult:
    """Continue an interrupted campaign, appending records after the last one."""
    errors = validate_config(config)
    if errors:
        raise InvalidConfig(errors)
    data = prepare_resume(config.output_path)
    if data.header.get("config_hash") != config_hash(config):
        raise InvalidConfig(["config does not match the trajectory header "
                             f"(hash {data.header.get('config_hash')} vs {config_hash(config)})"])
    done = len(data.records)
    if done >= config.iterations:
        return CampaignResult(complete=True, records=[], best=None,
                              output_path=Path(config.output_path),
                              exit_reason="already_complete")

    own_evaluator = evaluator is None
    if own_evaluator:
        evaluator = make_evaluator(config)
    try:
        state = _replay_state(config, data, evaluator)
        with TrajectoryWriter(config.output_path, append=True) as writer:
            return _run_loop(state, config, evaluator, writer, clock,
                             done + 1, [])
    finally:
        if own_evaluator:
            evaluator.close()
