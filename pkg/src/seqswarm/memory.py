"""Global and per-position learning state, updated once per iteration.

The engine is the single writer (decision phase only); digest generation is
read-only and safe to run concurrently across positions. Mutation patterns
are credited or blamed per *changed* position, keyed by (from, to) plus the
context the agent saw: left neighbor, right neighbor, SS label.
"""

from __future__ import annotations

from dataclasses import dataclass, field

OUTCOME_ACCEPTED = "accepted"
OUTCOME_REJECTED = "rejected"
OUTCOME_FALLBACK = "fallback"

IMPROVING = "Improving"
WORSENING = "Worsening"
FLAT = "Flat"

TREND_WINDOW = 5
SLOPE_DEAD_BAND = 1e-6

# (from_residue, to_residue, left_neighbor, right_neighbor, ss_label)
PatternKey = tuple[str, str, str, str, str]
# (left_neighbor, right_neighbor, ss_label); "-" marks a chain end
ContextKey = tuple[str, str, str]


def context_key(sequence: str, ss: str, i: int) -> ContextKey:
    left = sequence[i - 1] if i > 0 else "-"
    right = sequence[i + 1] if i < len(sequence) - 1 else "-"
    return (left, right, ss[i])


@dataclass
class LocalHistory:
    """One position's personal action record and derived success counts."""

    position: int
    actions: list[tuple[int, str, str]] = field(default_factory=list)
    per_substitution: dict[str, list[int]] = field(default_factory=dict)
    neighbor_effects: dict[tuple[int, str], list[int]] = field(default_factory=dict)


@dataclass
class GlobalMemory:
    """System-wide accepted/rejected sets, pattern statistics, and trends."""

    theta: float = 0.5
    min_support: int = 3
    accepted: list[tuple[int, str]] = field(default_factory=list)
    rejected: list[tuple[int, str]] = field(default_factory=list)
    pattern_stats: dict[PatternKey, list[int]] = field(default_factory=dict)
    energy_trend: list[tuple[int, float]] = field(default_factory=list)
    structure_trend: list[tuple[int, float]] = field(default_factory=list)
    revision: int = 0

    def p_success(self, theta: float | None = None) -> dict[PatternKey, tuple[float, int]]:
        """Patterns whose success rate beats theta with at least min_support trials."""
        theta = self.theta if theta is None else theta
        view = {}
        for key, (succ, fail) in self.pattern_stats.items():
            support = succ + fail
            if support >= self.min_support and succ / support > theta:
                view[key] = (succ / support, support)
        return view


def new_locals(n: int) -> list[LocalHistory]:
    return [LocalHistory(position=i) for i in range(n)]


def record_iteration(mem: GlobalMemory, locals_: list[LocalHistory],
                     prev_sequence, seen_ss: str, record) -> None:
    """Fold one completed iteration into memory.

    `prev_sequence` is the sequence the proposals were made against and
    `seen_ss` the SS string of the snapshot the agents saw; together they
    reconstruct each changed position's pattern and context key.
    """
    if record.evaluation is None:
        raise ValueError("failed iterations do not update memory")
    prev = str(prev_sequence)
    proposed = str(record.proposed_sequence)
    outcome = OUTCOME_ACCEPTED if record.accepted else OUTCOME_REJECTED
    stat_slot = 0 if record.accepted else 1

    for i in record.changed_positions:
        aa_from, aa_to = prev[i], proposed[i]
        local = locals_[i]
        local.actions.append((record.iteration, aa_to, outcome))
        local.per_substitution.setdefault(aa_to, [0, 0])[stat_slot] += 1
        for off in (-1, 1):
            j = i + off
            if 0 <= j < len(prev):
                local.neighbor_effects.setdefault((off, prev[j]), [0, 0])[stat_slot] += 1
        left, right, ss_label = context_key(prev, seen_ss, i)
        mem.pattern_stats.setdefault(
            (aa_from, aa_to, left, right, ss_label), [0, 0])[stat_slot] += 1

    for i in record.fallback_positions:
        locals_[i].actions.append((record.iteration, proposed[i], OUTCOME_FALLBACK))

    if record.accepted:
        mem.accepted.append((record.iteration, proposed))
    else:
        mem.rejected.append((record.iteration, proposed))
    mem.energy_trend.append((record.iteration, record.evaluation.total_energy))
    mem.structure_trend.append((record.iteration, record.evaluation.objective_score))
    mem.revision += 1


def _slope(points: list[tuple[int, float]]) -> float:
    tail = points[-TREND_WINDOW:]
    if len(tail) < 2:
        return 0.0
    xs = [p[0] for p in tail]
    ys = [p[1] for p in tail]
    mx = sum(xs) / len(xs)
    my = sum(ys) / len(ys)
    denom = sum((x - mx) ** 2 for x in xs)
    if denom == 0:
        return 0.0
    return sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / denom


def trend_direction(points: list[tuple[int, float]], lower_is_better: bool) -> str:
    slope = _slope(points)
    if abs(slope) < SLOPE_DEAD_BAND:
        return FLAT
    improving = slope < 0 if lower_is_better else slope > 0
    return IMPROVING if improving else WORSENING


@dataclass(frozen=True)
class MemoryDigest:
    """Pure summary of memory handed to one agent: a function of (global, local, context)."""

    position: int
    top_substitutions: tuple[tuple[str, float, int], ...]
    recent_outcomes: tuple[tuple[int, str, str], ...]
    global_energy_direction: str
    global_score_direction: str
    qualifying_patterns: tuple[tuple[str, str, float, int], ...]
    last_energy: float | None = None
    last_score: float | None = None

    @classmethod
    def empty(cls, position: int) -> "MemoryDigest":
        return cls(position=position, top_substitutions=(), recent_outcomes=(),
                   global_energy_direction=FLAT, global_score_direction=FLAT,
                   qualifying_patterns=())


def digest(mem: GlobalMemory, local: LocalHistory, ctx_key: ContextKey) -> MemoryDigest:
    """Deterministic digest of memory relevant to one position."""
    subs = []
    for aa, (succ, fail) in local.per_substitution.items():
        support = succ + fail
        if support:
            subs.append((aa, succ / support, support))
    subs.sort(key=lambda t: (-t[1], -t[2], t[0]))

    patterns = []
    for (aa_from, aa_to, left, right, ss_label), (rate, support) in mem.p_success().items():
        if (left, right, ss_label) == ctx_key:
            patterns.append((aa_from, aa_to, rate, support))
    patterns.sort(key=lambda t: (-t[2], -t[3], t[0], t[1]))

    return MemoryDigest(
        position=local.position,
        top_substitutions=tuple(subs[:3]),
        recent_outcomes=tuple(local.actions[-5:]),
        global_energy_direction=trend_direction(mem.energy_trend, lower_is_better=True),
        global_score_direction=trend_direction(mem.structure_trend, lower_is_better=False),
        qualifying_patterns=tuple(patterns[:3]),
        last_energy=mem.energy_trend[-1][1] if mem.energy_trend else None,
        last_score=mem.structure_trend[-1][1] if mem.structure_trend else None,
    )


def render_digest(d: MemoryDigest) -> str:
    """Fixed-format text block for prompt embedding."""
    lines = [f"Energy trend: {d.global_energy_direction}; objective trend: {d.global_score_direction}"]
    if d.last_energy is not None:
        lines.append(f"Last total energy: {d.last_energy:.3f}; last objective score: {d.last_score:.4f}")
    if d.top_substitutions:
        parts = [f"{aa} ({rate:.2f} over {sup})" for aa, rate, sup in d.top_substitutions]
        lines.append("Best substitutions here: " + ", ".join(parts))
    else:
        lines.append("No substitution history at this position yet.")
    if d.recent_outcomes:
        parts = [f"iter {it}: {aa} {outcome}" for it, aa, outcome in d.recent_outcomes]
        lines.append("Recent outcomes: " + "; ".join(parts))
    if d.qualifying_patterns:
        parts = [f"{a}->{b} ({rate:.2f} over {sup})"
                 for a, b, rate, sup in d.qualifying_patterns]
        lines.append("Patterns that worked in this context: " + ", ".join(parts))
    return "\n".join(lines)


# ----- persistence ----------------------------------------------------------

def memory_to_dict(mem: GlobalMemory) -> dict:
    return {
        "theta": mem.theta,
        "min_support": mem.min_support,
        "accepted": [[i, s] for i, s in mem.accepted],
        "rejected": [[i, s] for i, s in mem.rejected],
        "pattern_stats": [
            [list(key), counts] for key, counts in sorted(mem.pattern_stats.items())
        ],
        "energy_trend": [[i, v] for i, v in mem.energy_trend],
        "structure_trend": [[i, v] for i, v in mem.structure_trend],
        "revision": mem.revision,
    }


def memory_from_dict(d: dict) -> GlobalMemory:
    return GlobalMemory(
        theta=d["theta"],
        min_support=d["min_support"],
        accepted=[(int(i), s) for i, s in d["accepted"]],
        rejected=[(int(i), s) for i, s in d["rejected"]],
        pattern_stats={tuple(key): list(counts) for key, counts in d["pattern_stats"]},
        energy_trend=[(int(i), float(v)) for i, v in d["energy_trend"]],
        structure_trend=[(int(i), float(v)) for i, v in d["structure_trend"]],
        revision=int(d["revision"]),
    )


def local_to_dict(local: LocalHistory) -> dict:
    return {
        "position": local.position,
        "actions": [list(a) for a in local.actions],
        "per_substitution": [
            [aa, counts] for aa, counts in sorted(local.per_substitution.items())
        ],
        "neighbor_effects": [
            [list(key), counts] for key, counts in sorted(local.neighbor_effects.items())
        ],
    }


def local_from_dict(d: dict) -> LocalHistory:
    return LocalHistory(
        position=int(d["position"]),
        actions=[(int(i), aa, outcome) for i, aa, outcome in d["actions"]],
        per_substitution={aa: list(counts) for aa, counts in d["per_substitution"]},
        neighbor_effects={
            (int(key[0]), key[1]): list(counts) for key, counts in d["neighbor_effects"]
        },
    )
