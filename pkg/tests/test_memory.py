import pytest
from hypothesis import given
from hypothesis import strategies as st

from seqswarm.core import IterationRecord, parse_sequence
from seqswarm.memory import (FLAT, IMPROVING, WORSENING, GlobalMemory,
                             LocalHistory, MemoryDigest, digest,
                             local_from_dict, local_to_dict, memory_from_dict,
                             memory_to_dict, new_locals, record_iteration,
                             render_digest, trend_direction)


class EvalStub:
    def __init__(self, energy=-1.0, score=0.5):
        self.total_energy = energy
        self.objective_score = score


def make_record(iteration, prev, proposed, accepted, fallback=(), energy=-1.0, score=0.5):
    changed = tuple(i for i in range(len(prev)) if prev[i] != proposed[i])
    return IterationRecord(
        iteration=iteration, proposed_sequence=parse_sequence(proposed),
        evaluation=EvalStub(energy, score), accepted=accepted,
        current_best=parse_sequence(proposed if accepted else prev),
        wall_time_ms=0.0, changed_positions=changed,
        fallback_positions=tuple(fallback))


def test_accepted_changed_positions_logged():
    mem = GlobalMemory()
    locals_ = new_locals(6)
    rec = make_record(1, "AAAAAA", "AAEAAE", accepted=True)
    record_iteration(mem, locals_, "AAAAAA", "L" * 6, rec)
    entries = [l.actions for l in locals_]
    assert sum(len(a) for a in entries) == 2
    assert locals_[2].actions == [(1, "E", "accepted")]
    assert locals_[5].actions == [(1, "E", "accepted")]
    assert mem.accepted == [(1, "AAEAAE")]
    assert mem.rejected == []
    assert locals_[2].per_substitution["E"] == [1, 0]


def test_rejected_no_changes_only_trends():
    mem = GlobalMemory()
    locals_ = new_locals(4)
    rec = make_record(1, "AAAA", "AAAA", accepted=False)
    record_iteration(mem, locals_, "AAAA", "LLLL", rec)
    assert all(not l.actions for l in locals_)
    assert mem.energy_trend == [(1, -1.0)]
    assert mem.structure_trend == [(1, 0.5)]
    assert mem.rejected == [(1, "AAAA")]


def test_fallback_outcome_logged():
    mem = GlobalMemory()
    locals_ = new_locals(4)
    rec = make_record(2, "AAAA", "AAAA", accepted=False, fallback=(1,))
    record_iteration(mem, locals_, "AAAA", "LLLL", rec)
    assert locals_[1].actions == [(2, "A", "fallback")]
    assert locals_[1].per_substitution == {}  # fallbacks carry no credit


def test_pattern_success_view_threshold():
    mem = GlobalMemory(theta=0.5, min_support=3)
    key = ("S", "E", "D", "A", "L")
    mem.pattern_stats[key] = [3, 1]  # 0.75 > 0.5 with support 4
    assert key in mem.p_success()
    mem.pattern_stats[key] = [1, 1]  # support below min_support
    assert key not in mem.p_success()
    mem.pattern_stats[key] = [2, 2]  # rate not above theta
    assert key not in mem.p_success()


@given(st.floats(0.01, 0.98), st.floats(0.01, 0.98))
def test_p_success_monotone_in_theta(t1, t2):
    lo, hi = sorted((t1, t2))
    mem = GlobalMemory(theta=lo, min_support=1)
    mem.pattern_stats = {
        ("A", "E", "-", "A", "H"): [3, 1],
        ("A", "K", "-", "A", "H"): [1, 3],
        ("S", "E", "D", "A", "L"): [5, 0],
    }
    assert set(mem.p_success(hi)) <= set(mem.p_success(lo))


def test_counts_match_actions_invariant():
    mem = GlobalMemory()
    locals_ = new_locals(3)
    seq = "AAA"
    for it, (proposed, accepted) in enumerate(
            [("EAA", True), ("EKA", False), ("EAV", True)], start=1):
        rec = make_record(it, seq, proposed, accepted)
        record_iteration(mem, locals_, seq, "LLL", rec)
        if accepted:
            seq = proposed
    for local in locals_:
        counted = {}
        for _, aa, outcome in local.actions:
            if outcome in ("accepted", "rejected"):
                slot = 0 if outcome == "accepted" else 1
                counted.setdefault(aa, [0, 0])[slot] += 1
        assert counted == local.per_substitution


def test_accounting_invariant():
    mem = GlobalMemory()
    locals_ = new_locals(3)
    seq = "AAA"
    for it in range(1, 8):
        proposed = "AEA" if it % 2 else "AAA"
        rec = make_record(it, seq, proposed, accepted=(it % 3 == 0))
        record_iteration(mem, locals_, seq, "LLL", rec)
        if rec.accepted:
            seq = proposed
    assert len(mem.accepted) + len(mem.rejected) == 7
    accepted_iters = {i for i, _ in mem.accepted}
    rejected_iters = {i for i, _ in mem.rejected}
    assert not accepted_iters & rejected_iters


class TestDigest:
    def test_empty_memory(self):
        d = digest(GlobalMemory(), LocalHistory(position=0), ("-", "A", "L"))
        assert d == MemoryDigest.empty(0)
        assert "No substitution history" in render_digest(d)

    def test_energy_direction_improving(self):
        mem = GlobalMemory()
        mem.energy_trend = [(1, -5.0), (2, -6.0), (3, -7.0), (4, -8.0), (5, -9.0)]
        d = digest(mem, LocalHistory(position=0), ("-", "-", "L"))
        assert d.global_energy_direction == IMPROVING

    def test_direction_classification(self):
        rising = [(i, float(i)) for i in range(1, 6)]
        falling = [(i, -float(i)) for i in range(1, 6)]
        flat = [(i, 3.0) for i in range(1, 6)]
        assert trend_direction(rising, lower_is_better=True) == WORSENING
        assert trend_direction(rising, lower_is_better=False) == IMPROVING
        assert trend_direction(falling, lower_is_better=True) == IMPROVING
        assert trend_direction(flat, lower_is_better=True) == FLAT
        assert trend_direction([], lower_is_better=True) == FLAT

    def test_top_substitutions_ordering(self):
        local = LocalHistory(position=3)
        local.per_substitution = {"E": [4, 1], "K": [1, 4], "A": [2, 2]}
        d = digest(GlobalMemory(), local, ("-", "-", "L"))
        assert d.top_substitutions[0] == ("E", 0.8, 5)
        assert [aa for aa, _, _ in d.top_substitutions] == ["E", "A", "K"]

    def test_qualifying_patterns_filtered_by_context(self):
        mem = GlobalMemory(min_support=3)
        mem.pattern_stats = {
            ("S", "E", "D", "A", "L"): [4, 0],
            ("S", "K", "C", "C", "H"): [4, 0],
        }
        d = digest(mem, LocalHistory(position=0), ("D", "A", "L"))
        assert d.qualifying_patterns == (("S", "E", 1.0, 4),)

    def test_recent_outcomes_window(self):
        local = LocalHistory(position=0)
        local.actions = [(i, "A", "rejected") for i in range(1, 10)]
        d = digest(GlobalMemory(), local, ("-", "-", "L"))
        assert len(d.recent_outcomes) == 5
        assert d.recent_outcomes[0][0] == 5


def test_memory_roundtrip():
    mem = GlobalMemory(theta=0.4, min_support=2)
    locals_ = new_locals(4)
    seq = "ACDE"
    for it, proposed in enumerate(["AKDE", "AKDF", "ACDE"], start=1):
        rec = make_record(it, seq, proposed, accepted=(it == 1),
                          fallback=(3,) if it == 2 else ())
        record_iteration(mem, locals_, seq, "LHEL", rec)
        if rec.accepted:
            seq = proposed
    assert memory_from_dict(memory_to_dict(mem)) == mem
    for local in locals_:
        assert local_from_dict(local_to_dict(local)) == local


def test_failed_iteration_rejected_by_memory():
    rec = IterationRecord(
        iteration=1, proposed_sequence=parse_sequence("AAAA"), evaluation=None,
        accepted=False, current_best=parse_sequence("AAAA"), wall_time_ms=0.0)
    with pytest.raises(ValueError):
        record_iteration(GlobalMemory(), new_locals(4), "AAAA", "LLLL", rec)
