import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import regex_patterns, regex_runs

from tvdiar.pattern_miner import (
    ShotSequence,
    assign_utterances,
    coverage_stats,
    extract_patterns,
    merge_patterns,
    scan_alternations,
)
from tvdiar.segments import SpeechSegment
from tvdiar.synthetic import SyntheticEpisodeConfig, generate_synthetic_episode

label_strings = st.lists(st.integers(0, 7), max_size=60)


def seq(text):
    return ShotSequence.from_labels(text.split())


def seg(seg_id, start, end):
    return SpeechSegment(seg_id, start, end)


class TestScan:
    def test_repetition_is_not_alternation(self):
        assert scan_alternations(seq("a a a a"), 3) == []
        assert scan_alternations(seq("a a a a"), 2) == []

    def test_embedded_run(self):
        runs = scan_alternations(seq("c a b a b d"), 3)
        assert [(r.start_pos, r.end_pos, r.pair) for r in runs] == [(1, 4, frozenset("ab"))]

    def test_isolated_pair(self):
        assert [r.pair for r in scan_alternations(seq("x y"), 2)] == [frozenset("xy")]
        assert scan_alternations(seq("x y"), 3) == []

    def test_empty(self):
        assert scan_alternations(seq(""), 3) == []

    def test_bad_min_len(self):
        with pytest.raises(ValueError):
            scan_alternations(seq("a b"), 1)

    @settings(max_examples=300, deadline=None)
    @given(label_strings, st.sampled_from([2, 3]))
    def test_matches_interval_oracle(self, labels, min_len):
        got = [(r.start_pos, r.end_pos, r.pair) for r in scan_alternations(labels, min_len)]
        assert sorted(got, key=lambda r: r[:2]) == sorted(regex_runs(labels, min_len), key=lambda r: r[:2])


class TestExtract:
    def test_figure_one_sequence(self):
        ps = extract_patterns(seq("l1 l2 l1 l2 l1"))
        assert len(ps) == 1
        (p,) = ps.patterns
        assert p.label_set == frozenset({"l1", "l2"})
        assert [(r.start_pos, r.end_pos) for r in p.occurrences] == [(0, 4)]

    def test_empty(self):
        assert len(extract_patterns(seq(""))) == 0

    def test_extension_creates_patterns(self):
        s = seq("a b a c d e")
        assert extract_patterns(s).label_pairs() == {frozenset("ab")}
        ext = extract_patterns(s, extended=True)
        assert ext.label_pairs() == {frozenset(p) for p in ("ab", "ac", "cd", "de")}
        assert [p.extended for p in ext.patterns] == [False, True, True, True]

    @settings(max_examples=300, deadline=None)
    @given(label_strings, st.booleans())
    def test_matches_regex_oracle(self, labels, extended):
        got = extract_patterns(ShotSequence.from_labels(labels), extended).label_pairs()
        assert got == regex_patterns(labels, extended)

    @settings(max_examples=200, deadline=None)
    @given(label_strings)
    def test_base_is_subset_of_extended(self, labels):
        s = ShotSequence.from_labels(labels)
        base = {(r.start_pos, r.end_pos, r.pair) for p in extract_patterns(s) for r in p.occurrences}
        ext = {(r.start_pos, r.end_pos, r.pair) for p in extract_patterns(s, True) for r in p.occurrences}
        assert base <= ext


class TestMerge:
    def _with_utterances(self, text, segments):
        return assign_utterances(extract_patterns(seq(text)), segments)

    def test_shared_label_gathers_utterances(self):
        # l1 l2 l1 at shots 0-2, l1 l3 l1 at shots 5-7
        segments = [seg("u0", 0.2, 0.6), seg("u1", 5.2, 5.6)]
        ps = self._with_utterances("l1 l2 l1 x y l1 l3 l1", segments)
        assert len(ps) == 2
        merged = merge_patterns(ps)
        assert len(merged) == 1
        assert merged.patterns[0].label_set == frozenset({"l1", "l2", "l3"})
        assert merged.patterns[0].utterances == {"u0", "u1"}

    def test_disjoint_unchanged(self):
        ps = extract_patterns(seq("a b a x c d c"))
        assert merge_patterns(ps).label_pairs() == ps.label_pairs()
        assert len(merge_patterns(ps)) == 2

    def test_chain_is_transitive(self):
        ps = extract_patterns(seq("a b a z b c b z c d c"))
        merged = merge_patterns(ps)
        assert [p.label_set for p in merged] == [frozenset("abcd")]

    @settings(max_examples=200, deadline=None)
    @given(label_strings, st.booleans())
    def test_idempotent_disjoint_lossless(self, labels, extended):
        s = ShotSequence.from_labels(labels)
        segments = [seg(f"u{i}", i + 0.25, i + 0.75) for i in range(len(labels))]
        ps = assign_utterances(extract_patterns(s, extended), segments)
        once = merge_patterns(ps)
        twice = merge_patterns(once)
        assert [(p.label_set, p.occurrences, p.utterances) for p in once] == [
            (p.label_set, p.occurrences, p.utterances) for p in twice
        ]
        sets = [p.label_set for p in once]
        for i in range(len(sets)):
            for j in range(i + 1, len(sets)):
                assert not sets[i] & sets[j]
        before = sorted(u for p in ps for u in p.utterances)
        after = sorted(u for p in once for u in p.utterances)
        assert before == after


class TestAssign:
    def test_inside_and_outside(self):
        ps = assign_utterances(extract_patterns(seq("x a b a y")), [seg("in", 1.1, 2.5), seg("out", 4.1, 4.9)])
        assert ps.patterns[0].utterances == {"in"}
        assert ps.segment_to_pattern() == {"in": 0}

    def test_half_open_boundary(self):
        # occurrence spans [1, 4); a midpoint of exactly 4 is outside
        ps = assign_utterances(extract_patterns(seq("x a b a y")), [seg("edge", 3.5, 4.5)])
        assert ps.patterns[0].utterances == set()

    @pytest.mark.parametrize("synchronized", [False, True])
    def test_generator_ground_truth(self, synchronized):
        ep = generate_synthetic_episode(SyntheticEpisodeConfig(seed=4, synchronized=synchronized))
        s = ShotSequence.from_shots(ep.shots, ep.shot_labels)
        ps = merge_patterns(assign_utterances(extract_patterns(s), ep.segments))
        by_pattern = ps.segment_to_pattern()
        planted = ep.segment_dialogue
        assert by_pattern == planted


class TestCoverage:
    def test_empty_pattern_set(self):
        ps = extract_patterns(seq("a a b"))
        assert coverage_stats(ps, [seg("u", 0, 1)]).coverage == 0.0

    def test_report_fields(self):
        segments = [seg("u0", 0.0, 1.0), seg("u1", 1.0, 2.0), seg("u2", 5.2, 5.8)]
        ps = assign_utterances(extract_patterns(seq("a b a x y z")), segments)
        rep = coverage_stats(ps, segments, {"u0": "A", "u1": "B", "u2": "C"})
        assert rep.coverage == pytest.approx(2.0 / 2.6)
        assert rep.speech_per_pattern == pytest.approx(2.0)
        assert rep.speakers_per_pattern == 2.0
        assert rep.as_dict()["coverage_pct"] == pytest.approx(100 * 2.0 / 2.6)

    @pytest.mark.parametrize("seed", range(5))
    def test_planted_coverage(self, seed):
        ep = generate_synthetic_episode(SyntheticEpisodeConfig(seed=seed, coverage=0.6))
        s = ShotSequence.from_shots(ep.shots, ep.shot_labels)
        ps = assign_utterances(extract_patterns(s), ep.segments)
        assert abs(coverage_stats(ps, ep.segments).coverage - 0.6) <= 0.02

    @settings(max_examples=150, deadline=None)
    @given(label_strings, st.lists(st.floats(0.05, 0.95), max_size=60))
    def test_extension_never_reduces_coverage(self, labels, offsets):
        s = ShotSequence.from_labels(labels)
        segments = [seg(f"u{i}", i + o - 0.05, i + o + 0.05) for i, o in enumerate(offsets[: len(labels)])]
        for merge in (False, True):
            def covered(extended):
                ps = extract_patterns(s, extended)
                ps = merge_patterns(ps) if merge else ps
                return coverage_stats(assign_utterances(ps, segments), segments).covered_speech
            assert covered(True) >= covered(False) - 1e-12
