import pytest
from hypothesis import given, settings, strategies as st

from eventbench.domain import (
    CaptionedSegments,
    GroundedMcq,
    IntervalSet,
    McqAnswer,
    ParseFailure,
    SingleInterval,
    TaskKind,
    TimeInterval,
    TimePoint,
)
from eventbench.parse import (
    DEFAULT_CONFIG,
    ParseConfig,
    parse_captioned,
    parse_for_task,
    parse_grounded,
    parse_intervals,
    parse_mcq,
    parse_point,
)


class TestParseMcq:
    def test_canonical(self):
        assert parse_mcq("Best Option: (A)", "ABCD") == McqAnswer("A")

    def test_fallback_paren(self):
        assert parse_mcq("I think the answer is (C) because it fits.", "ABCD") == McqAnswer("C")

    def test_no_choice(self):
        assert parse_mcq("The video shows cooking.", "ABCD") == ParseFailure("no-choice")

    def test_case_and_whitespace_flexible(self):
        assert parse_mcq("best option:  ( b )", "ABCD") == McqAnswer("B")

    def test_letter_outside_allowed_set_skipped(self):
        assert parse_mcq("Best Option: (E). Or maybe (B).", "ABCD") == McqAnswer("B")

    def test_bare_letter_token(self):
        assert parse_mcq("The answer is B", "ABCD") == McqAnswer("B")

    def test_article_a_not_taken_as_answer(self):
        assert parse_mcq("I saw a dog near the door, choice D", "ABCD") == McqAnswer("D")

    def test_first_match_wins(self):
        assert parse_mcq("Best Option: (A). Best Option: (B).", "ABCD") == McqAnswer("A")

    def test_requires_allowed_letters(self):
        with pytest.raises(ValueError):
            parse_mcq("anything", "")


class TestParseIntervals:
    def test_multi_interval_listing(self):
        text = "The action happens in 4.2 - 6.8, 7.5 - 10.3, 15.1 - 18.6, and 23.4 - 27.5 seconds"
        assert parse_intervals(text, 60.0) == [
            TimeInterval(4.2, 6.8),
            TimeInterval(7.5, 10.3),
            TimeInterval(15.1, 18.6),
            TimeInterval(23.4, 27.5),
        ]

    def test_single(self):
        assert parse_intervals("The event happens in 10.2 - 12.8 seconds", 60.0) == [TimeInterval(10.2, 12.8)]

    def test_clamp_to_duration(self):
        assert parse_intervals("happens in 90 - 102 seconds", 95.0) == [TimeInterval(90.0, 95.0)]

    def test_reversed_pair_dropped_not_swapped(self):
        assert parse_intervals("12.8 - 10.2 seconds", 60.0) == ParseFailure("no-intervals")

    def test_keeps_valid_among_invalid(self):
        got = parse_intervals("9 - 5, then 1 - 2 seconds", 60.0)
        assert got == [TimeInterval(1.0, 2.0)]

    def test_word_to_separator(self):
        assert parse_intervals("from 5 to 10 seconds", 60.0) == [TimeInterval(5.0, 10.0)]

    def test_en_dash(self):
        assert parse_intervals("5.5 – 7.5 seconds", 60.0) == [TimeInterval(5.5, 7.5)]

    def test_clock_format_converted(self):
        assert parse_intervals("1:23 - 2:05", 300.0) == [TimeInterval(83.0, 125.0)]

    def test_unit_suffix_variants(self):
        assert parse_intervals("10.2s - 12.8s", 60.0) == [TimeInterval(10.2, 12.8)]

    def test_max_intervals_truncation(self):
        text = ", ".join(f"{i} - {i}.5" for i in range(15))
        got = parse_intervals(text, 60.0, ParseConfig(max_intervals=10))
        assert len(got) == 10
        assert got[0] == TimeInterval(0.0, 0.5)

    def test_no_pairs(self):
        assert parse_intervals("no times here", 60.0) == ParseFailure("no-intervals")

    def test_clamp_disabled_keeps_raw_values(self):
        cfg = ParseConfig(clamp_to_duration=False)
        assert parse_intervals("90 - 102 seconds", 95.0, cfg) == [TimeInterval(90.0, 102.0)]

    def test_requires_positive_duration(self):
        with pytest.raises(ValueError):
            parse_intervals("1 - 2", 0.0)


class TestParsePoint:
    def test_canonical(self):
        assert parse_point("The highlight moment happens at 26.8 seconds", 60.0) == TimePoint(26.8)

    def test_zero_boundary(self):
        assert parse_point("at 0 seconds", 60.0) == TimePoint(0.0)

    def test_failure(self):
        assert parse_point("no idea", 60.0) == ParseFailure("no-point")

    def test_unit_fallback_without_at(self):
        assert parse_point("roughly 12.5 seconds in", 60.0) == TimePoint(12.5)

    def test_clamped(self):
        assert parse_point("at 90 seconds", 60.0) == TimePoint(60.0)


class TestParseCaptioned:
    def test_two_segments(self):
        text = (
            "90 - 102 seconds, spread margarine on two slices of white bread. "
            "114 - 127 seconds, place a slice of cheese on the bread."
        )
        assert parse_captioned(text, 200.0) == [
            (TimeInterval(90.0, 102.0), "spread margarine on two slices of white bread."),
            (TimeInterval(114.0, 127.0), "place a slice of cheese on the bread."),
        ]

    def test_short_step_captions(self):
        text = "24.8 - 30.2 seconds, cut apple. 35.6 - 40.4 seconds, wash dishes."
        got = parse_captioned(text, 60.0)
        assert [cap for _, cap in got] == ["cut apple.", "wash dishes."]

    def test_empty_caption_tolerated(self):
        assert parse_captioned("5 - 10,", 20.0) == [(TimeInterval(5.0, 10.0), "")]

    def test_no_segments(self):
        assert parse_captioned("nothing to see", 20.0) == ParseFailure("no-segments")

    def test_dropped_pair_drops_its_caption(self):
        text = "9 - 5 seconds, bogus. 1 - 2 seconds, real."
        assert parse_captioned(text, 20.0) == [(TimeInterval(1.0, 2.0), "real.")]

    def test_leading_sentence_period_stripped(self):
        text = "The events are 5 - 10 seconds. cooking rice. 12 - 15 seconds. serving food."
        got = parse_captioned(text, 60.0)
        assert [cap for _, cap in got] == ["cooking rice.", "serving food."]


class TestParseGrounded:
    def test_canonical(self):
        got = parse_grounded("Best Option: (C). The relevant event happens in 12.0 - 15.5 seconds", 150.0)
        assert got == ("C", TimeInterval(12.0, 15.5))

    def test_missing_interval(self):
        assert parse_grounded("Best Option: (B).", 150.0) == ParseFailure("no-intervals")

    def test_missing_choice(self):
        assert parse_grounded("The relevant event happens in 1 - 2 seconds", 150.0) == ParseFailure("no-choice")


class TestParseForTask:
    TAL_STYLE = "The action happens in 4.2 - 6.8, 7.5 - 10.3 seconds"

    def test_single_boundary_tasks_keep_first(self):
        for task in (TaskKind.TVG, TaskKind.EPM, TaskKind.TEM):
            assert parse_for_task(task, self.TAL_STYLE, 60.0) == SingleInterval(TimeInterval(4.2, 6.8))

    def test_set_tasks_keep_all(self):
        got = parse_for_task(TaskKind.TAL, self.TAL_STYLE, 60.0)
        assert got == IntervalSet([TimeInterval(4.2, 6.8), TimeInterval(7.5, 10.3)])

    def test_mcq_dispatch(self):
        assert parse_for_task(TaskKind.RAR, "Best Option: (D)", 60.0) == McqAnswer("D")

    def test_rvq_allows_e(self):
        assert parse_for_task(TaskKind.RVQ, "Best Option: (E)", 60.0) == McqAnswer("E")

    def test_vhd_point(self):
        assert parse_for_task(TaskKind.VHD, "at 26.8 seconds", 60.0) == TimePoint(26.8)

    def test_captioning(self):
        got = parse_for_task(TaskKind.DVC, "5 - 10 seconds, cut apple.", 60.0)
        assert isinstance(got, CaptionedSegments)

    def test_gvq(self):
        got = parse_for_task(TaskKind.GVQ, "Best Option: (A). The relevant event happens in 1 - 2 seconds", 60.0)
        assert got == GroundedMcq("A", TimeInterval(1.0, 2.0))

    def test_failures_embedded(self):
        assert parse_for_task(TaskKind.TVG, "nope", 60.0) == ParseFailure("no-intervals")


@settings(max_examples=300, deadline=None)
@given(text=st.text(max_size=200), task=st.sampled_from(list(TaskKind)))
def test_parsing_is_total_and_deterministic(text, task):
    first = parse_for_task(task, text, 60.0)
    second = parse_for_task(task, text, 60.0)
    assert first == second


def test_order_preserved():
    text = "7 - 9, 1 - 2, 5 - 6 seconds"
    got = parse_intervals(text, 60.0)
    assert got == [TimeInterval(7, 9), TimeInterval(1, 2), TimeInterval(5, 6)]


def test_default_config_mirrors_segment_cap():
    assert DEFAULT_CONFIG.max_intervals == 10
    assert DEFAULT_CONFIG.clamp_to_duration
