from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aims.scenario import AnimationClipMeta
from aims.timeline import (
    DESYNC_TOLERANCE_MS,
    UntrimmedClipError,
    clip_duration_ms,
    estimate_audio_duration,
    measure_desync,
    plan_playback,
    trim_lead_in,
)


def clip(total: int, lead_in: int = 0, fps: float = 30.0, loopable: bool = True) -> AnimationClipMeta:
    return AnimationClipMeta(
        id="c", display_label="", total_frames=total, fps=fps, lead_in_frames=lead_in, loopable=loopable
    )


clips = st.builds(
    clip,
    total=st.integers(min_value=2, max_value=2000),
    lead_in=st.integers(min_value=0, max_value=500),
    fps=st.sampled_from([24.0, 30.0, 60.0]),
    loopable=st.booleans(),
).filter(lambda c: c.lead_in_frames < c.total_frames)


class TestTrimLeadIn:
    def test_defect_fixture(self):
        trimmed = trim_lead_in(clip(400, lead_in=100))
        assert trimmed.total_frames == 300
        assert trimmed.lead_in_frames == 0

    def test_identity_when_already_trimmed(self):
        c = clip(120, lead_in=0)
        assert trim_lead_in(c) is c

    def test_other_fields_unchanged(self):
        c = clip(400, lead_in=100)
        t = trim_lead_in(c)
        assert (t.id, t.fps, t.loopable, t.expression_tag) == (c.id, c.fps, c.loopable, c.expression_tag)

    @settings(max_examples=300, deadline=None)
    @given(clips)
    def test_effective_duration_preserved(self, c):
        assert trim_lead_in(c).effective_duration_ms == pytest.approx(c.effective_duration_ms)

    @settings(max_examples=200, deadline=None)
    @given(clips)
    def test_idempotent(self, c):
        once = trim_lead_in(c)
        assert trim_lead_in(once) == once


class TestEstimateAudioDuration:
    def test_eleven_words_at_165_wpm(self):
        # 11 words / (165/60 words-per-second) = 4.0 s exactly.
        reply = " ".join(["word"] * 11)
        assert estimate_audio_duration(reply) == 4000

    def test_empty_reply_hits_floor(self):
        assert estimate_audio_duration("") == 1000

    def test_bad_rate_rejected(self):
        with pytest.raises(ValueError):
            estimate_audio_duration("hi", rate_wpm=0)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(min_value=3, max_value=300))
    def test_doubling_words_doubles_duration(self, n):
        # n >= 3 keeps both measurements above the 1000 ms floor.
        single = estimate_audio_duration(" ".join(["w"] * n))
        double = estimate_audio_duration(" ".join(["w"] * 2 * n))
        assert abs(double - 2 * single) <= 1  # integer rounding only

    def test_deterministic(self):
        reply = "one two three four five"
        assert estimate_audio_duration(reply) == estimate_audio_duration(reply)


class TestPlanPlayback:
    def test_long_clip_truncates_to_audio(self):
        # 420 frames at 30 fps = 14 s of clip against 4 s of audio.
        plan = plan_playback(clip(420), 4000)
        assert plan.play_duration_ms == 4000
        assert plan.loop_count == 1
        assert plan.lip_sync_window_ms == (0, 4000)

    def test_exact_fit_single_loop(self):
        c = clip(120)  # 4000 ms at 30 fps
        assert clip_duration_ms(c) == 4000
        plan = plan_playback(c, 4000)
        assert plan.loop_count == 1
        assert plan.play_duration_ms == 4000

    def test_short_loopable_clip_loops_with_truncated_tail(self):
        c = clip(45)  # 1500 ms
        plan = plan_playback(c, 4000)
        assert plan.loop_count == 3  # 4000 = 2 * 1500 + 1000
        assert plan.play_duration_ms == 4000

    def test_short_nonloopable_clip_holds_last_frame(self):
        plan = plan_playback(clip(45, loopable=False), 4000)
        assert plan.loop_count == 1
        assert plan.play_duration_ms == 4000

    def test_untrimmed_clip_rejected(self):
        with pytest.raises(UntrimmedClipError):
            plan_playback(clip(400, lead_in=100), 4000)

    def test_negative_audio_rejected(self):
        with pytest.raises(ValueError):
            plan_playback(clip(100), -1)

    def test_zero_audio_still_positive_play(self):
        plan = plan_playback(clip(100), 0)
        assert plan.play_duration_ms > 0
        assert measure_desync(plan, 0) <= DESYNC_TOLERANCE_MS

    @settings(max_examples=500, deadline=None)
    @given(clips.map(trim_lead_in), st.integers(min_value=0, max_value=60_000))
    def test_desync_bounded_for_all_plans(self, c, audio_ms):
        plan = plan_playback(c, audio_ms)
        assert measure_desync(plan, audio_ms) <= DESYNC_TOLERANCE_MS
        assert plan.play_duration_ms > 0
        assert plan.lip_sync_window_ms == (0, audio_ms)


class TestMeasureDesync:
    def test_zero_when_equal(self):
        plan = plan_playback(clip(120), 4000)
        assert measure_desync(plan, 4000) == 0

    def test_reports_raw_defect_magnitude(self):
        # A 14 s clip naively played whole against a 4 s reply: 10 s apart.
        from aims.timeline import PlaybackPlan

        naive = PlaybackPlan("c", 0, 14000, 1, (0, 14000))
        assert measure_desync(naive, 4000) == 10000
