"""Playback planning: make animation windows track audio windows.

A reply's clip is trimmed of lead-in frames, then looped, truncated, or
last-frame-held so its play window equals the audio window. The residual
mismatch is bounded by DESYNC_TOLERANCE_MS by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .scenario import AnimationClipMeta

DESYNC_TOLERANCE_MS = 250
DEFAULT_SPEECH_RATE_WPM = 165


class UntrimmedClipError(ValueError):
    """plan_playback only accepts clips whose lead-in was removed."""


@dataclass(frozen=True)
class PlaybackPlan:
    clip_id: str
    start_offset_ms: int
    play_duration_ms: int
    loop_count: int
    lip_sync_window_ms: tuple[int, int]  # relative to response start


def clip_duration_ms(clip: AnimationClipMeta) -> float:
    return clip.total_frames / clip.fps * 1000.0


def trim_lead_in(clip: AnimationClipMeta) -> AnimationClipMeta:
    """Drop the empty frames at the clip head; idempotent."""
    if clip.lead_in_frames == 0:
        return clip
    return replace(clip, total_frames=clip.total_frames - clip.lead_in_frames, lead_in_frames=0)


def estimate_audio_duration(reply: str, rate_wpm: float = DEFAULT_SPEECH_RATE_WPM) -> int:
    """Speech-window estimate in ms when no audio adapter supplies real timing."""
    if rate_wpm <= 0:
        raise ValueError(f"rate_wpm must be > 0, got {rate_wpm}")
    words = len(reply.split())
    return max(1000, round(words / (rate_wpm / 60.0) * 1000.0))


def plan_playback(clip: AnimationClipMeta, audio_duration_ms: float) -> PlaybackPlan:
    """Fit the clip to the audio window.

    Shorter loopable clips loop with the final pass truncated; longer clips
    truncate; shorter non-loopable clips hold their last frame. Either way
    the play window equals the audio window.
    """
    if clip.lead_in_frames != 0:
        raise UntrimmedClipError(
            f"clip {clip.id!r} still has {clip.lead_in_frames} lead-in frames; trim_lead_in() it first"
        )
    if audio_duration_ms < 0:
        raise ValueError(f"audio_duration_ms must be >= 0, got {audio_duration_ms}")
    audio = int(round(audio_duration_ms))
    play = max(1, audio)
    duration = clip_duration_ms(clip)
    loop_count = 1
    if clip.loopable and duration < play:
        loop_count = math.ceil(play / duration)
    return PlaybackPlan(
        clip_id=clip.id,
        start_offset_ms=0,
        play_duration_ms=play,
        loop_count=loop_count,
        lip_sync_window_ms=(0, audio),
    )


def measure_desync(plan: PlaybackPlan, audio_duration_ms: float) -> int:
    """Absolute gap between the animation window and the audio window, in ms."""
    return abs(plan.play_duration_ms - int(round(audio_duration_ms)))
