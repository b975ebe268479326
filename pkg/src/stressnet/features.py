"""Per-syllable feature assembly and sentence-level mean normalization.

Twelve numerical features per syllable, six over the full syllable span
and the same six over its nucleus span, in this fixed slot order:

    0 syl_pitch_mean   1 syl_pitch_max   2 syl_voiced_dur_s
    3 syl_int_mean     4 syl_int_max     5 syl_dur_s
    6 nuc_pitch_mean   7 nuc_pitch_max   8 nuc_voiced_dur_s
    9 nuc_int_mean    10 nuc_int_max    11 nuc_dur_s

Pitch statistics over a fully unvoiced span are ABSENT (None): an
unvoiced syllable says nothing about pitch, and after normalization it
sits exactly at the sentence mean (zero), the neutral input for the
linear projection.

The feature table interface is line-delimited JSON, one object per word
instance: {"utterance_id", "word", "syllables": [{"position", "features"
(12 floats, slot order above), "nucleus" (tag), "stress" (0/1/2 or
null)}]}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dsp import IntensityTrack, PitchTrack, SegmentStats, Track, segment_stats
from .errors import InvalidSpan, SpanOutOfRange
from .lexicon import StressLevel

FEATURE_SLOTS = (
    "syl_pitch_mean", "syl_pitch_max", "syl_voiced_dur_s",
    "syl_int_mean", "syl_int_max", "syl_dur_s",
    "nuc_pitch_mean", "nuc_pitch_max", "nuc_voiced_dur_s",
    "nuc_int_mean", "nuc_int_max", "nuc_dur_s",
)
N_FEATURES = len(FEATURE_SLOTS)  # 12
MAX_SYLLABLES = 17


@dataclass(frozen=True)
class RawSyllableFeatures:
    """The 12 pre-normalization feature values; None marks ABSENT pitch."""

    values: tuple

    def __post_init__(self):
        if len(self.values) != N_FEATURES:
            raise InvalidSpan(f"expected {N_FEATURES} slots, got {len(self.values)}")


@dataclass
class SyllableObservation:
    """One syllable as the model sees it: features, type, position, label."""

    features: np.ndarray
    nucleus_tag: str
    position: int
    stress: StressLevel | None = None


@dataclass
class WordRecord:
    """One word instance of a feature table: ordered syllable observations."""

    utterance_id: str
    word: str
    syllables: list[SyllableObservation]


def _check_extent(track: Track, start_s: float, end_s: float) -> None:
    if len(track) == 0:
        raise SpanOutOfRange("track has no frames")
    half = track.frame_hop_s / 2.0
    lo = float(track.times_s[0]) - half
    hi = float(track.times_s[-1]) + half
    if end_s <= lo or start_s >= hi:
        raise SpanOutOfRange(
            f"span [{start_s}, {end_s}) outside track extent [{lo}, {hi})")


def _nearest_value(track: Track, start_s: float, end_s: float) -> float:
    mid = 0.5 * (start_s + end_s)
    idx = int(np.argmin(np.abs(track.times_s - mid)))
    return float(track.values[idx])


def extract_features(pitch: PitchTrack, intensity: IntensityTrack,
                     syllable_span: tuple[float, float],
                     nucleus_span: tuple[float, float]) -> RawSyllableFeatures:
    """The 12-slot raw feature vector for one syllable.

    The nucleus span must lie inside the syllable span. Intensity stats on
    a span too short to contain a frame center fall back to the nearest
    frame, so only pitch slots can be ABSENT.
    """
    s0, s1 = syllable_span
    n0, n1 = nucleus_span
    if not (s0 <= n0 and n1 <= s1):
        raise InvalidSpan(f"nucleus span [{n0},{n1}) outside syllable [{s0},{s1})")
    _check_extent(pitch, s0, s1)
    _check_extent(intensity, s0, s1)

    def six(span0: float, span1: float) -> list:
        p: SegmentStats = segment_stats(pitch, span0, span1)
        i: SegmentStats = segment_stats(intensity, span0, span1)
        int_mean = i.mean if i.mean is not None else _nearest_value(intensity, span0, span1)
        int_max = i.max if i.max is not None else int_mean
        return [p.mean, p.max, p.voiced_duration_s, int_mean, int_max, span1 - span0]

    return RawSyllableFeatures(tuple(six(s0, s1) + six(n0, n1)))


def normalize_sentence(raw: Sequence[RawSyllableFeatures]) -> list[np.ndarray]:
    """Subtract the per-slot sentence mean; ABSENT entries become 0.

    The mean of each slot is taken over the syllables where it is present;
    absent entries are set to that mean, i.e. exactly 0 after subtraction.
    A slot absent everywhere comes out all-zero.
    """
    if not raw:
        raise InvalidSpan("empty sentence")
    n = len(raw)
    out = [np.zeros(N_FEATURES) for _ in range(n)]
    for slot in range(N_FEATURES):
        present = [i for i in range(n) if raw[i].values[slot] is not None]
        if not present:
            continue
        mean = float(np.mean([raw[i].values[slot] for i in present]))
        for i in present:
            out[i][slot] = float(raw[i].values[slot]) - mean
    return out


# --- feature table io -------------------------------------------------------

def write_feature_table(records: Sequence[WordRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            doc = {
                "utterance_id": rec.utterance_id,
                "word": rec.word,
                "syllables": [
                    {
                        "position": obs.position,
                        "features": [float(x) for x in obs.features],
                        "nucleus": obs.nucleus_tag,
                        "stress": None if obs.stress is None else int(obs.stress),
                    }
                    for obs in rec.syllables
                ],
            }
            fh.write(json.dumps(doc, sort_keys=True) + "\n")


def read_feature_table(path: str) -> list[WordRecord]:
    records: list[WordRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            syllables = [
                SyllableObservation(
                    features=np.asarray(s["features"], dtype=np.float64),
                    nucleus_tag=s["nucleus"],
                    position=int(s["position"]),
                    stress=None if s["stress"] is None else StressLevel(s["stress"]),
                )
                for s in doc["syllables"]
            ]
            records.append(WordRecord(doc["utterance_id"], doc["word"], syllables))
    return records
