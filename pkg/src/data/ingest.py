"""
Log Ingestion Module

Parses line-delimited sensing logs, joins the head and eye streams into
frames, and segments frames into gesture trials using the event log.

Log format (UTF-8, one record per line, single-space separated):

    S <t> <HEAD|LEYE|REYE> <16 floats, row-major>
    E <t> <TRIAL_START|TRIAL_END> <participant> <V|H|L0|L270|Z0> <FOLLOW|FIXED|IRECALL|RECALL> <rep>

Lines starting with ``#`` are header comments.
"""
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from src.data.domain import (
    FrameSample,
    GestureClass,
    GestureTrial,
    HOMOGENEOUS_ROW,
    Stage,
    Transform4,
)
from src.errors import DataError

_logger = logging.getLogger(__name__)

DEFAULT_MAX_GAP = 1.0 / 30.0
MIN_TRIAL_FRAMES = 8
HOMOGENEOUS_TOL = 1e-6


class Channel(Enum):
    HEAD = "HEAD"
    LEFT_EYE = "LEYE"
    RIGHT_EYE = "REYE"


class EventKind(Enum):
    TRIAL_START = "TRIAL_START"
    TRIAL_END = "TRIAL_END"


TrialKey = Tuple[str, GestureClass, Stage, int]


@dataclass(frozen=True)
class SampleRecord:
    t: float
    channel: Channel
    transform: Transform4


@dataclass(frozen=True)
class EventRecord:
    t: float
    kind: EventKind
    participant_id: str
    gesture: GestureClass
    stage: Stage
    repetition: int

    @property
    def key(self) -> TrialKey:
        return self.participant_id, self.gesture, self.stage, self.repetition


@dataclass
class RawStream:
    samples: List[SampleRecord]
    events: List[EventRecord]
    skipped_lines: int = 0
    header: List[str] = field(default_factory=list)


@dataclass
class SyncResult:
    frames: List[FrameSample]
    dropped_frames: int
    unused_eye_samples: int


@dataclass(frozen=True)
class SegmentError:
    key: TrialKey
    t: float
    message: str

    def __str__(self) -> str:
        pid, gesture, stage, rep = self.key
        return f"{pid}/{gesture.token}/{stage.token}/{rep} @ t={self.t:.3f}: {self.message}"


@dataclass
class SegmentationResult:
    trials: List[GestureTrial]
    errors: List[SegmentError] = field(default_factory=list)
    rejected: List[str] = field(default_factory=list)


@dataclass
class IngestResult:
    """Everything load_trials learned about a log, counters included."""
    trials: List[GestureTrial]
    skipped_lines: int
    dropped_frames: int
    unused_eye_samples: int
    errors: List[SegmentError]
    rejected: List[str]
    header: List[str]


# ---------------------------------------------------------------------------
# Record formatting / parsing
# ---------------------------------------------------------------------------

def format_float(value: float) -> str:
    """17 significant digits: parses back to the identical float64."""
    return format(float(value), ".17g")


def format_sample(t: float, channel: Channel, matrix: np.ndarray) -> str:
    values = " ".join(format_float(v) for v in np.asarray(matrix, dtype=np.float64).reshape(16))
    return f"S {format_float(t)} {channel.value} {values}"


def format_event(event: EventRecord) -> str:
    return (f"E {format_float(event.t)} {event.kind.value} {event.participant_id} "
            f"{event.gesture.token} {event.stage.token} {event.repetition}")


def _parse_sample(tokens: List[str]) -> SampleRecord:
    if len(tokens) != 19:
        raise ValueError(f"sample record needs 19 fields, got {len(tokens)}")
    t = float(tokens[1])
    channel = Channel(tokens[2])
    values = np.array([float(v) for v in tokens[3:]], dtype=np.float64)
    if not (np.isfinite(t) and np.all(np.isfinite(values))):
        raise ValueError("non-finite value")
    matrix = values.reshape(4, 4)
    if np.max(np.abs(matrix[3] - HOMOGENEOUS_ROW)) > HOMOGENEOUS_TOL:
        raise ValueError("homogeneous row is not (0, 0, 0, 1)")
    return SampleRecord(t, channel, Transform4(matrix))


def _parse_event(tokens: List[str]) -> EventRecord:
    if len(tokens) != 7:
        raise ValueError(f"event record needs 7 fields, got {len(tokens)}")
    t = float(tokens[1])
    if not np.isfinite(t):
        raise ValueError("non-finite timestamp")
    repetition = int(tokens[6])
    if repetition < 1:
        raise ValueError(f"repetition must be >= 1, got {repetition}")
    return EventRecord(
        t=t,
        kind=EventKind(tokens[2]),
        participant_id=tokens[3],
        gesture=GestureClass.from_token(tokens[4]),
        stage=Stage.from_token(tokens[5]),
        repetition=repetition,
    )


def parse_log(lines: Iterable[Union[str, bytes]]) -> RawStream:
    """
    Parse log lines into sample and event records.

    Malformed lines are skipped and counted; header lines (``#``) and blank
    lines are ignored. Byte lines are decoded one at a time, so a line that
    is not valid UTF-8 counts as malformed.

    Args:
        lines: Iterable of text or byte lines (a file object works)

    Returns:
        RawStream with records in file order and the skipped-line count

    Raises:
        DataError: if not a single valid record was found
    """
    samples: List[SampleRecord] = []
    events: List[EventRecord] = []
    header: List[str] = []
    skipped = 0

    for line_no, raw_line in enumerate(lines, start=1):
        if isinstance(raw_line, (bytes, bytearray)):
            try:
                raw_line = raw_line.decode("utf-8")
            except UnicodeDecodeError as e:
                skipped += 1
                if skipped <= 5:
                    _logger.warning("Skipping undecodable line %d: %s", line_no, e)
                continue
        line = raw_line.strip()
        if not line:
            continue
        if line.startswith("#"):
            header.append(line[1:].strip())
            continue
        tokens = line.split()
        try:
            if tokens[0] == "S":
                samples.append(_parse_sample(tokens))
            elif tokens[0] == "E":
                events.append(_parse_event(tokens))
            else:
                raise ValueError(f"unknown record type {tokens[0]!r}")
        except (ValueError, IndexError) as e:
            skipped += 1
            if skipped <= 5:
                _logger.warning("Skipping malformed line %d: %s", line_no, e)

    if not samples and not events:
        raise DataError("no valid records", where=f"{skipped} malformed lines")
    if skipped:
        _logger.info("Parsed %d samples and %d events, skipped %d lines",
                     len(samples), len(events), skipped)
    return RawStream(samples=samples, events=events, skipped_lines=skipped, header=header)


def write_log(stream: RawStream) -> List[str]:
    """
    Render a RawStream back into log lines (inverse of parse_log).

    Records are emitted in time order; at equal timestamps a TRIAL_START
    precedes samples and a TRIAL_END follows them.
    """
    keyed = []
    for i, event in enumerate(stream.events):
        rank = 0 if event.kind is EventKind.TRIAL_START else 2
        keyed.append((event.t, rank, i, format_event(event)))
    for i, sample in enumerate(stream.samples):
        keyed.append((sample.t, 1, i, format_sample(sample.t, sample.channel, sample.transform.m)))
    keyed.sort(key=lambda item: item[:3])

    lines = [f"# {h}" for h in stream.header]
    lines.extend(item[3] for item in keyed)
    return lines


# ---------------------------------------------------------------------------
# Stream synchronization
# ---------------------------------------------------------------------------

def _assign_to_heads(head_t: np.ndarray, eye_t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    For each head sample, the index of its closest assigned eye sample.

    Each eye sample is first assigned to its nearest head sample (ties go to
    the earlier head); each head then keeps the closest of its assignees.

    Returns:
        (eye index per head or -1, absolute time gap per head or inf)
    """
    best = np.full(len(head_t), -1, dtype=np.int64)
    gap = np.full(len(head_t), np.inf)
    if len(eye_t) == 0 or len(head_t) == 0:
        return best, gap

    right = np.clip(np.searchsorted(head_t, eye_t, side="left"), 0, len(head_t) - 1)
    left = np.clip(right - 1, 0, len(head_t) - 1)
    d_left = np.abs(eye_t - head_t[left])
    d_right = np.abs(head_t[right] - eye_t)
    nearest = np.where(d_left <= d_right, left, right)
    dist = np.minimum(d_left, d_right)

    order = np.lexsort((dist, nearest))
    heads_sorted = nearest[order]
    first = np.unique(heads_sorted, return_index=True)[1]
    chosen = order[first]
    best[nearest[chosen]] = chosen
    gap[nearest[chosen]] = dist[chosen]
    return best, gap


def synchronize(raw: RawStream, max_gap: float = DEFAULT_MAX_GAP) -> SyncResult:
    """
    Join head and eye samples into frames keyed on the head stream.

    A frame is emitted for a head sample only when it owns a left-eye and a
    right-eye sample no further than max_gap away; frame.t is the head time.

    Args:
        raw: Parsed stream
        max_gap: Maximum head/eye timestamp distance in seconds (> 0)

    Returns:
        SyncResult with frames in time order and drop counters
    """
    if not max_gap > 0:
        raise ValueError(f"max_gap must be > 0, got {max_gap}")

    by_channel: Dict[Channel, List[SampleRecord]] = {c: [] for c in Channel}
    for sample in raw.samples:
        by_channel[sample.channel].append(sample)
    for records in by_channel.values():
        records.sort(key=lambda s: s.t)

    heads = by_channel[Channel.HEAD]
    head_t = np.array([s.t for s in heads], dtype=np.float64)

    matches = {}
    for channel in (Channel.LEFT_EYE, Channel.RIGHT_EYE):
        eye_t = np.array([s.t for s in by_channel[channel]], dtype=np.float64)
        matches[channel] = _assign_to_heads(head_t, eye_t)

    left_idx, left_gap = matches[Channel.LEFT_EYE]
    right_idx, right_gap = matches[Channel.RIGHT_EYE]
    keep = (left_gap <= max_gap) & (right_gap <= max_gap)

    frames = [
        FrameSample(
            t=heads[i].t,
            head=heads[i].transform,
            left_eye=by_channel[Channel.LEFT_EYE][left_idx[i]].transform,
            right_eye=by_channel[Channel.RIGHT_EYE][right_idx[i]].transform,
        )
        for i in np.flatnonzero(keep)
    ]
    dropped = int(len(heads) - len(frames))
    eye_total = len(by_channel[Channel.LEFT_EYE]) + len(by_channel[Channel.RIGHT_EYE])
    unused = int(eye_total - 2 * len(frames))
    if dropped:
        _logger.info("Synchronization dropped %d of %d head samples", dropped, len(heads))
    return SyncResult(frames=frames, dropped_frames=dropped, unused_eye_samples=unused)


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------

def segment_trials(frames: Sequence[FrameSample], events: Sequence[EventRecord],
                   min_frames: int = MIN_TRIAL_FRAMES) -> SegmentationResult:
    """
    Cut frames into trials using paired TRIAL_START/TRIAL_END events.

    Each trial holds exactly the frames with start.t <= frame.t <= end.t.
    Unpaired events become error entries; trials shorter than min_frames are
    rejected. Processing always continues.

    Args:
        frames: Synchronized frames in time order
        events: Event records (any order)
        min_frames: Minimum frames for a trial to be kept

    Returns:
        SegmentationResult ordered by trial start time
    """
    times = np.array([f.t for f in frames], dtype=np.float64)
    result = SegmentationResult(trials=[])
    open_trials: Dict[TrialKey, EventRecord] = {}
    intervals: List[Tuple[EventRecord, EventRecord]] = []

    for event in sorted(events, key=lambda e: (e.t, e.kind is EventKind.TRIAL_END)):
        if event.kind is EventKind.TRIAL_START:
            if event.key in open_trials:
                stale = open_trials[event.key]
                result.errors.append(SegmentError(stale.key, stale.t, "TRIAL_START without TRIAL_END"))
            open_trials[event.key] = event
            continue
        start = open_trials.pop(event.key, None)
        if start is None:
            result.errors.append(SegmentError(event.key, event.t, "TRIAL_END without TRIAL_START"))
        elif not start.t < event.t:
            result.errors.append(SegmentError(event.key, event.t, "TRIAL_END not after TRIAL_START"))
        else:
            intervals.append((start, event))

    for start in open_trials.values():
        result.errors.append(SegmentError(start.key, start.t, "TRIAL_START without TRIAL_END"))

    intervals.sort(key=lambda pair: pair[0].t)
    last_end = -np.inf
    for start, end in intervals:
        if start.t <= last_end:
            _logger.warning("Trial %s overlaps the previous trial", start.key)
        last_end = max(last_end, end.t)

        lo = int(np.searchsorted(times, start.t, side="left"))
        hi = int(np.searchsorted(times, end.t, side="right"))
        pid, gesture, stage, rep = start.key
        if hi - lo < min_frames:
            trial_id = f"{pid}/{gesture.token}/{stage.token}/{rep}"
            result.rejected.append(trial_id)
            _logger.warning("Rejected trial %s: %d frames < %d", trial_id, hi - lo, min_frames)
            continue
        result.trials.append(GestureTrial(pid, gesture, stage, rep, tuple(frames[lo:hi])))

    for error in result.errors:
        _logger.warning("Segmentation error: %s", error)
    return result


def load_trials(source: Union[str, os.PathLike, Iterable[str]],
                max_gap: float = DEFAULT_MAX_GAP,
                min_frames: int = MIN_TRIAL_FRAMES) -> IngestResult:
    """
    Parse, synchronize and segment a log in one call.

    Args:
        source: Path to a log file, or an iterable of lines
        max_gap: Synchronization tolerance in seconds
        min_frames: Minimum trial length

    Returns:
        IngestResult with trials and every counter
    """
    if isinstance(source, (str, os.PathLike)):
        if not os.path.exists(source):
            raise DataError("log file not found", where=str(source))
        with open(source, "rb") as f:
            raw = parse_log(f)
    else:
        raw = parse_log(source)

    sync = synchronize(raw, max_gap)
    segmentation = segment_trials(sync.frames, raw.events, min_frames)
    return IngestResult(
        trials=segmentation.trials,
        skipped_lines=raw.skipped_lines,
        dropped_frames=sync.dropped_frames,
        unused_eye_samples=sync.unused_eye_samples,
        errors=segmentation.errors,
        rejected=segmentation.rejected,
        header=raw.header,
    )
