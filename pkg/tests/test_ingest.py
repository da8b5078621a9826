import unittest
import sys
import os
import tempfile

import numpy as np

# Add the src directory to the path so we can import our modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.data.domain import GestureClass, Stage, Transform4
from src.data.ingest import (
    Channel,
    EventKind,
    EventRecord,
    RawStream,
    SampleRecord,
    format_sample,
    load_trials,
    parse_log,
    segment_trials,
    synchronize,
    write_log,
)
from src.data.synthgen import ManifestEntry, SessionPlan, generate_session
from src.errors import DataError

PERIOD = 1.0 / 60.0


def pose(x):
    return Transform4.from_parts(np.eye(3), [x, 0.0, 0.4]).m


def triplet_lines(n, eye_offset=0.0, skip_left=()):
    lines = []
    for k in range(n):
        t = k * PERIOD
        lines.append(format_sample(t, Channel.HEAD, pose(k)))
        if k not in skip_left:
            lines.append(format_sample(t + eye_offset, Channel.LEFT_EYE, pose(-k)))
        lines.append(format_sample(t + eye_offset, Channel.RIGHT_EYE, pose(-k)))
    return lines


def event(t, kind, rep=1):
    return EventRecord(t, kind, "P1", GestureClass.VERTICAL, Stage.FOLLOW, rep)


class TestParseLog(unittest.TestCase):
    """Test cases for parse_log and write_log."""

    def test_empty_input_is_an_error(self):
        with self.assertRaises(DataError) as ctx:
            parse_log([])
        self.assertIn("no valid records", str(ctx.exception))

    def test_malformed_lines_are_counted(self):
        lines = [format_sample(k * PERIOD, Channel.HEAD, pose(k)) for k in range(3)] + ["garbage here"]
        raw = parse_log(lines)
        self.assertEqual(len(raw.samples), 3)
        self.assertEqual(raw.skipped_lines, 1)

    def test_rejects_bad_records(self):
        """Wrong arity, unknown tokens and a broken homogeneous row are all skipped."""
        good = format_sample(0.0, Channel.HEAD, pose(0))
        bad_row = np.eye(4)
        bad_row[3, 3] = 1.5
        cases = {
            "short sample": "S 0.0 HEAD 1 0 0",
            "bad channel": good.replace("HEAD", "NOSE"),
            "bad homogeneous row": format_sample(0.0, Channel.HEAD, bad_row),
            "bad gesture": "E 0.0 TRIAL_START P1 Q FOLLOW 1",
            "bad stage": "E 0.0 TRIAL_START P1 V LATER 1",
            "unknown record": "X 0.0",
        }
        for name, line in cases.items():
            with self.subTest(case=name):
                raw = parse_log([good, line])
                self.assertEqual(raw.skipped_lines, 1)
                self.assertEqual(len(raw.samples), 1)

    def test_header_lines_are_not_records(self):
        raw = parse_log(["# gazegest log", "", format_sample(0.0, Channel.HEAD, pose(0))])
        self.assertEqual(raw.skipped_lines, 0)
        self.assertEqual(raw.header, ["gazegest log"])

    def test_write_then_parse(self):
        """write_log is the inverse of parse_log."""
        samples = [SampleRecord(k * PERIOD, Channel.HEAD, Transform4(pose(k / 3))) for k in range(4)]
        events = [event(0.0, EventKind.TRIAL_START), event(3 * PERIOD, EventKind.TRIAL_END)]
        stream = RawStream(samples, events, header=["seed=1"])
        parsed = parse_log(write_log(stream))
        self.assertEqual(parsed.samples, samples)
        self.assertEqual(parsed.events, events)
        self.assertEqual(parsed.header, ["seed=1"])


class TestSynchronize(unittest.TestCase):
    """Test cases for the head-keyed stream join."""

    def test_aligned_triplets(self):
        result = synchronize(parse_log(triplet_lines(10)))
        self.assertEqual(len(result.frames), 10)
        self.assertEqual(result.dropped_frames, 0)
        self.assertEqual(result.unused_eye_samples, 0)

    def test_offset_eye_stream(self):
        """Eyes 5 ms late still match their own head sample."""
        result = synchronize(parse_log(triplet_lines(10, eye_offset=0.005)), max_gap=0.033)
        self.assertEqual(len(result.frames), 10)
        for k, frame in enumerate(result.frames):
            self.assertEqual(frame.t, k * PERIOD)
            self.assertEqual(frame.left_eye.m[0, 3], -k)

    def test_missing_eye_sample_drops_frame(self):
        result = synchronize(parse_log(triplet_lines(10, skip_left=(4,))))
        self.assertEqual(len(result.frames), 9)
        self.assertEqual(result.dropped_frames, 1)
        self.assertNotIn(4 * PERIOD, [f.t for f in result.frames])

    def test_gap_too_large(self):
        result = synchronize(parse_log(triplet_lines(5, eye_offset=0.008)), max_gap=0.005)
        self.assertEqual(len(result.frames), 0)
        self.assertEqual(result.dropped_frames, 5)

    def test_max_gap_must_be_positive(self):
        with self.assertRaises(ValueError):
            synchronize(parse_log(triplet_lines(2)), max_gap=0.0)


class TestSegmentTrials(unittest.TestCase):
    """Test cases for event-log segmentation."""

    def setUp(self):
        self.frames = synchronize(parse_log(triplet_lines(200))).frames

    def test_one_trial(self):
        events = [event(10 * PERIOD, EventKind.TRIAL_START), event(189 * PERIOD, EventKind.TRIAL_END)]
        result = segment_trials(self.frames, events)
        self.assertEqual(len(result.trials), 1)
        self.assertEqual(len(result.trials[0]), 180)
        self.assertEqual(result.errors, [])

    def test_start_without_end(self):
        result = segment_trials(self.frames, [event(0.0, EventKind.TRIAL_START)])
        self.assertEqual(len(result.trials), 0)
        self.assertEqual(len(result.errors), 1)

    def test_end_without_start(self):
        result = segment_trials(self.frames, [event(1.0, EventKind.TRIAL_END)])
        self.assertEqual(len(result.trials), 0)
        self.assertEqual(len(result.errors), 1)

    def test_short_trial_rejected(self):
        events = [event(0.0, EventKind.TRIAL_START), event(5 * PERIOD, EventKind.TRIAL_END)]
        result = segment_trials(self.frames, events)
        self.assertEqual(result.trials, [])
        self.assertEqual(result.rejected, ["P1/V/FOLLOW/1"])

    def test_trials_do_not_share_frames(self):
        events = [event(0.0, EventKind.TRIAL_START, 1), event(50 * PERIOD, EventKind.TRIAL_END, 1),
                  event(60 * PERIOD, EventKind.TRIAL_START, 2), event(120 * PERIOD, EventKind.TRIAL_END, 2)]
        trials = segment_trials(self.frames, events).trials
        self.assertEqual([len(t) for t in trials], [51, 61])
        self.assertFalse({f.t for f in trials[0]} & {f.t for f in trials[1]})


class TestSessionRoundTrip(unittest.TestCase):
    """Synthesized logs segment back into their ground-truth manifest."""

    def test_four_subject_session(self):
        session = generate_session(SessionPlan.synthetic(n_subjects=4, seed=7), seed=7)
        result = load_trials(session.lines)
        self.assertEqual(len(result.trials), 240)
        self.assertEqual([ManifestEntry.of(t) for t in result.trials], session.manifest)
        self.assertEqual(result.skipped_lines, 0)
        self.assertEqual(result.errors, [])
        self.assertEqual(result.trials[17], session.trials[17])

    def test_missing_file(self):
        with self.assertRaises(DataError):
            load_trials(os.path.join(os.path.dirname(__file__), "no_such_log.txt"))


class TestDirtyLogs(unittest.TestCase):
    """Damaged lines are skipped and the rest of the log still segments."""

    def events_for(self, start, end, rep):
        return [f"E {start * PERIOD!r} TRIAL_START P1 V FOLLOW {rep}",
                f"E {end * PERIOD!r} TRIAL_END P1 V FOLLOW {rep}"]

    def test_undecodable_line_in_file(self):
        lines = triplet_lines(200) + self.events_for(10, 189, 1)
        payload = [line.encode("utf-8") + b"\n" for line in lines]
        payload.insert(30, b"\xff\xfe garbage\n")
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "session.log")
            with open(path, "wb") as f:
                f.writelines(payload)
            result = load_trials(path)
        self.assertEqual(result.skipped_lines, 1)
        self.assertEqual(len(result.trials), 1)
        self.assertEqual(len(result.trials[0]), 180)

    def test_non_positive_repetition_is_malformed(self):
        for rep in (0, -2):
            with self.subTest(rep=rep):
                lines = triplet_lines(200) + self.events_for(10, 100, rep) + self.events_for(110, 189, 1)
                result = load_trials(lines)
                self.assertEqual(result.skipped_lines, 2)
                self.assertEqual([t.trial_id for t in result.trials], ["P1/V/FOLLOW/1"])
                self.assertEqual(result.errors, [])


if __name__ == '__main__':
    unittest.main()
