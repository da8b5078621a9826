"""
Synthetic Session Generator

Produces sensing logs compatible with the ingest format: five gesture
templates traced by synthetic subjects whose gaze angle is split between
head rotation and eye rotation. Each subject's style (head share, speed,
amplitude, seating distance, head offset, tremor, noise) is fixed for the
whole session and is the identity signal for user identification.

Geometry: templates live in a 300x300 logical-point box centered on the
screen, screen y grows downward, 1 pt = 0.1558 mm.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from src.data.domain import FrameSample, GestureClass, GestureTrial, Stage, Transform4
from src.data.ingest import Channel, EventKind, EventRecord, format_event, format_sample
from src.errors import ConfigError
from src.utils.hashing import canonical_json, sha256_text

_logger = logging.getLogger(__name__)

PATTERN_SIZE = 300.0
HALF = PATTERN_SIZE / 2
POINT_TO_METER = 0.1558e-3
INTEROCULAR_HALF = 0.031
CORNER_DWELL = 0.12
BASE_HEAD_DISTANCE = 0.40
DEFAULT_ALPHA_RANGE = (0.3, 0.95)

LOG_MAGIC = "gazegest-log v1"


@dataclass(frozen=True)
class GestureTemplate:
    gesture: GestureClass
    polyline: np.ndarray  # [n_points, 2] logical points

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.polyline, axis=0), axis=1)

    @property
    def path_length(self) -> float:
        return float(self.segment_lengths.sum())

    @property
    def corners(self) -> int:
        return len(self.polyline) - 2


_TEMPLATE_POINTS = {
    GestureClass.VERTICAL: [(0, -HALF), (0, HALF)],
    GestureClass.HORIZONTAL: [(-HALF, 0), (HALF, 0)],
    GestureClass.L0: [(-HALF, HALF), (-HALF, -HALF), (HALF, -HALF)],
    GestureClass.Z0: [(-HALF, HALF), (HALF, HALF), (-HALF, -HALF), (HALF, -HALF)],
}
# 270 degrees about the origin: (x, y) -> (y, -x), exact in integers
_ROT_270 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def gesture_template(g: GestureClass) -> GestureTemplate:
    """Polyline of a gesture inside the 300-pt pattern box."""
    if g is GestureClass.L270:
        points = np.array(_TEMPLATE_POINTS[GestureClass.L0]) @ _ROT_270.T
    else:
        points = np.array(_TEMPLATE_POINTS[g], dtype=np.float64)
    points = points + 0.0  # normalize -0.0
    points.setflags(write=False)
    return GestureTemplate(g, points)


def nominal_duration(template: GestureTemplate, dot_speed: float) -> float:
    """Seconds for the guide dot to travel the polyline at dot_speed points/s."""
    if not dot_speed > 0:
        raise ValueError(f"dot_speed must be > 0, got {dot_speed}")
    return template.path_length / dot_speed


@dataclass(frozen=True)
class SubjectStyle:
    """
    Per-subject motor style; constant across a session.

    Sampled styles keep head_share inside DEFAULT_ALPHA_RANGE. validate()
    accepts the whole [0, 1] so the pure-eye (0) and pure-head (1) strategies
    can be built explicitly, and so --alpha-min/--alpha-max can push a
    session towards either end.
    """
    subject_id: str
    head_share: float = 0.7
    speed_gain: float = 1.0
    amplitude_gain: float = 1.0
    head_distance: float = BASE_HEAD_DISTANCE
    head_offset: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    tremor_hz: float = 8.0
    tremor_deg: float = 0.05
    noise_sigma_deg: float = 0.05

    def validate(self) -> None:
        checks = [
            (0.0 <= self.head_share <= 1.0, "head_share must lie in [0, 1]"),
            (0.8 <= self.speed_gain <= 1.25, "speed_gain must lie in [0.8, 1.25]"),
            (0.85 <= self.amplitude_gain <= 1.15, "amplitude_gain must lie in [0.85, 1.15]"),
            (0.35 - 1e-12 <= self.head_distance <= 0.45 + 1e-12, "head_distance must be 0.40 +/- 0.05 m"),
            (len(self.head_offset) == 3, "head_offset must be a 3-vector"),
            (self.tremor_hz >= 0 and self.tremor_deg >= 0, "tremor must be non-negative"),
            (self.noise_sigma_deg >= 0, "noise_sigma must be non-negative"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(f"subject {self.subject_id}: {message}")


def sample_subject_style(subject_id: str, rng: np.random.Generator,
                         alpha_range: Tuple[float, float] = DEFAULT_ALPHA_RANGE) -> SubjectStyle:
    """Draw a subject style inside the supported parameter ranges."""
    lo, hi = alpha_range
    if not (0.0 <= lo <= hi <= 1.0):
        raise ConfigError(f"alpha range {alpha_range} must satisfy 0 <= lo <= hi <= 1")
    offset = np.clip(rng.normal(0.0, 0.02, size=3), -0.05, 0.05)
    return SubjectStyle(
        subject_id=subject_id,
        head_share=float(rng.uniform(lo, hi)),
        speed_gain=float(rng.uniform(0.8, 1.25)),
        amplitude_gain=float(rng.uniform(0.85, 1.15)),
        head_distance=float(BASE_HEAD_DISTANCE + rng.uniform(-0.05, 0.05)),
        head_offset=tuple(float(v) for v in offset),
        tremor_hz=float(rng.uniform(4.0, 12.0)),
        tremor_deg=float(rng.uniform(0.02, 0.15)),
        noise_sigma_deg=float(rng.uniform(0.02, 0.1)),
    )


@dataclass(frozen=True)
class StageVariance:
    """Execution variance added as visual guidance fades."""
    irecall_amplitude: float = 0.10
    recall_amplitude: float = 0.15
    recall_rotation_deg: float = 5.0


@dataclass
class SessionPlan:
    subjects: Tuple[SubjectStyle, ...]
    repetitions: int = 3
    sample_rate: float = 60.0
    dot_speed: float = 100.0
    stage_variance: StageVariance = field(default_factory=StageVariance)
    inter_trial_gap: float = 0.5
    gestures: Tuple[GestureClass, ...] = tuple(GestureClass)
    stages: Tuple[Stage, ...] = tuple(Stage)

    @classmethod
    def synthetic(cls, n_subjects: int = 8, seed: int = 7, repetitions: int = 3,
                  alpha_range: Tuple[float, float] = DEFAULT_ALPHA_RANGE, **kwargs) -> "SessionPlan":
        """Plan with n_subjects styles drawn deterministically from seed."""
        if n_subjects < 1:
            raise ConfigError(f"need at least one subject, got {n_subjects}")
        subjects = tuple(
            sample_subject_style(f"P{i}", np.random.default_rng([seed, 0, i]), alpha_range)
            for i in range(n_subjects)
        )
        return cls(subjects=subjects, repetitions=repetitions, **kwargs)

    @property
    def trial_count(self) -> int:
        return len(self.subjects) * len(self.gestures) * len(self.stages) * self.repetitions

    def validate(self) -> None:
        if not self.subjects:
            raise ConfigError("plan has no subjects")
        if len({s.subject_id for s in self.subjects}) != len(self.subjects):
            raise ConfigError("subject ids must be unique")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if not (self.sample_rate > 0 and self.dot_speed > 0 and self.inter_trial_gap >= 0):
            raise ConfigError("sample_rate and dot_speed must be > 0, inter_trial_gap >= 0")
        for style in self.subjects:
            if any(c.isspace() for c in style.subject_id) or not style.subject_id:
                raise ConfigError(f"subject id {style.subject_id!r} must be a non-empty token")
            style.validate()

    def to_dict(self) -> Dict:
        return {
            "subjects": [asdict(s) for s in self.subjects],
            "repetitions": self.repetitions,
            "sample_rate": self.sample_rate,
            "dot_speed": self.dot_speed,
            "stage_variance": asdict(self.stage_variance),
            "inter_trial_gap": self.inter_trial_gap,
        }


# ---------------------------------------------------------------------------
# Trajectory
# ---------------------------------------------------------------------------

def trace_polyline(polyline: np.ndarray, u: np.ndarray, speed: float,
                   dwell: float = CORNER_DWELL) -> np.ndarray:
    """
    Dot position at times u (seconds since trial start).

    Each segment is traversed with a smoothstep time-warp, so the dot starts
    and stops at rest and velocity is continuous; interior corners add a
    dwell of `dwell` seconds.

    Returns:
        Positions [len(u), 2]
    """
    lengths = np.linalg.norm(np.diff(polyline, axis=0), axis=1)
    durations = lengths / speed
    phase_starts = []
    t = 0.0
    for i, duration in enumerate(durations):
        phase_starts.append((t, duration, i))
        t += duration
        if i < len(durations) - 1:
            t += dwell

    positions = np.empty((len(u), 2))
    starts = np.array([p[0] for p in phase_starts])
    idx = np.clip(np.searchsorted(starts, u, side="right") - 1, 0, len(starts) - 1)
    for k, (start, duration, seg) in enumerate(phase_starts):
        mask = idx == k
        if not np.any(mask):
            continue
        x = np.clip((u[mask] - start) / duration, 0.0, 1.0)
        eased = x * x * (3.0 - 2.0 * x)
        a, b = polyline[seg], polyline[seg + 1]
        positions[mask] = a + eased[:, None] * (b - a)
    return positions


def trial_duration(template: GestureTemplate, dot_speed: float, speed_gain: float = 1.0) -> float:
    """Traversal time including corner dwells."""
    return nominal_duration(template, dot_speed * speed_gain) + CORNER_DWELL * template.corners


def _rotations(yaw: np.ndarray, pitch: np.ndarray) -> np.ndarray:
    """R_y(yaw) @ R_x(pitch) for each frame, shape [n, 3, 3]."""
    return Rotation.from_euler("YX", np.column_stack([yaw, pitch])).as_matrix()


def _transforms(rotations: np.ndarray, translation: np.ndarray) -> np.ndarray:
    n = len(rotations)
    out = np.zeros((n, 4, 4))
    out[:, :3, :3] = rotations
    out[:, :3, 3] = translation
    out[:, 3, 3] = 1.0
    return out


def _stage_geometry(stage: Stage, style: SubjectStyle, variance: StageVariance,
                    rng: np.random.Generator) -> Tuple[float, float]:
    """(amplitude multiplier, in-plane rotation in radians) for one trial."""
    amplitude = style.amplitude_gain
    rotation = 0.0
    if stage is Stage.IRECALL:
        amplitude *= 1.0 + rng.uniform(-variance.irecall_amplitude, variance.irecall_amplitude)
    elif stage is Stage.RECALL:
        amplitude *= 1.0 + rng.uniform(-variance.recall_amplitude, variance.recall_amplitude)
        rotation = np.deg2rad(rng.uniform(-variance.recall_rotation_deg, variance.recall_rotation_deg))
    return amplitude, rotation


def pose_streams(positions: np.ndarray, times: np.ndarray, style: SubjectStyle,
                 rng: np.random.Generator) -> Dict[str, np.ndarray]:
    """
    Head and eye transforms for dot positions (in points).

    The gaze angle toward each position is split: the head rotates by
    head_share of it and each eye by the remainder. Gaussian noise is added
    to both, tremor to the eyes only. Eye transforms are head-relative.

    Returns:
        Dict with 'head', 'left_eye', 'right_eye' arrays [n, 4, 4]
    """
    n = len(times)
    meters = positions * POINT_TO_METER
    yaw = np.arctan2(meters[:, 0], style.head_distance)
    pitch = np.arctan2(meters[:, 1], style.head_distance)

    alpha = style.head_share
    sigma = np.deg2rad(style.noise_sigma_deg)
    head_noise = rng.normal(0.0, 1.0, size=(n, 2)) * sigma
    eye_noise = rng.normal(0.0, 1.0, size=(n, 2)) * sigma
    phase = rng.uniform(0.0, 2 * np.pi, size=2)
    tremor_amp = np.deg2rad(style.tremor_deg)
    tremor_yaw = tremor_amp * np.sin(2 * np.pi * style.tremor_hz * times + phase[0])
    tremor_pitch = tremor_amp * np.sin(2 * np.pi * style.tremor_hz * times + phase[1])

    head_rot = _rotations(alpha * yaw + head_noise[:, 0], alpha * pitch + head_noise[:, 1])
    eye_rot = _rotations((1 - alpha) * yaw + eye_noise[:, 0] + tremor_yaw,
                         (1 - alpha) * pitch + eye_noise[:, 1] + tremor_pitch)

    head_position = np.array([0.0, 0.0, style.head_distance]) + np.asarray(style.head_offset)
    return {
        "head": _transforms(head_rot, head_position),
        "left_eye": _transforms(eye_rot, np.array([-INTEROCULAR_HALF, 0.0, 0.0])),
        "right_eye": _transforms(eye_rot, np.array([INTEROCULAR_HALF, 0.0, 0.0])),
    }


def _frames(times: np.ndarray, poses: Dict[str, np.ndarray]) -> Tuple[FrameSample, ...]:
    return tuple(
        FrameSample(
            t=float(times[k]),
            head=Transform4(poses["head"][k]),
            left_eye=Transform4(poses["left_eye"][k]),
            right_eye=Transform4(poses["right_eye"][k]),
        )
        for k in range(len(times))
    )


def synthesize_trial(template: GestureTemplate, style: SubjectStyle, stage: Stage,
                     rng: np.random.Generator, repetition: int = 1, t0: float = 0.0,
                     sample_rate: float = 60.0, dot_speed: float = 100.0,
                     stage_variance: StageVariance = StageVariance()) -> GestureTrial:
    """
    Synthesize one gesture performance.

    Args:
        template: Gesture polyline
        style: Subject style
        stage: Scaffolding stage (controls amplitude/rotation variance)
        rng: Seeded generator owned by the caller
        repetition: Repetition number (>= 1)
        t0: Timestamp of the first frame
        sample_rate: Frames per second
        dot_speed: Guide speed in points per second

    Returns:
        GestureTrial with round(duration * sample_rate) frames
    """
    amplitude, rotation = _stage_geometry(stage, style, stage_variance, rng)
    c, s = np.cos(rotation), np.sin(rotation)
    polyline = template.polyline @ np.array([[c, -s], [s, c]]).T * amplitude

    duration = trial_duration(template, dot_speed, style.speed_gain)
    n_frames = max(2, int(round(duration * sample_rate)))
    times = t0 + np.arange(n_frames) / sample_rate
    u = np.linspace(0.0, duration, n_frames)
    # amplitude is already folded into the polyline; speed is relative to it
    positions = trace_polyline(polyline, u, dot_speed * style.speed_gain * amplitude)

    poses = pose_streams(positions, times - t0, style, rng)
    return GestureTrial(style.subject_id, template.gesture, stage, repetition, _frames(times, poses))


# ---------------------------------------------------------------------------
# Sessions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    participant_id: str
    gesture: GestureClass
    stage: Stage
    repetition: int
    frame_count: int

    def to_line(self) -> str:
        return (f"{self.participant_id}\t{self.gesture.token}\t{self.stage.token}\t"
                f"{self.repetition}\t{self.frame_count}")

    @classmethod
    def from_line(cls, line: str) -> "ManifestEntry":
        pid, gesture, stage, rep, count = line.rstrip("\n").split("\t")
        return cls(pid, GestureClass.from_token(gesture), Stage.from_token(stage), int(rep), int(count))

    @classmethod
    def of(cls, trial: GestureTrial) -> "ManifestEntry":
        return cls(trial.participant_id, trial.gesture, trial.stage, trial.repetition, len(trial))


@dataclass
class SyntheticSession:
    lines: List[str]
    manifest: List[ManifestEntry]
    trials: List[GestureTrial]
    seed: int
    plan: SessionPlan

    @property
    def text(self) -> str:
        return "\n".join(self.lines) + "\n"

    @property
    def log_hash(self) -> str:
        return sha256_text(self.text)


def _trial_order(plan: SessionPlan) -> List[Tuple[SubjectStyle, Stage, GestureClass, int]]:
    order = []
    for style in plan.subjects:
        for stage in plan.stages:
            for gesture in plan.gestures:
                for rep in range(1, plan.repetitions + 1):
                    order.append((style, stage, gesture, rep))
    return order


def _idle_lines(t_start: float, n: int, style: SubjectStyle, plan: SessionPlan,
                rng: np.random.Generator) -> List[str]:
    """Rest-pose samples between trials (gaze at the screen center)."""
    if n <= 0:
        return []
    times = t_start + np.arange(1, n + 1) / plan.sample_rate
    poses = pose_streams(np.zeros((n, 2)), times - t_start, style, rng)
    return _sample_lines(times, poses)


def _sample_lines(times: np.ndarray, poses: Dict[str, np.ndarray]) -> List[str]:
    lines = []
    for k, t in enumerate(times):
        lines.append(format_sample(t, Channel.HEAD, poses["head"][k]))
        lines.append(format_sample(t, Channel.LEFT_EYE, poses["left_eye"][k]))
        lines.append(format_sample(t, Channel.RIGHT_EYE, poses["right_eye"][k]))
    return lines


def generate_session(plan: SessionPlan, seed: int) -> SyntheticSession:
    """
    Synthesize a full session as log lines plus a ground-truth manifest.

    Trial k draws from its own generator seeded by (seed, k), so output is
    identical regardless of how trials are scheduled.

    Args:
        plan: Session plan
        seed: Session seed

    Returns:
        SyntheticSession with log lines, manifest entries and the trials
    """
    plan.validate()
    lines = [
        f"# {LOG_MAGIC}",
        f"# seed={seed}",
        f"# plan={canonical_json(plan.to_dict())}",
    ]
    manifest: List[ManifestEntry] = []
    trials: List[GestureTrial] = []
    gap_frames = int(round(plan.inter_trial_gap * plan.sample_rate))

    t = 0.0
    for index, (style, stage, gesture, rep) in enumerate(_trial_order(plan)):
        trial_rng = np.random.default_rng([seed, 1, index])
        trial = synthesize_trial(
            gesture_template(gesture), style, stage, trial_rng,
            repetition=rep, t0=t, sample_rate=plan.sample_rate,
            dot_speed=plan.dot_speed, stage_variance=plan.stage_variance,
        )
        times = trial.times()
        start = EventRecord(times[0], EventKind.TRIAL_START, style.subject_id, gesture, stage, rep)
        end = EventRecord(times[-1], EventKind.TRIAL_END, style.subject_id, gesture, stage, rep)

        lines.append(format_event(start))
        for frame in trial.frames:
            lines.append(format_sample(frame.t, Channel.HEAD, frame.head.m))
            lines.append(format_sample(frame.t, Channel.LEFT_EYE, frame.left_eye.m))
            lines.append(format_sample(frame.t, Channel.RIGHT_EYE, frame.right_eye.m))
        lines.append(format_event(end))
        lines.extend(_idle_lines(times[-1], gap_frames, style, plan,
                                 np.random.default_rng([seed, 2, index])))

        trials.append(trial)
        manifest.append(ManifestEntry.of(trial))
        t = times[-1] + (gap_frames + 1) / plan.sample_rate

    _logger.info("Synthesized %d trials for %d subjects (seed %d)",
                 len(trials), len(plan.subjects), seed)
    return SyntheticSession(lines=lines, manifest=manifest, trials=trials, seed=seed, plan=plan)


def write_manifest(entries: Sequence[ManifestEntry], path: str, meta: Optional[Dict] = None) -> None:
    """Write the ground-truth manifest: '#' metadata lines, then one TSV line per trial."""
    with open(path, "w", encoding="utf-8") as f:
        for key, value in (meta or {}).items():
            f.write(f"# {key}={value if isinstance(value, str) else canonical_json(value)}\n")
        f.write("# participant\tgesture\tstage\trepetition\tframes\n")
        for entry in entries:
            f.write(entry.to_line() + "\n")


def read_manifest(path: str) -> List[ManifestEntry]:
    with open(path, "r", encoding="utf-8") as f:
        return [ManifestEntry.from_line(line) for line in f if line.strip() and not line.startswith("#")]
