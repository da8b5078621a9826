"""
Preprocessing Module

Turns gesture trials into model inputs:

1. resample every flattened matrix component onto T uniformly spaced points
   (or regrid raw frames at the nominal rate for raw-domain windows),
2. select the modality columns,
3. cut sliding windows (50% overlap for training, 90% for testing),
4. z-score with statistics fit on training windows only.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from typing_extensions import Literal

from src.data.domain import (
    CHANNEL_SLICES,
    GestureClass,
    GestureTrial,
    MODALITY_BLOCKS,
    Modality,
    Stage,
)
from src.errors import ConfigError, DataError, ShapeError

_logger = logging.getLogger(__name__)

DEFAULT_T = 64
MIN_STD = 1e-12

WindowDomain = Literal["resampled", "raw"]
Task = Literal["gesture", "userid"]


@dataclass(frozen=True)
class WindowConfig:
    """How trials become windows."""
    T: int = DEFAULT_T
    window: int = 32
    train_overlap: float = 0.5
    test_overlap: float = 0.9
    domain: WindowDomain = "resampled"
    window_seconds: float = 1.5
    sample_rate: float = 60.0
    normalize: bool = True

    @property
    def effective_window(self) -> int:
        """Window length in frames for the configured domain."""
        if self.domain == "raw":
            return int(round(self.window_seconds * self.sample_rate))
        return self.window

    def validate(self) -> None:
        if self.domain not in ("resampled", "raw"):
            raise ConfigError(f"window domain must be 'resampled' or 'raw', got {self.domain!r}")
        if self.T < 2:
            raise ConfigError(f"T must be >= 2, got {self.T}")
        if self.domain == "resampled" and not 2 <= self.window <= self.T:
            raise ConfigError(f"window must satisfy 2 <= W <= T={self.T}, got {self.window}")
        if self.domain == "raw" and self.effective_window < 2:
            raise ConfigError("raw window must span at least 2 frames")
        for name in ("train_overlap", "test_overlap"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {value}")


@dataclass
class FeatureSequence:
    """A trial's T x D feature matrix with its labels."""
    values: np.ndarray
    modality: Modality
    gesture: GestureClass
    participant_id: str
    stage: Stage
    trial_id: str

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def D(self) -> int:
        return self.values.shape[1]


@dataclass
class LabeledWindow:
    values: np.ndarray
    gesture: GestureClass
    subject: str
    trial_id: str
    stage: Stage
    window_index: int


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    count: int

    @property
    def D(self) -> int:
        return self.mean.shape[0]


@dataclass
class WindowSet:
    """Stacked windows: X is [N, W, D]; label arrays are length N."""
    X: np.ndarray
    gesture: np.ndarray
    subject: np.ndarray
    trial_id: np.ndarray
    stage: np.ndarray
    window_index: np.ndarray
    modality: Optional[Modality] = None

    def __len__(self) -> int:
        return self.X.shape[0]

    @classmethod
    def from_windows(cls, windows: Sequence[LabeledWindow], modality: Optional[Modality] = None,
                     shape: Optional[tuple] = None) -> "WindowSet":
        if not windows:
            W, D = shape if shape is not None else (0, 0)
            return cls(np.zeros((0, W, D)), np.zeros(0, dtype=np.int64), np.array([], dtype=object),
                       np.array([], dtype=object), np.zeros(0, dtype=np.int64),
                       np.zeros(0, dtype=np.int64), modality)
        return cls(
            X=np.stack([w.values for w in windows]),
            gesture=np.array([int(w.gesture) for w in windows], dtype=np.int64),
            subject=np.array([w.subject for w in windows], dtype=object),
            trial_id=np.array([w.trial_id for w in windows], dtype=object),
            stage=np.array([int(w.stage) for w in windows], dtype=np.int64),
            window_index=np.array([w.window_index for w in windows], dtype=np.int64),
            modality=modality,
        )

    def subset(self, mask: np.ndarray) -> "WindowSet":
        return WindowSet(self.X[mask], self.gesture[mask], self.subject[mask], self.trial_id[mask],
                         self.stage[mask], self.window_index[mask], self.modality)

    def labels(self, task: Task, subjects: Sequence[str] = ()) -> np.ndarray:
        """Integer targets: gesture codes, or subject positions in `subjects`."""
        if task == "gesture":
            return self.gesture.copy()
        lookup = {s: i for i, s in enumerate(subjects)}
        try:
            return np.array([lookup[s] for s in self.subject], dtype=np.int64)
        except KeyError as e:
            raise DataError(f"subject {e.args[0]} missing from the label set") from None


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def resample_array(times: np.ndarray, values: np.ndarray, T: int) -> np.ndarray:
    """
    Linearly interpolate each column of values onto T points spanning
    [times[0], times[-1]]; endpoints are reproduced exactly.
    """
    if T < 2:
        raise ValueError(f"T must be >= 2, got {T}")
    n = len(times)
    if n < 2:
        raise DataError(f"need at least 2 frames to resample, got {n}")
    dt = np.diff(times)
    if n == T and np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
        # already on the target grid
        return np.array(values, dtype=np.float64, copy=True)
    grid = np.linspace(times[0], times[-1], T)
    out = np.empty((T, values.shape[1]), dtype=np.float64)
    for c in range(values.shape[1]):
        out[:, c] = np.interp(grid, times, values[:, c])
    out[0] = values[0]
    out[-1] = values[-1]
    return out


def resample(trial: GestureTrial, T: int = DEFAULT_T) -> np.ndarray:
    """
    Resample a trial's 48 flattened channels to T frames.

    Returns:
        Array [T, 48] in left-eye, right-eye, head column order

    Raises:
        DataError: if the trial has fewer than 2 frames
    """
    if len(trial) < 2:
        raise DataError(f"need at least 2 frames to resample, got {len(trial)}", where=trial.trial_id)
    return resample_array(trial.times(), trial.channel_matrix(), T)


def regrid_uniform(trial: GestureTrial, rate: float = 60.0, min_length: int = 2) -> np.ndarray:
    """
    Raw-domain path: interpolate onto a uniform grid at `rate` Hz, keeping
    the trial's natural length (at least min_length frames).
    """
    times = trial.times()
    n = max(min_length, int(round((times[-1] - times[0]) * rate)) + 1)
    return resample(trial, n)


# ---------------------------------------------------------------------------
# Modalities
# ---------------------------------------------------------------------------

def modality_columns(m: Modality) -> np.ndarray:
    """Column indices of a modality inside the 48-channel layout."""
    return np.concatenate([np.arange(48)[CHANNEL_SLICES[block]] for block in MODALITY_BLOCKS[m]])


def select_modality(trial: GestureTrial, m: Modality, T: Optional[int] = None) -> FeatureSequence:
    """
    Feature sequence of one trial for a modality.

    Per-frame vectors concatenate flattened transforms in the fixed order
    left eye, right eye, head (restricted to the modality's blocks).

    Args:
        trial: Source trial
        m: Modality
        T: Resample to T frames first; None keeps the raw frames

    Returns:
        FeatureSequence with D = m.dim
    """
    channels = trial.channel_matrix() if T is None else resample(trial, T)
    return _sequence(trial, channels[:, modality_columns(m)], m)


def _sequence(trial: GestureTrial, values: np.ndarray, m: Modality) -> FeatureSequence:
    return FeatureSequence(values=values, modality=m, gesture=trial.gesture,
                           participant_id=trial.participant_id, stage=trial.stage,
                           trial_id=trial.trial_id)


def build_sequences(trials: Sequence[GestureTrial], m: Modality,
                    config: WindowConfig = WindowConfig()) -> List[FeatureSequence]:
    """
    Feature sequences for every trial under a window configuration.

    Resampled domain: each trial -> T frames. Raw domain: each trial is
    regridded at the nominal rate; trials shorter than one window are
    stretched to exactly one window.
    """
    config.validate()
    columns = modality_columns(m)
    sequences = []
    for trial in trials:
        if config.domain == "raw":
            channels = regrid_uniform(trial, config.sample_rate, min_length=config.effective_window)
        else:
            channels = resample(trial, config.T)
        sequences.append(_sequence(trial, channels[:, columns], m))
    return sequences


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def _as_rows(data: Union[np.ndarray, "WindowSet", Sequence]) -> np.ndarray:
    if isinstance(data, WindowSet):
        data = data.X
    elif not isinstance(data, np.ndarray):
        data = np.stack([getattr(item, "values", item) for item in data])
    return data.reshape(-1, data.shape[-1])


def zscore_fit(training) -> NormStats:
    """
    Per-dimension mean and standard deviation of training data.

    Args:
        training: WindowSet, array [..., D] or a sequence of windows

    Returns:
        NormStats; near-constant dimensions get std 1
    """
    rows = _as_rows(training)
    if rows.shape[0] == 0:
        raise DataError("cannot fit normalization on an empty population")
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    std = np.where(std < MIN_STD, 1.0, std)
    return NormStats(mean=mean, std=std, count=int(rows.shape[0]))


def zscore_apply(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """(values - mean) / std along the last axis."""
    if values.shape[-1] != stats.D:
        raise ShapeError(f"normalization stats have D={stats.D}, data has D={values.shape[-1]}")
    return (values - stats.mean) / stats.std


# ---------------------------------------------------------------------------
# Windowing
# ---------------------------------------------------------------------------

def window_stride(W: int, overlap: float) -> int:
    """max(1, round-half-away(W * (1 - overlap)))."""
    return max(1, int(math.floor(W * (1.0 - overlap) + 0.5)))


def window_starts(T: int, W: int, overlap: float) -> List[int]:
    """
    Start indices of sliding windows: 0, s, 2s, ... while start + W <= T,
    plus a tail window at T - W when not already produced.
    """
    if not 2 <= W:
        raise ValueError(f"window must be >= 2 frames, got {W}")
    if W > T:
        raise ValueError(f"window W={W} exceeds sequence length T={T}")
    if not 0.0 <= overlap < 1.0:
        raise ValueError(f"overlap must lie in [0, 1), got {overlap}")
    stride = window_stride(W, overlap)
    starts = list(range(0, T - W + 1, stride))
    if starts[-1] != T - W:
        starts.append(T - W)
    return starts


def make_windows(seq: FeatureSequence, W: int, overlap: float) -> List[LabeledWindow]:
    """Slice a feature sequence into labeled windows."""
    try:
        starts = window_starts(seq.T, W, overlap)
    except ValueError as e:
        raise DataError(str(e), where=seq.trial_id) from None
    return [
        LabeledWindow(values=seq.values[s:s + W], gesture=seq.gesture, subject=seq.participant_id,
                      trial_id=seq.trial_id, stage=seq.stage, window_index=i)
        for i, s in enumerate(starts)
    ]


def windows_for(sequences: Sequence[FeatureSequence], W: int, overlap: float) -> WindowSet:
    """Window every sequence and stack the result."""
    windows: List[LabeledWindow] = []
    for seq in sequences:
        windows.extend(make_windows(seq, W, overlap))
    modality = sequences[0].modality if sequences else None
    D = sequences[0].D if sequences else 0
    return WindowSet.from_windows(windows, modality, shape=(W, D))


def sequences_by_trial(sequences: Sequence[FeatureSequence]) -> Dict[str, FeatureSequence]:
    return {seq.trial_id: seq for seq in sequences}
