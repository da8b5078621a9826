"""
Domain Types Module

Shared value types for the sensing pipeline: rigid 4x4 transforms, frame
samples, gesture/stage/modality enumerations and segmented gesture trials,
together with the flatten/validate utilities every other module relies on.

All matrices are float64 and stored row-major; flattening order is
``out[4*r + c] = m[r][c]`` everywhere (logs, synthesis, features).
"""
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterator, Tuple

import numpy as np

IDENTITY_4 = np.eye(4, dtype=np.float64)
HOMOGENEOUS_ROW = np.array([0.0, 0.0, 0.0, 1.0])


class GestureClass(IntEnum):
    """The closed gesture set; integer codes are stable."""
    VERTICAL = 0
    HORIZONTAL = 1
    L0 = 2
    L270 = 3
    Z0 = 4

    @property
    def token(self) -> str:
        return _GESTURE_TOKENS[self]

    @property
    def display_name(self) -> str:
        return _GESTURE_NAMES[self]

    @classmethod
    def from_token(cls, token: str) -> "GestureClass":
        try:
            return _GESTURE_BY_TOKEN[token]
        except KeyError:
            raise ValueError(f"unknown gesture token {token!r}") from None


_GESTURE_TOKENS = {
    GestureClass.VERTICAL: "V",
    GestureClass.HORIZONTAL: "H",
    GestureClass.L0: "L0",
    GestureClass.L270: "L270",
    GestureClass.Z0: "Z0",
}
_GESTURE_BY_TOKEN = {tok: g for g, tok in _GESTURE_TOKENS.items()}
_GESTURE_NAMES = {
    GestureClass.VERTICAL: "Vertical",
    GestureClass.HORIZONTAL: "Horizontal",
    GestureClass.L0: "L 0",
    GestureClass.L270: "L 270",
    GestureClass.Z0: "Z 0",
}


class Stage(IntEnum):
    """Scaffolding stages, from fully guided to free recall."""
    FOLLOW = 0
    FIXED = 1
    IRECALL = 2
    RECALL = 3

    @property
    def token(self) -> str:
        return self.name

    @property
    def display_name(self) -> str:
        return {"IRECALL": "IRecall"}.get(self.name, self.name.capitalize())

    @classmethod
    def from_token(cls, token: str) -> "Stage":
        try:
            return cls[token]
        except KeyError:
            raise ValueError(f"unknown stage token {token!r}") from None


class Modality(Enum):
    """Feature subsets of the flattened transforms and their widths."""
    HEAD = "head"
    EYES = "eyes"
    LEFT_EYE = "left_eye"
    RIGHT_EYE = "right_eye"
    EYE_HEAD = "eye_head"

    @property
    def dim(self) -> int:
        return 16 * len(MODALITY_BLOCKS[self])

    @property
    def display_name(self) -> str:
        return {
            Modality.HEAD: "Head",
            Modality.EYES: "Eyes",
            Modality.LEFT_EYE: "Left_Eye",
            Modality.RIGHT_EYE: "Right_Eye",
            Modality.EYE_HEAD: "Eye_Head",
        }[self]

    @classmethod
    def parse(cls, value: str) -> "Modality":
        key = value.strip().lower().replace("-", "_").replace("+", "_")
        for modality in cls:
            if modality.value == key:
                return modality
        raise ValueError(f"unknown modality {value!r}; valid: {', '.join(m.value for m in cls)}")


# Concatenation order of per-frame feature blocks.
MODALITY_BLOCKS = {
    Modality.HEAD: ("head",),
    Modality.EYES: ("left_eye", "right_eye"),
    Modality.LEFT_EYE: ("left_eye",),
    Modality.RIGHT_EYE: ("right_eye",),
    Modality.EYE_HEAD: ("left_eye", "right_eye", "head"),
}


@dataclass(frozen=True, eq=False)
class Transform4:
    """A 4x4 rigid transform (rotation + translation), row-major float64."""
    m: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.m, dtype=np.float64)
        if matrix.shape != (4, 4):
            raise ValueError(f"Transform4 needs a 4x4 matrix, got shape {matrix.shape}")
        matrix.setflags(write=False)
        object.__setattr__(self, "m", matrix)

    @classmethod
    def identity(cls) -> "Transform4":
        return cls(IDENTITY_4)

    @classmethod
    def from_parts(cls, rotation: np.ndarray, translation) -> "Transform4":
        matrix = np.eye(4)
        matrix[:3, :3] = rotation
        matrix[:3, 3] = translation
        return cls(matrix)

    @property
    def rotation(self) -> np.ndarray:
        return self.m[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.m[:3, 3]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Transform4):
            return NotImplemented
        return bool(np.array_equal(self.m, other.m))

    def __hash__(self) -> int:
        return hash(self.m.tobytes())


@dataclass(frozen=True)
class FrameSample:
    """One synchronized frame: head and both eye transforms at time t."""
    t: float
    head: Transform4
    left_eye: Transform4
    right_eye: Transform4


@dataclass(frozen=True)
class GestureTrial:
    """One segmented gesture performance."""
    participant_id: str
    gesture: GestureClass
    stage: Stage
    repetition: int
    frames: Tuple[FrameSample, ...] = field(repr=False)

    def __post_init__(self):
        if not self.frames:
            raise ValueError(f"trial {self.trial_id} has no frames")
        if self.repetition < 1:
            raise ValueError(f"trial {self.trial_id}: repetition must be >= 1")

    @property
    def trial_id(self) -> str:
        return f"{self.participant_id}/{self.gesture.token}/{self.stage.token}/{self.repetition}"

    @property
    def labels(self) -> Tuple[str, GestureClass, Stage, int]:
        return self.participant_id, self.gesture, self.stage, self.repetition

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[FrameSample]:
        return iter(self.frames)

    def times(self) -> np.ndarray:
        return np.array([f.t for f in self.frames], dtype=np.float64)

    def channel_matrix(self) -> np.ndarray:
        """
        All 48 flattened components per frame, ordered left eye, right eye,
        head (the EyeHead concatenation order).

        Returns:
            Array of shape [frames, 48]
        """
        out = np.empty((len(self.frames), 48), dtype=np.float64)
        for i, frame in enumerate(self.frames):
            out[i, 0:16] = frame.left_eye.m.reshape(16)
            out[i, 16:32] = frame.right_eye.m.reshape(16)
            out[i, 32:48] = frame.head.m.reshape(16)
        return out


# Column slices of GestureTrial.channel_matrix()
CHANNEL_SLICES = {
    "left_eye": slice(0, 16),
    "right_eye": slice(16, 32),
    "head": slice(32, 48),
}


def flatten_transform(t: Transform4) -> np.ndarray:
    """Row-major 16-vector of a transform: output[4*r + c] = m[r][c]."""
    return t.m.reshape(16).copy()


def unflatten_transform(v) -> Transform4:
    """Inverse of flatten_transform."""
    vector = np.asarray(v, dtype=np.float64)
    if vector.shape != (16,):
        raise ValueError(f"expected a 16-vector, got shape {vector.shape}")
    return Transform4(vector.reshape(4, 4))


@dataclass(frozen=True)
class TransformValidation:
    """Outcome of validate_transform; never raised, only reported."""
    homogeneous_deviation: float
    orthonormality_residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.homogeneous_deviation <= self.tol and self.orthonormality_residual <= self.tol


def validate_transform(t: Transform4, tol: float = 1e-6) -> TransformValidation:
    """
    Measure how far a transform is from a proper homogeneous rigid transform.

    Args:
        t: Transform to check
        tol: Pass threshold for both residuals (must be > 0)

    Returns:
        TransformValidation with the max-abs deviation of row 3 from
        (0, 0, 0, 1) and the max-abs entry of R^T R - I
    """
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    homogeneous = float(np.max(np.abs(t.m[3] - HOMOGENEOUS_ROW)))
    rotation = t.m[:3, :3]
    orthonormal = float(np.max(np.abs(rotation.T @ rotation - np.eye(3))))
    return TransformValidation(homogeneous, orthonormal, tol)


def yaw_pitch_from_rotation(rotation: np.ndarray) -> Tuple[float, float]:
    """
    Recover (yaw, pitch) in radians from R = R_y(yaw) @ R_x(pitch).

    Accepts a single 3x3 matrix or a stack [..., 3, 3]; returns arrays for
    stacks.
    """
    r = np.asarray(rotation, dtype=np.float64)
    yaw = np.arctan2(-r[..., 2, 0], r[..., 0, 0])
    pitch = np.arctan2(-r[..., 1, 2], r[..., 1, 1])
    if r.ndim == 2:
        return float(yaw), float(pitch)
    return yaw, pitch
