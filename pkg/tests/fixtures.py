"""
Shared builders for test data.
"""
import numpy as np

from src.data.domain import FrameSample, GestureClass, GestureTrial, Stage, unflatten_transform

RATE = 60.0


def trial_from_channels(channels, participant="P1", gesture=GestureClass.VERTICAL, stage=Stage.FOLLOW,
                        repetition=1, t0=0.0, times=None):
    """A GestureTrial whose channel_matrix() equals channels [n, 48]."""
    channels = np.asarray(channels, dtype=np.float64)
    if times is None:
        times = t0 + np.arange(channels.shape[0]) / RATE
    frames = tuple(
        FrameSample(float(t), unflatten_transform(row[32:48]), unflatten_transform(row[0:16]),
                    unflatten_transform(row[16:32]))
        for t, row in zip(times, channels)
    )
    return GestureTrial(participant, gesture, stage, repetition, frames)


def toy_trials(subjects=("P0", "P1", "P2"), repetitions=2, frames=40, seed=0, noise=0.05):
    """
    Small separable dataset: each gesture is a distinct ramp pattern on a few
    channels, each subject adds its own offset to the head block.
    """
    rng = np.random.default_rng(seed)
    trials = []
    ramp = np.linspace(0.0, 1.0, frames)
    for s_index, subject in enumerate(subjects):
        for stage in Stage:
            for gesture in GestureClass:
                for rep in range(1, repetitions + 1):
                    channels = np.zeros((frames, 48))
                    channels[:, 3 + int(gesture)] = ramp * (1 + int(gesture))
                    channels[:, 35 + int(gesture)] = np.sin(np.pi * ramp * (1 + int(gesture)))
                    channels[:, 40] = 0.5 * s_index
                    channels += noise * rng.standard_normal(channels.shape)
                    trials.append(trial_from_channels(channels, subject, gesture, stage, rep))
    return trials
