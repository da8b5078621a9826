"""
Prediction helpers: window-level argmax and trial-level majority vote.
"""
from typing import Tuple

import numpy as np

from src.errors import ShapeError
from src.tensornet.graph import ModelGraph
from src.tensornet.kernels import softmax


def predict_proba(graph: ModelGraph, X: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Class probabilities [N, C] for windows X [N, W, D], computed in float64."""
    X = np.asarray(X)
    if X.shape[0] == 0:
        return np.zeros((0, graph.num_classes))
    chunks = [softmax(graph.forward(X[i:i + batch_size]).astype(np.float64))
              for i in range(0, X.shape[0], batch_size)]
    return np.concatenate(chunks, axis=0)


def predict_window(graph: ModelGraph, window: np.ndarray) -> Tuple[int, np.ndarray]:
    """
    Classify one window.

    Args:
        graph: Trained model
        window: Array [W, D] matching the graph's input spec

    Returns:
        (class index, probability vector); ties go to the lowest index
    """
    window = np.asarray(window)
    if window.shape != graph.input_shape:
        raise ShapeError(f"window shape {window.shape} does not match model input {graph.input_shape}")
    probs = predict_proba(graph, window[None])[0]
    return int(np.argmax(probs)), probs


def majority_vote(probs: np.ndarray) -> int:
    """
    Trial decision from per-window probabilities [n, C]: most votes, then
    largest summed probability, then lowest class index.
    """
    probs = np.asarray(probs)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValueError("majority vote needs at least one window")
    C = probs.shape[1]
    votes = np.bincount(np.argmax(probs, axis=1), minlength=C)
    mass = probs.sum(axis=0)
    candidates = np.flatnonzero(votes == votes.max())
    best_mass = mass[candidates].max()
    return int(candidates[mass[candidates] == best_mass][0])


def predict_trial(graph: ModelGraph, windows: np.ndarray) -> int:
    """Majority vote over the windows [n, W, D] of one trial."""
    windows = np.asarray(windows)
    if windows.ndim != 3 or windows.shape[0] == 0:
        raise ValueError("predict_trial needs at least one window")
    return majority_vote(predict_proba(graph, windows))
