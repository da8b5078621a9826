"""
Gaze Gesture Toolkit (gazegest)

Ingest or synthesize head/eye transform logs, preprocess them into windowed
feature tensors, train and evaluate compact time-series classifiers for
gesture recognition and user identification, and benchmark their latency.
"""
__version__ = "0.3.0"
