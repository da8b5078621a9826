"""
Utilities package for gazegest.

- timer: monotonic timing helpers and hardware context
- plotting: confusion-matrix and latency figures
- log: logging setup
- hashing: content hashes for written artifacts
- config: run configuration with flag/file/default precedence
"""
