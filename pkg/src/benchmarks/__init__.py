"""
Benchmarks package for inference latency measurement.

- latency: forward-pass timing of built models, the suite table and its writers
"""
