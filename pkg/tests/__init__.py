"""
Unit tests for gazegest.

One module per package area: data (domain, ingest, preprocess, synthgen),
tensornet, models, evaluation (metrics, splits, training, harness), the
latency bench, configuration and the command line. test_acceptance holds
the slow end-to-end checks, skipped unless GAZEGEST_RUN_SLOW=1.
"""
