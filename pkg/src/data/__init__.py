"""
Data package: everything between a sensing log and a model input tensor.

- domain: transforms, frames, gesture/stage/modality types, trials
- ingest: log parsing, head/eye synchronization, trial segmentation
- synthgen: synthetic subjects and sessions in the ingest log format
- preprocess: resampling, modality selection, windowing, normalization
- cache: on-disk cache of preprocessed windows
"""
