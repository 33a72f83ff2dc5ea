"""Hybrid image representations: mid-level local codes, convolutional Fisher
vectors, and fully connected CNN features, with a scene-recognition and
domain-adaptation experiment harness."""

from .datamodel import (
    Box,
    DatasetManifest,
    FeatureTensor,
    HybridRepresentation,
    ImageRecord,
    load_manifest,
    read_feature_store,
    write_feature_store,
)
from .extractors import ExtractorSpec, make_extractor
from .pipeline import Pipeline, RunConfig, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "Box",
    "DatasetManifest",
    "ExtractorSpec",
    "FeatureTensor",
    "HybridRepresentation",
    "ImageRecord",
    "Pipeline",
    "RunConfig",
    "load_manifest",
    "make_extractor",
    "read_feature_store",
    "run_pipeline",
    "write_feature_store",
]
