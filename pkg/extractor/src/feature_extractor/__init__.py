"""Vision-model feature extraction into the eegalign interchange format."""

__version__ = "0.1.0"

from .extract import (
    ExtractionError,
    ExtractionJob,
    extract,
    list_images,
    merge_into_manifest,
    sanitize_model_id,
)

__all__ = [
    "ExtractionError", "ExtractionJob", "extract", "list_images",
    "merge_into_manifest", "sanitize_model_id",
]
