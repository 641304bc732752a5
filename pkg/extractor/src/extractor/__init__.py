"""Backbone layer-activation export in the shared binary feature format."""

from extractor.activations import (
    LAYER_COUNT,
    ExtractionSpec,
    build_backbone,
    extract_layer_activations,
    list_images,
    preprocess,
)

__version__ = "0.1.0"
