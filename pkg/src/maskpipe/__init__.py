"""maskpipe: preprocessing, evaluation and post-model optimization for
chest X-ray lesion segmentation studies."""

__version__ = "0.1.0"
