from .extract import FeatureExtractor, window_centrality
from .matrix import FeatureMatrix, assemble_matrix
from .schema import COLUMNS, GROUP_SIZES, GROUPS, N_FEATURES, SCHEMA, FeatureSpec, SchemaError

__all__ = [
    "COLUMNS",
    "GROUPS",
    "GROUP_SIZES",
    "N_FEATURES",
    "SCHEMA",
    "FeatureExtractor",
    "FeatureMatrix",
    "FeatureSpec",
    "SchemaError",
    "assemble_matrix",
    "window_centrality",
]
