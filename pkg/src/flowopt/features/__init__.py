from .plan import (
    UNBOUNDED,
    ExtractionPlan,
    Extractor,
    FeatureMask,
    Representation,
    compile_plan,
    extract,
    extract_counted,
    extract_dataset,
)
from .registry import FEATURES, FEATURE_INDEX, MINI_SET, N_FEATURES, FeatureSpec, catalogue_csv, registry

__all__ = [
    "UNBOUNDED", "ExtractionPlan", "Extractor", "FeatureMask", "Representation", "compile_plan", "extract",
    "extract_counted", "extract_dataset", "FEATURES", "FEATURE_INDEX", "MINI_SET", "N_FEATURES",
    "FeatureSpec", "catalogue_csv", "registry",
]
