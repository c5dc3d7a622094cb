"""segfusion: model-agnostic post-processing for semantic segmentation.

Ensembling by per-pixel vote, sliding-window and multi-scale fusion,
adverse-weather augmentation, and mIoU evaluation. Neural models stay
outside the package and are consumed as external prediction producers.
"""

from .augment import (
    GeometricSpec,
    PhotometricConfig,
    Recipe,
    WeatherMarkParams,
    apply_recipe,
    apply_weather_mark,
    derive_seed,
    joint_geometric,
    parse_recipe,
    photometric_distort,
    rain_mask,
    random_scale_crop_pad,
    snow_mask,
)
from .bridge import (
    PredictorHandle,
    PredictorSpec,
    invoke_predictor,
    parse_registry,
)
from .core import (
    ImageRGB,
    LabelMap,
    ProbMap,
    argmax_labels,
    one_hot_prob,
    resize_image,
    resize_labels,
    resize_prob,
)
from .ensemble import VoteConfig, majority_vote, priority_from_ids, soft_average
from .formats import (
    read_image_png,
    read_label_png,
    read_sfpm,
    sfpm_from_bytes,
    sfpm_to_bytes,
    write_image_png,
    write_label_png,
    write_sfpm,
)
from .fusion import TilePlan, TtaConfig, WindowParams, fuse_tiles, plan_tiles, tta_aggregate
from .manifest import Scene, SceneManifest, parse_manifest, write_manifest
from .metrics import (
    ConfusionMatrix,
    EvalReport,
    accumulate,
    evaluate_manifest,
    iou_per_class,
    merge,
    miou,
    pixel_accuracy,
)

__version__ = "0.1.0"

__all__ = [
    "ImageRGB",
    "LabelMap",
    "ProbMap",
    "argmax_labels",
    "one_hot_prob",
    "resize_image",
    "resize_labels",
    "resize_prob",
    "VoteConfig",
    "majority_vote",
    "priority_from_ids",
    "soft_average",
    "TilePlan",
    "TtaConfig",
    "WindowParams",
    "plan_tiles",
    "fuse_tiles",
    "tta_aggregate",
    "GeometricSpec",
    "PhotometricConfig",
    "Recipe",
    "WeatherMarkParams",
    "derive_seed",
    "apply_weather_mark",
    "rain_mask",
    "snow_mask",
    "joint_geometric",
    "random_scale_crop_pad",
    "photometric_distort",
    "parse_recipe",
    "apply_recipe",
    "PredictorHandle",
    "PredictorSpec",
    "invoke_predictor",
    "parse_registry",
    "read_image_png",
    "read_label_png",
    "read_sfpm",
    "sfpm_from_bytes",
    "sfpm_to_bytes",
    "write_image_png",
    "write_label_png",
    "write_sfpm",
    "Scene",
    "SceneManifest",
    "parse_manifest",
    "write_manifest",
    "ConfusionMatrix",
    "EvalReport",
    "accumulate",
    "merge",
    "iou_per_class",
    "miou",
    "pixel_accuracy",
    "evaluate_manifest",
]
