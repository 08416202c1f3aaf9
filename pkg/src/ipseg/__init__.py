"""Training-free image-prompt segmentation engine.

Feature maps for a prompt image and an input image go in; positive and
negative point prompts for a promptable segmenter come out, with a simulated
segmenter and an mIoU harness for model-free end-to-end verification.
"""

from .errors import (
    AdapterError,
    DataError,
    EngineError,
    FormatError,
    GeometryError,
    ParamError,
    TruncatedStreamError,
    UnsupportedVersionError,
)
from .eval_harness import (
    DatasetManifest,
    EvalReport,
    LabelGrid,
    ManifestEntry,
    evaluate,
    external_segment,
    iou,
    label_components,
    load_manifest,
    simulated_segment,
    sweep,
)
from .fusion import FusionConfig, fuse, l2_normalize_channels, resize_feature_map
from .matcher import (
    MatchParams,
    SimilarityMap,
    cluster_points,
    cosine_similarity_map,
    generate_prompts,
    grid_to_pixel,
    topk_coords,
)
from .prompt_embed import (
    MaskMode,
    PromptEmbedding,
    build_prompt_embedding,
    downsample_mask_to_grid,
    masked_average_pool,
)
from .synthetic import make_planted_dataset
from .tensor_io import (
    FeatureMap,
    ImageGeometry,
    PointPromptSet,
    PromptPoint,
    SegMask,
    SourceTag,
    read_feature_map,
    read_mask,
    read_prompts,
    write_feature_map,
    write_mask,
    write_prompts,
)

__version__ = "0.1.0"
