"""Real-time yoga posture analysis engine.

Keypoint streams in, corrective feedback out: body-frame normalization,
joint-angle features, temporal sequence classification, posture scoring
against reference poses, and edge-friendly model variants.
"""

from .biomech import (
    ANGLE_NAMES,
    ANGLE_TABLE_VERSION,
    AngleDefinition,
    FeatureVector,
    extract_features,
    joint_angle,
)
from .evaluator import (
    PostureReport,
    ReferencePose,
    evaluate_posture,
    load_reference_poses,
)
from .feedback import CooldownState, FeedbackEvent, generate, template_lookup
from .ingest import EmaSmoother, KeypointFrame, NormalizedFrame, normalize, parse_frame
from .model import (
    ModelParams,
    TrainConfig,
    evaluate,
    forward,
    load_model,
    loss_and_gradients,
    lstm_step,
    save_model,
    train,
)
from .edge_opt import BenchReport, QuantizedParams, bench, prune, quantize, quantized_forward
from .pipeline import PipelineConfig, SessionPipeline
from .synth import Dataset, SequenceSample, SkeletonSpec, make_dataset, skeleton_to_frame

__version__ = "0.1.0"
