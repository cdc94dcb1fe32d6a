"""Viewpoint-overlap frame scoring and sliding-window frame eviction.

The package scores how much two grayscale frames share a viewpoint
(feature matching plus robust two-view geometry), drives a sliding-window
frame cache that evicts redundant or drifted frames, and ships drift
diagnostics plus a deterministic synthetic-world generator for testing
the whole loop end to end.
"""

from stableworld.drift import (
    DriftError,
    DriftReport,
    SpectrumReport,
    band_amplitudes,
    mse_drift,
    spectrum_drift,
)
from stableworld.eviction import (
    ChunkDecision,
    EvictionConfig,
    EvictionDecision,
    EvictionError,
    EvictionRule,
    EvictionTrace,
    WindowState,
    chunk_merge,
    preset,
    push_frame,
    push_step,
    run_sequence,
)
from stableworld.features import (
    DescriptorSet,
    Keypoint,
    OrbConfig,
    build_pyramid,
    describe,
    detect_fast,
    dump_descriptors,
    extract,
)
from stableworld.frame_io import FrameIOError, FrameSequence, load_frame, load_sequence, write_pgm
from stableworld.geometry import (
    GeometryError,
    ModelEstimate,
    RansacConfig,
    dlt_homography,
    eightpoint_fundamental,
    format_matrix,
    ransac,
)
from stableworld.matching import CorrespondenceSet, MatcherConfig, match, matched_points
from stableworld.similarity import (
    DescriptorCache,
    MetricConfig,
    SimilarityError,
    SimilarityScore,
    cosine,
    orb_similarity,
    score_frames,
    ssim,
)
from stableworld.synth import (
    GroundTruthManifest,
    SceneScript,
    Segment,
    render,
    render_natural,
    render_texture,
    save_world,
    scripted_preset,
)

__all__ = [
    "ChunkDecision",
    "CorrespondenceSet",
    "DescriptorCache",
    "DescriptorSet",
    "DriftError",
    "DriftReport",
    "EvictionConfig",
    "EvictionDecision",
    "EvictionError",
    "EvictionRule",
    "EvictionTrace",
    "FrameIOError",
    "FrameSequence",
    "GeometryError",
    "GroundTruthManifest",
    "Keypoint",
    "MatcherConfig",
    "MetricConfig",
    "ModelEstimate",
    "OrbConfig",
    "RansacConfig",
    "SceneScript",
    "Segment",
    "SimilarityError",
    "SimilarityScore",
    "SpectrumReport",
    "WindowState",
    "band_amplitudes",
    "build_pyramid",
    "chunk_merge",
    "cosine",
    "describe",
    "detect_fast",
    "dlt_homography",
    "dump_descriptors",
    "eightpoint_fundamental",
    "extract",
    "format_matrix",
    "load_frame",
    "load_sequence",
    "match",
    "matched_points",
    "mse_drift",
    "orb_similarity",
    "preset",
    "push_frame",
    "push_step",
    "ransac",
    "render",
    "render_natural",
    "render_texture",
    "run_sequence",
    "save_world",
    "score_frames",
    "scripted_preset",
    "spectrum_drift",
    "ssim",
    "write_pgm",
]

__version__ = "0.1.0"
