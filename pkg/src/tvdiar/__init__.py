"""Speaker diarization of TV series guided by dialogue shot patterns."""

from .constrained_hac import DendrogramForest, Partition, agglomerate, cut_forest, silhouette_score
from .embedding_space import EmbeddingSet, WithinClassCovariance, compute_within_class_cov, mahalanobis, whiten
from .eval_kit import der, f1_cuts, f1_similarity, single_show_der
from .pattern_miner import ShotSequence, assign_utterances, extract_patterns, merge_patterns, scan_alternations
from .pipeline import Diarization, PipelineConfig, run_pipeline
from .segments import SpeechSegment, parse_subtitles
from .shot_analysis import ShotConfig, compute_block_histograms, detect_cuts, detect_similar_shots, frame_similarity
from .synthetic import SyntheticEpisodeConfig, generate_synthetic_episode

__version__ = "0.1.0"

__all__ = [
    "DendrogramForest",
    "Diarization",
    "EmbeddingSet",
    "Partition",
    "PipelineConfig",
    "ShotConfig",
    "ShotSequence",
    "SpeechSegment",
    "SyntheticEpisodeConfig",
    "WithinClassCovariance",
    "agglomerate",
    "assign_utterances",
    "compute_block_histograms",
    "compute_within_class_cov",
    "cut_forest",
    "der",
    "detect_cuts",
    "detect_similar_shots",
    "extract_patterns",
    "f1_cuts",
    "f1_similarity",
    "frame_similarity",
    "generate_synthetic_episode",
    "mahalanobis",
    "merge_patterns",
    "parse_subtitles",
    "run_pipeline",
    "scan_alternations",
    "silhouette_score",
    "single_show_der",
    "whiten",
]
