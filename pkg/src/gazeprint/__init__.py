"""Gaze-pattern biometrics: fixation density maps, spectral features, verification."""
from .calibration import AffineRecalibrator, AffineTransform, apply_affine, collect_pairs, fit_affine
from .core import (EventKind, GazeSample, GazeTrace, ScreenGeometry, StimulusEvent, TrialLabel,
                   TrialManifest, degrees_to_pixels, load_manifest)
from .dissimilarity import (METRICS, DissimilarityMatrix, FeatureGrid, build_matrix, d_eucl_from_kld,
                            d_kld_sym, d_min, d_mse)
from .evaluation import (ComparisonSet, DissimilarityVerifier, EvalReport, auc, eer, evaluate, sweep)
from .exceptions import (DataError, DegenerateFit, DegenerateGroundTruth, DegenerateMatrix, EmptyMap,
                         GazeprintError, MalformedFile, ShapeError, UndefinedDirection)
from .fdm import DensityMapTransformer, FixationDensityMap, build_fdm, density_map, norm_unit_mass, smooth_gaussian
from .fixations import ClusterParams, Fixation, FixationDetector, build_epochs, detect_fixations, fixations_in_epochs
from .pipeline import PipelineConfig, run_pipeline
from .spectral import MagnitudeSpectrum, SpectralFeatures, box_filter, dft2_magnitude, spectral_feature
from .synth import SubjectProfile, generate_dataset, make_schedule, paper_presets, simulate_trial
from .ttt import Direction, TttRecord, TttStats, classify_direction, extract_ttt, ttt_stats

__version__ = "0.1.0"
