"""Dual-energy X-ray foreign-object inspection.

Thickness-corrected quotient preprocessing, Chan-Vese segmentation,
cluster-size detection and a polychromatic phantom simulator.
"""
from .detection import (Cluster, Confusion, DetectionDecision, connected_components, decide,
                        detect, f1_score, filter_clusters, pixel_f1, sample_metrics)
from .harness import (DatasetIndex, PipelineConfig, Report, SweepGrid, emit_report,
                      generate_dataset, run_sample, sweep)
from .physics import (AttenuationCurve, PhantomSpec, ProjectionPair, Spectrum, attenuation_rate,
                      bundled_curve, bundled_spectrum, effective_attenuation, make_phantom,
                      ratio_thickness_curve, render_projection_pair)
from .preprocess import (NormalizedQuotient, PreprocessConfig, ThicknessFit, correct,
                         fit_thickness_dependency, foreground_mask, normalize,
                         preprocess_pipeline, quotient)
from .segmentation import (ChanVeseParams, SegmentationResult, energy, evolve, init_levelset,
                           region_means, segment)

__version__ = "0.1.0"
