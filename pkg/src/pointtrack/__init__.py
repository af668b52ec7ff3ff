"""Point-based multi-object tracking.

Objects are represented by their center points. Each frame, detections are
associated to existing tracks by comparing the detection center, moved back
by its predicted displacement, against track centers from the previous
frame. The package also contains the heatmap and loss primitives used to
train such a detector, a synthetic world with a detector-error model, and
CLEAR-MOT / IDF1 / AMOTA evaluation.
"""
from ._backend import BACKEND, available_backends
from .association import (Matching, Tracker, TrackerConfig, TrackerState, greedy_assign,
                          greedy_match, hungarian_match, step, step_public, track_sequence)
from .geometry import (AmodalBox, BBox, Detection, Frame, LabeledBox, SequenceData, Track,
                       amodal_to_bbox, bbox_to_amodal, gating_radius, iou, sequence_from_lists)
from .heatmap import (DenseMap, GaussianSpec, Peak, extract_peaks, gaussian_radius,
                      gaussian_sigma, grid_shape, render, render_counted, render_prior)
from .losses import (FocalParams, LossWeights, RegressionTarget, focal_loss, masked_l1_loss,
                     offset_loss, offset_targets, size_loss, total_loss)
from .metrics import (AmotaConfig, AmotaResult, MotReport, TpCriterion, amota, clear_mot, idf1,
                      mota_r)
from .motion import KalmanState, MotionModel, association_cost, kalman_init, kalman_predict, \
    kalman_update
from .simulator import (NoiseConfig, WorldConfig, corrupt, generate_world, hallucinate_pair,
                        simulate_detections, subsample)

__version__ = "0.1.0"
