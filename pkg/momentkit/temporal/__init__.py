"""
Temporal token space: encoding and decoding normalized video time, the
neighboring token propagation gradient, and small training experiments
that show its effect on anchor continuity.
"""
from .pca import pca_first_component
from .space import (AnchorGradients, TemporalTokenSpace, check_tau,
                    decode_time, default_frame_times, encode_time,
                    encode_times, finite_difference_gradient, gradient_check,
                    grad_wrt_anchors, grad_wrt_token, inject_time, load_space,
                    make_space, ntp_forward, ntp_weights, relative_error,
                    routing_matrix, save_space, seconds_to_tau,
                    tau_to_seconds)
from .training import (ContinuityReport, TrainConfig, continuity_experiment,
                       continuity_report, every_nth_index, random_targets,
                       sinusoidal_targets, train_anchors, write_pca_csv)
