"""Basin-of-attraction geometry of gradient-descent training dynamics.

Treats full-batch gradient descent on a tiny tanh network as a discrete
dynamical system: Lyapunov spectra split along/against the equal-neuron
plane, destination maps over initialization grids, uncertainty-exponent
estimation, and a desk-scale multilayer analog.
"""

__version__ = "0.1.0"

from .model import (ALPHA1, ALPHA2, DEFAULT_CONFIG, Dataset, ModelConfig,
                    forward, generate_dataset, grad, hessian, load_canonical_dataset,
                    load_dataset, loss, make_dataset, save_dataset)
from .dynamics import (E1, E2, E3, E4, TrainConfig, TrainOutcome, attractor_trace,
                       basis_matrix, gd_step, load_trajectory, save_trajectory, train)
from .symmetry import (Classification, DestinationLabel, classify, dist_metric,
                       euclid_dist_to_plane, permute, signflip, vanished_neurons)
from .lyapunov import (DiffusionFit, FtleSeries, LyapunovError, LyapunovReport,
                       TreppenStream, diffusion_fit, ftle_windows,
                       ftle_windows_from_stream, jacobian, qr_positive, spectrum,
                       treppen_step, treppen_stream)
from .basin import (BasinGrid, ConvergenceMap, PlaneSpec, convergence_map,
                    grid_axis, load_grid, magnify, make_plane, regime_sweep,
                    save_grid, sweep, write_image)
from .uncertainty import (BitflipReport, PowerLawFit, UncertaintyCurve,
                          UncertaintyPoint, bitflip_ensemble, fit_uncertainty_exponent,
                          flip_lsb, load_curve, log_spaced_eps, perturb, sample_shell,
                          save_curve, uncertain_fraction, uncertainty_curve)
from .mlp import (MlpData, MlpParams, MlpTrainOutcome, ParityDestination, accuracy,
                  detect_parity, init_params, inject_label_noise, load_checkpoint,
                  make_blobs, make_mlp_data, mlp_forward, mlp_grad, mlp_loss,
                  mlp_train, reflect_complement, reflect_neuron, save_checkpoint)
from .stats import WlsResult, bootstrap_fraction, wls, wls_through_origin
