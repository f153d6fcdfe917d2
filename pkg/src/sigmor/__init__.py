"""sigmor: signature-based bilinear modelling and time-limited balanced
truncation for unknown nonlinear control systems.

Workflow: sample a nonlinear system's outputs under training controls,
regress them on truncated-signature features to get a universal bilinear
surrogate, then compress that surrogate with Gramian-based balanced
truncation tailored to unstable dynamics with nonzero initial state.
"""

from ._kernels import BACKEND_NAME as kernel_backend
from .balancing import BalancedReduction, balance, hankel_report, reduce
from .bilinear import (BilinearSystem, Trajectory, load_system, output,
                       save_system, simulate, transform)
from .dynamics import (ControlSignal, NonlinearSystem, lipschitz_probe,
                       make_cubic_example, make_reaction_diffusion,
                       simulate_nonlinear, test_control, training_control)
from .gramians import (GramianPair, gramian_ode, gramian_series,
                       lyapunov_apply, observability_energy_check,
                       reachability_energy_check)
from .learning import (RegressionDataset, assemble_dataset, error_l2,
                       evaluate_pipeline, fit_C)
from .signature import (SignatureSystem, SignatureVector, chen_concatenate,
                        compute_signature, build_generator_matrices,
                        quadrature_oracle_signature, signature_dimension,
                        signature_system, words)

__version__ = "0.1.0"
