"""Iterative regularization for kernel learning with convex losses.

Subgradient (or gradient) descent on the empirical risk in a reproducing
kernel Hilbert space, regularized by stopping early.
"""

from .exceptions import (DimensionError, DivergenceError, IterRegError, LabelError,
                         ParameterError, ScheduleError)
from .kernel import (DictionaryKernel, GaussianKernel, KappaBound, KernelExpansion,
                     LinearKernel, PolynomialKernel, eval_kernel, expansion_eval, gram,
                     kappa, predict_many, rkhs_norm_sq)
from .loss import (Absolute, EpsInsensitive, EpsInsensitiveP, Hinge, Logistic, PLoss,
                   Square, get_loss, growth_params)
from .engine import (StepSchedule, averaged_iterate, best_iterate, last_iterate,
                     max_eta1, run, run_gram, step, subgradient_norm_sq)
from .stopping import (ZETA_LIMIT, RegimeParams, RateIndices, compute_indices,
                       hinge_fixed_T_schedule, hinge_indices, holdout_stop, lambda_T,
                       theoretical_T)
from .evaluation import (RiskReport, comparison_check, empirical_risk, excess_risk,
                         excess_risks_mc, expected_risk_mc, misclassification_risk_mc, sign_classifier)
from .synth import (FlipClassification, LinearDecision, MarginClassification,
                    MedianRegression, RegressionRKHS)

__version__ = "0.1.0"
