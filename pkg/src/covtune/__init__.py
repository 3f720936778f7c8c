"""Bayesian optimisation with covariance functions pre-trained on auxiliary data.

The toolkit re-weights a base kernel family using the dual coefficients of a
support vector machine fitted to an auxiliary dataset, turning condensed
prior knowledge into a problem-specific covariance function for Gaussian
process surrogates.
"""

from .kernels import (
    ArityError,
    DimensionMismatchError,
    KernelSpec,
    NonPositiveDiagonalError,
    ReweightSet,
    gram,
    kernel_eval,
    m_inner,
    normalize,
    pair_diag,
    pair_matrix,
    reweight,
)
from .data import LabeledDataset, NormalizationRecord, load_dataset_csv, normalize_unit_box
from .svm import SvmConfig, SvmModel, loo_mse_select, svm_predict, train_svc, train_svr
from .gp import GpModel, gp_fit, gp_nlml, gp_posterior, select_hypers_ml
from .bo import (
    AcquisitionSpec,
    BoSession,
    acquisition_value,
    beta_schedule,
    pretrain_kernel,
    run_bo,
    suggest,
    tell,
)

__version__ = "0.1.0"
