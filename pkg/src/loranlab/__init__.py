"""loranlab: desk-scale laboratory for low-rank adapters with nonlinear
update maps (delta = f(B A)) and the oscillatory sinter map.

The package verifies the mechanisms behind nonlinear low-rank adaptation
at sizes where every claim is checkable: exact parameter parity,
init-time identity, activation-specific failure modes, rank expansion of
the update spectrum, grid-search behaviour and cross-seed stability.
"""

from .activations import (
    ActivationSpec,
    ablation_family,
    identity,
    relu,
    sigmoid,
    sinter,
    swish,
    tanh,
)
from .adapters import (
    AdapterError,
    DenseUpdate,
    FrozenLinear,
    LoRAAdapter,
    LoRANAdapter,
    adapter_forward,
    delta_weight,
    init_adapter,
    init_dense,
    init_loran,
    parameter_count,
    trainable_parameters,
)
from .analysis import (
    ConvergenceError,
    SpectrumReport,
    compare_spectra,
    effective_rank,
    jacobi_svd,
    numerical_rank,
    spectrum_histogram,
    spectrum_report,
    svd_values,
)
from .config import ConfigError, ExperimentConfig, default_config, load_config, parse_config
from .engine import (
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    add,
    add_bias,
    finite_difference_check,
    hadamard,
    map_unary,
    matmul,
    scale,
    softmax_cross_entropy,
    sub,
    sum_all,
    transpose,
    zero_grad,
)
from .experiments import (
    ComparisonResult,
    GridResult,
    ablation_study,
    compare_study,
    grid_search,
    rank_study,
    run_experiment,
    run_matrix,
    spectrum_study,
)
from .rng import SplitMix64, derive_seed
from .tasks import (
    BlobsTask,
    TeacherTask,
    ToyClassifier,
    build_toy_classifier,
    eckart_young_floor,
    gen_blobs,
    teacher_loss,
)
from .training import RunReport, TrainConfig, adamw_step, train, variance_report

__version__ = "0.1.0"
