"""moonshift: domain-adaptation training on a minimal autodiff engine.

Trains small MLP classifiers under covariate shift on the two-moons task,
matching source and target representations either pointwise (paired MSE on
tap activations) or in distribution (multi-kernel squared MMD), and sweeps
the DA weight and batch size over a reporting grid.
"""

from .data import (
    DomainDataset,
    LabeledSet,
    MinMaxParams,
    Rotate,
    ShiftSpec,
    Stretch,
    apply_shift,
    build_domain_datasets,
    epoch_batches,
    make_two_moons,
    minmax_normalize,
    sample_batch,
)
from .errors import (
    ConfigError,
    ContractError,
    DivergenceError,
    DomainError,
    MoonshiftError,
    PairingError,
    ShapeError,
)
from .model import (
    Checkpoint,
    ForwardPass,
    MlpModel,
    MlpSpec,
    accuracy,
    forward,
    init_mlp,
    load_checkpoint,
    restore,
    save_checkpoint,
    snapshot,
)
from .objective import (
    DaConfig,
    MixupConfig,
    MmdConfig,
    bce_loss,
    cce_loss,
    combined_loss,
    mixup,
    mmd_squared,
    paired_mse,
)
from .optim import AdamConfig, AdamState, PlateauConfig, PlateauState, adam_step, init_adam, plateau_update
from .tensor import Tape, Tensor, backward, check_gradients
from .trainer import (
    DataConfig,
    GridReport,
    SchedulerConfig,
    TrainConfig,
    TrainResult,
    export_boundary,
    grid_search,
    read_report,
    train_run,
    write_report,
)

__version__ = "0.1.0"
