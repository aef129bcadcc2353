"""Probabilistic reconstruction of gust-encounter flow states from sparse
surface-pressure sensors.

The package maps noisy pressure readings to a 3-dim latent flow state with a
heteroscedastic Gaussian head, quantifies aleatoric and epistemic
uncertainty via Monte Carlo dropout, decodes latent samples back to
vorticity fields and lift through a lift-augmented autoencoder, and ranks
sensor informativeness through the measurement-space Gramian of the
estimator's input Jacobian.
"""

from .autodiff import Tape, batched_jacobian, gradient, jacobian, matmul
from .autoencoder import (
    AutoencoderModel,
    LatentTrajectory,
    ae_loss,
    pod_baseline_mse,
    train_autoencoder,
)
from .dataset import (
    Dataset,
    augment_noise,
    build_dataset,
    load_dataset,
    preset_plan,
    sample_cases,
    save_dataset,
)
from .errors import (
    ConfigError,
    ContractError,
    DataMismatchError,
    NumericError,
    ShapeError,
)
from .gaussian import (
    GaussianPrediction,
    HeteroscedasticNllLoss,
    LatentDistribution,
    assemble_cholesky,
    nll_loss,
    sample_gaussian,
)
from .gramian import (
    GramianResult,
    NoiseModel,
    iid_pressure_noise,
    measurement_gramian,
    select_rank,
    sensor_importance,
    structured_noise,
)
from .gust import (
    FlowCase,
    GridSpec,
    SensorLayout,
    Snapshot,
    gust_induced_velocity,
    pressure_coefficient,
    surrogate_trajectory,
    taylor_vortex_velocity,
)
from .network import (
    DenseLayer,
    DropoutLayer,
    Network,
    NetworkSpec,
    TrainConfig,
    adam_step,
    estimator_spec,
    load_network,
    mse_loss,
    save_network,
    train,
)
from .uncertainty import (
    EllipseSpec,
    FieldStats,
    PredictiveEnsemble,
    aleatoric_distribution,
    avg_loglikelihood,
    confidence_ellipse,
    epistemic_distribution,
    mc_predict,
    reconstruct_stats,
)

__version__ = "0.1.0"
