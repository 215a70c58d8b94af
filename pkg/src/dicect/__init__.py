"""Sparse-view parallel-beam CT reconstruction that balances a data-consistency prox against a diffusion prior."""

__version__ = "0.1.0"

from dicect.errors import (
    ConfigError,
    ContractError,
    DimensionError,
    DivergenceError,
    NumericalError,
)
from dicect.linalg import LinearOperator, MatrixOperator, cg_solve, dot
from dicect.geometry import (
    RadonTransform,
    SamplingPattern,
    ScanGeometry,
    Sinogram,
    add_noise,
    build_geometry,
    radon_adjoint,
    radon_forward,
)
from dicect.phantoms import ellipse_phantom, random_ellipse_phantom, shepp_logan
from dicect.diffusion import (
    GaussianMMSEDenoiser,
    NoiseSchedule,
    TVProxDenoiser,
    forward_diffuse,
    gaussian_mmse_denoiser,
    make_schedule,
    tv_prox,
    tv_prox_denoiser,
    x0_from_eps,
    zeta_at,
)
from dicect.agents import (
    DataConsistencyAgent,
    DiffusionPriorAgent,
    data_consistency_agent,
    diffusion_prior_agent,
)
from dicect.ce import CEConfig, CEState, G_tau, consensus, mann_solve, omega, stacked_F
from dicect.sampler import RunLog, SamplerConfig, dice_reconstruct, select_timesteps
from dicect.baselines import FistaConfig, fbp_reconstruct, pnp_fista
from dicect.metrics import MetricReport, psnr, ssim
from dicect.io import read_pgm, read_sinogram, write_pgm, write_sinogram, load_image_dir
from dicect.config import ExperimentConfig, load_config
from dicect.experiment import ablation_sweep, run_experiment

__all__ = [name for name, value in dict(globals()).items()
           if not name.startswith("_") and not hasattr(value, "__path__") and not hasattr(value, "__file__")]
