"""Layout-guided image diffusion with FiLM-gated control residuals."""

from .autoencoder import ConvAutoencoder, IdentityAutoencoder, reconstruction_psnr
from .bundle import SynthModel
from .model import (
    ControlBranch,
    ControlResiduals,
    FilmGates,
    ImageDenoiser,
    control_residuals,
    film_gate,
    predict_noise,
)
from .objective import stage_b_loss
from .sample import sample_image, sampling_timesteps, upsample_layout
from .schedule import ImageNoiseSchedule, corrupt_latent
from .train import (
    PreparedPairs,
    StageBConfig,
    StageBResult,
    layout_to_onehot,
    prepare_pairs,
    train_stage_b,
    training_prompt,
)

__all__ = [
    "ConvAutoencoder",
    "IdentityAutoencoder",
    "reconstruction_psnr",
    "SynthModel",
    "ControlBranch",
    "ControlResiduals",
    "FilmGates",
    "ImageDenoiser",
    "control_residuals",
    "film_gate",
    "predict_noise",
    "stage_b_loss",
    "sample_image",
    "sampling_timesteps",
    "upsample_layout",
    "ImageNoiseSchedule",
    "corrupt_latent",
    "PreparedPairs",
    "StageBConfig",
    "StageBResult",
    "layout_to_onehot",
    "prepare_pairs",
    "train_stage_b",
    "training_prompt",
]
