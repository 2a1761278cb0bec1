"""Encoder/training configuration and the alpha -> beta rule."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Tuple


class Method(enum.Enum):
    AE = "ae"
    VAE = "vae"
    BVAE = "bvae"
    SAE = "sae"


METHOD_TAGS = {Method.AE: 0, Method.VAE: 1, Method.BVAE: 2, Method.SAE: 3}
TAG_METHODS = {v: k for k, v in METHOD_TAGS.items()}


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def compute_beta(alpha: float, dim_input: int, dim_z: int) -> float:
    """KL weight from the normalized hyperparameter: beta = alpha * dim_input / dim_z."""
    if alpha <= 0 or dim_input <= 0 or dim_z <= 0:
        raise ConfigError(
            f"compute_beta needs positive inputs, got alpha={alpha}, "
            f"dim_input={dim_input}, dim_z={dim_z}")
    return alpha * dim_input / dim_z


@dataclass(frozen=True)
class EncoderSpec:
    """One representation method plus everything needed to rebuild its net."""

    method: Method
    image_size: int = 32
    latent_dim: int = 50          # AE/VAE/BVAE bottleneck width
    sae_channels: int = 8         # SAE feature maps; latent is 2 per channel
    alpha: Optional[float] = None  # BVAE only
    hidden: Tuple[int, ...] = (256, 64)
    sae_conv1_channels: int = 8
    sae_decoder_hidden: int = 64
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.method, Method):
            object.__setattr__(self, "method", Method(self.method))
        dim_in = self.image_size * self.image_size
        if self.latent < 1 or self.latent >= dim_in:
            raise ConfigError(
                f"latent dim {self.latent} must be in [1, {dim_in}) — the "
                f"representation must be more compact than the image")
        if self.method is Method.BVAE:
            if self.alpha is None or self.alpha <= 0:
                raise ConfigError("BVAE requires alpha > 0")
        elif self.alpha is not None:
            raise ConfigError(f"alpha is a BVAE hyperparameter, not {self.method.value}")
        if self.method is Method.SAE and self.sae_channels < 1:
            raise ConfigError("SAE needs at least one feature channel")
        if self.temperature <= 0:
            raise ConfigError("spatial-softmax temperature must be > 0")

    @property
    def latent(self) -> int:
        if self.method is Method.SAE:
            return 2 * self.sae_channels  # coordinates always come in pairs
        return self.latent_dim

    @property
    def input_dim(self) -> int:
        return self.image_size * self.image_size

    def beta(self) -> float:
        """Resolved KL weight: 1 for VAE, Eq-style normalization for BVAE."""
        if self.method is Method.VAE:
            return 1.0
        if self.method is Method.BVAE:
            return compute_beta(self.alpha, self.input_dim, self.latent)
        raise ConfigError(f"{self.method.value} has no KL term")

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "image_size": self.image_size,
            "latent_dim": self.latent_dim,
            "sae_channels": self.sae_channels,
            "alpha": self.alpha,
            "hidden": list(self.hidden),
            "sae_conv1_channels": self.sae_conv1_channels,
            "sae_decoder_hidden": self.sae_decoder_hidden,
            "temperature": self.temperature,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "EncoderSpec":
        return EncoderSpec(
            method=Method(d["method"]),
            image_size=int(d["image_size"]),
            latent_dim=int(d["latent_dim"]),
            sae_channels=int(d["sae_channels"]),
            alpha=None if d.get("alpha") is None else float(d["alpha"]),
            hidden=tuple(int(h) for h in d["hidden"]),
            sae_conv1_channels=int(d["sae_conv1_channels"]),
            sae_decoder_hidden=int(d["sae_decoder_hidden"]),
            temperature=float(d["temperature"]),
            seed=int(d["seed"]),
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigError(
                f"epochs, batch_size, learning_rate must be positive, got "
                f"{self.epochs}, {self.batch_size}, {self.learning_rate}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
        }
