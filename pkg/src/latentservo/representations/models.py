"""The four encoders behind one encode/decode contract.

AE/VAE/BVAE share a fully-connected trunk; SAE is two strided convolutions
feeding a spatial softmax whose coordinate pairs reconstruct a half-
resolution view of the input. ``encode`` never samples: the VAE family
reports the posterior mean with its predicted standard deviation attached.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from .specs import ConfigError, EncoderSpec, Method


@dataclass
class LatentVector:
    """Encoded state: values, plus predicted per-dimension std for the VAE family."""

    values: np.ndarray
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32).reshape(-1)
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=np.float32).reshape(-1)
            if self.sigma.shape != self.values.shape:
                raise ValueError("sigma length must match latent length")
            if np.any(self.sigma <= 0):
                raise ValueError("predicted sigma must be strictly positive")


@dataclass
class ModelWeights:
    """Immutable-after-training parameter store for one trained method."""

    spec: EncoderSpec
    params: Dict[str, Tensor]
    config_digest: str = ""
    dataset_digest: str = ""

    @property
    def method(self) -> Method:
        return self.spec.method

    def param_arrays(self) -> Dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}


def _fc_stack_shapes(spec: EncoderSpec):
    h1, h2 = spec.hidden
    d = spec.latent
    n = spec.input_dim
    enc = [("enc0", n, h1), ("enc1", h1, h2)]
    dec = [("dec0", d, h2), ("dec1", h2, h1), ("out", h1, n)]
    return enc, dec, h2, d


def init_params(spec: EncoderSpec) -> Dict[str, Tensor]:
    """Seeded Glorot/He initialization; deterministic per spec.seed."""
    rng = np.random.default_rng(spec.seed)
    params: Dict[str, Tensor] = {}

    def fc(name, fan_in, fan_out):
        params[f"{name}_w"] = ad.parameter(ad.glorot_uniform(rng, fan_in, fan_out,
                                                             (fan_in, fan_out)))
        params[f"{name}_b"] = ad.parameter(np.zeros(fan_out, dtype=np.float32))

    if spec.method is Method.SAE:
        c1 = spec.sae_conv1_channels
        c2 = spec.sae_channels
        params["conv0_w"] = ad.parameter(ad.he_uniform(rng, 9, (c1, 1, 3, 3)))
        params["conv0_b"] = ad.parameter(np.zeros(c1, dtype=np.float32))
        params["conv1_w"] = ad.parameter(ad.he_uniform(rng, 9 * c1, (c2, c1, 3, 3)))
        params["conv1_b"] = ad.parameter(np.zeros(c2, dtype=np.float32))
        half = spec.image_size // 2
        fc("dec0", 2 * c2, spec.sae_decoder_hidden)
        fc("out", spec.sae_decoder_hidden, half * half)
        return params

    enc, dec, h2, d = _fc_stack_shapes(spec)
    for name, fi, fo in enc:
        fc(name, fi, fo)
    if spec.method is Method.AE:
        fc("lat", h2, d)
    else:
        fc("mu", h2, d)
        fc("logvar", h2, d)
    for name, fi, fo in dec:
        fc(name, fi, fo)
    return params


def expected_shapes(spec: EncoderSpec) -> Dict[str, tuple]:
    return {k: v.data.shape for k, v in init_params(spec).items()}


def _as_batch(images: np.ndarray, spec: EncoderSpec) -> np.ndarray:
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    s = spec.image_size
    if arr.ndim != 3 or arr.shape[1:] != (s, s):
        raise ValueError(f"expected images of shape ({s}, {s}), got {arr.shape}")
    return arr


def _encoder_forward(params: Dict[str, Tensor], spec: EncoderSpec,
                     x: Tensor) -> Tuple[Tensor, Optional[Tensor]]:
    """Shared encoder trunk; x is (N, H*W) for FC methods, (N,1,H,W) for SAE."""
    if spec.method is Method.SAE:
        h = ad.relu(ad.conv2d(x, params["conv0_w"], params["conv0_b"], stride=2))
        h = ad.relu(ad.conv2d(h, params["conv1_w"], params["conv1_b"], stride=2))
        coords = ad.spatial_softmax(h, temperature=spec.temperature)
        return coords, None
    h = ad.relu(ad.linear(x, params["enc0_w"], params["enc0_b"]))
    h = ad.relu(ad.linear(h, params["enc1_w"], params["enc1_b"]))
    if spec.method is Method.AE:
        return ad.linear(h, params["lat_w"], params["lat_b"]), None
    mu = ad.linear(h, params["mu_w"], params["mu_b"])
    logvar = ad.linear(h, params["logvar_w"], params["logvar_b"])
    sigma = ad.exp(ad.scale(logvar, 0.5))
    return mu, sigma


def _decoder_forward(params: Dict[str, Tensor], spec: EncoderSpec, z: Tensor) -> Tensor:
    if spec.method is Method.SAE:
        h = ad.relu(ad.linear(z, params["dec0_w"], params["dec0_b"]))
        return ad.sigmoid(ad.linear(h, params["out_w"], params["out_b"]))
    h = ad.relu(ad.linear(z, params["dec0_w"], params["dec0_b"]))
    h = ad.relu(ad.linear(h, params["dec1_w"], params["dec1_b"]))
    return ad.sigmoid(ad.linear(h, params["out_w"], params["out_b"]))


def encode_batch(model: ModelWeights, images: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Deterministic forward encode of (N, H, W) frames -> (values, sigma)."""
    spec = model.spec
    batch = _as_batch(images, spec)
    n = batch.shape[0]
    if spec.method is Method.SAE:
        x = Tensor(batch[:, None, :, :])
    else:
        x = Tensor(batch.reshape(n, -1))
    values, sigma = _encoder_forward(model.params, spec, x)
    return values.data.copy(), None if sigma is None else sigma.data.copy()


def encode(model: ModelWeights, image: np.ndarray) -> LatentVector:
    """Map one image to its latent state (pure function of weights and pixels)."""
    values, sigma = encode_batch(model, image)
    return LatentVector(values=values[0], sigma=None if sigma is None else sigma[0])


def downsample_half(batch: np.ndarray) -> np.ndarray:
    """2x2 average pooling, the SAE reconstruction target."""
    n, h, w = batch.shape
    return batch.reshape(n, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def loss(spec: EncoderSpec, params: Dict[str, Tensor], images: np.ndarray,
         noise: Optional[np.ndarray] = None, beta: Optional[float] = None) -> Tensor:
    """Scalar training objective for one batch, recorded on the active tape.

    VAE/BVAE need ``noise``: one standard-normal draw per datum for the
    reparameterized sample. ``beta`` overrides the spec-resolved KL weight.
    """
    batch = _as_batch(images, spec)
    n = batch.shape[0]
    if n < 1:
        raise ValueError("empty batch")

    if spec.method is Method.SAE:
        x = Tensor(batch[:, None, :, :])
        coords, _ = _encoder_forward(params, spec, x)
        recon = _decoder_forward(params, spec, coords)
        target = Tensor(downsample_half(batch).reshape(n, -1))
        return ad.mse(recon, target)

    flat = Tensor(batch.reshape(n, -1))
    z_or_mu, sigma = _encoder_forward(params, spec, flat)

    if spec.method is Method.AE:
        recon = _decoder_forward(params, spec, z_or_mu)
        return ad.mse(recon, flat)

    if beta is None:
        beta = spec.beta()
    if noise is None:
        raise ConfigError(f"{spec.method.value} loss needs a noise draw per datum")
    eps = np.asarray(noise, dtype=np.float32)
    if eps.shape != (n, spec.latent):
        raise ValueError(f"noise must have shape {(n, spec.latent)}, got {eps.shape}")
    z = ad.add(z_or_mu, ad.mul(sigma, Tensor(eps)))
    recon = _decoder_forward(params, spec, z)
    # Gaussian decoder with unit variance: squared error summed over pixels,
    # KL summed over dims; both averaged over the batch.
    diff = ad.sub(recon, flat)
    sse = ad.tsum(ad.mul(diff, diff))
    mu_flat = ad.reshape(z_or_mu, (n * spec.latent,))
    sigma_flat = ad.reshape(sigma, (n * spec.latent,))
    kl = ad.gaussian_kl(mu_flat, sigma_flat)
    return ad.scale(ad.add(sse, ad.scale(kl, beta)), 1.0 / n)
