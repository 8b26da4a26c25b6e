"""Pretrained-model adapters.

Every adapter exposes log_likelihood(batch) -> per-sample natural-log
likelihood for a uint8 NHWC image batch. Two kinds ship here:

  * "vae": a small convolutional VAE whose per-sample likelihood is the
    deterministic ELBO (reconstruction term at the posterior mean minus the
    KL term), in nats. Checkpoints are .pt files holding the architecture
    parameters and state dict.
  * "torchscript": any scripted module mapping a float32 NHWC batch of raw
    [0, 255] values to per-sample natural-log likelihoods; this is the
    escape hatch for full PixelCNN++/Glow/VAE exports from other codebases
    (convert bits-per-dim outputs to nats before scripting).
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn

MODEL_KINDS = ("vae", "torchscript")


class ConvVae(nn.Module):
    def __init__(self, in_channels: int, image_size: int, latent_dim: int = 16,
                 width: int = 16):
        super().__init__()
        if image_size % 4:
            raise ValueError("image_size must be divisible by 4")
        self.in_channels = in_channels
        self.image_size = image_size
        self.latent_dim = latent_dim
        self.width = width
        feat = width * 2 * (image_size // 4) ** 2
        self.encoder = nn.Sequential(
            nn.Conv2d(in_channels, width, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(width, width * 2, 3, stride=2, padding=1), nn.ReLU(),
            nn.Flatten(),
        )
        self.to_mu = nn.Linear(feat, latent_dim)
        self.to_logvar = nn.Linear(feat, latent_dim)
        self.from_latent = nn.Linear(latent_dim, feat)
        self.decoder = nn.Sequential(
            nn.ConvTranspose2d(width * 2, width, 4, stride=2, padding=1), nn.ReLU(),
            nn.ConvTranspose2d(width, in_channels, 4, stride=2, padding=1),
        )
        self.obs_log_scale = nn.Parameter(torch.zeros(()))

    def forward(self, x):
        h = self.encoder(x)
        mu, logvar = self.to_mu(h), self.to_logvar(h)
        side = self.image_size // 4
        dec_in = self.from_latent(mu).view(-1, self.width * 2, side, side)
        recon = self.decoder(dec_in)
        return recon, mu, logvar

    @torch.no_grad()
    def elbo(self, x):
        """Deterministic ELBO per sample, nats. x: float NCHW in [0, 1]."""
        recon, mu, logvar = self(x)
        scale = torch.exp(self.obs_log_scale)
        log_px = -0.5 * (((x - recon) / scale) ** 2
                         + math.log(2 * math.pi) + 2 * self.obs_log_scale)
        log_px = log_px.flatten(1).sum(dim=1)
        kl = 0.5 * (mu ** 2 + logvar.exp() - 1.0 - logvar).sum(dim=1)
        return log_px - kl


class VaeAdapter:
    def __init__(self, model: ConvVae):
        self.model = model.eval()

    @classmethod
    def load(cls, path) -> "VaeAdapter":
        payload = torch.load(path, map_location="cpu", weights_only=True)
        model = ConvVae(in_channels=payload["in_channels"],
                        image_size=payload["image_size"],
                        latent_dim=payload["latent_dim"],
                        width=payload["width"])
        model.load_state_dict(payload["state_dict"])
        return cls(model)

    def log_likelihood(self, batch: np.ndarray) -> np.ndarray:
        x = torch.from_numpy(batch.astype(np.float32) / 255.0).permute(0, 3, 1, 2)
        return self.model.elbo(x).numpy().astype(np.float64)


def save_vae_checkpoint(model: ConvVae, path) -> None:
    torch.save({
        "in_channels": model.in_channels,
        "image_size": model.image_size,
        "latent_dim": model.latent_dim,
        "width": model.width,
        "state_dict": model.state_dict(),
    }, path)


class TorchScriptAdapter:
    def __init__(self, module):
        self.module = module.eval()

    @classmethod
    def load(cls, path) -> "TorchScriptAdapter":
        return cls(torch.jit.load(path, map_location="cpu"))

    @torch.no_grad()
    def log_likelihood(self, batch: np.ndarray) -> np.ndarray:
        x = torch.from_numpy(batch.astype(np.float32))
        out = self.module(x)
        return out.numpy().astype(np.float64).reshape(-1)


def load_model(kind: str, path):
    if kind == "vae":
        return VaeAdapter.load(path)
    if kind == "torchscript":
        return TorchScriptAdapter.load(path)
    raise ValueError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")
