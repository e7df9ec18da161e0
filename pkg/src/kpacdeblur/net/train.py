"""Toy-scale training on synthetic spatially varying Gaussian blur."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..deconv import convolve_circular
from ..errors import KpacError, ShapeMismatchError
from ..experiments import synthetic_scene
from ..image import make_kernel
from .model import NetworkConfig, NetworkWeights, build_network, forward_graph, net_forward
from .optim import adam_step, mae_loss

__all__ = ["BlurDataset", "make_blur_dataset", "train_toy", "evaluate", "TOY_CONFIG"]

log = logging.getLogger(__name__)

# Same topology as the full model, narrow enough for a CPU core.
TOY_CONFIG = NetworkConfig(levels=3, blocks=2, k=5, n=5, width=24, attn_widths=(8, 8, 4, 4), shape_hidden=8)


@dataclass(eq=False)
class BlurDataset:
    """Aligned ``(N, H, W, C)`` arrays of blurred inputs and sharp targets."""

    blurred: np.ndarray
    sharp: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        if self.blurred.shape != self.sharp.shape or self.blurred.ndim != 4:
            raise ShapeMismatchError(f"blurred {self.blurred.shape} vs sharp {self.sharp.shape}")

    def __len__(self):
        return self.blurred.shape[0]


def _region_masks(rng, size: int, regions: int) -> np.ndarray:
    """Split a patch into ``regions`` vertical or horizontal bands at random cut points."""
    cuts = np.sort(rng.choice(np.arange(4, size - 3), size=regions - 1, replace=False))
    bounds = np.concatenate([[0], cuts, [size]])
    masks = np.zeros((regions, size, size))
    for r in range(regions):
        masks[r, bounds[r] : bounds[r + 1], :] = 1.0
    if rng.random() < 0.5:
        masks = masks.transpose(0, 2, 1)
    return masks


def make_blur_dataset(count: int, size: int = 32, seed: int = 0, sigma_range=(1.0, 3.0),
                      regions: int = 2, margin: int = 12, cutoff_range=(0.03, 0.06)) -> BlurDataset:
    """Synthetic sharp scenes blurred with a different Gaussian in each region.

    Scenes are band-limited random fields whose spectral roll-off is drawn
    from ``cutoff_range`` (cycles per pixel). They are rendered with a
    ``margin`` on every side, blurred circularly and cropped, so the
    wrap-around of circular convolution never reaches the patch.
    """
    if count < 1:
        raise KpacError("dataset must hold at least one pair")
    rng = np.random.default_rng(seed)
    big = size + 2 * margin
    blurred = np.empty((count, size, size, 3))
    sharp = np.empty((count, size, size, 3))
    sigmas = np.empty((count, regions))
    for i in range(count):
        scene = synthetic_scene(big, big, 3, seed=int(rng.integers(2**31)), cutoff=rng.uniform(*cutoff_range),
                                lo=rng.uniform(0.0, 0.2), hi=rng.uniform(0.8, 1.0))
        masks = _region_masks(rng, size, regions)
        out = np.zeros((size, size, 3))
        for r in range(regions):
            s = rng.uniform(*sigma_range)
            sigmas[i, r] = s
            y = convolve_circular(scene, make_kernel("gaussian", s)).data
            out += masks[r][:, :, None] * y[margin:-margin, margin:-margin]
        blurred[i] = out
        sharp[i] = scene.data[margin:-margin, margin:-margin]
    return BlurDataset(blurred, sharp, sigmas)


def evaluate(w: NetworkWeights, data: BlurDataset, batch: int = 16) -> float:
    """MAE of the network output against the sharp targets."""
    errs = []
    for i in range(0, len(data), batch):
        out = net_forward(data.blurred[i : i + batch], w)
        errs.append(np.abs(out - data.sharp[i : i + batch]).sum())
    return float(sum(errs) / data.sharp.size)


def train_toy(cfg: NetworkConfig | None, dataset: BlurDataset, steps: int, seed: int = 0, batch: int = 4,
              lr: float = 1e-4, log_every: int = 10, weights: NetworkWeights | None = None,
              identity_start: bool = True):
    """Train with MAE loss and Adam; returns ``(weights, [(step, loss), ...])``.

    Minibatches are drawn with replacement from ``dataset`` using ``seed``.
    The loss curve records the minibatch loss every ``log_every`` steps.
    With ``identity_start`` a freshly built network gets zero output taps,
    so training starts from the identity map of the global residual.
    """
    if len(dataset) == 0:
        raise KpacError("empty dataset")
    if weights is not None:
        w = weights
    else:
        w = build_network(cfg or TOY_CONFIG, seed)
        if identity_start:
            w.params["conv8.w"][...] = 0.0
    rng = np.random.default_rng(seed + 1)
    curve = []
    for step in range(1, steps + 1):
        idx = rng.integers(0, len(dataset), size=batch)
        out, g = forward_graph(dataset.blurred[idx], w)
        loss, grad = mae_loss(out.value, dataset.sharp[idx])
        adam_step(w, g.backward(out, grad), lr=lr)
        if step % log_every == 0 or step == 1:
            curve.append((step, loss))
            if step % log_every == 0:
                log.info("step %d loss %.6f", step, loss)
    return w, curve
