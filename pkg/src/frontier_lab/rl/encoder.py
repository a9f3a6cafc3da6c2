"""Map-image preprocessing and the convolutional latent encoder."""

from dataclasses import dataclass

import numpy as np

from ..grids import UNKNOWN, crop_center_values
from . import nn


@dataclass(frozen=True)
class PreprocessSpec:
    """Robot-centred map crop -> bilinear resize -> 2x2 max-pool."""

    crop_cells: int = 1600
    resize: int = 256
    pool: int = 2

    @property
    def out_size(self):
        return self.resize // self.pool


@dataclass(frozen=True)
class EncoderSpec:
    """Conv stack geometry.  Defaults digest a 128x128 probability image."""

    in_size: int = 128
    channels: tuple = (16, 32, 32)
    kernels: tuple = (8, 4, 3)
    strides: tuple = (4, 2, 1)
    latent: int = 256

    def conv_sizes(self):
        sizes = [self.in_size]
        for k, s in zip(self.kernels, self.strides):
            sizes.append(nn.Conv2d.out_size(sizes[-1], k, s))
        return sizes

    @property
    def flat_dim(self):
        return self.channels[-1] * self.conv_sizes()[-1] ** 2


# paper-scale geometry: 128 -> 31 -> 14 -> 12 -> 32*12*12 -> 256
DEFAULT_ENCODER = EncoderSpec()
DEFAULT_PREPROCESS = PreprocessSpec()


def bilinear_resize(img, out_h, out_w):
    """Separable bilinear resample with half-pixel-centre alignment."""
    img = np.asarray(img, dtype=np.float32)
    h, w = img.shape

    def axis_weights(n_in, n_out):
        src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = (src - lo).astype(np.float32)
        return lo, hi, frac

    ylo, yhi, yf = axis_weights(h, out_h)
    xlo, xhi, xf = axis_weights(w, out_w)
    rows = img[ylo] * (1.0 - yf)[:, None] + img[yhi] * yf[:, None]
    out = rows[:, xlo] * (1.0 - xf)[None, :] + rows[:, xhi] * xf[None, :]
    return out


def max_pool(img, k):
    h, w = img.shape
    if h % k or w % k:
        raise ValueError(f"pool {k} does not divide {img.shape}")
    return img.reshape(h // k, k, w // k, k).max(axis=(1, 3))


def preprocess_map(mean_map, robot, spec=DEFAULT_PREPROCESS):
    """Egocentric float32 image of the predicted map, in [0, 1].

    Cells outside the map pad with the unknown value so a robot near a
    wall still sees a full window.
    """
    values = mean_map if isinstance(mean_map, np.ndarray) else mean_map.cells
    crop = crop_center_values(np.asarray(values, dtype=np.float32), robot,
                              spec.crop_cells, pad=UNKNOWN)
    resized = bilinear_resize(crop, spec.resize, spec.resize)
    return max_pool(resized, spec.pool).astype(np.float32)


class MapEncoder:
    """Three strided conv layers + one fully connected, all rectified.

    A zero image with zero biases maps to the zero latent vector.
    """

    def __init__(self, spec, rng, dtype=np.float32):
        self.spec = spec
        layers = []
        c_prev = 1
        for c, k, s in zip(spec.channels, spec.kernels, spec.strides):
            layers.append(nn.Conv2d(c_prev, c, k, s, rng, dtype=dtype))
            layers.append(nn.ReLU())
            c_prev = c
        self.convs = nn.Sequential(layers)
        self.fc = nn.Linear(spec.flat_dim, spec.latent, rng, dtype=dtype)
        self.out_relu = nn.ReLU()
        self._conv_out_shape = None

    def forward(self, images):
        # images: (B, S, S) or (B, 1, S, S) -> (B, latent)
        if images.ndim == 3:
            images = images[:, None, :, :]
        h = self.convs.forward(images)
        self._conv_out_shape = h.shape
        flat = h.reshape(h.shape[0], -1)
        return self.out_relu.forward(self.fc.forward(flat))

    def backward(self, dlatent):
        dflat = self.fc.backward(self.out_relu.backward(dlatent))
        dh = dflat.reshape(self._conv_out_shape)
        return self.convs.backward(dh)

    def params(self):
        out = {f"conv.{k}": v for k, v in self.convs.params().items()}
        out.update({f"fc.{k}": v for k, v in self.fc.params().items()})
        return out

    def grads(self):
        out = {f"conv.{k}": v for k, v in self.convs.grads().items()}
        out.update({f"fc.{k}": v for k, v in self.fc.grads().items()})
        return out
