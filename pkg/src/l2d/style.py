"""Style-complement generator: random multi-scale projections with learnable restyling.

Each transformation convolves the image with a freshly drawn random kernel,
normalizes the resulting feature map by its own instance statistics, rescales
and shifts it with learnable per-element ``var_shift`` / ``mean_shift`` maps,
and projects back to image space with a random transposed convolution. The
generated batch is a random affine mix of the tanh-squashed outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import functional as F
from .tensor import Tensor, no_grad, parameter


@dataclass
class MixWeights:
    """Raw normal draws ``w`` and the normalized mixing coefficients ``w / sum(w)``."""

    w: np.ndarray

    @property
    def coefficients(self) -> np.ndarray:
        return self.w / self.w.sum()


def draw_mix_weights(k: int, rng: np.random.Generator, guard: float = 0.1) -> MixWeights:
    """Sample ``k`` standard normal weights, redrawing while ``|sum(w)| < guard``."""
    while True:
        w = rng.standard_normal(k)
        if abs(w.sum()) >= guard:
            return MixWeights(w)


def style_shift(f: Tensor, mean_shift: Tensor, var_shift: Tensor, eps: float = F.EPS) -> Tensor:
    """Instance-normalize ``f`` then apply ``var_shift * f_hat + mean_shift``.

    ``mean_shift`` and ``var_shift`` have shape (C, H, W) and broadcast over the
    batch axis.
    """
    if f.ndim != 4 or tuple(f.shape[1:]) != tuple(mean_shift.shape) or mean_shift.shape != var_shift.shape:
        raise ValueError(
            f"style_shift: features {f.shape} do not match shift maps {mean_shift.shape} / {var_shift.shape}"
        )
    B, C = f.shape[:2]
    mu, var = F.instance_mean_var(f)
    std = (var + eps).sqrt()
    normalized = (f - mu.reshape(B, C, 1, 1)) / std.reshape(B, C, 1, 1)
    return var_shift * normalized + mean_shift


class StyleTransformation:
    """One conv -> restyle -> transposed-conv branch with a fixed odd kernel size."""

    def __init__(self, kernel_size: int, image_shape=(3, 32, 32), channels: int | None = None):
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be a positive odd integer, got {kernel_size}")
        c_in, h, w = image_shape
        self.kernel_size = kernel_size
        self.image_shape = tuple(image_shape)
        self.channels = c_in if channels is None else channels
        self.conv_kernel = Tensor(np.zeros((self.channels, c_in, kernel_size, kernel_size)))
        self.deconv_kernel = Tensor(np.zeros((self.channels, c_in, kernel_size, kernel_size)))
        self.mean_shift = parameter(np.zeros((self.channels, h, w)))
        self.var_shift = parameter(np.ones((self.channels, h, w)))

    @property
    def padding(self) -> int:
        return (self.kernel_size - 1) // 2

    @property
    def init_bound(self) -> float:
        # uniform(-1/sqrt(size), 1/sqrt(size)) with size = k * k
        return 1.0 / self.kernel_size

    def reinit(self, rng: np.random.Generator) -> None:
        b = self.init_bound
        shape = self.conv_kernel.shape
        self.conv_kernel = Tensor(rng.uniform(-b, b, size=shape))
        self.deconv_kernel = Tensor(rng.uniform(-b, b, size=shape))

    def parameters(self) -> list[Tensor]:
        return [self.mean_shift, self.var_shift]


def apply_transformation(x: Tensor, t: StyleTransformation, modulate: bool = True) -> Tensor:
    """Project ``x`` with ``t``'s random kernels; ``modulate=False`` skips the restyling."""
    if tuple(x.shape[1:]) != t.image_shape:
        raise ValueError(f"apply_transformation: input {x.shape} does not match image shape {t.image_shape}")
    f = F.conv2d(x, t.conv_kernel, 1, t.padding)
    if modulate:
        f = style_shift(f, t.mean_shift, t.var_shift)
    return F.conv_transpose2d(f, t.deconv_kernel, 1, t.padding)


class StyleComplementModule:
    """K style transformations with pairwise distinct kernel sizes.

    Only the mean/variance shift maps are trainable. Convolution kernels are
    redrawn by :meth:`reinit` before every generator step.
    """

    def __init__(
        self,
        n_transforms: int = 6,
        image_shape=(3, 32, 32),
        kernel_sizes=None,
        mix_guard: float = 0.1,
        modulate: bool = True,
    ):
        if kernel_sizes is None:
            kernel_sizes = tuple(2 * i + 1 for i in range(n_transforms))
        kernel_sizes = tuple(int(k) for k in kernel_sizes)
        if len(kernel_sizes) != n_transforms:
            raise ValueError(f"expected {n_transforms} kernel sizes, got {kernel_sizes}")
        if len(set(kernel_sizes)) != len(kernel_sizes):
            raise ValueError(f"kernel sizes must be pairwise distinct, got {kernel_sizes}")
        if mix_guard <= 0:
            raise ValueError("mix_guard must be positive")
        self.image_shape = tuple(image_shape)
        self.mix_guard = mix_guard
        self.modulate = modulate
        self.transformations = [StyleTransformation(k, image_shape) for k in kernel_sizes]

    @property
    def n_transforms(self) -> int:
        return len(self.transformations)

    @property
    def kernel_sizes(self) -> tuple:
        return tuple(t.kernel_size for t in self.transformations)

    def parameters(self) -> list[Tensor]:
        return [p for t in self.transformations for p in t.parameters()]

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for t in self.transformations:
            out[f"G.k{t.kernel_size}.mean_shift"] = t.mean_shift
            out[f"G.k{t.kernel_size}.var_shift"] = t.var_shift
        return out

    def reinit(self, rng) -> None:
        rng = np.random.default_rng(rng)
        for t in self.transformations:
            t.reinit(rng)

    def draw_weights(self, rng) -> MixWeights:
        return draw_mix_weights(self.n_transforms, np.random.default_rng(rng), self.mix_guard)

    def generate(self, x, rng=None, weights: MixWeights | None = None) -> tuple[Tensor, MixWeights]:
        """Synthesize ``x_plus`` for a batch; the i-th output restyles the i-th input."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        if weights is None:
            weights = self.draw_weights(rng)
        if len(weights.w) != self.n_transforms:
            raise ValueError(f"got {len(weights.w)} mixing weights for {self.n_transforms} transformations")
        out = None
        for coef, t in zip(weights.coefficients, self.transformations):
            term = apply_transformation(x, t, self.modulate).tanh() * float(coef)
            out = term if out is None else out + term
        return out, weights

    __call__ = generate


def generate(x, module: StyleComplementModule, rng=None) -> tuple[Tensor, MixWeights]:
    return module.generate(x, rng)


def reinit(module: StyleComplementModule, rng=None) -> None:
    module.reinit(rng)


def export_pnm(images: np.ndarray, directory, prefix: str = "xplus") -> list[Path]:
    """Write a (B, C, H, W) batch in [-1, 1] as binary PPM (C=3) or PGM (C=1) files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    images = np.asarray(images)
    pixels = np.round((np.clip(images, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)
    paths = []
    for i, img in enumerate(pixels):
        c, h, w = img.shape
        if c == 3:
            header, body, ext = b"P6", img.transpose(1, 2, 0).tobytes(), "ppm"
        elif c == 1:
            header, body, ext = b"P5", img[0].tobytes(), "pgm"
        else:
            raise ValueError(f"cannot export {c}-channel image as PNM")
        path = directory / f"{prefix}_{i:04d}.{ext}"
        path.write_bytes(header + f"\n{w} {h}\n255\n".encode() + body)
        paths.append(path)
    return paths


def generate_numpy(module: StyleComplementModule, x: np.ndarray, rng=None, weights=None) -> np.ndarray:
    with no_grad():
        out, _ = module.generate(Tensor(x), rng, weights)
    return out.data
