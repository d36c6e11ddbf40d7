"""Latent code generator and cube generator.

The cube generator maps a latent z of shape (J, 2^L, 2^L, 2^L) to occupancy
probabilities at (2^N)^3, (2^{N-1})^3 and (2^{N-2})^3 through N - L
transposed-convolution doublings (kernel 4, stride 2, padding 1):

    stage i < S-2 : convT -> ReLU -> 3^3 conv      (S = N - L stages)
    stage S-2     : convT
    stage S-1     : convT to one channel -> sigmoid = P1
    P3 / P2       : 1x1x1 conv + sigmoid on the pre-activation maps of
                    stages S-3 / S-2

Every cube-generator weight is w = p + y, where p is a fixed Kaiming-normal
draw from :data:`INIT_SEED` and y is the coded residual, zero at start.
The latent code generator (1x1x1 conv + GDN) only shapes the latents during
encoding and is never transmitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .prng import SplitMix64
from .rate_model import round_half_away

INIT_SEED = 0x4E564650  # b"NVFP"
GDN_FLOOR = 1e-6
DECODE_BATCH = 8


@dataclass(frozen=True)
class Architecture:
    N: int = 5
    L: int = 1
    J: int = 4
    widths: tuple = (24, 24, 12)

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if not 0 <= self.L < self.N:
            raise ValueError("need 0 <= L < N")
        if self.N - self.L < 3:
            raise ValueError("need N - L >= 3 to produce three output scales")
        if len(self.widths) != self.N - self.L - 1:
            raise ValueError(f"expected {self.N - self.L - 1} widths, got {len(self.widths)}")
        if self.J < 1 or any(w < 1 for w in self.widths):
            raise ValueError("channel counts must be positive")

    @property
    def stages(self) -> int:
        return self.N - self.L

    @property
    def latent_shape(self) -> tuple:
        s = 1 << self.L
        return (self.J, s, s, s)

    @property
    def latent_size(self) -> int:
        return int(np.prod(self.latent_shape))


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str  # "convT" | "conv" | "head"
    cin: int
    cout: int
    k: int
    stride: int
    padding: int

    def weight_shape(self):
        if self.kind == "convT":
            return (self.cin, self.cout, self.k, self.k, self.k)
        return (self.cout, self.cin, self.k, self.k, self.k)

    @property
    def fan_in(self) -> float:
        # a transposed conv output sees cin * (k / stride)^3 inputs
        return self.cin * self.k ** 3 / (self.stride ** 3 if self.kind == "convT" else 1)


def layer_specs(arch: Architecture) -> list[LayerSpec]:
    S = arch.stages
    specs = []
    c = arch.J
    for i in range(S - 1):
        w = arch.widths[i]
        specs.append(LayerSpec(f"up{i}", "convT", c, w, 4, 2, 1))
        if i < S - 2:
            specs.append(LayerSpec(f"refine{i}", "conv", w, w, 3, 1, 1))
        if i == S - 3:
            specs.append(LayerSpec("head3", "head", w, 1, 1, 1, 0))
        if i == S - 2:
            specs.append(LayerSpec("head2", "head", w, 1, 1, 1, 0))
        c = w
    specs.append(LayerSpec(f"up{S - 1}", "convT", c, 1, 4, 2, 1))
    return specs


def param_names(arch: Architecture) -> list[str]:
    """Coded parameter order: layer order, weight before bias."""
    out = []
    for s in layer_specs(arch):
        out += [f"{s.name}.w", f"{s.name}.b"]
    return out


def param_shapes(arch: Architecture) -> dict:
    shapes = {}
    for s in layer_specs(arch):
        shapes[f"{s.name}.w"] = s.weight_shape()
        shapes[f"{s.name}.b"] = (s.cout,)
    return shapes


def num_coded_params(arch: Architecture) -> int:
    return int(sum(np.prod(v) for v in param_shapes(arch).values()))


def kaiming_init(arch: Architecture, seed: int = INIT_SEED) -> dict:
    """Kaiming-normal weights (std sqrt(2 / fan_in)) and zero biases, drawn in coded order."""
    rng = SplitMix64(seed)
    out = {}
    for s in layer_specs(arch):
        std = math.sqrt(2.0 / s.fan_in)
        out[f"{s.name}.w"] = rng.normal(s.weight_shape()) * std
        out[f"{s.name}.b"] = np.zeros(s.cout)
    return out


def _inv_softplus(x):
    return float(np.log(np.expm1(x)))


class NeuralFieldParams:
    """Fixed offsets p, coded residuals y, and the untransmitted latent-generator weights.

    With ``init_separation=False`` the offsets are zero and y starts at the
    Kaiming draw, i.e. the weights themselves are coded.
    """

    def __init__(self, arch: Architecture, seed: int = 0, init_separation: bool = True):
        self.arch = arch
        self.init_separation = init_separation
        init = kaiming_init(arch)
        names = param_names(arch)
        if init_separation:
            self.p = init
            self.y = {n: Tensor(np.zeros_like(init[n]), requires_grad=True, name=n) for n in names}
        else:
            self.p = {n: np.zeros_like(init[n]) for n in names}
            self.y = {n: Tensor(init[n].copy(), requires_grad=True, name=n) for n in names}

        J = arch.J
        rng = SplitMix64(seed).split()
        self.lg_w = Tensor(rng.normal((J, J, 1, 1, 1)) * math.sqrt(2.0 / J), requires_grad=True,
                           name="latent.conv.w")
        self.lg_b = Tensor(np.zeros(J), requires_grad=True, name="latent.conv.b")
        self.gdn_beta = Tensor(np.full(J, _inv_softplus(1.0)), requires_grad=True,
                               name="latent.gdn.beta")
        gamma = np.full((J, J), _inv_softplus(1e-4))
        np.fill_diagonal(gamma, _inv_softplus(0.1))
        self.gdn_gamma = Tensor(gamma, requires_grad=True, name="latent.gdn.gamma")

    @property
    def latent_gen_params(self) -> list[Tensor]:
        return [self.lg_w, self.lg_b, self.gdn_beta, self.gdn_gamma]

    def coded_parameter_set(self) -> list[Tensor]:
        return [self.y[n] for n in param_names(self.arch)]

    def flat_y(self) -> np.ndarray:
        return np.concatenate([t.data.reshape(-1) for t in self.coded_parameter_set()])

    def effective_weights(self, noise_rng: SplitMix64 | None = None, delta: float = 0.0) -> dict:
        """w = p + y as graph tensors; optionally y + U(-delta/2, delta/2)."""
        out = {}
        for n in param_names(self.arch):
            y = self.y[n]
            if noise_rng is not None:
                y = ad.add_uniform_noise(y, delta, noise_rng)
            out[n] = ad.add(y, self.p[n])
        return out


def weights_from_y(arch: Architecture, y_flat: np.ndarray, init_separation: bool = True) -> dict:
    """Decoder-side weights: p + y from a flat coded vector (already dequantized)."""
    init = kaiming_init(arch) if init_separation else None
    out = {}
    pos = 0
    for n, shape in param_shapes(arch).items():
        size = int(np.prod(shape))
        y = np.asarray(y_flat[pos:pos + size], dtype=np.float64).reshape(shape)
        out[n] = (init[n] + y) if init_separation else y.copy()
        pos += size
    if pos != len(y_flat):
        raise ValueError(f"expected {pos} coded parameters, got {len(y_flat)}")
    return out


def unflatten_y(arch: Architecture, y_flat: np.ndarray) -> dict:
    out = {}
    pos = 0
    for n, shape in param_shapes(arch).items():
        size = int(np.prod(shape))
        out[n] = np.asarray(y_flat[pos:pos + size]).reshape(shape)
        pos += size
    return out


def latent_code_generator(v: Tensor, params: NeuralFieldParams, mode: str = "train",
                          rng: SplitMix64 | None = None, delta: float = 1.0):
    """z = GDN(conv1x1(v)); plus U(-1/2, 1/2) noise in train mode, rounded in export mode.

    Export mode returns an integer-valued numpy array (no graph).
    """
    if v.shape[1:] != params.arch.latent_shape:
        raise ValueError(f"latent input shape {v.shape[1:]} != {params.arch.latent_shape}")
    h = ad.conv3d(v, params.lg_w, params.lg_b)
    beta = ad.add(ad.softplus(params.gdn_beta), GDN_FLOOR)
    gamma = ad.add(ad.softplus(params.gdn_gamma), GDN_FLOOR)
    z = ad.gdn3d(h, beta, gamma)
    if mode == "export":
        return round_half_away(z.data / delta) * delta
    if mode == "clean":
        return z
    if mode != "train":
        raise ValueError(mode)
    if rng is None:
        raise ValueError("train mode needs a noise generator")
    return ad.add_uniform_noise(z, delta, rng)


def cube_generator(z: Tensor, w: dict, arch: Architecture, heads: bool = True):
    """(P1, P2, P3) probability tensors of shape (B, 1, s, s, s); P2/P3 are None if not heads."""
    if z.shape[1:] != arch.latent_shape:
        raise ValueError(f"latent shape {z.shape[1:]} != {arch.latent_shape}")
    wt = {n: (t if isinstance(t, Tensor) else Tensor(t)) for n, t in w.items()}
    S = arch.stages
    h = z
    P2 = P3 = None
    for i in range(S - 1):
        pre = ad.conv_transpose3d(h, wt[f"up{i}.w"], wt[f"up{i}.b"], stride=2, padding=1)
        if i < S - 2:
            pre = ad.conv3d(ad.relu(pre), wt[f"refine{i}.w"], wt[f"refine{i}.b"], padding=1)
        if heads and i == S - 3:
            P3 = ad.sigmoid(ad.conv3d(pre, wt["head3.w"], wt["head3.b"]))
        if heads and i == S - 2:
            P2 = ad.sigmoid(ad.conv3d(pre, wt["head2.w"], wt["head2.b"]))
        h = ad.relu(pre)
    logits = ad.conv_transpose3d(h, wt[f"up{S - 1}.w"], wt[f"up{S - 1}.b"], stride=2, padding=1)
    return ad.sigmoid(logits), P2, P3


def generate_occupancy(w: dict, z: np.ndarray, arch: Architecture) -> np.ndarray:
    """P1 for every cube, shape (K, s, s, s), from plain arrays only.

    Cubes are processed in fixed chunks of DECODE_BATCH in cube order, so the
    encoder and the decoder run bit-identical arithmetic.
    """
    z = np.asarray(z, dtype=np.float64)
    side = 1 << arch.N
    out = np.empty((len(z), side, side, side))
    for s in range(0, len(z), DECODE_BATCH):
        P1, _, _ = cube_generator(Tensor(z[s:s + DECODE_BATCH]), w, arch, heads=False)
        out[s:s + DECODE_BATCH] = P1.data[:, 0]
    return out
