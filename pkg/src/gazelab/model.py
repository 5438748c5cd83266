"""Encoder / residual-decoder saliency network with a manual backward pass.

The encoder is a VGG-style stack of 3x3 conv + ReLU blocks, with 2x2 max
pooling after each of the first ``pool_count`` blocks.  Each decoder block
computes::

    f1 = relu(reduce(x))        # 3x3 conv, fewer channels
    f2 = relu(conv(f1))         # 3x3 conv, same channels
    x  = relu(deconv(f1 + f2))  # 2x2 stride-2 transposed conv

and a final 3x3 conv maps the last block's channels to one saliency value
per pixel, with no squashing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError, StateError
from .tensor import KernelSet

VGG16_BLOCKS = ((2, 64), (2, 128), (3, 256), (3, 512), (3, 512))


def default_channel_plan(k: int, blocks: int) -> tuple[int, ...]:
    """Halve the channel count in every decoder block but the last, which keeps it.

    For K=512 and four blocks this gives 256, 128, 64, 64.
    """
    plan = []
    ch = k
    for n in range(blocks):
        if n < blocks - 1 or blocks == 1:
            ch = max(ch // 2, 1)
        plan.append(ch)
    return tuple(plan)


@dataclass(frozen=True)
class NetworkConfig:
    input_h: int
    input_w: int
    encoder_blocks: tuple[tuple[int, int], ...]
    pool_count: int
    decoder_blocks: int | None = None
    decoder_channel_plan: tuple[int, ...] | None = None
    seed: int = 0
    in_channels: int = 3

    def __post_init__(self):
        blocks = tuple((int(n), int(c)) for n, c in self.encoder_blocks)
        object.__setattr__(self, "encoder_blocks", blocks)
        if self.decoder_blocks is None:
            object.__setattr__(self, "decoder_blocks", self.pool_count)
        if self.decoder_channel_plan is None and blocks:
            plan = default_channel_plan(blocks[-1][1], self.decoder_blocks)
            object.__setattr__(self, "decoder_channel_plan", plan)
        elif self.decoder_channel_plan is not None:
            object.__setattr__(self, "decoder_channel_plan", tuple(int(c) for c in self.decoder_channel_plan))
        self.validate()

    def validate(self) -> None:
        if not self.encoder_blocks:
            raise ConfigError("the encoder needs at least one block")
        if any(n < 1 or c < 1 for n, c in self.encoder_blocks):
            raise ConfigError(f"encoder blocks need positive conv and channel counts: {self.encoder_blocks}")
        if not 0 <= self.pool_count <= len(self.encoder_blocks):
            raise ConfigError(f"pool_count {self.pool_count} must be within 0..{len(self.encoder_blocks)}")
        if self.decoder_blocks != self.pool_count:
            raise ConfigError(
                f"decoder_blocks ({self.decoder_blocks}) must equal pool_count ({self.pool_count})"
            )
        if len(self.decoder_channel_plan) != self.decoder_blocks:
            raise ConfigError("decoder_channel_plan needs one entry per decoder block")
        if any(c < 1 for c in self.decoder_channel_plan):
            raise ConfigError("decoder channel counts must be positive")
        step = 2 ** self.pool_count
        if self.input_h < 1 or self.input_w < 1 or self.input_h % step or self.input_w % step:
            raise ConfigError(f"input {self.input_h}x{self.input_w} is not divisible by 2**{self.pool_count}")

    @property
    def feature_shape(self) -> tuple[int, int, int]:
        """Extents (M, N, K) of the encoder output."""
        step = 2 ** self.pool_count
        return self.input_h // step, self.input_w // step, self.encoder_blocks[-1][1]

    @classmethod
    def vgg16(cls, seed: int = 0) -> "NetworkConfig":
        """VGG16-shaped encoder on 240x320 inputs with four pooling stages."""
        return cls(240, 320, VGG16_BLOCKS, pool_count=4, seed=seed)

    @classmethod
    def toy(cls, size: int = 64, channels: Sequence[int] = (8, 16), seed: int = 0) -> "NetworkConfig":
        blocks = tuple((2, c) for c in channels)
        return cls(size, size, blocks, pool_count=len(blocks), seed=seed)


def layer_specs(config: NetworkConfig) -> list[tuple[str, tuple[int, int, int, int]]]:
    """Ordered (name, kernel shape) pairs for every parameterized layer."""
    specs = []
    cin = config.in_channels
    for b, (count, ch) in enumerate(config.encoder_blocks, start=1):
        for i in range(1, count + 1):
            specs.append((f"enc{b}_{i}", (3, 3, cin, ch)))
            cin = ch
    for n, ch in enumerate(config.decoder_channel_plan, start=1):
        specs.append((f"dec{n}_reduce", (3, 3, cin, ch)))
        specs.append((f"dec{n}_conv", (3, 3, ch, ch)))
        specs.append((f"dec{n}_deconv", (2, 2, ch, ch)))
        cin = ch
    specs.append(("head", (3, 3, cin, 1)))
    return specs


class Network:
    """Parameters of the saliency network, keyed by layer name.

    ``version`` changes whenever the parameters are updated in place, which
    lets :func:`backward` reject caches from an older parameter snapshot.
    """

    def __init__(self, config: NetworkConfig, params: dict[str, KernelSet]):
        expected = layer_specs(config)
        if [n for n, _ in expected] != list(params):
            raise ConfigError("parameter names do not match the configuration")
        for name, shape in expected:
            if params[name].shape != shape:
                raise ConfigError(f"{name}: kernel shape {params[name].shape} != {shape}")
        self.config = config
        self.params = params
        self.version = 0

    def touch(self) -> None:
        self.version += 1

    def copy(self) -> "Network":
        return Network(self.config, {k: v.copy() for k, v in self.params.items()})

    def n_parameters(self) -> int:
        return sum(p.weights.size + p.bias.size for p in self.params.values())

    def __repr__(self):
        return f"Network({self.config!r}, {self.n_parameters()} parameters)"


def build_network(config: NetworkConfig) -> Network:
    """He-initialized network: weights ~ N(0, 2 / fan_in), zero biases."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, (kh, kw, cin, cout) in layer_specs(config):
        # a 2x2 stride-2 deconv output pixel sees exactly one input site
        fan_in = cin if name.endswith("deconv") else kh * kw * cin
        weights = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(kh, kw, cin, cout))
        params[name] = KernelSet(weights, np.zeros(cout))
    return Network(config, params)


@dataclass
class ActivationCache:
    encoder_output: np.ndarray
    net_id: int
    version: int
    tape: list = field(default_factory=list, repr=False)


def _check_image(net: Network, image) -> np.ndarray:
    image = T.as_tensor(image)
    cfg = net.config
    want = (cfg.input_h, cfg.input_w, cfg.in_channels)
    if image.shape != want:
        raise ShapeError(f"image shape {image.shape} != configured {want}")
    return image


def _encode(net: Network, image, tape: list | None) -> np.ndarray:
    x = image
    cfg = net.config
    for b, (count, _) in enumerate(cfg.encoder_blocks, start=1):
        for i in range(1, count + 1):
            name = f"enc{b}_{i}"
            z = T.conv2d(x, net.params[name])
            if tape is not None:
                tape.append(("conv", name, x, z))
            x = T.relu(z)
        if b <= cfg.pool_count:
            x, idx = T.maxpool2d(x)
            if tape is not None:
                tape.append(("pool", idx))
    return x


def encoder_features(net: Network, image) -> np.ndarray:
    """The M x N x K encoder output for one image."""
    return _encode(net, _check_image(net, image), None)


def forward(net: Network, image, record: bool = True) -> tuple[np.ndarray, ActivationCache]:
    """Predict an h x w saliency map.

    With ``record=False`` the intermediates needed by :func:`backward` are
    dropped, which keeps memory flat for inference on large inputs.
    """
    image = _check_image(net, image)
    tape = [] if record else None
    feats = _encode(net, image, tape)
    x = feats
    p = net.params
    for n in range(1, net.config.decoder_blocks + 1):
        z1 = T.conv2d(x, p[f"dec{n}_reduce"])
        f1 = T.relu(z1)
        z2 = T.conv2d(f1, p[f"dec{n}_conv"])
        s = T.add(f1, T.relu(z2))
        z3 = T.deconv2d(s, p[f"dec{n}_deconv"])
        if tape is not None:
            tape.append(("block", n, x, z1, f1, z2, s, z3))
        x = T.relu(z3)
    if tape is not None:
        tape.append(("head", x))
    out = T.conv2d(x, p["head"])[..., 0]
    cache = ActivationCache(feats, id(net), net.version, tape if record else [])
    return out, cache


def backward(net: Network, cache: ActivationCache, grad_saliency, with_input: bool = False):
    """Exact parameter gradients for the forward pass recorded in ``cache``.

    Returns a dict of gradient KernelSets keyed like ``net.params``; with
    ``with_input=True`` also returns the gradient w.r.t. the input image.
    """
    if cache.net_id != id(net) or cache.version != net.version:
        raise StateError("activation cache is from a different network or parameter version")
    if not cache.tape:
        raise StateError("cache was produced with record=False")
    cfg = net.config
    g = T.as_tensor(grad_saliency)
    if g.shape != (cfg.input_h, cfg.input_w):
        raise ShapeError(f"grad shape {g.shape} != saliency shape {(cfg.input_h, cfg.input_w)}")
    p = net.params
    grads: dict[str, KernelSet] = {}
    g = g[..., None]
    for entry in reversed(cache.tape):
        kind = entry[0]
        if kind == "head":
            g, grads["head"] = T.conv2d_backward(entry[1], p["head"], g)
        elif kind == "block":
            _, n, x, z1, f1, z2, s, z3 = entry
            g = T.relu_backward(z3, g)
            g_s, grads[f"dec{n}_deconv"] = T.deconv2d_backward(s, p[f"dec{n}_deconv"], g)
            g_f1, grads[f"dec{n}_conv"] = T.conv2d_backward(f1, p[f"dec{n}_conv"], T.relu_backward(z2, g_s))
            g_z1 = T.relu_backward(z1, g_f1 + g_s)
            g, grads[f"dec{n}_reduce"] = T.conv2d_backward(x, p[f"dec{n}_reduce"], g_z1)
        elif kind == "pool":
            g = T.maxpool2d_backward(g, entry[1])
        else:
            _, name, x, z = entry
            g, grads[name] = T.conv2d_backward(x, p[name], T.relu_backward(z, g))
    grads = {name: grads[name] for name in p}
    if with_input:
        return grads, g
    return grads
