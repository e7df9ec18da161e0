"""KPAC deblurring network: layer plan, weight store and forward pass.

The encoder / KPAC / decoder layout follows the published architecture
tables. ``width`` is the first-level channel count (48 in the full model);
deeper levels and the KPAC blocks use ``2 * width``. Shrinking ``width`` and
the attention widths gives toy networks with the same topology.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, ShapeMismatchError
from .graph import Graph, Var

__all__ = [
    "NetworkConfig",
    "NetworkWeights",
    "LayerSpec",
    "layer_plan",
    "build_network",
    "kpac_block",
    "net_forward",
    "forward_graph",
    "branch_taps",
    "param_count",
    "flops_estimate",
]


@dataclass(frozen=True)
class NetworkConfig:
    levels: int = 3
    blocks: int = 2
    k: int = 5
    n: int = 5
    width: int = 48
    attn_widths: tuple = (32, 32, 16, 16)
    attn_k: int = 5
    attn_dilation: int = 2
    shape_hidden: int = 16
    share_weights: bool = True
    in_channels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "attn_widths", tuple(int(a) for a in self.attn_widths))
        if self.levels not in (2, 3):
            raise ConfigError(f"levels must be 2 or 3, got {self.levels}")
        if self.blocks < 1 or self.k < 1 or self.n < 1 or self.width < 1:
            raise ConfigError("blocks, k, n and width must be positive")
        if self.attn_k < 1 or self.attn_dilation < 1 or self.shape_hidden < 1:
            raise ConfigError("attention sizes must be positive")
        if any(a < 1 for a in self.attn_widths):
            raise ConfigError("attention widths must be positive")

    @property
    def kpac_channels(self) -> int:
        return 2 * self.width

    @property
    def divisor(self) -> int:
        return 2**self.levels

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attn_widths"] = list(self.attn_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(**d)


@dataclass(frozen=True)
class LayerSpec:
    """One parametrized layer. ``kind`` is ``conv``, ``deconv`` or ``dense``.

    ``scale`` is the layer's output resolution as a fraction of the input
    (``1``, ``1/2``, ...), used for FLOP counting.
    """

    name: str
    kind: str
    shape: tuple
    stride: int = 1
    dilation: int = 1
    scale: float = 1.0
    uses: int = 1


def _kpac_plan(prefix: str, cfg: NetworkConfig, scale: float) -> list:
    c = cfg.kpac_channels
    half = c // 2
    plan = []
    if cfg.share_weights:
        plan.append(LayerSpec(f"{prefix}.atrous", "conv", (cfg.k, cfg.k, c, half), scale=scale, uses=cfg.n))
    else:
        for i in range(1, cfg.n + 1):
            plan.append(LayerSpec(f"{prefix}.atrous{i}", "conv", (cfg.k, cfg.k, c, half), dilation=i,
                                  scale=scale))
    cin = c
    for j, a in enumerate(cfg.attn_widths, start=1):
        plan.append(LayerSpec(f"{prefix}.scale{j}", "conv", (cfg.attn_k, cfg.attn_k, cin, a),
                              dilation=cfg.attn_dilation, scale=scale))
        cin = a
    plan.append(LayerSpec(f"{prefix}.scale_out", "conv", (cfg.attn_k, cfg.attn_k, cin, cfg.n), scale=scale))
    plan.append(LayerSpec(f"{prefix}.shape_fc1", "dense", (c, cfg.shape_hidden), scale=0.0))
    plan.append(LayerSpec(f"{prefix}.shape_fc2", "dense", (cfg.shape_hidden, half), scale=0.0))
    plan.append(LayerSpec(f"{prefix}.fuse", "conv", (3, 3, cfg.n * half, c), scale=scale))
    return plan


def layer_plan(cfg: NetworkConfig) -> list:
    """Every parametrized layer of the network, in construction order."""
    w, w2 = cfg.width, 2 * cfg.width
    bottom = 1.0 / cfg.divisor
    plan = [
        LayerSpec("conv1_1", "conv", (5, 5, cfg.in_channels, w)),
        LayerSpec("conv1_2", "conv", (3, 3, w, w)),
        LayerSpec("conv2_1", "conv", (3, 3, w, w), stride=2, scale=1 / 2),
        LayerSpec("conv2_2", "conv", (3, 3, w, w), scale=1 / 2),
        LayerSpec("conv3_1", "conv", (3, 3, w, w2), stride=2, scale=1 / 4),
        LayerSpec("conv3_2", "conv", (3, 3, w2, w2), scale=1 / 4),
    ]
    if cfg.levels == 3:
        plan += [
            LayerSpec("conv4_1", "conv", (3, 3, w2, w2), stride=2, scale=1 / 8),
            LayerSpec("conv4_2", "conv", (3, 3, w2, w2), scale=1 / 8),
        ]
    for b in range(1, cfg.blocks + 1):
        plan += _kpac_plan(f"kpac{b}", cfg, bottom)
    plan += [
        LayerSpec("conv5_1", "conv", (3, 3, w2 * (cfg.blocks + 1), w2), scale=bottom),
        LayerSpec("conv5_2", "conv", (3, 3, w2, w2), scale=bottom),
    ]
    if cfg.levels == 3:
        plan += [
            LayerSpec("deconv1", "deconv", (4, 4, w2, w2), stride=2, scale=1 / 4),
            LayerSpec("conv6", "conv", (3, 3, 2 * w2, w2), scale=1 / 4),
        ]
    plan += [
        LayerSpec("deconv2", "deconv", (4, 4, w2, w), stride=2, scale=1 / 2),
        LayerSpec("conv7", "conv", (3, 3, 2 * w, w), scale=1 / 2),
        LayerSpec("deconv3", "deconv", (4, 4, w, w), stride=2, scale=1.0),
        LayerSpec("conv8", "conv", (5, 5, 2 * w, cfg.in_channels)),
    ]
    return plan


@dataclass(eq=False)
class NetworkWeights:
    """Named parameters plus Adam state.

    Tap arrays are ``name + ".w"``, biases ``name + ".b"``. Arrays are
    updated in place; their shapes never change.
    """

    params: dict
    config: NetworkConfig | None = None
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    def __getitem__(self, name):
        return self.params[name]

    def names(self) -> list:
        return list(self.params)

    def copy(self) -> "NetworkWeights":
        return NetworkWeights({k: a.copy() for k, a in self.params.items()}, self.config,
                              {k: a.copy() for k, a in self.m.items()},
                              {k: a.copy() for k, a in self.v.items()}, self.step)


def _fan_in(spec: LayerSpec) -> int:
    if spec.kind == "dense":
        return spec.shape[0]
    kh, kw, ci, _ = spec.shape
    return kh * kw * ci


def build_network(cfg: NetworkConfig | None = None, seed: int = 0) -> NetworkWeights:
    """Allocate and initialize all parameters.

    Taps are drawn uniformly from ``+-sqrt(6 / fan_in)``; biases start at zero.
    """
    cfg = cfg or NetworkConfig()
    rng = np.random.default_rng(seed)
    params = {}
    for spec in layer_plan(cfg):
        bound = np.sqrt(6.0 / _fan_in(spec))
        params[f"{spec.name}.w"] = rng.uniform(-bound, bound, size=spec.shape)
        params[f"{spec.name}.b"] = np.zeros(spec.shape[-1])
    return NetworkWeights(params, cfg)


def branch_taps(w: NetworkWeights, block: int, i: int) -> np.ndarray:
    """The tap array read by atrous branch ``i`` (1-based) of KPAC block ``block``."""
    if w.config.share_weights:
        return w[f"kpac{block}.atrous.w"]
    return w[f"kpac{block}.atrous{i}.w"]


def _conv(g: Graph, w: NetworkWeights, x: Var, name: str, stride=1, dilation=1, act=True) -> Var:
    y = g.conv2d(x, g.param(f"{name}.w", w[f"{name}.w"]), g.param(f"{name}.b", w[f"{name}.b"]),
                 stride=stride, dilation=dilation)
    return g.leaky_relu(y) if act else y


def _deconv(g: Graph, w: NetworkWeights, x: Var, name: str) -> Var:
    y = g.conv_transpose2d(x, g.param(f"{name}.w", w[f"{name}.w"]), g.param(f"{name}.b", w[f"{name}.b"]))
    return g.leaky_relu(y)


def kpac_block(g: Graph, w: NetworkWeights, h1: Var, prefix: str, cfg: NetworkConfig) -> Var:
    """One KPAC block.

    ``n`` atrous branches with dilation 1..n read the same taps; each branch
    is weighted by its per-pixel scale map and by the shared channel vector
    from the shape attention, then the branches are concatenated and fused.
    """
    n, c = h1.shape[0], h1.shape[-1]
    half = c // 2
    a = h1
    for j in range(1, len(cfg.attn_widths) + 1):
        a = _conv(g, w, a, f"{prefix}.scale{j}", dilation=cfg.attn_dilation)
    alpha = g.sigmoid(_conv(g, w, a, f"{prefix}.scale_out", act=False))

    p = g.global_avg_pool(h1)
    f = g.leaky_relu(g.dense(p, g.param(f"{prefix}.shape_fc1.w", w[f"{prefix}.shape_fc1.w"]),
                             g.param(f"{prefix}.shape_fc1.b", w[f"{prefix}.shape_fc1.b"])))
    beta = g.sigmoid(g.dense(f, g.param(f"{prefix}.shape_fc2.w", w[f"{prefix}.shape_fc2.w"]),
                             g.param(f"{prefix}.shape_fc2.b", w[f"{prefix}.shape_fc2.b"])))
    beta = g.reshape(beta, (n, 1, 1, half))

    branches = []
    for i in range(1, cfg.n + 1):
        name = f"{prefix}.atrous" if cfg.share_weights else f"{prefix}.atrous{i}"
        br = _conv(g, w, h1, name, dilation=i)
        branches.append(g.mul(g.channel(alpha, i - 1), g.mul(beta, br)))
    return _conv(g, w, g.concat(branches), f"{prefix}.fuse")


def forward_graph(x, w: NetworkWeights, record: bool = True) -> tuple:
    """Run the network, returning ``(output Var, graph)``."""
    cfg = w.config
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[-1] != cfg.in_channels:
        raise ShapeMismatchError(f"expected N x H x W x {cfg.in_channels} input, got {x.shape}")
    if x.shape[1] % cfg.divisor or x.shape[2] % cfg.divisor:
        raise ShapeMismatchError(f"spatial dims {x.shape[1:3]} must be divisible by {cfg.divisor}")
    g = Graph(record=record)
    inp = g.const(x)
    c11 = _conv(g, w, inp, "conv1_1")
    c12 = _conv(g, w, c11, "conv1_2")
    c22 = _conv(g, w, _conv(g, w, c12, "conv2_1", stride=2), "conv2_2")
    c32 = _conv(g, w, _conv(g, w, c22, "conv3_1", stride=2), "conv3_2")
    feat = c32
    if cfg.levels == 3:
        feat = _conv(g, w, _conv(g, w, c32, "conv4_1", stride=2), "conv4_2")
    skips = [feat]
    h = feat
    for b in range(1, cfg.blocks + 1):
        h = kpac_block(g, w, h, f"kpac{b}", cfg)
        skips.append(h)
    h = _conv(g, w, _conv(g, w, g.concat(skips), "conv5_1"), "conv5_2")
    if cfg.levels == 3:
        h = _conv(g, w, g.concat([_deconv(g, w, h, "deconv1"), c32]), "conv6")
    h = _conv(g, w, g.concat([_deconv(g, w, h, "deconv2"), c22]), "conv7")
    h = _conv(g, w, g.concat([_deconv(g, w, h, "deconv3"), c12]), "conv8", act=False)
    return g.add(h, inp), g


def net_forward(x, w: NetworkWeights) -> np.ndarray:
    """Deblur an ``N x H x W x 3`` batch; ``H`` and ``W`` must divide by ``2**levels``."""
    out, _ = forward_graph(x, w, record=False)
    return out.value


def param_count(w) -> int:
    """Exact number of tap and bias elements."""
    if isinstance(w, NetworkConfig):
        return sum(int(np.prod(s.shape)) + s.shape[-1] for s in layer_plan(w))
    return int(sum(a.size for a in w.params.values()))


def flops_estimate(cfg: NetworkConfig, h: int, w: int) -> int:
    """``2 * MACs`` of every convolution and dense layer at an ``h x w`` input.

    Activations, pooling, attention products and concatenations are not
    counted. A transposed convolution costs its taps once per input pixel.
    """
    pixels = h * w
    total = 0
    for spec in layer_plan(cfg):
        if spec.kind == "dense":
            macs = spec.shape[0] * spec.shape[1]
        else:
            kh, kw, ci, co = spec.shape
            if spec.kind == "deconv":
                in_pixels = pixels * spec.scale**2 / spec.stride**2
                macs = kh * kw * ci * co * in_pixels
            else:
                macs = kh * kw * ci * co * pixels * spec.scale**2 * spec.uses
        total += 2 * macs
    return int(round(total))
