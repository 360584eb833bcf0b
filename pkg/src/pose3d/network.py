"""Network assembly: architecture config, parameter store, forward/backward,
and the versioned weights file format.

The stock architecture is five 3D conv layers with PReLU activations,
2x2 spatial max pooling after convs 1, 2 and 5, then a flatten and a single
dense head regressing all joint coordinates for the whole input window:

    input [3, 5, 128, 128]
    C1 (3x5x5) -> 3x124x124   P1 -> 3x62x62
    C2 (2x5x5) -> 2x58x58     P2 -> 2x29x29
    C3 (1x5x5) -> 2x25x25
    C4 (1x3x3) -> 2x23x23
    C5 (1x3x3) -> 2x21x21     P5 -> 2x11x11
    flatten 9680 -> dense 255   (5 frames x 17 joints x 3 coords)

Channel counts per conv are configurable; the stock config pins the flatten
width to 9680, which forces the last conv to 40 channels.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import (
    ConfigError,
    ShapeError,
    WeightsFormatError,
    WeightsShapeError,
    WeightsTruncatedError,
)
from .layers import (
    ArgmaxIndices,
    Conv3dLayer,
    DenseLayer,
    MaxPoolLayer,
    PReluLayer,
    flatten,
)
from .rng import RngState
from .tensor import Tensor

DEFAULT_CHANNEL_PLAN = (16, 24, 32, 40, 40)
DEFAULT_KERNEL_PLAN = ((3, 5, 5), (2, 5, 5), (1, 5, 5), (1, 3, 3), (1, 3, 3))
DEFAULT_POOL_AFTER = (1, 2, 5)  # 1-based conv indices followed by pooling

_MAGIC = b"P3DW"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ArchitectureConfig:
    """Structural description of the network.

    `expected_flatten`, when set, is a hard invariant: the computed flatten
    width must equal it or the config is rejected. The stock value 9680
    pins channel_plan[-1] to 40.
    """

    channel_plan: tuple[int, ...] = DEFAULT_CHANNEL_PLAN
    kernel_plan: tuple[tuple[int, int, int], ...] = DEFAULT_KERNEL_PLAN
    pool_after: tuple[int, ...] = DEFAULT_POOL_AFTER
    input_channels: int = 3
    input_frames: int = 5
    input_size: int = 128
    output_frames: int = 5
    joints: int = 17
    expected_flatten: int | None = 9680

    @property
    def input_shape(self) -> tuple[int, int, int, int]:
        return (self.input_channels, self.input_frames, self.input_size, self.input_size)

    @property
    def head_out(self) -> int:
        return self.output_frames * self.joints * 3

    def stage_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """(stage name, shape) for every stage from input to output.

        Raises ConfigError if any intermediate extent collapses below the
        next kernel, or if the flatten width breaks `expected_flatten`.
        """
        if len(self.channel_plan) != len(self.kernel_plan):
            raise ConfigError("channel_plan and kernel_plan must have the same length")
        stages: list[tuple[str, tuple[int, ...]]] = [("input", self.input_shape)]
        c, t, h, w = self.input_shape
        for i, ((kt, kh, kw), out_c) in enumerate(zip(self.kernel_plan, self.channel_plan), start=1):
            if t < kt or h < kh or w < kw:
                raise ConfigError(
                    f"conv{i} kernel ({kt},{kh},{kw}) does not fit activation {t}x{h}x{w}")
            t, h, w = t - kt + 1, h - kh + 1, w - kw + 1
            c = out_c
            stages.append((f"conv{i}", (c, t, h, w)))
            if i in self.pool_after:
                h, w = -(-h // 2), -(-w // 2)
                stages.append((f"pool{i}", (c, t, h, w)))
        flat = c * t * h * w
        if self.expected_flatten is not None and flat != self.expected_flatten:
            raise ConfigError(
                f"flatten width {flat} (= {c}*{t}*{h}*{w}) != required {self.expected_flatten}; "
                "adjust channel_plan or expected_flatten")
        stages.append(("flatten", (flat,)))
        stages.append(("head", (self.head_out,)))
        return stages

    def flatten_size(self) -> int:
        return self.stage_shapes()[-2][1][0]

    @classmethod
    def reduced(cls) -> "ArchitectureConfig":
        """Desk-scale twin of the stock topology (same layer sequence, small
        extents) used for full-network gradient checks and overfit runs."""
        return cls(
            channel_plan=(4, 4, 6, 6, 8),
            kernel_plan=((3, 3, 3), (2, 3, 3), (1, 2, 2), (1, 1, 1), (1, 1, 1)),
            input_size=12,
            expected_flatten=None,
        )

    def to_dict(self) -> dict:
        return {
            "channel_plan": list(self.channel_plan),
            "kernel_plan": [list(k) for k in self.kernel_plan],
            "pool_after": list(self.pool_after),
            "input_channels": self.input_channels,
            "input_frames": self.input_frames,
            "input_size": self.input_size,
            "output_frames": self.output_frames,
            "joints": self.joints,
            "expected_flatten": self.expected_flatten,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ArchitectureConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown architecture keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "channel_plan" in kwargs:
            kwargs["channel_plan"] = tuple(int(x) for x in kwargs["channel_plan"])
        if "kernel_plan" in kwargs:
            kwargs["kernel_plan"] = tuple(tuple(int(x) for x in k) for k in kwargs["kernel_plan"])
        if "pool_after" in kwargs:
            kwargs["pool_after"] = tuple(int(x) for x in kwargs["pool_after"])
        return cls(**kwargs)


@dataclass
class NetworkParams:
    """Ordered, named parameter tensors plus the config that shaped them.

    Entry order is fixed: conv{i}.kernel, conv{i}.bias for i = 1..5, then
    prelu{i}.slope for i = 1..5, then head.weights, head.bias. Serialization
    and optimizers rely on this order.
    """

    cfg: ArchitectureConfig
    tensors: dict[str, Tensor]

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.tensors.values())).dtype

    def names(self) -> list[str]:
        return list(self.tensors)

    def parameter_count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def replace_tensors(self, updates: Mapping[str, Tensor]) -> "NetworkParams":
        unknown = set(updates) - set(self.tensors)
        if unknown:
            raise ShapeError(f"unknown parameter names: {sorted(unknown)}")
        for name, t in updates.items():
            if t.shape != self.tensors[name].shape:
                raise ShapeError(
                    f"replacement for {name} has shape {t.shape}, expected {self.tensors[name].shape}")
        merged = {name: updates.get(name, t) for name, t in self.tensors.items()}
        return NetworkParams(cfg=self.cfg, tensors=merged)

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams(cfg=self.cfg, tensors={n: t.astype(dtype) for n, t in self.tensors.items()})


def expected_entry_shapes(cfg: ArchitectureConfig) -> dict[str, tuple[int, ...]]:
    """Parameter name -> shape for a config, in canonical entry order."""
    shapes: dict[str, tuple[int, ...]] = {}
    in_c = cfg.input_channels
    for i, ((kt, kh, kw), out_c) in enumerate(zip(cfg.kernel_plan, cfg.channel_plan), start=1):
        shapes[f"conv{i}.kernel"] = (out_c, in_c, kt, kh, kw)
        shapes[f"conv{i}.bias"] = (out_c,)
        in_c = out_c
    for i, out_c in enumerate(cfg.channel_plan, start=1):
        shapes[f"prelu{i}.slope"] = (out_c,)
    shapes["head.weights"] = (cfg.head_out, cfg.flatten_size())
    shapes["head.bias"] = (cfg.head_out,)
    return shapes


def build_network(cfg: ArchitectureConfig, rng: RngState, dtype=np.float32,
                  prelu_init: float = 0.01) -> NetworkParams:
    """Fresh parameters: Xavier weights, zero conv biases, PReLU slopes at 0.01.

    Deterministic given the rng state; the same seed yields identical bytes.
    """
    cfg.stage_shapes()  # validate before allocating anything
    tensors: dict[str, Tensor] = {}
    in_c = cfg.input_channels
    for i, ((kt, kh, kw), out_c) in enumerate(zip(cfg.kernel_plan, cfg.channel_plan), start=1):
        conv = Conv3dLayer.initialize(out_c, in_c, kt, kh, kw, rng, dtype=dtype)
        tensors[f"conv{i}.kernel"] = conv.kernel
        tensors[f"conv{i}.bias"] = conv.bias
        in_c = out_c
    for i, out_c in enumerate(cfg.channel_plan, start=1):
        tensors[f"prelu{i}.slope"] = PReluLayer.initialize(out_c, prelu_init, dtype=dtype).slope
    head = DenseLayer.initialize(cfg.head_out, cfg.flatten_size(), rng, dtype=dtype)
    tensors["head.weights"] = head.weights
    tensors["head.bias"] = head.bias
    return NetworkParams(cfg=cfg, tensors=tensors)


@dataclass
class ForwardTrace:
    """Everything backward() needs from a forward pass, plus per-stage
    activations for structural tests."""

    x: Tensor
    activations: dict[str, Tensor]
    pool_indices: dict[int, ArgmaxIndices]
    flat_shape: tuple[int, ...]
    output: Tensor


def _layers_of(params: NetworkParams):
    cfg = params.cfg
    t = params.tensors
    convs = [Conv3dLayer(t[f"conv{i}.kernel"], t[f"conv{i}.bias"])
             for i in range(1, len(cfg.channel_plan) + 1)]
    prelus = [PReluLayer(t[f"prelu{i}.slope"]) for i in range(1, len(cfg.channel_plan) + 1)]
    head = DenseLayer(t["head.weights"], t["head.bias"])
    return convs, prelus, head


def forward(params: NetworkParams, x: Tensor) -> tuple[Tensor, ForwardTrace]:
    """Run the full stack on one input clip tensor.

    x must match the config input shape exactly. Returns the rank-1 output
    (head_out values) and the trace consumed by backward().
    """
    cfg = params.cfg
    if x.shape != cfg.input_shape:
        raise ShapeError(f"input shape {x.shape} != configured {cfg.input_shape}")
    if x.dtype != params.dtype:
        raise ShapeError(f"input dtype {x.dtype} != parameter dtype {params.dtype}")
    convs, prelus, head = _layers_of(params)
    pool = MaxPoolLayer()

    acts: dict[str, Tensor] = {}
    pool_idx: dict[int, ArgmaxIndices] = {}
    h = x
    for i, (conv, prelu) in enumerate(zip(convs, prelus), start=1):
        h = conv.forward(h)
        acts[f"conv{i}"] = h
        h = prelu.forward(h)
        acts[f"prelu{i}"] = h
        if i in cfg.pool_after:
            h, idx = pool.forward(h)
            acts[f"pool{i}"] = h
            pool_idx[i] = idx
    flat_shape = h.shape
    h = flatten(h)
    acts["flatten"] = h
    out = head.forward(h)
    acts["head"] = out
    return out, ForwardTrace(x=x, activations=acts, pool_indices=pool_idx,
                             flat_shape=flat_shape, output=out)


def backward(params: NetworkParams, trace: ForwardTrace, grad_out: Tensor) -> dict[str, Tensor]:
    """Chain rule through the full stack; returns gradients keyed like the
    parameter tensors."""
    cfg = params.cfg
    if grad_out.shape != (cfg.head_out,):
        raise ShapeError(f"grad_out shape {grad_out.shape} != ({cfg.head_out},)")
    if "flatten" not in trace.activations:
        raise ShapeError("trace does not match this network")
    convs, prelus, head = _layers_of(params)
    pool = MaxPoolLayer()
    grads: dict[str, Tensor] = {}

    hg = head.backward(trace.activations["flatten"], grad_out)
    grads["head.weights"] = hg.params["weights"]
    grads["head.bias"] = hg.params["bias"]
    g = hg.grad_input.reshape(trace.flat_shape)

    n = len(cfg.channel_plan)
    for i in range(n, 0, -1):
        if i in cfg.pool_after:
            g = pool.backward(trace.pool_indices[i], g)
        prelu_in = trace.activations[f"conv{i}"]
        pg = prelus[i - 1].backward(prelu_in, g)
        grads[f"prelu{i}.slope"] = pg.params["slope"]
        g = pg.grad_input
        conv_in = trace.x if i == 1 else _pool_or_prelu_output(trace, cfg, i - 1)
        cg = convs[i - 1].backward(conv_in, g)
        grads[f"conv{i}.kernel"] = cg.params["kernel"]
        grads[f"conv{i}.bias"] = cg.params["bias"]
        g = cg.grad_input
    return {name: grads[name] for name in params.tensors}


def _pool_or_prelu_output(trace: ForwardTrace, cfg: ArchitectureConfig, i: int) -> Tensor:
    """Output of stage i (after pooling if conv i is pooled)."""
    if i in cfg.pool_after:
        return trace.activations[f"pool{i}"]
    return trace.activations[f"prelu{i}"]


# -- weights file -------------------------------------------------------------
#
# Layout: 4-byte magic "P3DW", 1-byte format version, 8-byte little-endian
# header length, JSON header {config, entries: [{name, dtype, shape}, ...]},
# then each tensor's raw little-endian bytes in header order. Round-trips are
# bit-exact for both float32 and float64 parameters.

_DTYPE_TAGS = {np.dtype(np.float32): "<f4", np.dtype(np.float64): "<f8"}


def save_weights(params: NetworkParams, path) -> None:
    entries = [{"name": n, "dtype": _DTYPE_TAGS[t.dtype], "shape": list(t.shape)}
               for n, t in params.tensors.items()]
    header = json.dumps({"config": params.cfg.to_dict(), "entries": entries},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(bytes([_FORMAT_VERSION]))
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for name, t in params.tensors.items():
            fh.write(t.numpy().astype(_DTYPE_TAGS[t.dtype], copy=False).tobytes())


def load_weights(path, cfg: ArchitectureConfig | None = None) -> NetworkParams:
    """Read a weights file; verify against `cfg` when given, else adopt the
    stored config."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_MAGIC) + 9 or blob[:4] != _MAGIC:
        raise WeightsFormatError(f"{path}: not a weights file (bad magic)")
    version = blob[4]
    if version != _FORMAT_VERSION:
        raise WeightsFormatError(f"{path}: unsupported format version {version}")
    hlen = int.from_bytes(blob[5:13], "little")
    if len(blob) < 13 + hlen:
        raise WeightsTruncatedError(f"{path}: header truncated")
    try:
        header = json.loads(blob[13:13 + hlen].decode("utf-8"))
        stored_cfg = ArchitectureConfig.from_dict(header["config"])
        entries = header["entries"]
    except (ValueError, KeyError, ConfigError) as e:
        raise WeightsFormatError(f"{path}: malformed header ({e})") from e

    use_cfg = cfg if cfg is not None else stored_cfg
    want = expected_entry_shapes(use_cfg)
    names = [e["name"] for e in entries]
    if names != list(want):
        raise WeightsShapeError(
            f"{path}: stored entries {names[:3]}... do not match architecture entries")
    tensors: dict[str, Tensor] = {}
    offset = 13 + hlen
    for e in entries:
        name, tag, shape = e["name"], e["dtype"], tuple(int(s) for s in e["shape"])
        if tag not in ("<f4", "<f8"):
            raise WeightsFormatError(f"{path}: entry {name} has unsupported dtype {tag}")
        if shape != want[name]:
            raise WeightsShapeError(
                f"{path}: entry {name} has shape {shape}, architecture expects {want[name]}")
        nbytes = math.prod(shape) * int(tag[2])
        chunk = blob[offset:offset + nbytes]
        if len(chunk) < nbytes:
            raise WeightsTruncatedError(f"{path}: payload truncated in entry {name}")
        offset += nbytes
        arr = np.frombuffer(chunk, dtype=np.dtype(tag)).astype(tag[1:], copy=True).reshape(shape)
        tensors[name] = Tensor._wrap(arr)
    return NetworkParams(cfg=use_cfg, tensors=tensors)
