"""CNN layer descriptors and their GEMM shapes.

Convolutions are lowered with im2col: every output pixel becomes one row
of the input matrix, every (kernel position, input channel) pair one
column, so the dot-product length is ``kernel_h * kernel_w * in_c``.
Grouped and depthwise convolutions become ``groups`` independent GEMMs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

DESCRIPTOR_HEADER = ["name", "kind", "in_c", "in_h", "in_w", "out_c",
                     "kernel_h", "kernel_w", "stride", "padding", "groups"]

BUNDLED_MODELS = ("googlenet", "resnet50", "mobilenet_v2", "shufflenet_v2")


class LayerKind(Enum):
    CONV = "conv"
    FC = "fc"
    POOL = "pool"
    ACTIVATION = "activation"
    # channel concat/split/shuffle: moves data, computes nothing
    ROUTE = "route"


class InvalidLayerError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class GemmShape:
    rows: int
    k: int
    cols: int
    groups: int = 1

    def __post_init__(self):
        if min(self.rows, self.k, self.cols, self.groups) < 1:
            raise ValueError(f"GEMM dimensions must be >= 1: {self}")

    @property
    def macs(self) -> int:
        return self.groups * self.rows * self.k * self.cols


@dataclass(frozen=True)
class SliceFactor:
    input_slices: int
    weight_slices: int

    @property
    def passes(self) -> int:
        return self.input_slices * self.weight_slices


def bit_slices(model_bits: int, hw_bits: int) -> SliceFactor:
    if model_bits < 1 or hw_bits < 1:
        raise ValueError("bit widths must be >= 1")
    s = math.ceil(model_bits / hw_bits)
    return SliceFactor(s, s)


def slice_operand(value, model_bits: int, hw_bits: int) -> "list[int]":
    """Split an unsigned integer into ``hw_bits``-wide digits, least significant first."""
    count = math.ceil(model_bits / hw_bits)
    mask = (1 << hw_bits) - 1
    return [(value >> (i * hw_bits)) & mask for i in range(count)]


def sliced_multiply(a, b, model_bits: int, hw_bits: int):
    """Multiply two unsigned operands the way a low-precision engine does.

    Each slice pair is multiplied at ``hw_bits`` precision and the partial
    products are recombined with shifts.  Works on ints or numpy arrays.
    """
    count = math.ceil(model_bits / hw_bits)
    mask = (1 << hw_bits) - 1
    total = 0
    for i in range(count):
        ai = (a >> (i * hw_bits)) & mask
        for j in range(count):
            bj = (b >> (j * hw_bits)) & mask
            total = total + ((ai * bj) << ((i + j) * hw_bits))
    return total


@dataclass(frozen=True)
class LayerDescriptor:
    name: str
    kind: LayerKind
    in_c: int
    in_h: int = 1
    in_w: int = 1
    out_c: int = 1
    kernel_h: int = 1
    kernel_w: int = 1
    stride: int = 1
    padding: int = 0
    groups: int = 1
    model_bits: int = 8

    def __post_init__(self):
        object.__setattr__(self, "kind", LayerKind(self.kind))
        for f in ("in_c", "in_h", "in_w", "out_c", "kernel_h", "kernel_w", "stride", "groups"):
            if getattr(self, f) < 1:
                raise InvalidLayerError(f"layer {self.name!r}: {f} must be >= 1")
        if self.padding < 0:
            raise InvalidLayerError(f"layer {self.name!r}: padding must be >= 0")
        if self.kind is LayerKind.CONV:
            if self.in_c % self.groups or self.out_c % self.groups:
                raise InvalidLayerError(f"layer {self.name!r}: channels not divisible by groups")
        if self.kind in (LayerKind.CONV, LayerKind.POOL):
            if (self.kernel_h > self.in_h + 2 * self.padding
                    or self.kernel_w > self.in_w + 2 * self.padding):
                raise InvalidLayerError(f"layer {self.name!r}: kernel larger than padded input")

    @property
    def has_gemm(self) -> bool:
        return self.kind in (LayerKind.CONV, LayerKind.FC)

    @property
    def input_shape(self):
        return (self.in_c, self.in_h, self.in_w)

    @property
    def output_shape(self):
        if self.kind is LayerKind.FC:
            return (self.out_c, 1, 1)
        if self.kind in (LayerKind.CONV, LayerKind.POOL):
            oh = (self.in_h + 2 * self.padding - self.kernel_h) // self.stride + 1
            ow = (self.in_w + 2 * self.padding - self.kernel_w) // self.stride + 1
            c = self.out_c if self.kind is LayerKind.CONV else self.in_c
            return (c, oh, ow)
        if self.kind is LayerKind.ACTIVATION:
            return self.input_shape
        return (self.out_c, self.in_h, self.in_w)

    @property
    def output_elements(self) -> int:
        return math.prod(self.output_shape)


def conv_to_gemm(layer: LayerDescriptor) -> GemmShape:
    if layer.kind is not LayerKind.CONV:
        raise ValueError(f"layer {layer.name!r} is {layer.kind.value}, not conv")
    _, oh, ow = layer.output_shape
    g = layer.groups
    return GemmShape(rows=oh * ow, k=layer.kernel_h * layer.kernel_w * layer.in_c // g,
                     cols=layer.out_c // g, groups=g)


def fc_to_gemm(layer: LayerDescriptor) -> GemmShape:
    if layer.kind is not LayerKind.FC:
        raise ValueError(f"layer {layer.name!r} is {layer.kind.value}, not fc")
    return GemmShape(rows=1, k=layer.in_c * layer.in_h * layer.in_w, cols=layer.out_c)


def layer_to_gemm(layer: LayerDescriptor) -> "GemmShape | None":
    if layer.kind is LayerKind.CONV:
        return conv_to_gemm(layer)
    if layer.kind is LayerKind.FC:
        return fc_to_gemm(layer)
    return None


def im2col(x: np.ndarray, kernel_h: int, kernel_w: int, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Unfold a ``(C, H, W)`` feature map into ``(out_h*out_w, kernel_h*kernel_w*C)``.

    Column order is (kernel row, kernel column, channel), matching
    :func:`filters_to_matrix`.
    """
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kernel_h) // stride + 1
    ow = (w + 2 * padding - kernel_w) // stride + 1
    if oh < 1 or ow < 1:
        raise InvalidLayerError("kernel larger than padded input")
    cols = np.empty((oh * ow, kernel_h * kernel_w * c), dtype=x.dtype)
    for i in range(oh):
        for j in range(ow):
            patch = xp[:, i * stride:i * stride + kernel_h, j * stride:j * stride + kernel_w]
            cols[i * ow + j] = patch.transpose(1, 2, 0).reshape(-1)
    return cols


def filters_to_matrix(w: np.ndarray) -> np.ndarray:
    """Flatten ``(out_c, C, kh, kw)`` filters into a ``(kh*kw*C, out_c)`` weight matrix."""
    return w.transpose(2, 3, 1, 0).reshape(-1, w.shape[0])


def conv_via_gemm(x: np.ndarray, w: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Convolution as an im2col GEMM, returned as ``(out_c, out_h, out_w)``."""
    _, _, kh, kw = w.shape
    oh = (x.shape[1] + 2 * padding - kh) // stride + 1
    ow = (x.shape[2] + 2 * padding - kw) // stride + 1
    out = im2col(x, kh, kw, stride, padding) @ filters_to_matrix(w)
    return out.T.reshape(w.shape[0], oh, ow)


@dataclass
class CnnModel:
    name: str
    layers: "list[LayerDescriptor]" = field(default_factory=list)

    @property
    def gemm_layers(self):
        return [layer for layer in self.layers if layer.has_gemm]

    @property
    def total_macs(self) -> int:
        return sum(layer_to_gemm(layer).macs for layer in self.gemm_layers)


def check_chain(layers: "list[LayerDescriptor]") -> None:
    """Verify every layer consumes a tensor that exists when it runs.

    Plain chains feed layer ``i`` into ``i+1``.  Branches may instead read
    any earlier output (or the model input); fully-connected layers may
    read a flattened earlier output.  Route rows only have their spatial
    size checked, since concatenation and split change channel counts.
    """
    if not layers:
        return
    available = {layers[0].input_shape}
    spatial = {layers[0].input_shape[1:]}
    for prev, layer in zip([None] + layers[:-1], layers):
        shape = layer.input_shape
        if layer.kind is LayerKind.ROUTE:
            ok = shape[1:] in spatial
        elif layer.kind is LayerKind.FC:
            flat = {math.prod(s) for s in available}
            ok = shape in available or (shape[1:] == (1, 1) and shape[0] in flat)
        else:
            ok = shape in available
        if not ok:
            if prev is None:
                raise ModelFormatError(f"layer {layer.name!r}: inconsistent input shape {shape}")
            raise ModelFormatError(
                f"dimension mismatch: layer {layer.name!r} expects input {shape} but "
                f"previous layer {prev.name!r} produces {prev.output_shape}")
        available.add(layer.output_shape)
        spatial.add(layer.output_shape[1:])


def load_model(path, name: str = None, model_bits: int = 8) -> CnnModel:
    path = Path(path)
    with open(path, newline="") as fh:
        return parse_model(fh, name or path.stem, model_bits, source=str(path))


def parse_model(lines, name: str, model_bits: int = 8, source: str = "<model>") -> CnnModel:
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ModelFormatError(f"{source}: empty file, expected header") from None
    if header != DESCRIPTOR_HEADER:
        raise ModelFormatError(f"{source}:1: header must be {','.join(DESCRIPTOR_HEADER)}")
    layers = []
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(DESCRIPTOR_HEADER):
            raise ModelFormatError(
                f"{source}:{lineno}: row {row[0]!r} has {len(row)} columns, expected {len(DESCRIPTOR_HEADER)}")
        rec = dict(zip(DESCRIPTOR_HEADER, (c.strip() for c in row)))
        try:
            kind = LayerKind(rec.pop("kind"))
            layer_name = rec.pop("name")
            nums = {k: int(v) for k, v in rec.items()}
            layers.append(LayerDescriptor(layer_name, kind, model_bits=model_bits, **nums))
        except ValueError as exc:
            raise ModelFormatError(f"{source}:{lineno}: row {row[0]!r}: {exc}") from None
    check_chain(layers)
    return CnnModel(name, layers)


def bundled_model(name: str, model_bits: int = 8) -> CnnModel:
    if name not in BUNDLED_MODELS:
        raise ValueError(f"unknown bundled model {name!r}; choose from {', '.join(BUNDLED_MODELS)}")
    ref = resources.files("photonic_dse") / "models" / f"{name}.csv"
    with ref.open(newline="") as fh:
        return parse_model(fh, name, model_bits, source=f"{name}.csv")


def resolve_model(spec: str, model_bits: int = 8) -> CnnModel:
    """Accept either a bundled model name or a path to a descriptor CSV."""
    if spec in BUNDLED_MODELS:
        return bundled_model(spec, model_bits)
    return load_model(spec, model_bits=model_bits)
