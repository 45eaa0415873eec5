"""Network graph, shape propagation and the on-disk network directory format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

INPUT = "input"
KINDS = ("conv", "relu", "avgpool", "add", "dense", "argmax")
DTYPES = {"u8": np.dtype("<u1"), "i32": np.dtype("<i4"), "f32": np.dtype("<f4")}
FORMAT = "axdse-net"


class UnsupportedTopology(ValueError):
    pass


class NetworkFormatError(ValueError):
    pass


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int

    def __post_init__(self):
        if not self.scale > 0 or not math.isfinite(self.scale):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if not 0 <= self.zero_point <= 255:
            raise ValueError(f"zero_point must be in [0, 255], got {self.zero_point}")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "zero_point", int(self.zero_point))

    @classmethod
    def from_range(cls, lo: float, hi: float) -> QuantParams:
        """Min/max affine parameters; the range is widened to contain 0."""
        lo, hi = min(float(lo), 0.0), max(float(hi), 0.0)
        if hi == lo:
            return cls(1.0, 0)
        scale = (hi - lo) / 255.0
        zp = int(np.clip(round(-lo / scale), 0, 255))
        return cls(scale, zp)

    def quantize(self, x) -> np.ndarray:
        q = np.rint(np.asarray(x, dtype=np.float64) / self.scale) + self.zero_point
        return np.clip(q, 0, 255).astype(np.uint8)

    def dequantize(self, q) -> np.ndarray:
        return self.scale * (np.asarray(q, dtype=np.float64) - self.zero_point)

    def to_dict(self):
        return {"scale": self.scale, "zero_point": self.zero_point}


@dataclass(frozen=True, eq=False)
class Node:
    id: str
    kind: str
    inputs: tuple[str, ...]
    stride: int = 1
    padding: int = 0
    kernel: int | None = None  # avgpool window; None means global
    relu: bool = False  # conv only: clamp output at real zero
    weights: np.ndarray | None = field(default=None, repr=False)
    bias: np.ndarray | None = field(default=None, repr=False)
    qw: QuantParams | None = None
    qout: QuantParams | None = None


def infer_shapes(input_shape, nodes) -> dict[str, tuple[int, ...]]:
    shapes = {INPUT: tuple(input_shape)}
    for n in nodes:
        ins = [shapes[i] for i in n.inputs]
        if n.kind == "conv":
            c, h, w = ins[0]
            cout, cin, kh, kw = n.weights.shape
            if cin != c:
                raise UnsupportedTopology(f"{n.id}: expects {cin} input channels, got {c}")
            oh = (h + 2 * n.padding - kh) // n.stride + 1
            ow = (w + 2 * n.padding - kw) // n.stride + 1
            if oh < 1 or ow < 1:
                raise UnsupportedTopology(f"{n.id}: empty output")
            shapes[n.id] = (cout, oh, ow)
        elif n.kind == "relu":
            shapes[n.id] = ins[0]
        elif n.kind == "avgpool":
            c, h, w = ins[0]
            if n.kernel is None:
                shapes[n.id] = (c, 1, 1)
            else:
                shapes[n.id] = (c, (h - n.kernel) // n.stride + 1, (w - n.kernel) // n.stride + 1)
        elif n.kind == "add":
            if ins[0] != ins[1]:
                raise UnsupportedTopology(f"{n.id}: shape mismatch {ins[0]} vs {ins[1]}")
            shapes[n.id] = ins[0]
        elif n.kind == "dense":
            cout, cin = n.weights.shape
            if cin != int(np.prod(ins[0])):
                raise UnsupportedTopology(f"{n.id}: expects {cin} inputs, got {ins[0]}")
            shapes[n.id] = (cout,)
        elif n.kind == "argmax":
            shapes[n.id] = ()
    return shapes


def check_graph(nodes) -> None:
    seen = {INPUT}
    arity = {"add": 2}
    for n in nodes:
        if n.kind not in KINDS:
            raise UnsupportedTopology(f"unsupported node kind {n.kind!r} ({n.id})")
        if n.id in seen:
            raise UnsupportedTopology(f"duplicate node id {n.id!r}")
        if len(n.inputs) != arity.get(n.kind, 1):
            raise UnsupportedTopology(f"{n.id}: {n.kind} takes {arity.get(n.kind, 1)} input(s)")
        for i in n.inputs:
            if i not in seen:
                raise UnsupportedTopology(f"{n.id}: input {i!r} is not an earlier node")
        if n.kind in ("conv", "dense") and n.weights is None:
            raise UnsupportedTopology(f"{n.id}: missing weights")
        seen.add(n.id)
    heads = [n for n in nodes if n.kind == "argmax"]
    if len(heads) != 1 or nodes[-1].kind != "argmax":
        raise UnsupportedTopology("network needs exactly one argmax head as its last node")


@dataclass(frozen=True, eq=False)
class _Graph:
    input_shape: tuple[int, ...]
    nodes: tuple[Node, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "nodes", tuple(self.nodes))
        check_graph(self.nodes)
        object.__setattr__(self, "shapes", infer_shapes(self.input_shape, self.nodes))

    @property
    def conv_layers(self) -> list[Node]:
        return [n for n in self.nodes if n.kind == "conv"]

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)


@dataclass(frozen=True, eq=False)
class QuantNetwork(_Graph):
    input_quant: QuantParams = QuantParams(1.0 / 255.0, 0)

    def __post_init__(self):
        super().__post_init__()
        for n in self.nodes:
            if n.kind in ("conv", "dense"):
                if n.weights.dtype != np.uint8 or n.bias is None or n.bias.dtype != np.int32 or n.qw is None:
                    raise UnsupportedTopology(f"{n.id}: quantized layers need u8 weights, i32 bias and qw")
            if n.kind in ("conv", "add") and n.qout is None:
                raise UnsupportedTopology(f"{n.id}: missing output quantization")

    def quant_of(self, node_id: str) -> QuantParams:
        """Quantization parameters of a node's u8 output."""
        if node_id == INPUT:
            return self.input_quant
        n = self.node(node_id)
        if n.kind in ("conv", "add"):
            return n.qout
        if n.kind in ("relu", "avgpool"):
            return self.quant_of(n.inputs[0])
        raise KeyError(f"{node_id} does not produce u8 codes")


@dataclass(frozen=True, eq=False)
class FloatNetwork(_Graph):
    input_scale: float = 1.0 / 255.0


def count_mults(net) -> list[int]:
    """Multiplications per conv layer for one input image."""
    counts = []
    for n in net.conv_layers:
        cout, oh, ow = net.shapes[n.id]
        counts.append(oh * ow * int(np.prod(n.weights.shape)))
    return counts


# -- directory format ------------------------------------------------------

def _write_tensor(root: Path, name: str, arr: np.ndarray, dtype: str) -> dict:
    fname = f"{name}.bin"
    (root / fname).write_bytes(np.ascontiguousarray(arr, dtype=DTYPES[dtype]).tobytes())
    return {"file": fname, "dtype": dtype, "shape": list(arr.shape)}


def _read_tensor(root: Path, desc: dict) -> np.ndarray:
    dtype = desc["dtype"]
    if dtype not in DTYPES:
        raise NetworkFormatError(f"unknown dtype {dtype!r}")
    raw = (root / desc["file"]).read_bytes()
    shape = tuple(desc["shape"])
    arr = np.frombuffer(raw, dtype=DTYPES[dtype])
    if arr.size != int(np.prod(shape)):
        raise NetworkFormatError(f"{desc['file']}: {arr.size} values, shape {shape} needs {int(np.prod(shape))}")
    return arr.reshape(shape).astype(DTYPES[dtype].newbyteorder("="))


def save_network(net, directory) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    quantized = isinstance(net, QuantNetwork)
    wdt, bdt = ("u8", "i32") if quantized else ("f32", "f32")
    nodes = []
    for n in net.nodes:
        d = {"id": n.id, "kind": n.kind, "inputs": list(n.inputs)}
        if n.kind in ("conv", "avgpool"):
            d["stride"] = n.stride
        if n.kind == "conv":
            d["padding"] = n.padding
            d["relu"] = n.relu
        if n.kind == "avgpool":
            d["kernel"] = n.kernel
        if n.weights is not None:
            d["weights"] = _write_tensor(root, f"{n.id}_weights", n.weights, wdt)
            d["bias"] = _write_tensor(root, f"{n.id}_bias", n.bias, bdt)
        if n.qw is not None:
            d["qw"] = n.qw.to_dict()
        if n.qout is not None:
            d["qout"] = n.qout.to_dict()
        nodes.append(d)
    doc = {"format": FORMAT, "version": 1, "quantized": quantized, "input": {"shape": list(net.input_shape)}}
    if quantized:
        doc["input"]["quant"] = net.input_quant.to_dict()
    else:
        doc["input"]["scale"] = net.input_scale
    doc["nodes"] = nodes
    (root / "manifest.json").write_text(json.dumps(doc, indent=1) + "\n")


def _qp(d):
    return None if d is None else QuantParams(d["scale"], d["zero_point"])


def load_network(directory):
    """Load a network directory; returns a QuantNetwork or a FloatNetwork."""
    root = Path(directory)
    try:
        doc = json.loads((root / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise NetworkFormatError(f"{root}: no manifest.json") from exc
    if doc.get("format") != FORMAT:
        raise NetworkFormatError(f"{root}: not an {FORMAT} manifest")
    nodes = []
    for d in doc["nodes"]:
        kw = {}
        if "weights" in d:
            kw["weights"] = _read_tensor(root, d["weights"])
            kw["bias"] = _read_tensor(root, d["bias"])
        nodes.append(Node(
            id=d["id"], kind=d["kind"], inputs=tuple(d["inputs"]),
            stride=int(d.get("stride", 1)), padding=int(d.get("padding", 0)),
            kernel=d.get("kernel"), relu=bool(d.get("relu", False)),
            qw=_qp(d.get("qw")), qout=_qp(d.get("qout")), **kw,
        ))
    shape = doc["input"]["shape"]
    if doc.get("quantized", True):
        return QuantNetwork(shape, nodes, _qp(doc["input"]["quant"]))
    return FloatNetwork(shape, nodes, float(doc["input"].get("scale", 1.0 / 255.0)))


# -- architecture descriptors ----------------------------------------------

def resnet_v1_cifar(depth: int, width: int = 16, num_classes: int = 10) -> QuantNetwork:
    """Shape-only ResNet v1 for 32x32 inputs (non-bottleneck, 1x1 projections).

    Weights are zero codes; useful for counting multiplications.
    """
    if (depth - 2) % 6:
        raise ValueError("depth must be 6n+2")
    blocks = (depth - 2) // 6
    q = QuantParams(1.0, 0)

    def conv(nid, src, cin, cout, k, stride, relu):
        return Node(nid, "conv", (src,), stride=stride, padding=k // 2, relu=relu,
                    weights=np.zeros((cout, cin, k, k), np.uint8), bias=np.zeros(cout, np.int32), qw=q, qout=q)

    nodes = [conv("conv0", INPUT, 3, width, 3, 1, True)]
    prev, cin = "conv0", width
    for stage in range(3):
        cout = width << stage
        for b in range(blocks):
            stride = 2 if stage and b == 0 else 1
            tag = f"s{stage}b{b}"
            nodes.append(conv(f"{tag}_c1", prev, cin, cout, 3, stride, True))
            nodes.append(conv(f"{tag}_c2", f"{tag}_c1", cout, cout, 3, 1, False))
            short = prev
            if stride != 1 or cin != cout:
                nodes.append(conv(f"{tag}_proj", prev, cin, cout, 1, stride, False))
                short = f"{tag}_proj"
            nodes.append(replace(Node(f"{tag}_add", "add", (f"{tag}_c2", short)), qout=q))
            nodes.append(Node(f"{tag}_relu", "relu", (f"{tag}_add",)))
            prev, cin = f"{tag}_relu", cout
    nodes.append(Node("gap", "avgpool", (prev,)))
    nodes.append(Node("fc", "dense", ("gap",), weights=np.zeros((num_classes, cin), np.uint8),
                      bias=np.zeros(num_classes, np.int32), qw=q))
    nodes.append(Node("head", "argmax", ("fc",)))
    return QuantNetwork((3, 32, 32), nodes, q)
