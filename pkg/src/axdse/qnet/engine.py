"""Approximate u8 inference: convolution products come from a multiplier LUT.

Only the activation x weight product goes through the LUT. Zero-point
correction terms, bias, accumulation and every non-conv operator are exact.
"""

from __future__ import annotations

from collections.abc import Sequence

import numba
import numpy as np

from ..mult import MultiplierModel
from ..wtune import WeightMap, apply_weight_map, identity_map
from .cifar import Dataset
from .network import INPUT, QuantNetwork
from .quantize import im2col

Assignment = Sequence[tuple[MultiplierModel, WeightMap]]


class ConfigurationError(ValueError):
    pass


@numba.njit(nogil=True, cache=True)
def lut_matmul(cols, wmat, lut, out):
    """``out[p, c] = sum_k lut[cols[p, k], wmat[c, k]]``."""
    n_rows, k_len = cols.shape
    n_out = wmat.shape[0]
    for p in range(n_rows):
        for c in range(n_out):
            s = 0
            for k in range(k_len):
                s += lut[cols[p, k], wmat[c, k]]
            out[p, c] = s
    return out


def requantize(acc: np.ndarray, multiplier: float, zero_point: int, lo: int = 0) -> np.ndarray:
    """Round half-to-even, shift by the zero point, clamp to ``[lo, 255]``."""
    q = np.rint(acc.astype(np.float64) * multiplier) + zero_point
    return np.clip(q, lo, 255).astype(np.uint8)


def exact_assignment(net: QuantNetwork, exact: MultiplierModel) -> list[tuple[MultiplierModel, WeightMap]]:
    return [(exact, identity_map(exact))] * len(net.conv_layers)


def _conv(node, x, qin, mult, wmap):
    if mult.bit_width != 8:
        raise ConfigurationError(f"{node.id}: u8 network needs an 8-bit multiplier, got {mult.bit_width}-bit {mult.name}")
    cout, cin, kh, kw = node.weights.shape
    za, zw = qin.zero_point, node.qw.zero_point
    cols, oh, ow = im2col(x, kh, kw, node.stride, node.padding, pad_value=za)
    w_orig = node.weights.reshape(cout, -1)
    w_mapped = apply_weight_map(w_orig, wmap)
    prod = lut_matmul(cols, np.ascontiguousarray(w_mapped), mult.lut, np.empty((cols.shape[0], cout), np.int64))
    k_len = cols.shape[1]
    acc = (
        prod
        - zw * cols.sum(axis=1, dtype=np.int64)[:, None]
        - za * w_orig.sum(axis=1, dtype=np.int64)[None, :]
        + k_len * za * zw
        + node.bias.astype(np.int64)[None, :]
    ).astype(np.int32)
    return acc.reshape(x.shape[0], oh, ow, cout).transpose(0, 3, 1, 2)


def forward(net: QuantNetwork, images: np.ndarray, assignment: Assignment, keep_accumulators: bool = False):
    """Batched approximate forward pass; returns every node output.

    With ``keep_accumulators`` the i32 pre-requantization conv accumulators
    are returned as well under ``"<id>:acc"``.
    """
    convs = net.conv_layers
    if assignment is None or len(assignment) != len(convs):
        got = 0 if assignment is None else len(assignment)
        raise ConfigurationError(f"assignment covers {got} conv layers, network has {len(convs)}")
    by_layer = {n.id: a for n, a in zip(convs, assignment)}
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[None]
    if images.dtype != np.uint8:
        raise ConfigurationError("input images must be u8 codes")
    vals = {INPUT: images}
    for n in net.nodes:
        x = vals[n.inputs[0]]
        if n.kind == "conv":
            qin = net.quant_of(n.inputs[0])
            acc = _conv(n, x, qin, *by_layer[n.id])
            if keep_accumulators:
                vals[n.id + ":acc"] = acc
            lo = n.qout.zero_point if n.relu else 0
            vals[n.id] = requantize(acc, qin.scale * n.qw.scale / n.qout.scale, n.qout.zero_point, lo)
        elif n.kind == "relu":
            vals[n.id] = np.maximum(x, np.uint8(net.quant_of(n.inputs[0]).zero_point))
        elif n.kind == "avgpool":
            if n.kernel is None:
                s = x.sum(axis=(2, 3), dtype=np.int64, keepdims=True)
                count = x.shape[2] * x.shape[3]
            else:
                win = np.lib.stride_tricks.sliding_window_view(x, (n.kernel, n.kernel), axis=(2, 3))
                s = win[:, :, ::n.stride, ::n.stride].sum(axis=(4, 5), dtype=np.int64)
                count = n.kernel * n.kernel
            vals[n.id] = np.rint(s / count).astype(np.uint8)
        elif n.kind == "add":
            qa, qb, qo = net.quant_of(n.inputs[0]), net.quant_of(n.inputs[1]), n.qout
            y = vals[n.inputs[1]]
            real = qa.scale * (x.astype(np.float64) - qa.zero_point) + qb.scale * (y.astype(np.float64) - qb.zero_point)
            vals[n.id] = np.clip(np.rint(real / qo.scale) + qo.zero_point, 0, 255).astype(np.uint8)
        elif n.kind == "dense":
            za, zw = net.quant_of(n.inputs[0]).zero_point, n.qw.zero_point
            a = x.reshape(x.shape[0], -1).astype(np.int64) - za
            w = n.weights.astype(np.int64) - zw
            vals[n.id] = (a @ w.T + n.bias).astype(np.int32)
        elif n.kind == "argmax":
            vals[n.id] = x.argmax(axis=1)
    return vals


def predict(net: QuantNetwork, images: np.ndarray, assignment: Assignment, batch_size: int = 64) -> np.ndarray:
    head = net.nodes[-1].id
    images = np.asarray(images)
    out = [forward(net, images[i:i + batch_size], assignment)[head] for i in range(0, len(images), batch_size)]
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


def infer(net: QuantNetwork, image: np.ndarray, assignment: Assignment) -> int:
    return int(predict(net, np.asarray(image)[None], assignment)[0])


def count_correct(net: QuantNetwork, dataset: Dataset, assignment: Assignment, subset_size: int | None = None) -> int:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    n = len(dataset) if subset_size is None else subset_size
    if not 0 < n <= len(dataset):
        raise ValueError(f"subset_size {n} outside [1, {len(dataset)}]")
    pred = predict(net, dataset.images[:n], assignment)
    return int(np.count_nonzero(pred == dataset.labels[:n]))


def evaluate_accuracy(net: QuantNetwork, dataset: Dataset, assignment: Assignment, subset_size: int | None = None) -> float:
    """Top-1 accuracy on the first ``subset_size`` records."""
    n = len(dataset) if subset_size is None else subset_size
    return count_correct(net, dataset, assignment, subset_size) / n
