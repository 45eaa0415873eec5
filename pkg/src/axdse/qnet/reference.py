"""Exact quantized inference written independently of the LUT engine.

Used as an oracle: convolutions are accumulated tap by tap in exact integer
arithmetic on zero-point-shifted codes, with no lookup tables and no im2col.
"""

from __future__ import annotations

import numpy as np

from .network import INPUT, QuantNetwork


def _round_half_even_div(num: np.ndarray, den: int) -> np.ndarray:
    q, r = np.divmod(num, den)
    up = (2 * r > den) | ((2 * r == den) & (q % 2 == 1))
    return q + up


def reference_forward(net: QuantNetwork, images: np.ndarray) -> dict[str, np.ndarray]:
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim == 3:
        images = images[None]
    out = {INPUT: images}
    for node in net.nodes:
        x = out[node.inputs[0]]
        if node.kind == "conv":
            qin = net.quant_of(node.inputs[0])
            _, oh, ow = net.shapes[node.id]
            p, s = node.padding, node.stride
            xs = x.astype(np.int64) - qin.zero_point
            xs = np.pad(xs, ((0, 0), (0, 0), (p, p), (p, p)))  # shifted domain: padding is 0
            w = node.weights.astype(np.int64) - node.qw.zero_point
            acc = np.zeros((x.shape[0], w.shape[0], oh, ow), dtype=np.int64)
            for i in range(w.shape[2]):
                for j in range(w.shape[3]):
                    tap = xs[:, :, i:i + s * (oh - 1) + 1:s, j:j + s * (ow - 1) + 1:s]
                    acc += np.einsum("nchw,oc->nohw", tap, w[:, :, i, j])
            acc += node.bias.astype(np.int64)[None, :, None, None]
            out[node.id + ":acc"] = acc.astype(np.int32)
            m = qin.scale * node.qw.scale / node.qout.scale
            q = np.rint(acc.astype(np.float64) * m) + node.qout.zero_point
            floor = node.qout.zero_point if node.relu else 0
            out[node.id] = np.minimum(np.maximum(q, floor), 255).astype(np.uint8)
        elif node.kind == "relu":
            z = net.quant_of(node.inputs[0]).zero_point
            out[node.id] = np.where(x < z, z, x).astype(np.uint8)
        elif node.kind == "avgpool":
            xi = x.astype(np.int64)
            if node.kernel is None:
                total = xi.sum(axis=(2, 3), keepdims=True)
                count = x.shape[2] * x.shape[3]
            else:
                k, s = node.kernel, node.stride
                _, oh, ow = net.shapes[node.id]
                total = sum(
                    xi[:, :, i:i + s * (oh - 1) + 1:s, j:j + s * (ow - 1) + 1:s] for i in range(k) for j in range(k)
                )
                count = k * k
            out[node.id] = _round_half_even_div(total, count).astype(np.uint8)
        elif node.kind == "add":
            qa = net.quant_of(node.inputs[0])
            qb = net.quant_of(node.inputs[1])
            y = out[node.inputs[1]]
            real = qa.scale * (x.astype(np.float64) - qa.zero_point) + qb.scale * (y.astype(np.float64) - qb.zero_point)
            q = np.rint(real / node.qout.scale) + node.qout.zero_point
            out[node.id] = np.minimum(np.maximum(q, 0), 255).astype(np.uint8)
        elif node.kind == "dense":
            za = net.quant_of(node.inputs[0]).zero_point
            flat = x.reshape(x.shape[0], -1).astype(np.int64) - za
            w = node.weights.astype(np.int64) - node.qw.zero_point
            out[node.id] = (np.einsum("nk,ok->no", flat, w) + node.bias).astype(np.int32)
        elif node.kind == "argmax":
            out[node.id] = np.argmax(x, axis=1)
    return out


def reference_predict(net: QuantNetwork, images: np.ndarray) -> np.ndarray:
    return reference_forward(net, images)[net.nodes[-1].id]
