"""Float reference forward pass and min/max post-training quantization."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .network import INPUT, FloatNetwork, QuantNetwork, QuantParams, UnsupportedTopology


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int, pad_value=0) -> tuple[np.ndarray, int, int]:
    """``(N, C, H, W)`` -> ``(N*OH*OW, C*kh*kw)`` patches ordered like OIHW weights."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=pad_value)
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, oh, ow = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols), oh, ow


def float_forward(net: FloatNetwork, x: np.ndarray) -> dict[str, np.ndarray]:
    """Run the float network on real-valued inputs; returns every node output."""
    vals = {INPUT: np.asarray(x, dtype=np.float64)}
    for n in net.nodes:
        src = vals[n.inputs[0]]
        if n.kind == "conv":
            cout, cin, kh, kw = n.weights.shape
            cols, oh, ow = im2col(src, kh, kw, n.stride, n.padding)
            y = cols @ n.weights.reshape(cout, -1).T.astype(np.float64) + n.bias
            y = y.reshape(src.shape[0], oh, ow, cout).transpose(0, 3, 1, 2)
            vals[n.id] = np.maximum(y, 0.0) if n.relu else y
        elif n.kind == "relu":
            vals[n.id] = np.maximum(src, 0.0)
        elif n.kind == "avgpool":
            if n.kernel is None:
                vals[n.id] = src.mean(axis=(2, 3), keepdims=True)
            else:
                win = np.lib.stride_tricks.sliding_window_view(src, (n.kernel, n.kernel), axis=(2, 3))
                vals[n.id] = win[:, :, ::n.stride, ::n.stride].mean(axis=(4, 5))
        elif n.kind == "add":
            vals[n.id] = src + vals[n.inputs[1]]
        elif n.kind == "dense":
            vals[n.id] = src.reshape(src.shape[0], -1) @ n.weights.T.astype(np.float64) + n.bias
        elif n.kind == "argmax":
            vals[n.id] = src.argmax(axis=1)
        else:
            raise UnsupportedTopology(n.kind)
    return vals


def quantize_network(net: FloatNetwork, calibration: np.ndarray) -> QuantNetwork:
    """Per-tensor affine u8 quantization.

    ``calibration`` holds u8 input codes; the real input is
    ``codes * net.input_scale``. Weight ranges come from the weights, activation
    ranges from the calibration batch, and biases become i32 at the
    accumulator scale.
    """
    calibration = np.asarray(calibration)
    if calibration.ndim != 4 or calibration.shape[0] == 0:
        raise ValueError("calibration batch must be a nonempty (N, C, H, W) array")
    vals = float_forward(net, calibration.astype(np.float64) * net.input_scale)
    qin = {INPUT: QuantParams(net.input_scale, 0)}
    nodes = []
    for n in net.nodes:
        src_q = qin.get(n.inputs[0])
        if n.kind in ("conv", "dense"):
            qw = QuantParams.from_range(n.weights.min(), n.weights.max())
            acc_scale = src_q.scale * qw.scale
            bias = np.clip(np.rint(n.bias / acc_scale), -(2**31), 2**31 - 1).astype(np.int32)
            q = replace(n, weights=qw.quantize(n.weights), bias=bias, qw=qw)
            if n.kind == "conv":
                out = vals[n.id]
                q = replace(q, qout=QuantParams.from_range(out.min(), out.max()))
                qin[n.id] = q.qout
            nodes.append(q)
        elif n.kind == "add":
            out = vals[n.id]
            q = replace(n, qout=QuantParams.from_range(out.min(), out.max()))
            qin[n.id] = q.qout
            nodes.append(q)
        elif n.kind in ("relu", "avgpool"):
            qin[n.id] = src_q
            nodes.append(n)
        elif n.kind == "argmax":
            nodes.append(n)
        else:
            raise UnsupportedTopology(f"cannot quantize node kind {n.kind!r}")
    return QuantNetwork(net.input_shape, nodes, qin[INPUT])
