"""Minimal independent ONNX protobuf encoder used to build test fixtures.

Written from the wire format spec, deliberately sharing no code with the
package's reader so the two validate each other.
"""

from __future__ import annotations

import numpy as np

IR_VERSION = 8
OPSET = 17


def varint(n: int) -> bytes:
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def tag(field: int, wire: int) -> bytes:
    return varint((field << 3) | wire)


def len_field(field: int, payload: bytes) -> bytes:
    return tag(field, 2) + varint(len(payload)) + payload


def str_field(field: int, s: str) -> bytes:
    return len_field(field, s.encode("utf-8"))


def int_field(field: int, v: int) -> bytes:
    return tag(field, 0) + varint(v)


def tensor(name: str, arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.float32)
    out = b""
    for d in arr.shape:
        out += int_field(1, d)
    out += int_field(2, 1)  # data_type FLOAT
    out += str_field(8, name)
    out += len_field(9, arr.astype("<f4").tobytes())
    return out


def attr_int(name: str, v: int) -> bytes:
    return str_field(1, name) + int_field(3, v) + int_field(20, 2)  # INT


def attr_ints(name: str, values) -> bytes:
    out = str_field(1, name)
    for v in values:
        out += int_field(8, v)
    return out + int_field(20, 7)  # INTS


def attr_tensor(name: str, t: bytes) -> bytes:
    return str_field(1, name) + len_field(5, t) + int_field(20, 4)  # TENSOR


def node(op: str, inputs, outputs, attrs=()) -> bytes:
    out = b""
    for i in inputs:
        out += str_field(1, i)
    for o in outputs:
        out += str_field(2, o)
    out += str_field(4, op)
    for a in attrs:
        out += len_field(5, a)
    return out


def _dim(value) -> bytes:
    if isinstance(value, str):
        return str_field(2, value)
    return int_field(1, value)


def value_info(name: str, dims) -> bytes:
    shape = b"".join(len_field(1, _dim(d)) for d in dims)
    tensor_type = int_field(1, 1) + len_field(2, shape)
    type_proto = len_field(1, tensor_type)
    return str_field(1, name) + len_field(2, type_proto)


def graph(nodes, initializers, inputs, outputs, name="g") -> bytes:
    out = b""
    for n in nodes:
        out += len_field(1, n)
    out += str_field(2, name)
    for t in initializers:
        out += len_field(5, t)
    for vi in inputs:
        out += len_field(11, vi)
    for vi in outputs:
        out += len_field(12, vi)
    return out


def model(graph_bytes: bytes) -> bytes:
    opset = str_field(1, "") + int_field(2, OPSET)
    return (
        int_field(1, IR_VERSION)
        + str_field(2, "onnx-test-util")
        + len_field(7, graph_bytes)
        + len_field(8, opset)
    )


def he_weights(rng: np.random.Generator, c_out: int, c_in: int, k: int = 3):
    scale = np.sqrt(2.0 / (c_in * k * k))
    return rng.normal(0.0, scale, size=(c_out, c_in, k, k)).astype(np.float32)


def build_feature_model(channels=(4, 6, 8, 10, 12), seed=0) -> bytes:
    """Small VGG-shaped graph: normalize, then per stage Conv+Relu with a
    named feature output, MaxPool between stages."""
    rng = np.random.default_rng(seed)
    nodes = []
    initializers = [
        tensor("mean", np.array([0.485, 0.456, 0.406], dtype=np.float32).reshape(1, 3, 1, 1)),
        tensor("std", np.array([0.229, 0.224, 0.225], dtype=np.float32).reshape(1, 3, 1, 1)),
    ]
    nodes.append(node("Sub", ["input", "mean"], ["centered"]))
    nodes.append(node("Div", ["centered", "std"], ["scaled"]))
    prev, c_in = "scaled", 3
    outputs = []
    conv_attrs = [
        attr_ints("kernel_shape", (3, 3)),
        attr_ints("strides", (1, 1)),
        attr_ints("pads", (1, 1, 1, 1)),
    ]
    pool_attrs = [
        attr_ints("kernel_shape", (2, 2)),
        attr_ints("strides", (2, 2)),
    ]
    for stage, c_out in enumerate(channels, start=1):
        wname, bname = f"w{stage}", f"b{stage}"
        initializers.append(tensor(wname, he_weights(rng, c_out, c_in)))
        initializers.append(tensor(bname, rng.normal(0, 0.01, c_out).astype(np.float32)))
        nodes.append(node("Conv", [prev, wname, bname], [f"conv{stage}"], conv_attrs))
        feat = f"feat{stage}"
        nodes.append(node("Relu", [f"conv{stage}"], [feat]))
        outputs.append(feat)
        if stage < len(channels):
            nodes.append(node("MaxPool", [feat], [f"pool{stage}"], pool_attrs))
            prev = f"pool{stage}"
        c_in = c_out
    g = graph(
        nodes,
        initializers,
        [value_info("input", ("N", 3, "H", "W"))],
        [value_info(o, ("N", c, "h", "w")) for o, c in zip(outputs, channels)],
    )
    return model(g)
