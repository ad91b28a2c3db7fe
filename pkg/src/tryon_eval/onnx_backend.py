"""Reference VGG feature backend over an ONNX model file.

Neither onnxruntime nor the onnx package is assumed to be installed: this
module carries a minimal protobuf reader for the ONNX subset the export
interface needs ({Conv, Relu, MaxPool, Sub, Div, Add, Mul, Constant} over
float32 tensors) and executes the graph with torch CPU ops. torch is imported
lazily; install the `reference` extra to use this backend.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ModelLoadFailure, WrongOutputArity
from .perceptual import FeatureBackend

_WIRE_VARINT = 0
_WIRE_I64 = 1
_WIRE_LEN = 2
_WIRE_I32 = 5

_FLOAT32 = 1  # TensorProto.DataType.FLOAT


def _read_varint(data: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise ModelLoadFailure("truncated varint")
        b = data[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
        shift += 7
        if shift > 70:
            raise ModelLoadFailure("varint too long")


def _fields(data: bytes) -> dict:
    """Decode one protobuf message into {field_number: [(wire, value), ...]}."""
    out: dict = {}
    pos = 0
    while pos < len(data):
        tag, pos = _read_varint(data, pos)
        number, wire = tag >> 3, tag & 0x7
        if wire == _WIRE_VARINT:
            value, pos = _read_varint(data, pos)
        elif wire == _WIRE_LEN:
            size, pos = _read_varint(data, pos)
            if pos + size > len(data):
                raise ModelLoadFailure("truncated length-delimited field")
            value = data[pos : pos + size]
            pos += size
        elif wire == _WIRE_I32:
            value = data[pos : pos + 4]
            pos += 4
        elif wire == _WIRE_I64:
            value = data[pos : pos + 8]
            pos += 8
        else:
            raise ModelLoadFailure(f"unsupported wire type {wire}")
        out.setdefault(number, []).append((wire, value))
    return out


def _scalars(entries) -> list[int]:
    """Varint field values, unpacking packed encodings."""
    values: list[int] = []
    for wire, value in entries:
        if wire == _WIRE_VARINT:
            values.append(value)
        elif wire == _WIRE_LEN:
            pos = 0
            while pos < len(value):
                v, pos = _read_varint(value, pos)
                values.append(v)
        else:
            raise ModelLoadFailure("unexpected wire type for int field")
    return values


def _string(entries) -> str:
    return entries[0][1].decode("utf-8")


def _strings(entries) -> list[str]:
    return [v.decode("utf-8") for _, v in entries]


@dataclass
class _Tensor:
    name: str
    dims: tuple
    values: np.ndarray


def _parse_tensor(data: bytes) -> _Tensor:
    f = _fields(data)
    dims = tuple(_scalars(f.get(1, [])))
    dtype = _scalars(f.get(2, [(0, _FLOAT32)]))[0] if 2 in f else _FLOAT32
    if dtype != _FLOAT32:
        raise ModelLoadFailure(f"only float32 tensors supported, got type {dtype}")
    name = _string(f[8]) if 8 in f else ""
    if 9 in f:  # raw_data
        raw = f[9][0][1]
        values = np.frombuffer(raw, dtype="<f4").copy()
    elif 4 in f:  # packed float_data
        chunks = b"".join(v for _, v in f[4])
        values = np.frombuffer(chunks, dtype="<f4").copy()
    else:
        values = np.zeros(0, dtype=np.float32)
    return _Tensor(name=name, dims=dims, values=values.reshape(dims))


@dataclass
class _Attribute:
    name: str
    i: int | None = None
    f: float | None = None
    ints: tuple = ()
    floats: tuple = ()
    tensor: _Tensor | None = None


def _parse_attribute(data: bytes) -> _Attribute:
    f = _fields(data)
    attr = _Attribute(name=_string(f[1]) if 1 in f else "")
    if 3 in f:
        attr.i = _scalars(f[3])[0]
    if 2 in f:
        attr.f = struct.unpack("<f", f[2][0][1])[0]
    if 8 in f:
        attr.ints = tuple(_scalars(f[8]))
    if 7 in f:
        floats = []
        for wire, value in f[7]:
            if wire == _WIRE_I32:
                floats.append(struct.unpack("<f", value)[0])
            else:
                floats.extend(np.frombuffer(value, dtype="<f4").tolist())
        attr.floats = tuple(floats)
    if 5 in f:
        attr.tensor = _parse_tensor(f[5][0][1])
    return attr


@dataclass
class _Node:
    op_type: str
    inputs: tuple
    outputs: tuple
    attrs: dict


def _parse_node(data: bytes) -> _Node:
    f = _fields(data)
    attrs = {}
    for _, raw in f.get(5, []):
        a = _parse_attribute(raw)
        attrs[a.name] = a
    return _Node(
        op_type=_string(f[4]) if 4 in f else "",
        inputs=tuple(_strings(f.get(1, []))),
        outputs=tuple(_strings(f.get(2, []))),
        attrs=attrs,
    )


def _value_info_name(data: bytes) -> str:
    f = _fields(data)
    return _string(f[1]) if 1 in f else ""


@dataclass
class OnnxGraph:
    nodes: list
    initializers: dict
    input_names: list
    output_names: list


def parse_model(data: bytes) -> OnnxGraph:
    """Extract the graph from ONNX ModelProto bytes."""
    model = _fields(data)
    if 7 not in model:
        raise ModelLoadFailure("ModelProto has no graph")
    g = _fields(model[7][0][1])
    nodes = [_parse_node(raw) for _, raw in g.get(1, [])]
    initializers = {}
    for _, raw in g.get(5, []):
        t = _parse_tensor(raw)
        initializers[t.name] = t
    inputs = [_value_info_name(raw) for _, raw in g.get(11, [])]
    outputs = [_value_info_name(raw) for _, raw in g.get(12, [])]
    return OnnxGraph(
        nodes=nodes,
        initializers=initializers,
        input_names=inputs,
        output_names=outputs,
    )


_SUPPORTED_OPS = {"Conv", "Relu", "MaxPool", "Sub", "Div", "Add", "Mul", "Constant"}


class OnnxVggBackend(FeatureBackend):
    """Runs an exported 5-output VGG feature extractor on CPU via torch.

    The graph is expected to take a [0,1]-scaled NCHW float input and carry
    its own normalization constants; this backend only rescales bytes.
    """

    identifier = "reference-vgg"
    deterministic = True

    _CHUNK = 16

    def __init__(self, model_path):
        try:
            import torch
            import torch.nn.functional as F
        except ImportError as e:
            raise ModelLoadFailure(
                "reference-vgg backend needs torch (pip install 'tryon-eval[reference]')"
            ) from e
        self._torch = torch
        self._F = F
        try:
            with open(model_path, "rb") as fh:
                data = fh.read()
        except OSError as e:
            raise ModelLoadFailure(f"{model_path}: {e}") from e
        graph = parse_model(data)
        if len(graph.output_names) != 5:
            raise WrongOutputArity(
                f"model exposes {len(graph.output_names)} outputs, need 5"
            )
        unsupported = {n.op_type for n in graph.nodes} - _SUPPORTED_OPS
        if unsupported:
            raise ModelLoadFailure(f"unsupported ops: {sorted(unsupported)}")
        self._graph = graph
        self._weights = {
            name: torch.from_numpy(t.values)
            for name, t in graph.initializers.items()
        }
        data_inputs = [n for n in graph.input_names if n not in graph.initializers]
        if len(data_inputs) != 1:
            raise ModelLoadFailure(
                f"expected one data input, got {data_inputs or graph.input_names}"
            )
        self._input_name = data_inputs[0]
        with torch.no_grad():
            probe = self._run(torch.zeros(1, 3, 32, 32))
        self.channels = tuple(int(t.shape[1]) for t in probe)

    def _run(self, x):
        torch = self._torch
        F = self._F
        values = dict(self._weights)
        values[self._input_name] = x
        for node in self._graph.nodes:
            op = node.op_type
            if op == "Constant":
                t = node.attrs["value"].tensor
                values[node.outputs[0]] = torch.from_numpy(t.values)
                continue
            ins = [values[name] for name in node.inputs]
            if op == "Conv":
                strides = tuple(node.attrs["strides"].ints) if "strides" in node.attrs else (1, 1)
                pads = tuple(node.attrs["pads"].ints) if "pads" in node.attrs else (0, 0, 0, 0)
                groups = node.attrs["group"].i if "group" in node.attrs else 1
                dil = tuple(node.attrs["dilations"].ints) if "dilations" in node.attrs else (1, 1)
                data, weight = ins[0], ins[1]
                bias = ins[2] if len(ins) > 2 else None
                if pads[0] == pads[2] and pads[1] == pads[3]:
                    out = F.conv2d(
                        data, weight, bias,
                        stride=strides, padding=(pads[0], pads[1]),
                        dilation=dil, groups=groups or 1,
                    )
                else:
                    padded = F.pad(data, (pads[1], pads[3], pads[0], pads[2]))
                    out = F.conv2d(
                        padded, weight, bias,
                        stride=strides, dilation=dil, groups=groups or 1,
                    )
            elif op == "Relu":
                out = F.relu(ins[0])
            elif op == "MaxPool":
                kernel = tuple(node.attrs["kernel_shape"].ints)
                strides = tuple(node.attrs["strides"].ints) if "strides" in node.attrs else kernel
                pads = tuple(node.attrs["pads"].ints) if "pads" in node.attrs else (0, 0, 0, 0)
                out = F.max_pool2d(
                    ins[0], kernel_size=kernel, stride=strides,
                    padding=(pads[0], pads[1]),
                )
            elif op == "Sub":
                out = ins[0] - ins[1]
            elif op == "Div":
                out = ins[0] / ins[1]
            elif op == "Add":
                out = ins[0] + ins[1]
            elif op == "Mul":
                out = ins[0] * ins[1]
            else:  # unreachable: validated in __init__
                raise ModelLoadFailure(f"unsupported op {op}")
            values[node.outputs[0]] = out
        return [values[name] for name in self._graph.output_names]

    def features(self, batch: np.ndarray) -> list:
        torch = self._torch
        x = batch.astype(np.float32) / 255.0
        x = np.transpose(x, (0, 3, 1, 2)).copy()
        outs: list[list[np.ndarray]] = [[] for _ in range(5)]
        with torch.no_grad():
            for start in range(0, x.shape[0], self._CHUNK):
                chunk = torch.from_numpy(x[start : start + self._CHUNK])
                for j, t in enumerate(self._run(chunk)):
                    outs[j].append(t.numpy())
        return [np.concatenate(parts, axis=0) for parts in outs]
