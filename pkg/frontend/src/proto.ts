/**
 * Minimal protobuf wire-format writer covering the ONNX message subset the
 * exporter emits: varint, length-delimited and 32-bit fields, composed
 * bottom-up into ModelProto bytes.
 */

const WIRE_VARINT = 0;
const WIRE_LEN = 2;

export function varint(value: number | bigint): Buffer {
  let n = BigInt(value);
  if (n < 0n) throw new Error('negative varints not supported');
  const bytes: number[] = [];
  for (;;) {
    const b = Number(n & 0x7fn);
    n >>= 7n;
    if (n > 0n) {
      bytes.push(b | 0x80);
    } else {
      bytes.push(b);
      return Buffer.from(bytes);
    }
  }
}

export function tag(field: number, wire: number): Buffer {
  return varint((field << 3) | wire);
}

export function intField(field: number, value: number | bigint): Buffer {
  return Buffer.concat([tag(field, WIRE_VARINT), varint(value)]);
}

export function lenField(field: number, payload: Buffer): Buffer {
  return Buffer.concat([tag(field, WIRE_LEN), varint(payload.length), payload]);
}

export function strField(field: number, value: string): Buffer {
  return lenField(field, Buffer.from(value, 'utf-8'));
}

// --- ONNX messages ---

/** TensorProto: dims(1), data_type(2)=FLOAT, name(8), raw_data(9). */
export function tensorProto(name: string, dims: number[], data: Float32Array): Buffer {
  const expected = dims.reduce((a, b) => a * b, 1);
  if (data.length !== expected) {
    throw new Error(`tensor ${name}: ${data.length} values for dims [${dims}]`);
  }
  const parts: Buffer[] = [];
  for (const d of dims) parts.push(intField(1, d));
  parts.push(intField(2, 1));
  parts.push(strField(8, name));
  const raw = Buffer.from(data.buffer, data.byteOffset, data.byteLength);
  parts.push(lenField(9, raw));
  return Buffer.concat(parts);
}

/** AttributeProto with type INTS(7): name(1), ints(8), type(20). */
export function attrInts(name: string, values: number[]): Buffer {
  const parts: Buffer[] = [strField(1, name)];
  for (const v of values) parts.push(intField(8, v));
  parts.push(intField(20, 7));
  return Buffer.concat(parts);
}

/** NodeProto: input(1), output(2), name(3), op_type(4), attribute(5). */
export function nodeProto(
  opType: string,
  inputs: string[],
  outputs: string[],
  attrs: Buffer[] = [],
  name = '',
): Buffer {
  const parts: Buffer[] = [];
  for (const i of inputs) parts.push(strField(1, i));
  for (const o of outputs) parts.push(strField(2, o));
  if (name) parts.push(strField(3, name));
  parts.push(strField(4, opType));
  for (const a of attrs) parts.push(lenField(5, a));
  return Buffer.concat(parts);
}

export type Dim = number | string;

function dimension(d: Dim): Buffer {
  return typeof d === 'string' ? strField(2, d) : intField(1, d);
}

/** ValueInfoProto for a float32 tensor with the given symbolic/fixed dims. */
export function valueInfo(name: string, dims: Dim[]): Buffer {
  const shape = Buffer.concat(dims.map((d) => lenField(1, dimension(d))));
  const tensorType = Buffer.concat([intField(1, 1), lenField(2, shape)]);
  const typeProto = lenField(1, tensorType);
  return Buffer.concat([strField(1, name), lenField(2, typeProto)]);
}

export interface GraphParts {
  nodes: Buffer[];
  initializers: Buffer[];
  inputs: Buffer[];
  outputs: Buffer[];
  name?: string;
}

/** GraphProto: node(1), name(2), initializer(5), input(11), output(12). */
export function graphProto(g: GraphParts): Buffer {
  const parts: Buffer[] = [];
  for (const n of g.nodes) parts.push(lenField(1, n));
  parts.push(strField(2, g.name ?? 'vgg16_features'));
  for (const t of g.initializers) parts.push(lenField(5, t));
  for (const vi of g.inputs) parts.push(lenField(11, vi));
  for (const vi of g.outputs) parts.push(lenField(12, vi));
  return Buffer.concat(parts);
}

export const IR_VERSION = 8;
export const OPSET_VERSION = 17;

/** ModelProto: ir_version(1), producer(2/3), graph(7), opset_import(8). */
export function modelProto(graph: Buffer, producer = 'vgg-onnx-export'): Buffer {
  const opset = Buffer.concat([strField(1, ''), intField(2, OPSET_VERSION)]);
  return Buffer.concat([
    intField(1, IR_VERSION),
    strField(2, producer),
    strField(3, '0.1.0'),
    lenField(7, graph),
    lenField(8, opset),
  ]);
}
