/**
 * Wire protocol for the pensim bridge.
 *
 * Requests and responses are single-line JSON objects. Arrays cross the
 * boundary as `{dtype, shape, data}` where `data` is the raw little-endian,
 * row-major buffer in base64. Supported dtypes map onto typed arrays:
 * float32, float64, int64 (BigInt64Array), uint8.
 */

export interface WireArray {
  dtype: string;
  shape: number[];
  data: string;
}

export type NumericArray =
  | Float32Array
  | Float64Array
  | BigInt64Array
  | Uint8Array;

export interface DecodedArray<T extends NumericArray = NumericArray> {
  dtype: string;
  shape: number[];
  values: T;
}

const DTYPE_CTOR = {
  float32: Float32Array,
  float64: Float64Array,
  int64: BigInt64Array,
  uint8: Uint8Array,
} as const;

export type Dtype = keyof typeof DTYPE_CTOR;

export function decodeArray(wire: WireArray): DecodedArray {
  const ctor = DTYPE_CTOR[wire.dtype as Dtype];
  if (!ctor) {
    throw new Error(`unsupported dtype ${wire.dtype}`);
  }
  const buf = Buffer.from(wire.data, "base64");
  const expected = wire.shape.reduce((a, b) => a * b, 1);
  if (buf.byteLength !== expected * ctor.BYTES_PER_ELEMENT) {
    throw new Error(
      `array payload of ${buf.byteLength} bytes does not match shape ${wire.shape} (${wire.dtype})`,
    );
  }
  const values = new ctor(buf.buffer, buf.byteOffset, expected);
  // copy out of the transient Buffer backing store
  return { dtype: wire.dtype, shape: wire.shape, values: values.slice() };
}

export function encodeArray(
  values: NumericArray,
  shape: number[],
  dtype: Dtype,
): WireArray {
  const expected = shape.reduce((a, b) => a * b, 1);
  if (values.length !== expected) {
    throw new Error(`values length ${values.length} does not match shape ${shape}`);
  }
  const bytes = Buffer.from(values.buffer, values.byteOffset, values.byteLength);
  return { dtype, shape, data: bytes.toString("base64") };
}

export function encodeActions(actions: bigint[] | BigInt64Array): WireArray {
  const arr = actions instanceof BigInt64Array ? actions : BigInt64Array.from(actions);
  return encodeArray(arr, [arr.length], "int64");
}

export interface Request {
  id: number;
  op: string;
  [key: string]: unknown;
}

export interface Response {
  id: number | null;
  ok: boolean;
  error?: string;
  [key: string]: unknown;
}

/** Rows of a 2-d wire array as individual typed arrays. */
export function rows<T extends NumericArray>(arr: DecodedArray<T>): T[] {
  if (arr.shape.length < 2) {
    throw new Error("rows() needs at least a 2-d array");
  }
  const rowLen = arr.shape.slice(1).reduce((a, b) => a * b, 1);
  const out: T[] = [];
  for (let i = 0; i < arr.shape[0]; i++) {
    out.push(arr.values.subarray(i * rowLen, (i + 1) * rowLen) as T);
  }
  return out;
}
