import { describe, expect, it } from "vitest";
import { decodeArray, encodeActions, encodeArray, rows } from "../src/protocol.js";

describe("array codec", () => {
  it("round-trips float32", () => {
    const values = Float32Array.from([1.5, -2.25, 0, 3e7]);
    const wire = encodeArray(values, [2, 2], "float32");
    const back = decodeArray(wire);
    expect(back.dtype).toBe("float32");
    expect(back.shape).toEqual([2, 2]);
    expect(Array.from(back.values as Float32Array)).toEqual(Array.from(values));
  });

  it("round-trips int64 via bigint", () => {
    const values = BigInt64Array.from([1n, -5n, 2n ** 40n]);
    const back = decodeArray(encodeArray(values, [3], "int64"));
    expect(Array.from(back.values as BigInt64Array)).toEqual([1n, -5n, 2n ** 40n]);
  });

  it("rejects shape mismatches", () => {
    expect(() => encodeArray(new Float32Array(3), [2, 2], "float32")).toThrow();
    const wire = encodeArray(new Uint8Array([1, 2, 3, 4]), [4], "uint8");
    wire.shape = [5];
    expect(() => decodeArray(wire)).toThrow();
  });

  it("rejects unknown dtypes", () => {
    expect(() => decodeArray({ dtype: "complex128", shape: [1], data: "" })).toThrow();
  });

  it("encodes action vectors as int64", () => {
    const wire = encodeActions([3n, 0n, 7n]);
    expect(wire.dtype).toBe("int64");
    const back = decodeArray(wire);
    expect(Array.from(back.values as BigInt64Array)).toEqual([3n, 0n, 7n]);
  });

  it("splits matrices into row views", () => {
    const wire = encodeArray(Float32Array.from([1, 2, 3, 4, 5, 6]), [2, 3], "float32");
    const back = decodeArray(wire);
    const [r0, r1] = rows(back);
    expect(Array.from(r0 as Float32Array)).toEqual([1, 2, 3]);
    expect(Array.from(r1 as Float32Array)).toEqual([4, 5, 6]);
  });
});
