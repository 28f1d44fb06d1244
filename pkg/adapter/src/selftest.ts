/**
 * Self test: writes a synthetic dump from in-memory arrays, reads it back
 * through the reference reader, and checks bitwise equality; then verifies
 * that deliberate corruptions (header bytes, endianness flips) are caught.
 */

import { Dump, decodeDump, encodeDump } from "./dumpfile.js";

export interface SelfTestCase {
  name: string;
  passed: boolean;
  detail: string;
}

export interface SelfTestReport {
  passed: boolean;
  cases: SelfTestCase[];
}

export function syntheticDump(): Dump {
  const n = 3;
  const rows = (values: number[][]) => Float32Array.from(values.flat());
  const uniform = rows([
    [0.5, 0.25, 0.25],
    [0.25, 0.5, 0.25],
    [0.25, 0.25, 0.5],
  ]);
  const peaked = rows([
    [1, 0, 0],
    [0, 1, 0],
    [0.125, 0.125, 0.75],
  ]);
  const grad0 = Float32Array.from({ length: n * n }, (_, i) => (i % 2 === 0 ? 0.5 : -0.25));
  const grad1 = Float32Array.from({ length: n * n }, (_, i) => i * 0.125 - 0.5);
  return {
    header: {
      image_id: "selftest",
      question_id: "0",
      n_layers: 2,
      n_heads: 1,
      n_regions: 2,
      n_text: 1,
      d_h: 4,
      grad_target: "synthetic arrays",
    },
    attn: [[uniform], [peaked]],
    grad: [[grad0], [grad1]],
  };
}

function expectFailure(name: string, mutate: (data: Buffer) => void): SelfTestCase {
  const blob = Buffer.from(encodeDump(syntheticDump()));
  mutate(blob);
  try {
    decodeDump(blob);
    return { name, passed: false, detail: "corruption was not detected" };
  } catch (e) {
    return { name, passed: true, detail: `rejected: ${(e as Error).message}` };
  }
}

export function selfTest(): SelfTestReport {
  const cases: SelfTestCase[] = [];

  const dump = syntheticDump();
  const blob = encodeDump(dump);
  const back = decodeDump(blob);
  const bitwise =
    Buffer.compare(blob, encodeDump(back)) === 0 &&
    JSON.stringify(back.header) === JSON.stringify(dump.header);
  cases.push({
    name: "round trip",
    passed: bitwise,
    detail: bitwise ? `bitwise identical (${blob.length} bytes)` : "mismatch after re-encode",
  });

  cases.push(
    expectFailure("corrupted magic", (data) => {
      data[7] = "0".charCodeAt(0);
    }),
  );
  cases.push(
    expectFailure("corrupted header", (data) => {
      data[13] = "!".charCodeAt(0); // breaks the JSON header
    }),
  );
  cases.push(
    expectFailure("endianness-flipped payload", (data) => {
      const headerLen = data.readUInt32LE(8);
      for (let offset = 12 + headerLen; offset < data.length; offset += 4) {
        const value = data.readFloatLE(offset);
        data.writeFloatBE(value, offset);
      }
    }),
  );

  return { passed: cases.every((c) => c.passed), cases };
}
