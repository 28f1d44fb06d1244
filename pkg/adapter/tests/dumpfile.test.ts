import { describe, expect, it } from "vitest";

import { DumpFormatError, decodeDump, encodeDump, validateDump } from "../src/dumpfile.js";
import { selfTest, syntheticDump } from "../src/selftest.js";

describe("dump encoding", () => {
  it("round-trips bitwise through the reference reader", () => {
    const dump = syntheticDump();
    const blob = encodeDump(dump);
    const back = decodeDump(blob);
    expect(Buffer.compare(encodeDump(back), blob)).toBe(0);
    expect(back.header).toEqual(dump.header);
    expect(Array.from(back.attn[0][0])).toEqual(Array.from(dump.attn[0][0]));
    expect(Array.from(back.grad[1][0])).toEqual(Array.from(dump.grad[1][0]));
  });

  it("is deterministic for identical inputs", () => {
    expect(Buffer.compare(encodeDump(syntheticDump()), encodeDump(syntheticDump()))).toBe(0);
  });

  it("starts with the 8-byte magic and a little-endian header length", () => {
    const blob = encodeDump(syntheticDump());
    expect(blob.subarray(0, 8).toString("ascii")).toBe("COSATTN1");
    const headerLen = blob.readUInt32LE(8);
    const header = JSON.parse(blob.subarray(12, 12 + headerLen).toString("utf-8"));
    expect(Object.keys(header)).toEqual([
      "image_id",
      "question_id",
      "n_layers",
      "n_heads",
      "n_regions",
      "n_text",
      "d_h",
      "grad_target",
    ]);
  });

  it("rejects non-stochastic attention rows with a location", () => {
    const dump = syntheticDump();
    dump.attn[1][0][0] = 0.9;
    expect(() => validateDump(dump)).toThrow(/layer 1, head 0, row 0/);
  });

  it("rejects shape drift between header and tensors", () => {
    const dump = syntheticDump();
    dump.grad[0] = [new Float32Array(4)];
    expect(() => validateDump(dump)).toThrow(DumpFormatError);
    expect(() => validateDump(dump)).toThrow(/layer 0/);
  });

  it("rejects truncated payloads", () => {
    const blob = encodeDump(syntheticDump());
    expect(() => decodeDump(blob.subarray(0, blob.length - 4))).toThrow(/should end at byte/);
  });
});

describe("self test", () => {
  it("passes on synthetic arrays and catches all corruptions", () => {
    const report = selfTest();
    expect(report.cases.map((c) => c.name)).toEqual([
      "round trip",
      "corrupted magic",
      "corrupted header",
      "endianness-flipped payload",
    ]);
    for (const c of report.cases) {
      expect(c.passed, `${c.name}: ${c.detail}`).toBe(true);
    }
    expect(report.passed).toBe(true);
  });
});
