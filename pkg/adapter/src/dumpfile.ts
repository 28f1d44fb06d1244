/**
 * Binary attention-dump interchange format.
 *
 * Layout: 8-byte ASCII magic "COSATTN1", little-endian u32 header length,
 * UTF-8 JSON header, then per layer the attention and gradient tensors as
 * little-endian float32, head-major row-major. The reference reader here
 * exists to close the loop in self tests; production reading happens in
 * the Python toolkit.
 */

import { writeFileSync, readFileSync } from "node:fs";

export const MAGIC = "COSATTN1";
export const ROW_SUM_TOL = 1e-5;

export interface DumpHeader {
  image_id: string;
  question_id: string;
  n_layers: number;
  n_heads: number;
  n_regions: number;
  n_text: number;
  d_h: number;
  grad_target: string;
}

export interface Dump {
  header: DumpHeader;
  /** [layer][head] row-major N x N, attention then gradient. */
  attn: Float32Array[][];
  grad: Float32Array[][];
}

export class DumpFormatError extends Error {}

function headerJson(header: DumpHeader): string {
  // fixed key order keeps serialization byte-reproducible
  return JSON.stringify({
    image_id: header.image_id,
    question_id: header.question_id,
    n_layers: header.n_layers,
    n_heads: header.n_heads,
    n_regions: header.n_regions,
    n_text: header.n_text,
    d_h: header.d_h,
    grad_target: header.grad_target,
  });
}

export function validateDump(dump: Dump): void {
  const { n_layers, n_heads, n_regions, n_text, grad_target } = dump.header;
  const n = n_regions + n_text;
  if (n_layers < 1 || n_heads < 1) throw new DumpFormatError("need >= 1 layer and head");
  if (n < 2) throw new DumpFormatError("need a sequence of >= 2 tokens");
  if (grad_target.length === 0) throw new DumpFormatError("grad_target must be nonempty");
  if (dump.attn.length !== n_layers || dump.grad.length !== n_layers) {
    throw new DumpFormatError(
      `layer count mismatch: attn ${dump.attn.length}, grad ${dump.grad.length}, header ${n_layers}`,
    );
  }
  for (let l = 0; l < n_layers; l++) {
    if (dump.attn[l].length !== n_heads || dump.grad[l].length !== n_heads) {
      throw new DumpFormatError(`layer ${l}: head count drifted from header`);
    }
    for (let h = 0; h < n_heads; h++) {
      if (dump.attn[l][h].length !== n * n || dump.grad[l][h].length !== n * n) {
        throw new DumpFormatError(`layer ${l}, head ${h}: tensor shape drifted from header`);
      }
      for (let row = 0; row < n; row++) {
        let sum = 0;
        for (let col = 0; col < n; col++) {
          const v = dump.attn[l][h][row * n + col];
          if (v < 0 || v > 1) {
            throw new DumpFormatError(
              `layer ${l}, head ${h}, row ${row}: attention entry ${v} outside [0, 1]`,
            );
          }
          sum += v;
        }
        if (Math.abs(sum - 1) > ROW_SUM_TOL) {
          throw new DumpFormatError(
            `layer ${l}, head ${h}, row ${row}: attention row sums to ${sum}`,
          );
        }
      }
    }
  }
}

export function encodeDump(dump: Dump): Buffer {
  validateDump(dump);
  const { n_layers, n_heads, n_regions, n_text } = dump.header;
  const n = n_regions + n_text;
  const headerBytes = Buffer.from(headerJson(dump.header), "utf-8");
  const lengthBytes = Buffer.alloc(4);
  lengthBytes.writeUInt32LE(headerBytes.length, 0);
  const payload = Buffer.alloc(n_layers * 2 * n_heads * n * n * 4);
  let offset = 0;
  for (let l = 0; l < n_layers; l++) {
    for (const tensor of [dump.attn[l], dump.grad[l]]) {
      for (let h = 0; h < n_heads; h++) {
        for (let i = 0; i < n * n; i++) {
          payload.writeFloatLE(tensor[h][i], offset);
          offset += 4;
        }
      }
    }
  }
  return Buffer.concat([Buffer.from(MAGIC, "ascii"), lengthBytes, headerBytes, payload]);
}

export function writeDump(dump: Dump, path: string): Buffer {
  const blob = encodeDump(dump);
  writeFileSync(path, blob);
  return blob;
}

export function decodeDump(data: Buffer): Dump {
  if (data.subarray(0, 8).toString("ascii") !== MAGIC) {
    throw new DumpFormatError(`bad magic ${data.subarray(0, 8).toString("ascii")}`);
  }
  if (data.length < 12) throw new DumpFormatError("missing header length");
  const headerLen = data.readUInt32LE(8);
  const headerEnd = 12 + headerLen;
  if (data.length < headerEnd) throw new DumpFormatError("header truncated");
  let header: DumpHeader;
  try {
    header = JSON.parse(data.subarray(12, headerEnd).toString("utf-8")) as DumpHeader;
  } catch (e) {
    throw new DumpFormatError(`header is not valid JSON: ${e}`);
  }
  const n = header.n_regions + header.n_text;
  const expected = headerEnd + header.n_layers * 2 * header.n_heads * n * n * 4;
  if (data.length !== expected) {
    throw new DumpFormatError(`payload should end at byte ${expected}, file has ${data.length}`);
  }
  const attn: Float32Array[][] = [];
  const grad: Float32Array[][] = [];
  let offset = headerEnd;
  const readTensor = (): Float32Array[] => {
    const heads: Float32Array[] = [];
    for (let h = 0; h < header.n_heads; h++) {
      const arr = new Float32Array(n * n);
      for (let i = 0; i < n * n; i++) {
        arr[i] = data.readFloatLE(offset);
        offset += 4;
      }
      heads.push(arr);
    }
    return heads;
  };
  for (let l = 0; l < header.n_layers; l++) {
    attn.push(readTensor());
    grad.push(readTensor());
  }
  const dump = { header, attn, grad };
  validateDump(dump);
  return dump;
}

export function readDump(path: string): Dump {
  return decodeDump(readFileSync(path));
}
