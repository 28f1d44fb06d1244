/**
 * Export driver: runs the toy checkpoint on (image, question, answer)
 * inputs and writes one attention dump per QA pair, plus an optional
 * grid-cell region catalog so the output feeds straight into the
 * downstream annotation tool.
 */

import { createHash } from "node:crypto";
import { readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { Dump, writeDump } from "./dumpfile.js";
import {
  gridRegionBoxes,
  gridRegionFeatures,
  readPnm,
  tokenIds,
  tokenize,
} from "./features.js";
import { CheckpointConfig, ToyCheckpoint } from "./model.js";
import { Mat } from "./tensor.js";

export const DEFAULT_GRAD_TARGET =
  "sum of log-probabilities of ground-truth answer tokens";

export interface ExportSpec {
  checkpoint: CheckpointConfig;
  /** region tokens come from a grid x grid partition of the padded image */
  grid: number;
  /** which layers to export; null means all */
  layerSelection: number[] | null;
  gradTarget: string;
}

export interface QaEntry {
  image_id: string;
  question: string;
  answer: string;
}

export class ExportError extends Error {}

export function readQaJsonl(path: string): QaEntry[] {
  const entries: QaEntry[] = [];
  const lines = readFileSync(path, "utf-8").split("\n");
  for (let i = 0; i < lines.length; i++) {
    if (lines[i].trim().length === 0) continue;
    let obj: Record<string, unknown>;
    try {
      obj = JSON.parse(lines[i]);
    } catch (e) {
      throw new ExportError(`${path}:${i + 1}: bad QA line: ${e}`);
    }
    const { image_id, question, answer } = obj as Record<string, string>;
    if (!image_id || !question || !answer) {
      throw new ExportError(`${path}:${i + 1}: QA fields must be nonempty`);
    }
    entries.push({ image_id, question, answer });
  }
  return entries;
}

export function groupByImage(entries: QaEntry[]): Map<string, QaEntry[]> {
  const groups = new Map<string, QaEntry[]>();
  for (const entry of entries) {
    const list = groups.get(entry.image_id) ?? [];
    list.push(entry);
    groups.set(entry.image_id, list);
  }
  return groups;
}

/** Build the joint [region | text] embedding matrix for one QA pair. */
function embedInputs(
  checkpoint: ToyCheckpoint,
  imagePath: string,
  question: string,
  grid: number,
): { x0: Mat; nRegions: number; nText: number } {
  const features = gridRegionFeatures(readPnm(imagePath), grid);
  const questionTokens = tokenize(question);
  if (questionTokens.length === 0) {
    throw new ExportError(`question has no tokens: ${JSON.stringify(question)}`);
  }
  const ids = tokenIds(question, checkpoint.config.vocab);
  const nRegions = features.length;
  const n = nRegions + ids.length;
  const d = checkpoint.config.dModel;
  const x0 = Mat.zeros(n, d);
  for (let r = 0; r < nRegions; r++) {
    const feat = checkpoint.projectRegionFeature(features[r]);
    const pos = checkpoint.embedPosition(r);
    for (let j = 0; j < d; j++) x0.set(r, j, feat[j] + pos[j]);
  }
  for (let t = 0; t < ids.length; t++) {
    const tok = checkpoint.embedToken(ids[t]);
    const pos = checkpoint.embedPosition(nRegions + t);
    for (let j = 0; j < d; j++) x0.set(nRegions + t, j, tok[j] + pos[j]);
  }
  return { x0, nRegions, nText: ids.length };
}

/**
 * Run one (image, question, answer) through the checkpoint and build the
 * dump in memory. Throws ExportError before anything is written when the
 * target is detached or a layer's tensors drift from the header shape.
 */
export function buildDump(
  spec: ExportSpec,
  imagePath: string,
  qa: QaEntry,
  questionId: string,
): Dump {
  const checkpoint = new ToyCheckpoint(spec.checkpoint);
  const { x0, nRegions, nText } = embedInputs(checkpoint, imagePath, qa.question, spec.grid);
  const answerIds = tokenIds(qa.answer, spec.checkpoint.vocab);
  if (answerIds.length === 0) {
    throw new ExportError(
      `target detached: answer ${JSON.stringify(qa.answer)} has no tokens to score`,
    );
  }
  const trace = checkpoint.traceAttention(x0, nRegions, answerIds);

  const layers =
    spec.layerSelection ?? Array.from({ length: spec.checkpoint.layers }, (_, i) => i);
  for (const l of layers) {
    if (l < 0 || l >= spec.checkpoint.layers) {
      throw new ExportError(`layer selection ${l} out of range`);
    }
  }
  const n = nRegions + nText;
  const toF32 = (m: { data: Float64Array; rows: number; cols: number }, l: number) => {
    if (m.rows !== n || m.cols !== n) {
      throw new ExportError(`layer ${l}: tensor shape ${m.rows}x${m.cols} drifted from ${n}x${n}`);
    }
    return new Float32Array(m.data);
  };
  return {
    header: {
      image_id: qa.image_id,
      question_id: questionId,
      n_layers: layers.length,
      n_heads: spec.checkpoint.heads,
      n_regions: nRegions,
      n_text: nText,
      d_h: checkpoint.dHead,
      grad_target: spec.gradTarget,
    },
    attn: layers.map((l) => trace.attn[l].map((m) => toF32(m, l))),
    grad: layers.map((l) => trace.grad[l].map((m) => toF32(m, l))),
  };
}

export interface ExportResult {
  path: string;
  sha256: string;
  image_id: string;
  question_id: string;
}

/** Export every QA pair; files are named <image_id>__<question_id>.cosattn. */
export function exportAll(
  spec: ExportSpec,
  qaPath: string,
  imagesDir: string,
  outDir: string,
  regionsOut: string | null = null,
): ExportResult[] {
  const groups = groupByImage(readQaJsonl(qaPath));
  const results: ExportResult[] = [];
  const catalogs: object[] = [];
  for (const [imageId, pairs] of groups) {
    const imagePath = join(imagesDir, `${imageId}.ppm`);
    pairs.forEach((qa, index) => {
      const dump = buildDump(spec, imagePath, qa, String(index));
      const path = join(outDir, `${imageId}__${index}.cosattn`);
      const blob = writeDump(dump, path);
      results.push({
        path,
        sha256: createHash("sha256").update(blob).digest("hex"),
        image_id: imageId,
        question_id: String(index),
      });
    });
    if (regionsOut !== null) {
      const img = readPnm(imagePath);
      catalogs.push({
        image_id: imageId,
        width: img.width,
        height: img.height,
        regions: gridRegionBoxes(spec.grid),
      });
    }
  }
  if (regionsOut !== null) {
    writeFileSync(regionsOut, JSON.stringify(catalogs, null, 2) + "\n");
  }
  return results;
}
