/**
 * Toy multi-head attention checkpoint with recording hooks.
 *
 * The network is a residual stack of self-attention layers over a joint
 * [region | text] token sequence, read out through a mean pool of the text
 * states into vocabulary logits. Every attention map is recorded on the
 * forward pass; the backward pass propagates the scalar target back
 * through the stack and records the gradient arriving at each attention
 * map. Weights are materialized deterministically from (seed, tensor name).
 */

import { KeyedRng } from "./rng.js";
import {
  Mat,
  matmul,
  matmulT,
  matmulTA,
  scale,
  softmaxBackwardRows,
  softmaxRows,
} from "./tensor.js";

export interface CheckpointConfig {
  layers: number;
  heads: number;
  dModel: number;
  vocab: number;
  seed: number;
}

export interface AttentionTrace {
  /** attn[layer][head] and grad[layer][head], each N x N. */
  attn: Mat[][];
  grad: Mat[][];
  target: number;
  /** gradient of the target w.r.t. the input embeddings (for checking). */
  inputGrad: Mat;
}

interface LayerWeights {
  wq: Mat[];
  wk: Mat[];
  wv: Mat[];
  wo: Mat;
}

export class ToyCheckpoint {
  readonly config: CheckpointConfig;
  readonly dHead: number;
  private layers: LayerWeights[] = [];
  private wOut: Mat;

  constructor(config: CheckpointConfig) {
    if (config.dModel % config.heads !== 0) {
      throw new Error(`dModel ${config.dModel} not divisible by heads ${config.heads}`);
    }
    this.config = config;
    this.dHead = config.dModel / config.heads;
    const d = config.dModel;
    const wScale = 1 / Math.sqrt(d);
    for (let l = 0; l < config.layers; l++) {
      const layer: LayerWeights = { wq: [], wk: [], wv: [], wo: Mat.zeros(d, d) };
      for (let h = 0; h < config.heads; h++) {
        layer.wq.push(this.materialize(`layer${l}.head${h}.wq`, d, this.dHead, wScale));
        layer.wk.push(this.materialize(`layer${l}.head${h}.wk`, d, this.dHead, wScale));
        layer.wv.push(this.materialize(`layer${l}.head${h}.wv`, d, this.dHead, wScale));
      }
      layer.wo = this.materialize(`layer${l}.wo`, d, d, wScale);
      this.layers.push(layer);
    }
    this.wOut = this.materialize("readout", config.vocab, d, wScale);
  }

  private materialize(name: string, rows: number, cols: number, s: number): Mat {
    const m = Mat.zeros(rows, cols);
    new KeyedRng(this.config.seed, name).fillNormal(m.data, s);
    return m;
  }

  embedToken(id: number): Float64Array {
    const v = new Float64Array(this.config.dModel);
    new KeyedRng(this.config.seed, `tok${id}`).fillNormal(v, 1);
    return v;
  }

  embedPosition(index: number): Float64Array {
    const v = new Float64Array(this.config.dModel);
    new KeyedRng(this.config.seed, `pos${index}`).fillNormal(v, 0.5);
    return v;
  }

  projectRegionFeature(rgb: [number, number, number]): Float64Array {
    const v = new Float64Array(this.config.dModel);
    const w = Mat.zeros(this.config.dModel, 3);
    new KeyedRng(this.config.seed, "regionProj").fillNormal(w.data, 1);
    for (let i = 0; i < this.config.dModel; i++) {
      v[i] = w.get(i, 0) * rgb[0] + w.get(i, 1) * rgb[1] + w.get(i, 2) * rgb[2];
    }
    return v;
  }

  /**
   * Forward and backward over an embedded sequence.
   *
   * The scalar target is the sum of log-probabilities of the answer token
   * ids under a softmax readout of the mean-pooled text states.
   */
  traceAttention(x0: Mat, nRegions: number, answerIds: number[]): AttentionTrace {
    const { layers: L, heads: H, dModel: d, vocab } = this.config;
    const n = x0.rows;
    const nText = n - nRegions;
    if (nText < 1) throw new Error("need at least one text token");
    if (answerIds.length === 0) throw new Error("target detached: no answer token ids");

    // forward, keeping what the backward pass needs
    const attn: Mat[][] = [];
    const perLayer: { x: Mat; q: Mat[]; k: Mat[]; v: Mat[]; heads: Mat[] }[] = [];
    let x = x0.clone();
    for (let l = 0; l < L; l++) {
      const saved = { x: x.clone(), q: [] as Mat[], k: [] as Mat[], v: [] as Mat[], heads: [] as Mat[] };
      const rowsA: Mat[] = [];
      const concat = Mat.zeros(n, d);
      for (let h = 0; h < H; h++) {
        const q = matmul(x, this.layers[l].wq[h]);
        const k = matmul(x, this.layers[l].wk[h]);
        const v = matmul(x, this.layers[l].wv[h]);
        const a = softmaxRows(scale(matmulT(q, k), 1 / Math.sqrt(this.dHead)));
        const o = matmul(a, v);
        saved.q.push(q);
        saved.k.push(k);
        saved.v.push(v);
        saved.heads.push(o);
        rowsA.push(a);
        for (let i = 0; i < n; i++) {
          for (let j = 0; j < this.dHead; j++) {
            concat.set(i, h * this.dHead + j, o.get(i, j));
          }
        }
      }
      attn.push(rowsA);
      perLayer.push(saved);
      const projected = matmul(concat, this.layers[l].wo);
      const next = x.clone();
      next.addInPlace(projected);
      x = next;
    }

    // readout: mean pool text rows, softmax over vocab
    const pooled = new Float64Array(d);
    for (let i = nRegions; i < n; i++) {
      for (let j = 0; j < d; j++) pooled[j] += x.get(i, j) / nText;
    }
    const logits = new Float64Array(vocab);
    for (let k = 0; k < vocab; k++) {
      let acc = 0;
      for (let j = 0; j < d; j++) acc += this.wOut.get(k, j) * pooled[j];
      logits[k] = acc;
    }
    let maxLogit = -Infinity;
    for (const v of logits) maxLogit = Math.max(maxLogit, v);
    let z = 0;
    for (const v of logits) z += Math.exp(v - maxLogit);
    const logZ = maxLogit + Math.log(z);
    let target = 0;
    for (const id of answerIds) target += logits[id] - logZ;

    // backward: d target / d logits = counts - |answer| * softmax(logits)
    const dLogits = new Float64Array(vocab);
    for (const id of answerIds) dLogits[id] += 1;
    for (let k = 0; k < vocab; k++) {
      dLogits[k] -= answerIds.length * Math.exp(logits[k] - logZ);
    }
    const dPooled = new Float64Array(d);
    for (let k = 0; k < vocab; k++) {
      if (dLogits[k] === 0) continue;
      for (let j = 0; j < d; j++) dPooled[j] += dLogits[k] * this.wOut.get(k, j);
    }
    let dX = Mat.zeros(n, d);
    for (let i = nRegions; i < n; i++) {
      for (let j = 0; j < d; j++) dX.set(i, j, dPooled[j] / nText);
    }

    const grad: Mat[][] = Array.from({ length: L }, () => []);
    for (let l = L - 1; l >= 0; l--) {
      const saved = perLayer[l];
      const dConcat = matmulT(dX, this.layers[l].wo); // (n x d) @ wo^T
      const dXPrev = dX.clone(); // residual branch
      for (let h = 0; h < H; h++) {
        const dO = Mat.zeros(n, this.dHead);
        for (let i = 0; i < n; i++) {
          for (let j = 0; j < this.dHead; j++) {
            dO.set(i, j, dConcat.get(i, h * this.dHead + j));
          }
        }
        const a = attn[l][h];
        const dA = matmulT(dO, saved.v[h]); // gradient arriving at the attention map
        grad[l][h] = dA;
        const dV = matmulTA(a, dO);
        const dS = scale(softmaxBackwardRows(a, dA), 1 / Math.sqrt(this.dHead));
        const dQ = matmul(dS, saved.k[h]);
        const dK = matmulTA(dS, saved.q[h]);
        dXPrev.addInPlace(matmulT(dQ, this.layers[l].wq[h]));
        dXPrev.addInPlace(matmulT(dK, this.layers[l].wk[h]));
        dXPrev.addInPlace(matmulT(dV, this.layers[l].wv[h]));
      }
      dX = dXPrev;
    }

    return { attn, grad, target, inputGrad: dX };
  }

  /** Forward-only target, for finite-difference checks. */
  targetOnly(x0: Mat, nRegions: number, answerIds: number[]): number {
    return this.traceAttention(x0, nRegions, answerIds).target;
  }
}
