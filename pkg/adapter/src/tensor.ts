/** Minimal dense float64 matrices, enough for a toy attention stack. */

export class Mat {
  constructor(
    public readonly rows: number,
    public readonly cols: number,
    public readonly data: Float64Array,
  ) {
    if (data.length !== rows * cols) {
      throw new Error(`buffer length ${data.length} != ${rows}x${cols}`);
    }
  }

  static zeros(rows: number, cols: number): Mat {
    return new Mat(rows, cols, new Float64Array(rows * cols));
  }

  get(r: number, c: number): number {
    return this.data[r * this.cols + c];
  }

  set(r: number, c: number, v: number): void {
    this.data[r * this.cols + c] = v;
  }

  clone(): Mat {
    return new Mat(this.rows, this.cols, this.data.slice());
  }

  addInPlace(other: Mat): void {
    for (let i = 0; i < this.data.length; i++) this.data[i] += other.data[i];
  }
}

/** a (m x k) @ b (k x n) */
export function matmul(a: Mat, b: Mat): Mat {
  if (a.cols !== b.rows) throw new Error(`matmul shape: ${a.cols} vs ${b.rows}`);
  const out = Mat.zeros(a.rows, b.cols);
  for (let i = 0; i < a.rows; i++) {
    for (let k = 0; k < a.cols; k++) {
      const av = a.data[i * a.cols + k];
      if (av === 0) continue;
      for (let j = 0; j < b.cols; j++) {
        out.data[i * b.cols + j] += av * b.data[k * b.cols + j];
      }
    }
  }
  return out;
}

/** a (m x k) @ b^T (n x k) */
export function matmulT(a: Mat, b: Mat): Mat {
  if (a.cols !== b.cols) throw new Error(`matmulT shape: ${a.cols} vs ${b.cols}`);
  const out = Mat.zeros(a.rows, b.rows);
  for (let i = 0; i < a.rows; i++) {
    for (let j = 0; j < b.rows; j++) {
      let acc = 0;
      for (let k = 0; k < a.cols; k++) {
        acc += a.data[i * a.cols + k] * b.data[j * b.cols + k];
      }
      out.data[i * b.rows + j] = acc;
    }
  }
  return out;
}

/** a^T (k x m) @ b (k x n) */
export function matmulTA(a: Mat, b: Mat): Mat {
  if (a.rows !== b.rows) throw new Error(`matmulTA shape: ${a.rows} vs ${b.rows}`);
  const out = Mat.zeros(a.cols, b.cols);
  for (let k = 0; k < a.rows; k++) {
    for (let i = 0; i < a.cols; i++) {
      const av = a.data[k * a.cols + i];
      if (av === 0) continue;
      for (let j = 0; j < b.cols; j++) {
        out.data[i * b.cols + j] += av * b.data[k * b.cols + j];
      }
    }
  }
  return out;
}

export function scale(a: Mat, s: number): Mat {
  const out = a.clone();
  for (let i = 0; i < out.data.length; i++) out.data[i] *= s;
  return out;
}

export function softmaxRows(a: Mat): Mat {
  const out = Mat.zeros(a.rows, a.cols);
  for (let i = 0; i < a.rows; i++) {
    let max = -Infinity;
    for (let j = 0; j < a.cols; j++) max = Math.max(max, a.get(i, j));
    let sum = 0;
    for (let j = 0; j < a.cols; j++) {
      const e = Math.exp(a.get(i, j) - max);
      out.set(i, j, e);
      sum += e;
    }
    for (let j = 0; j < a.cols; j++) out.set(i, j, out.get(i, j) / sum);
  }
  return out;
}

/** Per row: dS = A * (dA - <dA, A>), the softmax Jacobian product. */
export function softmaxBackwardRows(A: Mat, dA: Mat): Mat {
  const out = Mat.zeros(A.rows, A.cols);
  for (let i = 0; i < A.rows; i++) {
    let inner = 0;
    for (let j = 0; j < A.cols; j++) inner += dA.get(i, j) * A.get(i, j);
    for (let j = 0; j < A.cols; j++) {
      out.set(i, j, A.get(i, j) * (dA.get(i, j) - inner));
    }
  }
  return out;
}
