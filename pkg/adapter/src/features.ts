/**
 * Input preparation: PPM/PGM image loading, square padding, grid region
 * features, and the hashed-vocabulary tokenizer shared by questions and
 * answers.
 */

import { readFileSync } from "node:fs";
import { hashToken } from "./rng.js";

export interface Image {
  width: number;
  height: number;
  channels: number;
  pixels: Uint8Array; // row-major, interleaved
}

export function readPnm(path: string): Image {
  const data = readFileSync(path);
  const magic = data.subarray(0, 2).toString("ascii");
  if (magic !== "P6" && magic !== "P5") {
    throw new Error(`${path}: unsupported image magic ${magic}`);
  }
  const fields: number[] = [];
  let offset = 2;
  while (fields.length < 3) {
    while (offset < data.length) {
      const c = data[offset];
      if (c === 0x23) {
        while (offset < data.length && data[offset] !== 0x0a) offset++;
      } else if (c === 0x20 || c === 0x09 || c === 0x0a || c === 0x0d) {
        offset++;
      } else {
        break;
      }
    }
    const start = offset;
    while (offset < data.length && !isSpace(data[offset])) offset++;
    if (start === offset) throw new Error(`${path}: malformed header`);
    fields.push(parseInt(data.subarray(start, offset).toString("ascii"), 10));
    offset++;
  }
  const [width, height, maxval] = fields;
  if (maxval !== 255) throw new Error(`${path}: only maxval 255 supported`);
  const channels = magic === "P6" ? 3 : 1;
  const expected = width * height * channels;
  const pixels = data.subarray(offset, offset + expected);
  if (pixels.length !== expected) {
    throw new Error(`${path}: truncated pixel data`);
  }
  return { width, height, channels, pixels: new Uint8Array(pixels) };
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

/** Center the image on a max(w, h) square canvas (zero fill). */
export function padToSquare(img: Image): Image {
  const side = Math.max(img.width, img.height);
  if (side === img.width && side === img.height) return img;
  const offX = Math.floor((side - img.width) / 2);
  const offY = Math.floor((side - img.height) / 2);
  const pixels = new Uint8Array(side * side * img.channels);
  for (let y = 0; y < img.height; y++) {
    const src = y * img.width * img.channels;
    const dst = ((y + offY) * side + offX) * img.channels;
    pixels.set(img.pixels.subarray(src, src + img.width * img.channels), dst);
  }
  return { width: side, height: side, channels: img.channels, pixels };
}

/**
 * Mean color of each cell of a grid x grid partition of the padded square,
 * normalized to [0, 1]. Cell order is row-major, matching the region token
 * layout.
 */
export function gridRegionFeatures(img: Image, grid: number): [number, number, number][] {
  const sq = padToSquare(img);
  const features: [number, number, number][] = [];
  for (let gy = 0; gy < grid; gy++) {
    for (let gx = 0; gx < grid; gx++) {
      const x0 = Math.floor((gx * sq.width) / grid);
      const x1 = Math.max(x0 + 1, Math.floor(((gx + 1) * sq.width) / grid));
      const y0 = Math.floor((gy * sq.height) / grid);
      const y1 = Math.max(y0 + 1, Math.floor(((gy + 1) * sq.height) / grid));
      const acc = [0, 0, 0];
      let count = 0;
      for (let y = y0; y < y1; y++) {
        for (let x = x0; x < x1; x++) {
          const base = (y * sq.width + x) * sq.channels;
          if (sq.channels === 3) {
            acc[0] += sq.pixels[base];
            acc[1] += sq.pixels[base + 1];
            acc[2] += sq.pixels[base + 2];
          } else {
            acc[0] += sq.pixels[base];
            acc[1] += sq.pixels[base];
            acc[2] += sq.pixels[base];
          }
          count++;
        }
      }
      features.push([acc[0] / count / 255, acc[1] / count / 255, acc[2] / count / 255]);
    }
  }
  return features;
}

/** Normalized [w0, w1, h0, h1] box of each grid cell, row-major. */
export function gridRegionBoxes(grid: number): [number, number, number, number][] {
  const boxes: [number, number, number, number][] = [];
  for (let gy = 0; gy < grid; gy++) {
    for (let gx = 0; gx < grid; gx++) {
      boxes.push([gx / grid, (gx + 1) / grid, gy / grid, (gy + 1) / grid]);
    }
  }
  return boxes;
}

export function tokenize(text: string): string[] {
  return text
    .toLowerCase()
    .split(/[^a-z0-9]+/)
    .filter((t) => t.length > 0);
}

export function tokenIds(text: string, vocab: number): number[] {
  return tokenize(text).map((t) => hashToken(t, vocab));
}
