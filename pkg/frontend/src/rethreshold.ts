// Client-side re-thresholding with exactly the server's conventions:
// mask = (p >= t) on valid pixels, components 8-connected with ids in scan
// order of each region's first pixel, area filtered in square meters.
//
// The probability grid is fetched once per job; slider moves re-run this
// locally, so tuning needs no server round-trips and lands on the same
// pixels the server would keep.

import type { Bgrd } from "./bgrd.js";

export interface Component {
  id: number;
  areaPx: number;
  areaM2: number;
  bboxPx: [number, number, number, number]; // row0, col0, row1, col1 inclusive
  meanProbability: number;
}

export interface Detections {
  mask: Uint8Array;
  components: Component[];
}

export function rethreshold(grid: Bgrd, t: number, minAreaM2: number): Detections {
  const { rows, cols, values, valid, pixelSize } = grid;
  const n = rows * cols;
  const bin = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    bin[i] = values[i] >= t && valid[i] === 1 ? 1 : 0;
  }

  const labels = new Int32Array(n); // 0 = unlabeled
  const stack = new Int32Array(n);
  const components: Component[] = [];
  const keptLabels = new Set<number>();
  let nextLabel = 0;

  for (let seed = 0; seed < n; seed++) {
    if (bin[seed] === 0 || labels[seed] !== 0) continue;
    nextLabel += 1;
    let top = 0;
    stack[top++] = seed;
    labels[seed] = nextLabel;
    let areaPx = 0;
    let probSum = 0;
    let r0 = rows, c0 = cols, r1 = -1, c1 = -1;
    while (top > 0) {
      const idx = stack[--top];
      const r = (idx / cols) | 0;
      const c = idx % cols;
      areaPx += 1;
      probSum += values[idx];
      if (r < r0) r0 = r;
      if (r > r1) r1 = r;
      if (c < c0) c0 = c;
      if (c > c1) c1 = c;
      for (let dr = -1; dr <= 1; dr++) {
        const nr = r + dr;
        if (nr < 0 || nr >= rows) continue;
        for (let dc = -1; dc <= 1; dc++) {
          if (dr === 0 && dc === 0) continue;
          const nc = c + dc;
          if (nc < 0 || nc >= cols) continue;
          const nidx = nr * cols + nc;
          if (bin[nidx] === 1 && labels[nidx] === 0) {
            labels[nidx] = nextLabel;
            stack[top++] = nidx;
          }
        }
      }
    }
    const areaM2 = areaPx * pixelSize * pixelSize;
    if (areaM2 >= minAreaM2) {
      keptLabels.add(nextLabel);
      components.push({
        id: nextLabel,
        areaPx,
        areaM2,
        bboxPx: [r0, c0, r1, c1],
        meanProbability: probSum / areaPx,
      });
    }
  }

  const mask = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    if (labels[i] !== 0 && keptLabels.has(labels[i])) mask[i] = 1;
  }
  return { mask, components };
}
