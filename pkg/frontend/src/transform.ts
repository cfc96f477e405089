// View transform between grid pixel space, world coordinates, and the
// canvas. Pan/zoom never touches data; overlays are pure functions of
// (grid, parameters, transform).

import type { Bgrd } from "./bgrd.js";

export interface View {
  zoom: number; // canvas px per grid px
  panX: number; // canvas position of grid pixel (0, 0)
  panY: number;
}

export interface GridMeta {
  rows: number;
  cols: number;
  originEasting: number;
  originNorthing: number;
  pixelSize: number;
}

export function pixelToWorld(g: GridMeta, row: number, col: number): [number, number] {
  return [g.originEasting + col * g.pixelSize, g.originNorthing - row * g.pixelSize];
}

export function worldToPixel(g: GridMeta, easting: number, northing: number): [number, number] {
  return [
    (g.originNorthing - northing) / g.pixelSize,
    (easting - g.originEasting) / g.pixelSize,
  ];
}

export function pixelToScreen(v: View, row: number, col: number): [number, number] {
  return [v.panX + col * v.zoom, v.panY + row * v.zoom];
}

export function screenToPixel(v: View, x: number, y: number): [number, number] {
  return [(y - v.panY) / v.zoom, (x - v.panX) / v.zoom];
}

export function fitView(g: GridMeta, canvasW: number, canvasH: number): View {
  const zoom = Math.min(canvasW / g.cols, canvasH / g.rows);
  return {
    zoom,
    panX: (canvasW - g.cols * zoom) / 2,
    panY: (canvasH - g.rows * zoom) / 2,
  };
}

export function zoomAt(v: View, x: number, y: number, factor: number): View {
  const zoom = Math.min(64, Math.max(0.05, v.zoom * factor));
  const scale = zoom / v.zoom;
  return {
    zoom,
    panX: x - (x - v.panX) * scale,
    panY: y - (y - v.panY) * scale,
  };
}

/** A screen-drawn rectangle as a world extent [minE, minN, maxE, maxN]. */
export function screenRectToWorldExtent(
  g: GridMeta,
  v: View,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
): [number, number, number, number] {
  const [r0, c0] = screenToPixel(v, Math.min(x0, x1), Math.min(y0, y1));
  const [r1, c1] = screenToPixel(v, Math.max(x0, x1), Math.max(y0, y1));
  const [e0, n0] = pixelToWorld(g, Math.max(0, r0), Math.max(0, c0));
  const [e1, n1] = pixelToWorld(g, Math.min(g.rows, r1), Math.min(g.cols, c1));
  return [Math.min(e0, e1), Math.min(n0, n1), Math.max(e0, e1), Math.max(n0, n1)];
}

export function gridMeta(grid: Bgrd): GridMeta {
  return {
    rows: grid.rows,
    cols: grid.cols,
    originEasting: grid.originEasting,
    originNorthing: grid.originNorthing,
    pixelSize: grid.pixelSize,
  };
}
