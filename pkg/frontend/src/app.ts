// UI wiring: canvas viewer with pan/zoom, extent drawing, job launch and
// polling, and live client-side threshold tuning over the cached
// probability grid.

import { parseBgrd, type Bgrd } from "./bgrd.js";
import { rethreshold, type Detections } from "./rethreshold.js";
import { boxesGeojson } from "./geojson.js";
import {
  fitView,
  gridMeta,
  pixelToScreen,
  pixelToWorld,
  screenToPixel,
  screenRectToWorldExtent,
  zoomAt,
  type View,
} from "./transform.js";
import * as api from "./api.js";

interface State {
  rasterId: string | null;
  meta: api.RasterMeta | null;
  preview: ImageBitmap | null;
  view: View;
  extent: [number, number, number, number] | null; // world coords
  probability: Bgrd | null;
  detections: Detections | null;
  requestSeq: number; // discards stale poll responses
  drawing: { x0: number; y0: number; x1: number; y1: number } | null;
}

const state: State = {
  rasterId: null,
  meta: null,
  preview: null,
  view: { zoom: 1, panX: 0, panY: 0 },
  extent: null,
  probability: null,
  detections: null,
  requestSeq: 0,
  drawing: null,
};

const $ = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

const canvas = $<HTMLCanvasElement>("map");
const ctx = canvas.getContext("2d")!;

function toast(message: string, isError = true) {
  const el = $<HTMLDivElement>("toast");
  el.textContent = message;
  el.className = isError ? "toast error" : "toast info";
  el.style.opacity = "1";
  setTimeout(() => (el.style.opacity = "0"), 4000);
}

function setStatus(text: string) {
  $<HTMLSpanElement>("status").textContent = text;
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

let overlayCanvas: HTMLCanvasElement | null = null;

function rebuildOverlay() {
  if (!state.probability || !state.detections) {
    overlayCanvas = null;
    return;
  }
  const grid = state.probability;
  const img = new ImageData(grid.cols, grid.rows);
  const showProb = $<HTMLInputElement>("show-prob").checked;
  const showMask = $<HTMLInputElement>("show-mask").checked;
  const mask = state.detections.mask;
  for (let i = 0; i < grid.rows * grid.cols; i++) {
    const o = i * 4;
    if (showMask && mask[i] === 1) {
      img.data[o] = 235;
      img.data[o + 1] = 64;
      img.data[o + 2] = 52;
      img.data[o + 3] = 200;
    } else if (showProb && grid.valid[i] === 1 && grid.values[i] > 0.02) {
      img.data[o] = 64;
      img.data[o + 1] = 120;
      img.data[o + 2] = 235;
      img.data[o + 3] = Math.min(200, grid.values[i] * 255) | 0;
    }
  }
  overlayCanvas = document.createElement("canvas");
  overlayCanvas.width = grid.cols;
  overlayCanvas.height = grid.rows;
  overlayCanvas.getContext("2d")!.putImageData(img, 0, 0);
}

function render() {
  ctx.fillStyle = "#12161d";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (!state.meta) return;
  const v = state.view;
  ctx.imageSmoothingEnabled = v.zoom < 4;

  if (state.preview) {
    ctx.drawImage(
      state.preview,
      v.panX,
      v.panY,
      state.meta.cols * v.zoom,
      state.meta.rows * v.zoom,
    );
  }

  if (overlayCanvas && state.probability) {
    const g = gridMeta(state.probability);
    const meta = state.meta;
    // the probability layer may cover only the drawn extent of the raster
    const row0 = (meta.bounds[3] - g.originNorthing) / meta.pixel_size;
    const col0 = (g.originEasting - meta.bounds[0]) / meta.pixel_size;
    const [x, y] = pixelToScreen(v, row0, col0);
    const scale = (g.pixelSize / meta.pixel_size) * v.zoom;
    ctx.drawImage(overlayCanvas, x, y, g.cols * scale, g.rows * scale);

    if ($<HTMLInputElement>("show-boxes").checked && state.detections) {
      ctx.strokeStyle = "#ffd23e";
      ctx.lineWidth = 1.5;
      for (const comp of state.detections.components) {
        const [r0, c0, r1, c1] = comp.bboxPx;
        const [bx, by] = pixelToScreen(v, row0 + r0 * (g.pixelSize / meta.pixel_size),
                                       col0 + c0 * (g.pixelSize / meta.pixel_size));
        const w = (c1 - c0 + 1) * scale;
        const h = (r1 - r0 + 1) * scale;
        ctx.strokeRect(bx, by, w, h);
      }
    }
  }

  if (state.extent) {
    const meta = state.meta;
    const [minE, minN, maxE, maxN] = state.extent;
    const rc0 = [(meta.bounds[3] - maxN) / meta.pixel_size, (minE - meta.bounds[0]) / meta.pixel_size];
    const rc1 = [(meta.bounds[3] - minN) / meta.pixel_size, (maxE - meta.bounds[0]) / meta.pixel_size];
    const [x0, y0] = pixelToScreen(state.view, rc0[0], rc0[1]);
    const [x1, y1] = pixelToScreen(state.view, rc1[0], rc1[1]);
    ctx.strokeStyle = "#6ee76e";
    ctx.setLineDash([6, 4]);
    ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
    ctx.setLineDash([]);
  }

  if (state.drawing) {
    const d = state.drawing;
    ctx.strokeStyle = "#6ee76e";
    ctx.setLineDash([4, 3]);
    ctx.strokeRect(d.x0, d.y0, d.x1 - d.x0, d.y1 - d.y0);
    ctx.setLineDash([]);
  }
}

// ---------------------------------------------------------------------------
// layer loading
// ---------------------------------------------------------------------------

async function loadLayer(rasterId: string) {
  try {
    const meta = await api.rasterMeta(rasterId);
    const blob = await api.rasterPreview(rasterId);
    state.rasterId = rasterId;
    state.meta = meta;
    state.preview = await createImageBitmap(blob);
    state.view = fitView(
      { rows: meta.rows, cols: meta.cols, originEasting: meta.bounds[0],
        originNorthing: meta.bounds[3], pixelSize: meta.pixel_size },
      canvas.width, canvas.height,
    );
    state.extent = null;
    state.probability = null;
    state.detections = null;
    overlayCanvas = null;
    setStatus(
      `${meta.rows}x${meta.cols} @ ${meta.pixel_size} m/px, ` +
      `depths ${meta.depth_min?.toFixed(1)}..${meta.depth_max?.toFixed(1)} m`,
    );
    render();
  } catch (err) {
    toast(`load failed: ${err}`);
  }
}

async function refreshRasters(selectId?: string) {
  const rasters = await api.listRasters();
  const sel = $<HTMLSelectElement>("raster-select");
  sel.innerHTML = "";
  for (const { id, meta } of rasters) {
    const opt = document.createElement("option");
    opt.value = id;
    opt.textContent = `${id.slice(0, 8)}  (${meta.rows}x${meta.cols})`;
    sel.appendChild(opt);
  }
  if (selectId) sel.value = selectId;
  if (sel.value) await loadLayer(sel.value);
}

async function refreshWeights() {
  const sel = $<HTMLSelectElement>("weights-select");
  sel.innerHTML = "";
  for (const w of await api.listWeights()) {
    const opt = document.createElement("option");
    opt.value = w.id;
    opt.textContent = `${w.id} (${w.in_channels}ch s${w.stages} b${w.base_channels})`;
    sel.appendChild(opt);
  }
}

// ---------------------------------------------------------------------------
// detection jobs
// ---------------------------------------------------------------------------

function currentParams(): { t: number; minArea: number } {
  return {
    t: Number($<HTMLInputElement>("threshold").value),
    minArea: Number($<HTMLInputElement>("min-area").value),
  };
}

function applyRethreshold() {
  if (!state.probability) return;
  const { t, minArea } = currentParams();
  $<HTMLSpanElement>("threshold-val").textContent = t.toFixed(2);
  $<HTMLSpanElement>("min-area-val").textContent = `${minArea} m²`;
  const started = performance.now();
  state.detections = rethreshold(state.probability, t, minArea);
  rebuildOverlay();
  render();
  setStatus(
    `${state.detections.components.length} detections ` +
    `(re-threshold ${(performance.now() - started).toFixed(0)} ms)`,
  );
}

async function runDetection() {
  if (!state.rasterId) {
    toast("upload or select a raster first");
    return;
  }
  const backend = $<HTMLSelectElement>("backend-select").value as api.JobSpec["backend"];
  const { t, minArea } = currentParams();
  const spec: api.JobSpec = {
    raster_id: state.rasterId,
    backend,
    threshold: t,
    min_area_m2: minArea,
    extent: $<HTMLInputElement>("whole-layer").checked ? null : state.extent,
  };
  if (backend !== "depression") {
    spec.weights_id = $<HTMLSelectElement>("weights-select").value;
    if (!spec.weights_id) {
      toast("no weights available; train one or use the depression backend");
      return;
    }
  }
  const seq = ++state.requestSeq;
  let jobId: string;
  try {
    jobId = await api.createJob(spec);
  } catch (err) {
    toast(String(err).includes("409") ? "queue full; retry shortly" : `job rejected: ${err}`);
    return;
  }
  const bar = $<HTMLProgressElement>("progress");
  bar.style.visibility = "visible";
  for (;;) {
    await new Promise((resolve) => setTimeout(resolve, 250));
    if (seq !== state.requestSeq) return; // superseded by a newer run
    let status: api.JobStatus;
    try {
      status = await api.jobStatus(jobId);
    } catch (err) {
      toast(`status poll failed: ${err}`);
      break;
    }
    bar.value = status.progress;
    if (status.state === "failed") {
      toast(`job failed: ${status.error}`);
      break;
    }
    if (status.state === "done") {
      const raw = await api.jobArtifact(jobId, "probability");
      if (seq !== state.requestSeq) return;
      state.probability = parseBgrd(raw);
      applyRethreshold();
      break;
    }
  }
  bar.style.visibility = "hidden";
}

// ---------------------------------------------------------------------------
// interactions
// ---------------------------------------------------------------------------

function wire() {
  $<HTMLInputElement>("upload").addEventListener("change", async (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    const ext = file.name.split(".").pop()?.toLowerCase() ?? "bgrd";
    const format = { tif: "tif", tiff: "tif", asc: "asc", xyz: "xyz" }[ext] ?? "bgrd";
    try {
      const { id } = await api.uploadRaster(await file.arrayBuffer(), format);
      await refreshRasters(id);
      toast(`registered ${id.slice(0, 8)}`, false);
    } catch (err) {
      toast(`upload failed: ${err}`);
    }
    input.value = "";
  });

  $<HTMLSelectElement>("raster-select").addEventListener("change", (ev) =>
    loadLayer(($<HTMLSelectElement>("raster-select")).value),
  );

  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    state.view = zoomAt(state.view, ev.offsetX, ev.offsetY, ev.deltaY < 0 ? 1.2 : 1 / 1.2);
    render();
  });

  let dragging: { x: number; y: number } | null = null;
  canvas.addEventListener("mousedown", (ev) => {
    if (ev.shiftKey) {
      state.drawing = { x0: ev.offsetX, y0: ev.offsetY, x1: ev.offsetX, y1: ev.offsetY };
    } else {
      dragging = { x: ev.offsetX, y: ev.offsetY };
    }
  });
  canvas.addEventListener("mousemove", (ev) => {
    if (state.drawing) {
      state.drawing.x1 = ev.offsetX;
      state.drawing.y1 = ev.offsetY;
      render();
    } else if (dragging) {
      state.view.panX += ev.offsetX - dragging.x;
      state.view.panY += ev.offsetY - dragging.y;
      dragging = { x: ev.offsetX, y: ev.offsetY };
      render();
    } else if (state.meta) {
      const [r, c] = screenToPixel(state.view, ev.offsetX, ev.offsetY);
      const g = { rows: state.meta.rows, cols: state.meta.cols,
                  originEasting: state.meta.bounds[0], originNorthing: state.meta.bounds[3],
                  pixelSize: state.meta.pixel_size };
      const [e, n] = pixelToWorld(g, r, c);
      $<HTMLSpanElement>("coords").textContent =
        r >= 0 && c >= 0 && r < g.rows && c < g.cols
          ? `E ${e.toFixed(1)}  N ${n.toFixed(1)}`
          : "";
    }
  });
  window.addEventListener("mouseup", () => {
    if (state.drawing && state.meta) {
      const d = state.drawing;
      if (Math.abs(d.x1 - d.x0) > 4 && Math.abs(d.y1 - d.y0) > 4) {
        const g = { rows: state.meta.rows, cols: state.meta.cols,
                    originEasting: state.meta.bounds[0], originNorthing: state.meta.bounds[3],
                    pixelSize: state.meta.pixel_size };
        state.extent = screenRectToWorldExtent(g, state.view, d.x0, d.y0, d.x1, d.y1);
        $<HTMLInputElement>("whole-layer").checked = false;
      }
      state.drawing = null;
      render();
    }
    dragging = null;
  });

  $<HTMLButtonElement>("run").addEventListener("click", runDetection);
  $<HTMLInputElement>("threshold").addEventListener("input", applyRethreshold);
  $<HTMLInputElement>("min-area").addEventListener("input", applyRethreshold);
  for (const id of ["show-prob", "show-mask", "show-boxes"]) {
    $<HTMLInputElement>(id).addEventListener("change", () => {
      rebuildOverlay();
      render();
    });
  }

  $<HTMLButtonElement>("export").addEventListener("click", () => {
    if (!state.probability || !state.detections) {
      toast("run a detection first");
      return;
    }
    const doc = boxesGeojson(state.probability, state.detections.components);
    const blob = new Blob([doc], { type: "application/geo+json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "detections.boxes.geojson";
    a.click();
    URL.revokeObjectURL(a.href);
  });

  $<HTMLInputElement>("whole-layer").addEventListener("change", () => {
    if ($<HTMLInputElement>("whole-layer").checked) {
      state.extent = null;
      render();
    }
  });
}

async function main() {
  wire();
  try {
    await Promise.all([refreshRasters(), refreshWeights()]);
  } catch (err) {
    toast(`service unreachable: ${err}`);
  }
  render();
}

main();
