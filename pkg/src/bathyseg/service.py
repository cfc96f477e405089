"""Local HTTP facade over the pipeline for the browser UI.

Endpoints (JSON unless noted):

    POST /api/rasters?format=bgrd|asc|xyz|tif   body = raster bytes
    GET  /api/rasters
    GET  /api/rasters/{id}/meta
    GET  /api/rasters/{id}/preview              PNG hillshade
    POST /api/jobs                              JobSpec JSON
    GET  /api/jobs/{id}
    GET  /api/jobs/{id}/{probability|mask|boxes|outlines|preview}
    GET  /api/weights

Rasters are stored content-addressed (hash of canonical bytes), so duplicate
uploads return the same id and artifacts are cache-friendly. Jobs run one at
a time on a worker thread with a bounded queue; results are persisted
atomically and jobs found mid-flight after a restart are marked failed. The
probability artifact is threshold-free: threshold and min_area only shape the
mask/boxes artifacts, which lets clients re-threshold locally with identical
semantics.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from . import pngio
from .depression import DepressionParams, infer_depression
from .detect import ProbabilityMap, infer_cnn
from .errors import BathysegError
from .grid_io import GeoGrid, RasterFormat, grid_metadata, read_grid, write_grid
from .postprocess import detections_from_probability, to_geojson
from .preprocess import hillshade
from .segnet import load_weights

BACKENDS = ("cnn", "cnn-hillshade", "depression")
ARTIFACTS = ("probability", "mask", "boxes", "outlines", "preview")
QUEUE_LIMIT = 16


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


class ServiceState:
    """Registry, job queue, and artifact store; one worker runs jobs FIFO."""

    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir)
        (self.root / "rasters").mkdir(parents=True, exist_ok=True)
        (self.root / "jobs").mkdir(parents=True, exist_ok=True)
        (self.root / "weights").mkdir(parents=True, exist_ok=True)
        self.lock = threading.Lock()
        self.rasters: dict[str, dict] = {}
        self.jobs: dict[str, dict] = {}
        self.queue: list[str] = []
        self.queue_ready = threading.Condition(self.lock)
        self.stopping = False
        self._recover()
        self.worker = threading.Thread(target=self._worker_loop, daemon=True)
        self.worker.start()

    # -- persistence ---------------------------------------------------------

    def _recover(self):
        for path in (self.root / "rasters").glob("*.bgrd"):
            grid = read_grid(path.read_bytes(), RasterFormat.INTERNAL_BINARY)
            self.rasters[path.stem] = {"path": path, "meta": grid_metadata(grid)}
        for jdir in (self.root / "jobs").iterdir() if (self.root / "jobs").exists() else []:
            status_path = jdir / "status.json"
            if not status_path.exists():
                continue
            status = json.loads(status_path.read_text())
            if status.get("state") in ("queued", "running"):
                # interrupted mid-run by a previous process
                status["state"] = "failed"
                status["error"] = "interrupted by service restart"
                _atomic_write(status_path, json.dumps(status).encode())
            self.jobs[status["id"]] = status

    def _persist_status(self, job_id: str):
        job = self.jobs[job_id]
        _atomic_write(self.root / "jobs" / job_id / "status.json",
                      json.dumps(job, sort_keys=True).encode())

    # -- rasters ---------------------------------------------------------------

    def register_raster(self, body: bytes, fmt: RasterFormat) -> tuple[str, dict]:
        grid = read_grid(body, fmt)
        canonical = write_grid(grid, RasterFormat.INTERNAL_BINARY)
        raster_id = hashlib.sha256(canonical).hexdigest()[:16]
        with self.lock:
            if raster_id not in self.rasters:
                path = self.root / "rasters" / f"{raster_id}.bgrd"
                _atomic_write(path, canonical)
                self.rasters[raster_id] = {"path": path, "meta": grid_metadata(grid)}
            meta = self.rasters[raster_id]["meta"]
        return raster_id, meta

    def load_raster(self, raster_id: str) -> GeoGrid:
        with self.lock:
            entry = self.rasters.get(raster_id)
        if entry is None:
            raise KeyError(raster_id)
        return read_grid(Path(entry["path"]).read_bytes(), RasterFormat.INTERNAL_BINARY)

    # -- weights ---------------------------------------------------------------

    def list_weights(self) -> list[dict]:
        out = []
        for path in sorted((self.root / "weights").glob("*.swnn")):
            try:
                w = load_weights(path.read_bytes())
            except BathysegError:
                continue
            out.append(
                {
                    "id": path.stem,
                    "in_channels": w.config.in_channels,
                    "stages": w.config.stages,
                    "base_channels": w.config.base_channels,
                    "classes": w.config.classes,
                }
            )
        return out

    def load_weights_by_id(self, weights_id: str):
        path = self.root / "weights" / f"{weights_id}.swnn"
        if not path.exists():
            raise KeyError(weights_id)
        return load_weights(path.read_bytes())

    # -- jobs --------------------------------------------------------------------

    def create_job(self, spec: dict) -> str:
        raster_id = spec.get("raster_id")
        with self.lock:
            if raster_id not in self.rasters:
                raise KeyError(raster_id)
            unfinished = [j for j in self.jobs.values() if j["state"] in ("queued", "running")]
            if len(unfinished) >= QUEUE_LIMIT:
                raise OverflowError("job queue full")
            job_id = hashlib.sha256(
                json.dumps(spec, sort_keys=True).encode() + str(time.time_ns()).encode()
            ).hexdigest()[:16]
            self.jobs[job_id] = {
                "id": job_id,
                "spec": spec,
                "state": "queued",
                "progress": 0.0,
                "error": None,
                "timings": None,
            }
            self._persist_status(job_id)
            self.queue.append(job_id)
            self.queue_ready.notify()
        return job_id

    def job_status(self, job_id: str) -> dict:
        with self.lock:
            job = self.jobs.get(job_id)
            if job is None:
                raise KeyError(job_id)
            return dict(job)

    def artifact_path(self, job_id: str, artifact: str) -> Path:
        names = {
            "probability": "probability.bgrd",
            "mask": "mask.bgrd",
            "boxes": "boxes.geojson",
            "outlines": "outlines.geojson",
            "preview": "preview.png",
        }
        return self.root / "jobs" / job_id / names[artifact]

    # -- worker ---------------------------------------------------------------

    def _worker_loop(self):
        while True:
            with self.lock:
                while not self.queue and not self.stopping:
                    self.queue_ready.wait(timeout=0.5)
                if self.stopping:
                    return
                job_id = self.queue.pop(0)
                self.jobs[job_id]["state"] = "running"
                self._persist_status(job_id)
            try:
                self._run_job(job_id)
                with self.lock:
                    self.jobs[job_id]["state"] = "done"
                    self.jobs[job_id]["progress"] = 1.0
                    self._persist_status(job_id)
            except Exception as exc:  # persist the failure, keep serving
                with self.lock:
                    self.jobs[job_id]["state"] = "failed"
                    self.jobs[job_id]["error"] = f"{type(exc).__name__}: {exc}"
                    self._persist_status(job_id)

    def _set_progress(self, job_id: str, fraction: float):
        with self.lock:
            job = self.jobs[job_id]
            job["progress"] = max(job["progress"], min(1.0, fraction))

    def _run_job(self, job_id: str):
        with self.lock:
            spec = dict(self.jobs[job_id]["spec"])
        grid = self.load_raster(spec["raster_id"])
        extent = _extent_to_pixels(grid, spec.get("extent"))
        started = time.perf_counter()

        backend = spec.get("backend", "cnn")
        if backend == "depression":
            sub = grid
            if extent is not None:
                from .grid_io import crop_grid

                sub = crop_grid(grid, *extent)
            prob = infer_depression(sub, DepressionParams())
            self._set_progress(job_id, 1.0)
        else:
            weights = self.load_weights_by_id(spec["weights_id"])
            prob = infer_cnn(
                grid,
                weights,
                use_hillshade=backend == "cnn-hillshade",
                extent=extent,
                progress=lambda done, total: self._set_progress(job_id, done / total),
            )

        threshold = float(spec.get("threshold", 0.5))
        min_area = float(spec.get("min_area_m2", 10.0))
        dset = detections_from_probability(prob, threshold, min_area)

        jdir = self.root / "jobs" / job_id
        _atomic_write(jdir / "probability.bgrd",
                      write_grid(prob.to_grid(), RasterFormat.INTERNAL_BINARY))
        mask_grid = GeoGrid(
            depth=dset.mask.astype(np.float32), valid=prob.valid.copy(),
            origin_easting=prob.origin_easting, origin_northing=prob.origin_northing,
            pixel_size=prob.pixel_size, crs_id=prob.crs_id,
        )
        _atomic_write(jdir / "mask.bgrd", write_grid(mask_grid, RasterFormat.INTERNAL_BINARY))
        _atomic_write(jdir / "boxes.geojson", to_geojson(dset, "boxes").encode())
        _atomic_write(jdir / "outlines.geojson", to_geojson(dset, "outlines").encode())
        _atomic_write(jdir / "preview.png", _overlay_preview(prob, dset.mask, self, spec))

        elapsed = time.perf_counter() - started
        size_mb = Path(self.rasters[spec["raster_id"]]["path"]).stat().st_size / 1e6
        with self.lock:
            self.jobs[job_id]["timings"] = {
                "layer_id": spec["raster_id"],
                "runtime_s": elapsed,
                "size_mb": size_mb,
            }

    def shutdown(self):
        with self.lock:
            self.stopping = True
            self.queue_ready.notify_all()
        self.worker.join(timeout=5)


def _extent_to_pixels(grid: GeoGrid, extent) -> tuple[int, int, int, int] | None:
    """World rectangle [min_e, min_n, max_e, max_n] -> clipped pixel window."""
    if extent is None:
        return None
    min_e, min_n, max_e, max_n = (float(v) for v in extent)
    col0 = int(np.floor((min_e - grid.origin_easting) / grid.pixel_size))
    col1 = int(np.ceil((max_e - grid.origin_easting) / grid.pixel_size))
    row0 = int(np.floor((grid.origin_northing - max_n) / grid.pixel_size))
    row1 = int(np.ceil((grid.origin_northing - min_n) / grid.pixel_size))
    col0, col1 = max(0, col0), min(grid.cols, col1)
    row0, row1 = max(0, row0), min(grid.rows, row1)
    if row1 <= row0 or col1 <= col0:
        raise ValueError("extent does not intersect the raster")
    return row0, col0, row1 - row0, col1 - col0


def _hillshade_png(grid: GeoGrid) -> bytes:
    shade = hillshade(np.where(grid.valid, grid.depth, float(grid.depth[grid.valid].mean())
                               if grid.valid.any() else 0.0), grid.pixel_size)
    gray = np.floor(shade + 0.5).astype(np.uint8)
    alpha = np.where(grid.valid, 255, 0).astype(np.uint8)
    return pngio.write_gray_alpha(gray, alpha)


def _overlay_preview(prob: ProbabilityMap, mask: np.ndarray, state, spec) -> bytes:
    grid = prob.to_grid()
    base = np.where(grid.valid, grid.depth, float(0.0))
    # render hillshade of the probability extent's source depths when possible
    try:
        source = state.load_raster(spec["raster_id"])
        extent = _extent_to_pixels(source, spec.get("extent"))
        if extent is not None:
            from .grid_io import crop_grid

            source = crop_grid(source, *extent)
        if source.depth.shape == mask.shape:
            base = np.where(source.valid, source.depth,
                            float(source.depth[source.valid].mean()))
            grid = source
    except Exception:
        pass
    shade = hillshade(base, grid.pixel_size)
    gray = np.floor(shade + 0.5).astype(np.uint8)
    rgba = np.zeros(mask.shape + (4,), dtype=np.uint8)
    rgba[..., 0] = gray
    rgba[..., 1] = gray
    rgba[..., 2] = gray
    rgba[..., 3] = np.where(grid.valid, 255, 0)
    hit = mask.astype(bool)
    rgba[hit, 0] = 220
    rgba[hit, 1] = 60
    rgba[hit, 2] = 40
    return pngio.write_rgba(rgba)


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

_RASTER_FORMATS = {
    "bgrd": RasterFormat.INTERNAL_BINARY,
    "asc": RasterFormat.ESRI_ASCII,
    "xyz": RasterFormat.XYZ_POINTS,
    "tif": RasterFormat.GEOTIFF_SUBSET,
}

_CONTENT_TYPES = {
    ".html": "text/html",
    ".js": "application/javascript",
    ".css": "text/css",
    ".png": "image/png",
    ".svg": "image/svg+xml",
}


class _Handler(BaseHTTPRequestHandler):
    state: ServiceState
    web_root: Path | None = None

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, code: int, body: bytes, content_type: str = "application/json"):
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _json(self, code: int, payload):
        self._send(code, json.dumps(payload).encode())

    def _error(self, code: int, message: str):
        self._json(code, {"error": message})

    def do_POST(self):
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length)
            if self.path.startswith("/api/rasters"):
                query = ""
                if "?" in self.path:
                    query = self.path.split("?", 1)[1]
                fmt_name = "bgrd"
                for part in query.split("&"):
                    if part.startswith("format="):
                        fmt_name = part.split("=", 1)[1]
                fmt = _RASTER_FORMATS.get(fmt_name)
                if fmt is None:
                    return self._error(400, f"unknown format {fmt_name!r}")
                try:
                    raster_id, meta = self.state.register_raster(body, fmt)
                except BathysegError as exc:
                    return self._error(400, f"{type(exc).__name__}: {exc}")
                return self._json(200, {"id": raster_id, "meta": meta})
            if self.path == "/api/jobs":
                try:
                    spec = json.loads(body)
                except json.JSONDecodeError:
                    return self._error(400, "job spec is not valid JSON")
                backend = spec.get("backend", "cnn")
                if backend not in BACKENDS:
                    return self._error(400, f"unknown backend {backend!r}")
                if backend != "depression" and not spec.get("weights_id"):
                    return self._error(400, "weights_id required for CNN backends")
                if backend != "depression":
                    try:
                        self.state.load_weights_by_id(spec["weights_id"])
                    except KeyError:
                        return self._error(404, f"unknown weights {spec['weights_id']!r}")
                if spec.get("extent") is not None:
                    try:
                        grid = self.state.load_raster(spec.get("raster_id"))
                        _extent_to_pixels(grid, spec["extent"])
                    except KeyError:
                        return self._error(404, f"unknown raster {spec.get('raster_id')!r}")
                    except ValueError as exc:
                        return self._error(400, str(exc))
                try:
                    job_id = self.state.create_job(spec)
                except KeyError as exc:
                    return self._error(404, f"unknown raster {exc}")
                except OverflowError:
                    return self._error(409, "job queue full (16)")
                return self._json(202, {"id": job_id})
            return self._error(404, f"no such endpoint {self.path}")
        except Exception as exc:
            return self._error(500, f"{type(exc).__name__}: {exc}")

    def do_GET(self):
        try:
            if self.path == "/api/rasters":
                with self.state.lock:
                    listing = [
                        {"id": rid, "meta": entry["meta"]}
                        for rid, entry in sorted(self.state.rasters.items())
                    ]
                return self._json(200, listing)
            m = re.fullmatch(r"/api/rasters/([0-9a-f]+)/meta", self.path)
            if m:
                with self.state.lock:
                    entry = self.state.rasters.get(m.group(1))
                if entry is None:
                    return self._error(404, "unknown raster")
                return self._json(200, entry["meta"])
            m = re.fullmatch(r"/api/rasters/([0-9a-f]+)/preview", self.path)
            if m:
                try:
                    grid = self.state.load_raster(m.group(1))
                except KeyError:
                    return self._error(404, "unknown raster")
                return self._send(200, _hillshade_png(grid), "image/png")
            if self.path == "/api/weights":
                return self._json(200, self.state.list_weights())
            m = re.fullmatch(r"/api/jobs/([0-9a-f]+)", self.path)
            if m:
                try:
                    job = self.state.job_status(m.group(1))
                except KeyError:
                    return self._error(404, "unknown job")
                return self._json(
                    200,
                    {k: job[k] for k in ("id", "state", "progress", "error", "timings")},
                )
            m = re.fullmatch(r"/api/jobs/([0-9a-f]+)/(\w+)", self.path)
            if m:
                job_id, artifact = m.group(1), m.group(2)
                if artifact not in ARTIFACTS:
                    return self._error(404, f"unknown artifact {artifact!r}")
                try:
                    job = self.state.job_status(job_id)
                except KeyError:
                    return self._error(404, "unknown job")
                if job["state"] != "done":
                    return self._error(409, f"job is {job['state']}, not done")
                path = self.state.artifact_path(job_id, artifact)
                ctype = "image/png" if artifact == "preview" else (
                    "application/geo+json" if artifact.endswith("s") else "application/octet-stream"
                )
                return self._send(200, path.read_bytes(), ctype)
            return self._static(self.path)
        except Exception as exc:
            return self._error(500, f"{type(exc).__name__}: {exc}")

    def _static(self, path: str):
        if self.web_root is None:
            return self._error(404, f"no such endpoint {path}")
        rel = path.lstrip("/") or "index.html"
        target = (self.web_root / rel).resolve()
        if not str(target).startswith(str(self.web_root.resolve())) or not target.is_file():
            return self._error(404, f"no such file {path}")
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        return self._send(200, target.read_bytes(), ctype)


def create_server(host: str, port: int, data_dir: str | Path,
                  web_root: str | None = None) -> tuple[ThreadingHTTPServer, ServiceState]:
    state = ServiceState(data_dir)
    handler = type("BoundHandler", (_Handler,), {
        "state": state,
        "web_root": Path(web_root) if web_root else None,
    })
    server = ThreadingHTTPServer((host, port), handler)
    return server, state


def serve(host: str, port: int, data_dir: str | Path, web_root: str | None = None):
    server, state = create_server(host, port, data_dir, web_root)
    print(f"bathyseg service on http://{host}:{server.server_address[1]} (data in {data_dir})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        state.shutdown()
        server.server_close()
