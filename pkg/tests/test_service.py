import json
import threading
import time
import urllib.error
import urllib.request

import numpy as np
import pytest

from bathyseg.grid_io import GeoGrid, RasterFormat, write_grid
from bathyseg.segnet import NetConfig, init_model, save_weights
from bathyseg.service import ServiceState, create_server


@pytest.fixture()
def server(tmp_path):
    srv, state = create_server("127.0.0.1", 0, tmp_path / "data")
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{srv.server_address[1]}"
    yield base, state, tmp_path / "data"
    srv.shutdown()
    state.shutdown()
    srv.server_close()


def request(method, url, body=None, headers=None):
    req = urllib.request.Request(url, data=body, method=method, headers=headers or {})
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, resp.read(), dict(resp.headers)
    except urllib.error.HTTPError as err:
        return err.code, err.read(), dict(err.headers)


def mound_bytes(size=32, proud=0.5):
    depth = np.full((size, size), 100.0, dtype=np.float32)
    r0 = (size - 10) // 2
    depth[r0 : r0 + 10, r0 : r0 + 10] = 100.0 - proud
    g = GeoGrid(depth=depth, valid=np.ones((size, size), bool),
                origin_easting=1000.0, origin_northing=1000.0 + size,
                pixel_size=1.0, crs_id=32616)
    return write_grid(g, RasterFormat.INTERNAL_BINARY)


def upload(base, blob, fmt="bgrd"):
    status, body, _ = request("POST", f"{base}/api/rasters?format={fmt}", blob)
    assert status == 200, body
    return json.loads(body)


def wait_done(base, job_id, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status, body, _ = request("GET", f"{base}/api/jobs/{job_id}")
        payload = json.loads(body)
        if payload["state"] in ("done", "failed"):
            return payload
        time.sleep(0.05)
    raise TimeoutError("job did not finish")


class TestRasters:
    def test_upload_and_metadata(self, server):
        base, _, _ = server
        payload = upload(base, mound_bytes())
        assert payload["meta"]["rows"] == 32
        assert payload["meta"]["pixel_size"] == 1.0
        status, body, _ = request("GET", f"{base}/api/rasters/{payload['id']}/meta")
        assert status == 200
        assert json.loads(body)["crs_id"] == 32616

    def test_duplicate_upload_same_id(self, server):
        base, _, _ = server
        a = upload(base, mound_bytes())
        b = upload(base, mound_bytes())
        assert a["id"] == b["id"]
        status, body, _ = request("GET", f"{base}/api/rasters")
        assert status == 200
        assert len(json.loads(body)) == 1

    def test_corrupt_upload_400(self, server):
        base, _, _ = server
        status, body, _ = request("POST", f"{base}/api/rasters?format=bgrd", b"BGRDjunk")
        assert status == 400
        assert "MalformedHeader" in json.loads(body)["error"]

    def test_preview_is_png(self, server):
        base, _, _ = server
        payload = upload(base, mound_bytes())
        status, body, headers = request("GET", f"{base}/api/rasters/{payload['id']}/preview")
        assert status == 200
        assert body[:8] == b"\x89PNG\r\n\x1a\n"
        assert headers["Content-Type"] == "image/png"

    def test_unknown_raster_404(self, server):
        base, _, _ = server
        status, _, _ = request("GET", f"{base}/api/rasters/deadbeef00000000/meta")
        assert status == 404


class TestJobs:
    def spec(self, raster_id, **kw):
        spec = {"raster_id": raster_id, "backend": "depression",
                "threshold": 0.5, "min_area_m2": 0.0}
        spec.update(kw)
        return json.dumps(spec).encode()

    def test_depression_job_lifecycle(self, server):
        base, _, _ = server
        rid = upload(base, mound_bytes())["id"]
        status, body, _ = request("POST", f"{base}/api/jobs", self.spec(rid))
        assert status == 202
        job_id = json.loads(body)["id"]
        done = wait_done(base, job_id)
        assert done["state"] == "done"
        assert done["progress"] == 1.0
        assert done["timings"]["size_mb"] > 0

        status, mask, _ = request("GET", f"{base}/api/jobs/{job_id}/mask")
        assert status == 200
        from bathyseg.grid_io import read_grid

        grid = read_grid(mask, RasterFormat.INTERNAL_BINARY)
        assert grid.depth.sum() > 0  # mound detected

        status, boxes, _ = request("GET", f"{base}/api/jobs/{job_id}/boxes")
        doc = json.loads(boxes)
        assert doc["type"] == "FeatureCollection" and doc["features"]

        status, png, _ = request("GET", f"{base}/api/jobs/{job_id}/preview")
        assert png[:8] == b"\x89PNG\r\n\x1a\n"

    def test_unknown_raster_404(self, server):
        base, _, _ = server
        status, _, _ = request("POST", f"{base}/api/jobs", self.spec("no-such-raster"))
        assert status == 404

    def test_artifact_before_done_409(self, server):
        base, state, _ = server
        state.shutdown()  # freeze the worker so the job stays queued
        rid = upload(base, mound_bytes())["id"]
        _, body, _ = request("POST", f"{base}/api/jobs", self.spec(rid))
        job_id = json.loads(body)["id"]
        status, _, _ = request("GET", f"{base}/api/jobs/{job_id}/mask")
        assert status == 409

    def test_queue_bound_409(self, server):
        base, state, _ = server
        state.shutdown()  # nothing dequeues; fill the queue
        rid = upload(base, mound_bytes())["id"]
        for _ in range(16):
            status, _, _ = request("POST", f"{base}/api/jobs", self.spec(rid))
            assert status == 202
        status, body, _ = request("POST", f"{base}/api/jobs", self.spec(rid))
        assert status == 409

    def test_cnn_job_with_extent(self, server):
        base, _, data_dir = server
        cfg = NetConfig(stages=1, base_channels=2)
        (data_dir / "weights").mkdir(exist_ok=True, parents=True)
        (data_dir / "weights" / "tiny.swnn").write_bytes(save_weights(init_model(cfg, 0)))
        status, body, _ = request("GET", f"{base}/api/weights")
        listing = json.loads(body)
        assert listing and listing[0]["id"] == "tiny"

        rid = upload(base, mound_bytes())["id"]
        # world extent covering the central 16x16 px of the 32 px grid
        spec = self.spec(rid, backend="cnn", weights_id="tiny",
                         extent=[1008.0, 1008.0, 1024.0, 1024.0])
        status, body, _ = request("POST", f"{base}/api/jobs", spec)
        assert status == 202, body
        job_id = json.loads(body)["id"]
        done = wait_done(base, job_id)
        assert done["state"] == "done", done["error"]

        from bathyseg.grid_io import read_grid

        _, prob, _ = request("GET", f"{base}/api/jobs/{job_id}/probability")
        grid = read_grid(prob, RasterFormat.INTERNAL_BINARY)
        assert (grid.rows, grid.cols) == (16, 16)

    def test_unknown_weights_404(self, server):
        base, _, _ = server
        rid = upload(base, mound_bytes())["id"]
        spec = self.spec(rid, backend="cnn", weights_id="missing")
        status, _, _ = request("POST", f"{base}/api/jobs", spec)
        assert status == 404

    def test_extent_must_intersect(self, server):
        base, _, _ = server
        rid = upload(base, mound_bytes())["id"]
        spec = self.spec(rid, extent=[99000.0, 99000.0, 99010.0, 99010.0])
        status, _, _ = request("POST", f"{base}/api/jobs", spec)
        assert status == 400

    def test_probability_threshold_free_and_deterministic(self, server):
        base, _, _ = server
        rid = upload(base, mound_bytes())["id"]
        artifacts = []
        for threshold in (0.5, 0.9):
            _, body, _ = request("POST", f"{base}/api/jobs", self.spec(rid, threshold=threshold))
            job_id = json.loads(body)["id"]
            assert wait_done(base, job_id)["state"] == "done"
            _, prob, _ = request("GET", f"{base}/api/jobs/{job_id}/probability")
            _, mask, _ = request("GET", f"{base}/api/jobs/{job_id}/mask")
            artifacts.append((prob, mask))
        assert artifacts[0][0] == artifacts[1][0]  # probability identical
        # same spec entirely -> identical mask bytes as well
        _, body, _ = request("POST", f"{base}/api/jobs", self.spec(rid, threshold=0.5))
        job_id = json.loads(body)["id"]
        wait_done(base, job_id)
        _, mask_again, _ = request("GET", f"{base}/api/jobs/{job_id}/mask")
        assert mask_again == artifacts[0][1]


class TestCrashRecovery:
    def test_interrupted_jobs_marked_failed(self, tmp_path):
        data = tmp_path / "data"
        jdir = data / "jobs" / "abcd1234abcd1234"
        jdir.mkdir(parents=True)
        (jdir / "status.json").write_text(json.dumps({
            "id": "abcd1234abcd1234", "spec": {}, "state": "running",
            "progress": 0.4, "error": None, "timings": None,
        }))
        state = ServiceState(data)
        try:
            job = state.job_status("abcd1234abcd1234")
            assert job["state"] == "failed"
            assert "restart" in job["error"]
        finally:
            state.shutdown()
