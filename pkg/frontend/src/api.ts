// Typed client for the detection service endpoints.

export interface RasterMeta {
  rows: number;
  cols: number;
  pixel_size: number;
  crs_id: number;
  bounds: [number, number, number, number];
  depth_min: number | null;
  depth_max: number | null;
  valid_fraction: number;
}

export interface WeightsInfo {
  id: string;
  in_channels: number;
  stages: number;
  base_channels: number;
  classes: number;
}

export interface JobSpec {
  raster_id: string;
  extent?: [number, number, number, number] | null;
  backend: "cnn" | "cnn-hillshade" | "depression";
  weights_id?: string;
  threshold: number;
  min_area_m2: number;
}

export interface JobStatus {
  id: string;
  state: "queued" | "running" | "done" | "failed";
  progress: number;
  error: string | null;
  timings: { layer_id: string; runtime_s: number; size_mb: number } | null;
}

async function expectOk(resp: Response): Promise<Response> {
  if (!resp.ok) {
    let detail = `${resp.status}`;
    try {
      const body = await resp.json();
      if (body.error) detail = `${resp.status}: ${body.error}`;
    } catch {
      /* not json */
    }
    throw new Error(detail);
  }
  return resp;
}

export async function uploadRaster(
  file: ArrayBuffer,
  format: string,
): Promise<{ id: string; meta: RasterMeta }> {
  const resp = await expectOk(
    await fetch(`/api/rasters?format=${format}`, { method: "POST", body: file }),
  );
  return resp.json();
}

export async function listRasters(): Promise<{ id: string; meta: RasterMeta }[]> {
  return (await expectOk(await fetch("/api/rasters"))).json();
}

export async function listWeights(): Promise<WeightsInfo[]> {
  return (await expectOk(await fetch("/api/weights"))).json();
}

export async function rasterPreview(id: string): Promise<Blob> {
  return (await expectOk(await fetch(`/api/rasters/${id}/preview`))).blob();
}

export async function rasterMeta(id: string): Promise<RasterMeta> {
  return (await expectOk(await fetch(`/api/rasters/${id}/meta`))).json();
}

export async function createJob(spec: JobSpec): Promise<string> {
  const resp = await expectOk(
    await fetch("/api/jobs", { method: "POST", body: JSON.stringify(spec) }),
  );
  return (await resp.json()).id;
}

export async function jobStatus(id: string): Promise<JobStatus> {
  return (await expectOk(await fetch(`/api/jobs/${id}`))).json();
}

export async function jobArtifact(id: string, artifact: string): Promise<ArrayBuffer> {
  return (await expectOk(await fetch(`/api/jobs/${id}/${artifact}`))).arrayBuffer();
}
