// Client/server parity: re-thresholding the cached probability grid in the
// browser must reproduce the server's mask artifacts pixel-for-pixel, and
// the exported boxes must match the server's GeoJSON. Fixtures are real
// server outputs frozen by tools/make_fixtures.py.

import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { parseBgrd } from "../src/bgrd.js";
import { rethreshold } from "../src/rethreshold.js";
import { boxesGeojson } from "../src/geojson.js";

const FIXTURES = join(__dirname, "fixtures");

function loadBuffer(name: string): ArrayBuffer {
  const buf = readFileSync(join(FIXTURES, name));
  return buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength);
}

interface Pair {
  threshold: number;
  min_area_m2: number;
  mask: string;
  boxes: string;
  components: number;
}

const pairs: Pair[] = JSON.parse(readFileSync(join(FIXTURES, "params.json"), "utf8"));
const grid = parseBgrd(loadBuffer("probability.bgrd"));

describe("client/server parity", () => {
  it("covers five (threshold, min_area) pairs", () => {
    expect(pairs.length).toBe(5);
  });

  for (const pair of pairs) {
    it(`mask pixel-exact at t=${pair.threshold} minArea=${pair.min_area_m2}`, () => {
      const serverMask = new Uint8Array(loadBuffer(pair.mask));
      const { mask, components } = rethreshold(grid, pair.threshold, pair.min_area_m2);
      expect(components.length).toBe(pair.components);
      expect(mask.length).toBe(serverMask.length);
      for (let i = 0; i < mask.length; i++) {
        if (mask[i] !== serverMask[i]) {
          throw new Error(`mask differs at pixel ${i}: ${mask[i]} vs ${serverMask[i]}`);
        }
      }
    });

    it(`boxes match the server document at t=${pair.threshold}`, () => {
      const server = JSON.parse(readFileSync(join(FIXTURES, pair.boxes), "utf8"));
      const { components } = rethreshold(grid, pair.threshold, pair.min_area_m2);
      const client = JSON.parse(boxesGeojson(grid, components));
      expect(client.type).toBe(server.type);
      expect(client.crs_id).toBe(server.crs_id);
      expect(client.features.length).toBe(server.features.length);
      for (let i = 0; i < client.features.length; i++) {
        const cf = client.features[i];
        const sf = server.features[i];
        expect(cf.properties.component).toBe(sf.properties.component);
        expect(cf.properties.area_m2).toBeCloseTo(sf.properties.area_m2, 9);
        expect(cf.properties.mean_probability).toBeCloseTo(sf.properties.mean_probability, 6);
        expect(cf.geometry.type).toBe(sf.geometry.type);
        expect(cf.geometry.coordinates[0].length).toBe(sf.geometry.coordinates[0].length);
        for (let v = 0; v < cf.geometry.coordinates[0].length; v++) {
          expect(cf.geometry.coordinates[0][v][0]).toBe(sf.geometry.coordinates[0][v][0]);
          expect(cf.geometry.coordinates[0][v][1]).toBe(sf.geometry.coordinates[0][v][1]);
        }
      }
    });
  }

  it("threshold monotonicity carries over", () => {
    const lo = rethreshold(grid, 0.4, 0);
    const hi = rethreshold(grid, 0.8, 0);
    for (let i = 0; i < lo.mask.length; i++) {
      expect(hi.mask[i] <= lo.mask[i]).toBe(true);
    }
  });

  it("t=0 keeps exactly the valid pixels", () => {
    const { mask } = rethreshold(grid, 0, 0);
    for (let i = 0; i < mask.length; i++) {
      expect(mask[i]).toBe(grid.valid[i]);
    }
  });
});
