// Bounding-box export matching the server's GeoJSON schema: planar native
// coordinates, crs_id as a foreign member, one Polygon feature per kept
// component with {component, area_m2, mean_probability} properties.

import type { Bgrd } from "./bgrd.js";
import type { Component } from "./rethreshold.js";

function world(grid: Bgrd, col: number, row: number): [number, number] {
  return [
    grid.originEasting + col * grid.pixelSize,
    grid.originNorthing - row * grid.pixelSize,
  ];
}

export function boxesGeojson(grid: Bgrd, components: Component[]): string {
  const features = components.map((comp) => {
    const [r0, c0, r1, c1] = comp.bboxPx;
    const ring = [
      world(grid, c0, r1 + 1),
      world(grid, c1 + 1, r1 + 1),
      world(grid, c1 + 1, r0),
      world(grid, c0, r0),
      world(grid, c0, r1 + 1),
    ];
    return {
      type: "Feature",
      geometry: { type: "Polygon", coordinates: [ring] },
      properties: {
        component: comp.id,
        area_m2: comp.areaM2,
        mean_probability: comp.meanProbability,
      },
    };
  });
  return JSON.stringify({
    type: "FeatureCollection",
    crs_id: grid.crsId,
    features,
  });
}
