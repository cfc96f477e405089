// Parser for the pipeline's binary grid container (".bgrd").
//
// Layout, little-endian: magic "BGRD", u16 version=1, u32 rows, u32 cols,
// f64 origin easting, f64 origin northing, f64 pixel size, u32 crs id,
// then rows*cols float32 values row-major, then rows*cols validity bytes.

export interface Bgrd {
  rows: number;
  cols: number;
  originEasting: number;
  originNorthing: number;
  pixelSize: number;
  crsId: number;
  values: Float32Array;
  valid: Uint8Array;
}

const HEADER_BYTES = 42;

const HOST_IS_LE = new Uint8Array(new Uint16Array([1]).buffer)[0] === 1;

export function parseBgrd(buf: ArrayBuffer): Bgrd {
  if (buf.byteLength < HEADER_BYTES) {
    throw new Error("truncated bgrd header");
  }
  const dv = new DataView(buf);
  const magic = String.fromCharCode(dv.getUint8(0), dv.getUint8(1), dv.getUint8(2), dv.getUint8(3));
  if (magic !== "BGRD") {
    throw new Error(`bad magic ${magic}`);
  }
  const version = dv.getUint16(4, true);
  if (version !== 1) {
    throw new Error(`unsupported bgrd version ${version}`);
  }
  const rows = dv.getUint32(6, true);
  const cols = dv.getUint32(10, true);
  const originEasting = dv.getFloat64(14, true);
  const originNorthing = dv.getFloat64(22, true);
  const pixelSize = dv.getFloat64(30, true);
  const crsId = dv.getUint32(38, true);
  const n = rows * cols;
  const expected = HEADER_BYTES + 4 * n + n;
  if (buf.byteLength !== expected) {
    throw new Error(`expected ${expected} bytes for ${rows}x${cols}, got ${buf.byteLength}`);
  }
  let values: Float32Array;
  if (HOST_IS_LE) {
    // the payload offset (42) is not 4-aligned, so copy before viewing
    values = new Float32Array(buf.slice(HEADER_BYTES, HEADER_BYTES + 4 * n));
  } else {
    values = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      values[i] = dv.getFloat32(HEADER_BYTES + 4 * i, true);
    }
  }
  const valid = new Uint8Array(buf.slice(HEADER_BYTES + 4 * n, expected));
  for (let i = 0; i < n; i++) {
    if (valid[i] > 1) throw new Error("validity bytes must be 0 or 1");
  }
  return { rows, cols, originEasting, originNorthing, pixelSize, crsId, values, valid };
}
