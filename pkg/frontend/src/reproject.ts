/**
 * Perspective reprojection of an equirectangular panorama.
 *
 * Look-around happens entirely client side: each viewport pixel casts a
 * pinhole ray, the ray is rotated by the view yaw/pitch into the
 * panorama frame, and the panorama is bilinearly sampled with longitude
 * wrap-around.
 */

import { anglesToPixel, sphericalMap, Vec3 } from "./projection.js";

export interface Panorama {
  width: number;
  height: number;
  /** Row-major RGB triples in [0, 1]. */
  data: Float32Array;
}

export function panoramaFromImageData(img: ImageData): Panorama {
  const n = img.width * img.height;
  const data = new Float32Array(n * 3);
  for (let i = 0; i < n; i++) {
    data[i * 3] = img.data[i * 4] / 255;
    data[i * 3 + 1] = img.data[i * 4 + 1] / 255;
    data[i * 3 + 2] = img.data[i * 4 + 2] / 255;
  }
  return { width: img.width, height: img.height, data };
}

/** Rotate a view-frame ray by pitch about x, then yaw about the vertical. */
export function viewRayToPanorama(ray: Vec3, yaw: number, pitch: number): Vec3 {
  const cp = Math.cos(pitch), sp = Math.sin(pitch);
  const cy = Math.cos(yaw), sy = Math.sin(yaw);
  const x = ray[0];
  const y = ray[1] * cp - ray[2] * sp;
  const z = ray[1] * sp + ray[2] * cp;
  return [x * cy + z * sy, y, -x * sy + z * cy];
}

/**
 * Sample at a continuous (row, col) in the half-integer-center
 * convention: columns wrap around the longitude seam, rows clamp at the
 * poles.
 */
export function bilinearSample(
  pano: Panorama, row: number, col: number, out: Float32Array, o: number,
): void {
  const { width: w, height: h, data } = pano;
  const rf = row - 0.5;
  const cf = col - 0.5;
  let r0 = Math.floor(rf);
  let c0 = Math.floor(cf);
  const wr = rf - r0;
  const wc = cf - c0;
  const r1 = Math.min(Math.max(r0 + 1, 0), h - 1);
  r0 = Math.min(Math.max(r0, 0), h - 1);
  const c0w = ((c0 % w) + w) % w;
  const c1w = (c0w + 1) % w;
  const i00 = (r0 * w + c0w) * 3, i01 = (r0 * w + c1w) * 3;
  const i10 = (r1 * w + c0w) * 3, i11 = (r1 * w + c1w) * 3;
  const w00 = (1 - wr) * (1 - wc), w01 = (1 - wr) * wc;
  const w10 = wr * (1 - wc), w11 = wr * wc;
  for (let ch = 0; ch < 3; ch++) {
    out[o + ch] = w00 * data[i00 + ch] + w01 * data[i01 + ch]
      + w10 * data[i10 + ch] + w11 * data[i11 + ch];
  }
}

/**
 * Render a perspective view of the panorama.
 *
 * fovDeg is the horizontal field of view; yaw/pitch orient the view
 * inside the panorama frame (positive yaw pans toward +x longitude,
 * positive pitch looks up). Returns row-major RGB in [0, 1].
 */
export function reproject(
  pano: Panorama, fovDeg: number, yaw: number, pitch: number,
  vpWidth: number, vpHeight: number,
): Float32Array {
  const out = new Float32Array(vpWidth * vpHeight * 3);
  const focal = (vpWidth / 2) / Math.tan((fovDeg * Math.PI / 180) / 2);
  for (let i = 0; i < vpHeight; i++) {
    const y = (i + 0.5 - vpHeight / 2) / focal;
    for (let j = 0; j < vpWidth; j++) {
      const x = (j + 0.5 - vpWidth / 2) / focal;
      const ray = viewRayToPanorama([x, y, 1], yaw, pitch);
      const { theta, phi } = sphericalMap(ray);
      const { row, col } = anglesToPixel(theta, phi, pano.height, pano.width);
      bilinearSample(pano, row, col, out, (i * vpWidth + j) * 3);
    }
  }
  return out;
}
