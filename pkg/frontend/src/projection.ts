/**
 * Equirectangular direction <-> pixel mapping.
 *
 * Camera frame is right-handed with y pointing down. Latitude
 * theta = atan2(-y, hypot(x, z)) is positive above the horizon and maps
 * to smaller row indices; longitude phi = atan2(x, z). Pixel centers sit
 * at half-integer (row, col). These formulas must match the render
 * service exactly; test/fixtures/reproject_vectors.json holds reference
 * values produced by it.
 */

export type Vec3 = [number, number, number];

export function sphericalMap(d: Vec3): { theta: number; phi: number } {
  return {
    theta: Math.atan2(-d[1], Math.hypot(d[0], d[2])),
    phi: Math.atan2(d[0], d[2]),
  };
}

export function anglesToPixel(
  theta: number, phi: number, heightPx: number, widthPx: number,
): { row: number; col: number } {
  return {
    row: -theta * heightPx / Math.PI + heightPx / 2,
    col: phi * widthPx / (2 * Math.PI) + widthPx / 2,
  };
}

export function directionToPixel(
  d: Vec3, heightPx: number, widthPx: number,
): { row: number; col: number } {
  const { theta, phi } = sphericalMap(d);
  return anglesToPixel(theta, phi, heightPx, widthPx);
}

export function pixelToDirection(
  row: number, col: number, heightPx: number, widthPx: number,
): Vec3 {
  const theta = (heightPx / 2 - row) * Math.PI / heightPx;
  const phi = (col - widthPx / 2) * 2 * Math.PI / widthPx;
  const ct = Math.cos(theta);
  return [ct * Math.sin(phi), -Math.sin(theta), ct * Math.cos(phi)];
}
