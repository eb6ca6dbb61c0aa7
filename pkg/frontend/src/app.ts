/**
 * Browser wiring: canvas, keyboard/mouse capture, render loop.
 *
 * The server returns full panoramas at the viewer's position; yaw/pitch
 * changes redraw locally via reproject, and only translation (or a
 * quality switch) asks the server for a new panorama. While a full-
 * quality frame is pending the viewer requests a half-resolution preview
 * first so motion stays responsive.
 */

import { RenderClient, RenderRequest } from "./client.js";
import { Panorama, panoramaFromImageData, reproject } from "./reproject.js";
import { handleInput, initialState, InputSample, ViewerState } from "./state.js";

interface SceneMeta {
  gaussian_count: number;
  bbox: { min: number[]; max: number[] };
  suggested_start_pose: { [k: string]: number };
}

const PANO_HEIGHT = { preview: 256, full: 512 };

async function fetchImageData(url: string): Promise<ImageData> {
  const res = await fetch(url);
  if (!res.ok) throw new Error(`render failed: HTTP ${res.status}`);
  const bitmap = await createImageBitmap(await res.blob());
  const canvas = document.createElement("canvas");
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  return ctx.getImageData(0, 0, bitmap.width, bitmap.height);
}

function drawView(canvas: HTMLCanvasElement, pano: Panorama,
                  state: ViewerState): void {
  const ctx = canvas.getContext("2d")!;
  const rgb = reproject(pano, state.fovDeg, state.yaw, state.pitch,
    canvas.width, canvas.height);
  const img = ctx.createImageData(canvas.width, canvas.height);
  for (let i = 0; i < canvas.width * canvas.height; i++) {
    img.data[i * 4] = Math.round(rgb[i * 3] * 255);
    img.data[i * 4 + 1] = Math.round(rgb[i * 3 + 1] * 255);
    img.data[i * 4 + 2] = Math.round(rgb[i * 3 + 2] * 255);
    img.data[i * 4 + 3] = 255;
  }
  ctx.putImageData(img, 0, 0);
}

export async function startViewer(canvas: HTMLCanvasElement,
                                  banner: HTMLElement): Promise<void> {
  const meta: SceneMeta = await (await fetch("/scene/meta")).json();
  const start = meta.suggested_start_pose;
  let state = initialState([-start.tx, -start.ty, -start.tz]);
  let pano: Panorama | null = null;
  let wantFull = true;

  const client = new RenderClient(
    fetchImageData,
    (frame, req) => {
      banner.style.display = "none";
      pano = panoramaFromImageData(frame as ImageData);
      if (pano) drawView(canvas, pano, state);
      if (req.height < PANO_HEIGHT.full && wantFull) {
        wantFull = false;
        client.request(panoRequest("full"));
      }
    },
    (err) => {
      banner.textContent = `render error: ${err}`;
      banner.style.display = "block";
    },
  );

  const panoRequest = (quality: "preview" | "full"): RenderRequest => ({
    // panoramas are requested axis-aligned; look direction is client-side
    pose: { position: state.position, yaw: 0, pitch: 0 },
    height: PANO_HEIGHT[quality],
    width: PANO_HEIGHT[quality] * 2,
    format: "jpeg",
  });

  const keys = new Set<string>();
  let dragX = 0, dragY = 0, dragging = false;
  window.addEventListener("keydown", (e) => keys.add(e.key.toLowerCase()));
  window.addEventListener("keyup", (e) => keys.delete(e.key.toLowerCase()));
  canvas.addEventListener("mousedown", () => { dragging = true; });
  window.addEventListener("mouseup", () => { dragging = false; });
  window.addEventListener("mousemove", (e) => {
    if (dragging) { dragX += e.movementX; dragY += e.movementY; }
  });

  let last = performance.now();
  const tick = () => {
    const now = performance.now();
    const input: InputSample = {
      keys, dragX, dragY, dt: (now - last) / 1000,
    };
    dragX = 0; dragY = 0; last = now;
    const next = handleInput(state, input);
    if (next !== state) {
      const moved = next.position !== state.position
        && (next.position[0] !== state.position[0]
          || next.position[2] !== state.position[2]);
      state = next;
      if (pano) drawView(canvas, pano, state);
      if (moved) {
        wantFull = true;
        client.request(panoRequest("preview"));
      }
    }
    requestAnimationFrame(tick);
  };
  wantFull = true;
  client.request(panoRequest("preview"));
  requestAnimationFrame(tick);
}
