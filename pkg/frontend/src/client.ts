/**
 * Render-service client with latest-wins request coalescing.
 *
 * Roaming floods poses faster than the server can render, so at most one
 * request is ever in flight; newer poses overwrite the queued one and
 * responses for superseded poses are dropped. The UI never blocks: all
 * delivery happens through the onFrame/onError callbacks.
 */

export interface Pose {
  position: [number, number, number];
  yaw: number;
  pitch: number;
}

export interface RenderRequest {
  pose: Pose;
  height: number;
  width: number;
  format?: "png" | "jpeg";
}

function quatMul(a: number[], b: number[]): number[] {
  return [
    a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
    a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
    a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
    a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
  ];
}

/**
 * World-to-camera pose query for a viewer looking along (yaw, pitch).
 *
 * The camera rotation is pitch about x then yaw about the vertical,
 * inverted into the world-to-camera convention the service expects;
 * translation is -R * position.
 */
export function poseToQuery(req: RenderRequest): string {
  const { yaw, pitch, position } = req.pose;
  const qPitch = [Math.cos(-pitch / 2), Math.sin(-pitch / 2), 0, 0];
  const qYaw = [Math.cos(-yaw / 2), 0, Math.sin(-yaw / 2), 0];
  const q = quatMul(qPitch, qYaw);
  const [qw, qx, qy, qz] = q;
  // rotate position by q (apply R to it), then negate
  const p = [0, position[0], position[1], position[2]];
  const rp = quatMul(quatMul(q, p), [qw, -qx, -qy, -qz]);
  const parts = [
    `qw=${qw}`, `qx=${qx}`, `qy=${qy}`, `qz=${qz}`,
    `tx=${-rp[1]}`, `ty=${-rp[2]}`, `tz=${-rp[3]}`,
    `h=${req.height}`, `w=${req.width}`,
  ];
  if (req.format) parts.push(`fmt=${req.format}`);
  return parts.join("&");
}

export type FetchFrame = (url: string) => Promise<unknown>;

export class RenderClient {
  private pending: RenderRequest | null = null;
  private busy = false;

  constructor(
    private readonly fetchFrame: FetchFrame,
    private readonly onFrame: (frame: unknown, req: RenderRequest) => void,
    private readonly onError: (err: unknown) => void,
    private readonly baseUrl = "",
  ) {}

  get inFlight(): boolean {
    return this.busy;
  }

  /** Ask for a render; supersedes any queued pose. */
  request(req: RenderRequest): void {
    if (this.busy) {
      this.pending = req;
      return;
    }
    this.launch(req);
  }

  private launch(req: RenderRequest): void {
    this.busy = true;
    this.fetchFrame(`${this.baseUrl}/render?${poseToQuery(req)}`)
      .then((frame) => {
        // a newer pose arrived while rendering: this frame is stale
        if (this.pending === null) this.onFrame(frame, req);
      })
      .catch((err) => {
        this.onError(err);
      })
      .then(() => {
        this.busy = false;
        if (this.pending !== null) {
          const next = this.pending;
          this.pending = null;
          this.launch(next);
        }
      });
  }
}
