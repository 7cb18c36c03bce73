// Off-thread PCD parsing for big files. Receives an ArrayBuffer, replies
// with the parsed arrays (transferred, not copied) or a serialized error.
import { parsePcd } from "./pcd.js";

interface WorkerScope {
  onmessage: ((event: MessageEvent<ArrayBuffer>) => void) | null;
  postMessage(message: unknown, transfer?: Transferable[]): void;
}

const ctx = self as unknown as WorkerScope;

ctx.onmessage = (event) => {
  try {
    const cloud = parsePcd(new Uint8Array(event.data));
    ctx.postMessage(
      {
        positions: cloud.positions,
        colors: cloud.colors,
        pointCount: cloud.pointCount,
      },
      [cloud.positions.buffer, cloud.colors.buffer]
    );
  } catch (err) {
    const e = err instanceof Error ? err : new Error(String(err));
    ctx.postMessage({ error: { name: e.name, message: e.message } });
  }
};
