/**
 * Browser entry point: renderer, controls, file loading and the VR button.
 * The scene/camera construction lives in view.ts, parsing in pcd.ts; this
 * file only glues them to the DOM.
 */

import * as THREE from "three";
import { OrbitControls } from "three/addons/controls/OrbitControls.js";

import { ParsedCloud, parsePcd } from "./pcd.js";
import { ViewHandle, renderView } from "./view.js";
import { VrRendererLike, createVrButton } from "./vr.js";

const WORKER_THRESHOLD = 10 * 1024 * 1024;
const MIN_BUDGET = 200_000;

const container = document.getElementById("app") as HTMLElement;
const banner = document.getElementById("banner") as HTMLElement;
const hud = document.getElementById("hud") as HTMLElement;

const renderer = new THREE.WebGLRenderer({ antialias: true });
renderer.setPixelRatio(window.devicePixelRatio);
renderer.setSize(window.innerWidth, window.innerHeight);
container.appendChild(renderer.domElement);

interface Current {
  parsed: ParsedCloud;
  label: string;
  handle: ViewHandle;
  controls: OrbitControls;
}

let current: Current | null = null;
let budget = 1_500_000;

function setBanner(text: string | null) {
  banner.textContent = text ?? "";
  banner.style.display = text ? "block" : "none";
}

function updateHud() {
  if (!current) {
    hud.textContent = "";
    return;
  }
  const { handle, parsed, label } = current;
  const shown =
    handle.renderedCount === parsed.pointCount
      ? `${parsed.pointCount.toLocaleString()} points`
      : `${handle.renderedCount.toLocaleString()} of ${parsed.pointCount.toLocaleString()} points`;
  hud.textContent = `${label}  |  ${shown}  |  size ${handle.pointSize()}px  |  drag orbit, right-drag pan, wheel zoom, R reset, +/- size`;
}

function aspect(): number {
  return window.innerWidth / Math.max(1, window.innerHeight);
}

function showCloud(parsed: ParsedCloud, label: string) {
  if (current) {
    current.controls.dispose();
    current.handle.dispose();
    current = null;
  }
  try {
    const handle = renderView(parsed, { aspect: aspect(), maxPoints: budget });
    const controls = new OrbitControls(handle.camera, renderer.domElement);
    controls.target.copy(handle.target);
    controls.update();
    current = { parsed, label, handle, controls };
    setBanner(null);
  } catch (err) {
    setBanner(err instanceof Error ? `${err.name}: ${err.message}` : String(err));
  }
  updateHud();
}

function parseInWorker(bytes: ArrayBuffer): Promise<ParsedCloud> {
  return new Promise((resolve, reject) => {
    const worker = new Worker(new URL("./parse_worker.js", import.meta.url), {
      type: "module",
    });
    worker.onmessage = (event) => {
      worker.terminate();
      const data = event.data as ParsedCloud | { error: { name: string; message: string } };
      if ("error" in data) {
        const err = new Error(data.error.message);
        err.name = data.error.name;
        reject(err);
      } else {
        resolve(data);
      }
    };
    worker.onerror = (event) => {
      worker.terminate();
      reject(new Error(event.message || "worker failed"));
    };
    worker.postMessage(bytes, [bytes]);
  });
}

async function loadBytes(bytes: ArrayBuffer, label: string) {
  setBanner(`loading ${label}...`);
  try {
    const parsed =
      bytes.byteLength > WORKER_THRESHOLD
        ? await parseInWorker(bytes)
        : parsePcd(new Uint8Array(bytes));
    showCloud(parsed, label);
  } catch (err) {
    setBanner(err instanceof Error ? `${err.name}: ${err.message}` : String(err));
  }
}

async function loadUrl(url: string) {
  try {
    const response = await fetch(url);
    if (!response.ok) {
      setBanner(`fetch failed: ${url} (${response.status})`);
      return;
    }
    await loadBytes(await response.arrayBuffer(), url.split("/").pop() ?? url);
  } catch (err) {
    setBanner(`fetch failed: ${url} (${err instanceof Error ? err.message : err})`);
  }
}

// VR entry. Cloud coordinates are meters, nothing rescales the scene, so a
// session shows the reconstruction at world scale. The flat camera pose is
// snapshotted around the session so leaving VR lands where the user was.
let savedPose: { position: THREE.Vector3; quaternion: THREE.Quaternion } | null = null;
// three types setSession against the concrete XRSession; we only ever hand it
// a session obtained from navigator.xr, so the structural view is sound
const vrButton = createVrButton(renderer as unknown as VrRendererLike, {
  onStart() {
    if (!current) return;
    savedPose = {
      position: current.handle.camera.position.clone(),
      quaternion: current.handle.camera.quaternion.clone(),
    };
  },
  onEnd() {
    if (!current || !savedPose) return;
    current.handle.camera.position.copy(savedPose.position);
    current.handle.camera.quaternion.copy(savedPose.quaternion);
    current.controls.update();
  },
  onDenied(error) {
    setBanner(`VR session denied (${error.message}); staying in flat view`);
  },
});
document.body.appendChild(vrButton);

window.addEventListener("resize", () => {
  renderer.setSize(window.innerWidth, window.innerHeight);
  current?.handle.setAspect(aspect());
});

window.addEventListener("dragover", (event) => event.preventDefault());
window.addEventListener("drop", (event) => {
  event.preventDefault();
  const file = event.dataTransfer?.files?.[0];
  if (!file) return;
  file.arrayBuffer().then((bytes) => loadBytes(bytes, file.name));
});

window.addEventListener("keydown", (event) => {
  if (!current) return;
  if (event.key === "r" || event.key === "R") {
    current.handle.resetCamera();
    current.controls.target.copy(current.handle.target);
    current.controls.update();
  } else if (event.key === "+" || event.key === "=") {
    current.handle.setPointSize(current.handle.pointSize() + 1);
    updateHud();
  } else if (event.key === "-" || event.key === "_") {
    current.handle.setPointSize(current.handle.pointSize() - 1);
    updateHud();
  }
});

// render loop with a crude adaptive point budget: when sustained fps drops
// well under the target, halve the budget and rebuild from the kept parse
let frames = 0;
let elapsed = 0;
let last = performance.now();
renderer.setAnimationLoop(() => {
  const now = performance.now();
  elapsed += now - last;
  last = now;
  frames += 1;
  if (frames >= 90) {
    const fps = (1000 * frames) / Math.max(1, elapsed);
    frames = 0;
    elapsed = 0;
    if (fps < 25 && current && current.handle.renderedCount > MIN_BUDGET) {
      budget = Math.max(MIN_BUDGET, Math.floor(current.handle.renderedCount / 2));
      showCloud(current.parsed, current.label);
    }
  }
  if (current) {
    current.controls.update();
    renderer.render(current.handle.scene, current.handle.camera);
  }
});

const requested = new URLSearchParams(window.location.search).get("pcd");
if (requested) {
  void loadUrl(requested);
} else {
  setBanner("drop a .pcd file here, or open with ?pcd=path/to/cloud.pcd");
}
