/**
 * Scene construction for a parsed cloud: geometry upload, camera fit,
 * point budget. Everything here is renderer-agnostic so it can run (and be
 * tested) without a GL context; main.ts owns the WebGLRenderer, controls
 * and DOM.
 */

import * as THREE from "three";

import type { ParsedCloud } from "./pcd";

/** Thrown for a zero-point cloud; the app shows a banner instead of a scene. */
export class EmptyCloud extends Error {
  constructor() {
    super("cloud has no points");
    this.name = "EmptyCloud";
  }
}

export interface ViewOptions {
  /** screen-space square size in px, default 2 */
  pointSize?: number;
  background?: THREE.ColorRepresentation;
  /** render at most this many points, stride-subsampled. Default 1.5e6. */
  maxPoints?: number;
  /** viewport width / height, default 1 */
  aspect?: number;
  /** vertical field of view, degrees */
  fov?: number;
}

export interface ViewHandle {
  scene: THREE.Scene;
  camera: THREE.PerspectiveCamera;
  points: THREE.Points;
  /** orbit target: the cloud centroid, which sits at the world origin */
  target: THREE.Vector3;
  /** centroid of the original cloud, subtracted before upload */
  centroid: THREE.Vector3;
  /** bounding sphere radius around the centroid */
  radius: number;
  /** points actually uploaded after the budget cut */
  renderedCount: number;
  setPointSize(px: number): void;
  pointSize(): number;
  setAspect(aspect: number): void;
  /** back to the straight-on framing (refits for the current aspect) */
  resetCamera(): void;
  dispose(): void;
}

const FILL = 0.8; // bounding sphere spans this fraction of the tighter axis

/**
 * Camera distance at which a sphere of the given radius spans FILL of the
 * viewport on its tighter axis. The silhouette rim of a sphere at distance d
 * sits at ray angle asin(r/d), so we pick d with tan(asin(r/d)) equal to
 * FILL times the half-extent tangent.
 */
export function fitDistance(radius: number, fovDeg: number, aspect: number): number {
  const halfV = (fovDeg * Math.PI) / 360;
  const halfH = Math.atan(Math.tan(halfV) * aspect);
  const theta = Math.atan(FILL * Math.tan(Math.min(halfV, halfH)));
  return radius / Math.sin(theta);
}

export function renderView(cloud: ParsedCloud, options: ViewOptions = {}): ViewHandle {
  const { pointSize = 2, background = 0x14141c, maxPoints = 1_500_000 } = options;
  const fov = options.fov ?? 60;
  let aspect = options.aspect ?? 1;

  const n = cloud.pointCount;
  if (n === 0) throw new EmptyCloud();

  // centroid in double precision; large coordinates are the whole reason
  // we recenter before casting down to float32 on the GPU
  let cx = 0, cy = 0, cz = 0;
  for (let i = 0; i < n; i++) {
    cx += cloud.positions[3 * i];
    cy += cloud.positions[3 * i + 1];
    cz += cloud.positions[3 * i + 2];
  }
  cx /= n; cy /= n; cz /= n;

  let r2 = 0;
  for (let i = 0; i < n; i++) {
    const dx = cloud.positions[3 * i] - cx;
    const dy = cloud.positions[3 * i + 1] - cy;
    const dz = cloud.positions[3 * i + 2] - cz;
    r2 = Math.max(r2, dx * dx + dy * dy + dz * dz);
  }
  const radius = Math.max(Math.sqrt(r2), 1e-6);

  const step = Math.max(1, Math.ceil(n / Math.max(1, maxPoints)));
  const m = Math.ceil(n / step);
  const positions = new Float32Array(3 * m);
  const colors = new Float32Array(3 * m);
  for (let out = 0, i = 0; i < n; i += step, out++) {
    positions[3 * out] = cloud.positions[3 * i] - cx;
    positions[3 * out + 1] = cloud.positions[3 * i + 1] - cy;
    positions[3 * out + 2] = cloud.positions[3 * i + 2] - cz;
    colors[3 * out] = cloud.colors[3 * i];
    colors[3 * out + 1] = cloud.colors[3 * i + 1];
    colors[3 * out + 2] = cloud.colors[3 * i + 2];
  }

  const geometry = new THREE.BufferGeometry();
  geometry.setAttribute("position", new THREE.BufferAttribute(positions, 3));
  geometry.setAttribute("color", new THREE.BufferAttribute(colors, 3));
  geometry.computeBoundingSphere();

  const material = new THREE.PointsMaterial({
    size: pointSize,
    sizeAttenuation: false,
    vertexColors: true,
  });
  const points = new THREE.Points(geometry, material);

  const scene = new THREE.Scene();
  scene.background = new THREE.Color(background);
  scene.add(points);

  const camera = new THREE.PerspectiveCamera(fov, aspect, radius / 100, radius * 200);
  const target = new THREE.Vector3(0, 0, 0);

  const goHome = () => {
    camera.position.set(0, 0, fitDistance(radius, fov, aspect));
    camera.lookAt(target);
    camera.updateMatrixWorld(true);
  };
  goHome();

  return {
    scene,
    camera,
    points,
    target,
    centroid: new THREE.Vector3(cx, cy, cz),
    radius,
    renderedCount: m,
    setPointSize(px: number) {
      material.size = Math.min(20, Math.max(0.5, px));
    },
    pointSize() {
      return material.size;
    },
    setAspect(a: number) {
      aspect = a;
      camera.aspect = a;
      camera.updateProjectionMatrix();
    },
    resetCamera: goHome,
    dispose() {
      geometry.dispose();
      material.dispose();
    },
  };
}
