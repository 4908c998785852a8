/**
 * Plane geometry for the top-down editor: world/screen transforms,
 * rotated-rectangle footprints, hit tests. World coordinates are meters
 * in the floor plane (x right, z down on screen); screen coordinates are
 * canvas pixels.
 */

import type { Scene, SceneObject, ConstraintBox } from './types'

export interface Viewport {
  /** pixels per meter */
  scale: number
  /** screen x of world origin */
  offsetX: number
  /** screen y of world origin */
  offsetY: number
}

export function worldToScreen(v: Viewport, x: number, z: number): [number, number] {
  return [v.offsetX + x * v.scale, v.offsetY + z * v.scale]
}

export function screenToWorld(v: Viewport, px: number, py: number): [number, number] {
  return [(px - v.offsetX) / v.scale, (py - v.offsetY) / v.scale]
}

/** Fit a world-space bounding box into a canvas, centered, with padding. */
export function fitViewport(
  width: number,
  height: number,
  xmin: number,
  zmin: number,
  xmax: number,
  zmax: number,
  padding = 40,
): Viewport {
  const spanX = Math.max(xmax - xmin, 0.1)
  const spanZ = Math.max(zmax - zmin, 0.1)
  const scale = Math.min((width - padding * 2) / spanX, (height - padding * 2) / spanZ)
  const cx = (xmin + xmax) / 2
  const cz = (zmin + zmax) / 2
  return {
    scale,
    offsetX: width / 2 - cx * scale,
    offsetY: height / 2 - cz * scale,
  }
}

/** Corners of an object's footprint (rotated rectangle) in world x/z. */
export function footprintCorners(o: SceneObject): Array<[number, number]> {
  const [sx, , sz] = o.size
  const [cx, , cz] = o.location
  const c = Math.cos(o.orientation)
  const s = Math.sin(o.orientation)
  const local: Array<[number, number]> = [
    [-sx, -sz],
    [sx, -sz],
    [sx, sz],
    [-sx, sz],
  ]
  return local.map(([x, z]) => [cx + x * c - z * s, cz + x * s + z * c])
}

export function pointInPolygon(x: number, z: number, polygon: Array<[number, number]>): boolean {
  let inside = false
  for (let i = 0, j = polygon.length - 1; i < polygon.length; j = i++) {
    const [xi, zi] = polygon[i]
    const [xj, zj] = polygon[j]
    if (zi > z !== zj > z && x < ((xj - xi) * (z - zi)) / (zj - zi) + xi) {
      inside = !inside
    }
  }
  return inside
}

export function pointInFootprint(x: number, z: number, o: SceneObject): boolean {
  // rotate the point into the box frame instead of testing the polygon
  const dx = x - o.location[0]
  const dz = z - o.location[2]
  const c = Math.cos(-o.orientation)
  const s = Math.sin(-o.orientation)
  const lx = dx * c - dz * s
  const lz = dx * s + dz * c
  return Math.abs(lx) <= o.size[0] && Math.abs(lz) <= o.size[2]
}

/** Topmost object under the cursor, or -1. Later objects draw on top. */
export function hitTestObjects(scene: Scene, x: number, z: number): number {
  for (let i = scene.objects.length - 1; i >= 0; i--) {
    if (pointInFootprint(x, z, scene.objects[i])) return i
  }
  return -1
}

/** World position of an object's rotate handle (off the +x face). */
export function rotateHandlePosition(o: SceneObject, gap = 0.25): [number, number] {
  const r = o.size[0] + gap
  return [
    o.location[0] + r * Math.cos(o.orientation),
    o.location[2] + r * Math.sin(o.orientation),
  ]
}

export function centroidInBox(o: SceneObject, box: ConstraintBox): boolean {
  for (let axis = 0; axis < 3; axis++) {
    if (o.location[axis] < box.min[axis] || o.location[axis] > box.max[axis]) return false
  }
  return true
}

/**
 * Bounds for a drawn floor: a square around the polygon's bounding-box
 * center that contains it under any rotation, matching the convention the
 * model was trained with.
 */
export function boundsForPolygon(
  polygon: Array<[number, number]>,
  yRange: [number, number] = [0, 3],
  margin = 0.05,
): [number, number, number, number, number, number] {
  const xs = polygon.map((p) => p[0])
  const zs = polygon.map((p) => p[1])
  const cx = (Math.min(...xs) + Math.max(...xs)) / 2
  const cz = (Math.min(...zs) + Math.max(...zs)) / 2
  let hs = 0
  for (const [x, z] of polygon) {
    hs = Math.max(hs, Math.hypot(x - cx, z - cz))
  }
  hs += margin
  return [cx - hs, yRange[0], cz - hs, cx + hs, yRange[1], cz + hs]
}

/** A fresh 2D constraint box (x/z corners) lifted to a 3D ConstraintBox. */
export function boxFromDrag(
  x0: number,
  z0: number,
  x1: number,
  z1: number,
  yRange: [number, number] = [0, 3],
): ConstraintBox {
  return {
    min: [Math.min(x0, x1), yRange[0], Math.min(z0, z1)],
    max: [Math.max(x0, x1), yRange[1], Math.max(z0, z1)],
  }
}
