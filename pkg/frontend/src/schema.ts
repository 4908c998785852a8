/**
 * Scene document validation, mirroring the service's schema errors.
 * Used before export and when importing a pasted document.
 */

import type { Scene, SceneObject } from './types'

export class SchemaError extends Error {}

function numberList(value: unknown, length: number, path: string): number[] {
  if (!Array.isArray(value) || value.length !== length) {
    throw new SchemaError(`${path}: expected a list of ${length} numbers`)
  }
  for (const v of value) {
    if (typeof v !== 'number' || !Number.isFinite(v)) {
      throw new SchemaError(`${path}: expected a list of ${length} numbers`)
    }
  }
  return value as number[]
}

function parseObject(od: unknown, path: string): SceneObject {
  if (typeof od !== 'object' || od === null || Array.isArray(od)) {
    throw new SchemaError(`${path}: expected an object`)
  }
  const doc = od as Record<string, unknown>
  const category = doc.category
  if (typeof category !== 'number' || !Number.isInteger(category) || category < 0) {
    throw new SchemaError(`${path}.category: expected a non-negative integer`)
  }
  const size = numberList(doc.size, 3, `${path}.size`)
  if (size.some((v) => v <= 0)) {
    throw new SchemaError(`${path}.size: half-extents must be positive`)
  }
  const location = numberList(doc.location, 3, `${path}.location`)
  if (typeof doc.orientation !== 'number' || !Number.isFinite(doc.orientation)) {
    throw new SchemaError(`${path}.orientation: expected a number`)
  }
  const out: SceneObject = {
    category,
    size: size as [number, number, number],
    location: location as [number, number, number],
    orientation: doc.orientation,
  }
  if (doc.category_name !== undefined) {
    if (typeof doc.category_name !== 'string') {
      throw new SchemaError(`${path}.category_name: expected a string`)
    }
    out.category_name = doc.category_name
  }
  return out
}

/** Parse and validate a scene document. Throws SchemaError with the offending path. */
export function parseScene(doc: unknown): Scene {
  if (typeof doc !== 'object' || doc === null || Array.isArray(doc)) {
    throw new SchemaError('document: expected a JSON object')
  }
  const d = doc as Record<string, unknown>
  if (typeof d.room_type !== 'string') {
    throw new SchemaError('room_type: expected a string')
  }
  const bounds = numberList(d.bounds, 6, 'bounds')
  if (!(bounds[0] < bounds[3] && bounds[1] < bounds[4] && bounds[2] < bounds[5])) {
    throw new SchemaError('bounds: each min must lie below its max')
  }
  if (!Array.isArray(d.floor_polygon) || d.floor_polygon.length < 3) {
    throw new SchemaError('floor_polygon: expected at least 3 vertices')
  }
  const polygon = d.floor_polygon.map((v, i) => {
    const pair = numberList(v, 2, `floor_polygon[${i}]`)
    return [pair[0], pair[1]] as [number, number]
  })
  if (!Array.isArray(d.objects)) {
    throw new SchemaError('objects: expected a list')
  }
  const objects = d.objects.map((od, i) => parseObject(od, `objects[${i}]`))
  return {
    room_type: d.room_type,
    bounds: bounds as Scene['bounds'],
    floor_polygon: polygon,
    objects,
  }
}

export function validateScene(scene: Scene): void {
  parseScene(JSON.parse(JSON.stringify(scene)))
}

export function sceneToJson(scene: Scene): string {
  validateScene(scene)
  return JSON.stringify(scene, null, 1)
}

export function cloneScene(scene: Scene): Scene {
  return JSON.parse(JSON.stringify(scene)) as Scene
}
