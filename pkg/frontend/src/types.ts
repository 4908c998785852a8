/**
 * Wire types shared with the layout service.
 *
 * Everything here mirrors the JSON the HTTP API accepts and returns;
 * the editor keeps scenes in exactly this shape so export is a
 * JSON.stringify away.
 */

export interface SceneObject {
  category: number
  category_name?: string
  /** half-extents (x, y, z) in meters */
  size: [number, number, number]
  /** centroid in meters, y up */
  location: [number, number, number]
  /** yaw about y in radians */
  orientation: number
}

export interface Scene {
  room_type: string
  /** xmin, ymin, zmin, xmax, ymax, zmax */
  bounds: [number, number, number, number, number, number]
  /** at least 3 [x, z] vertices */
  floor_polygon: Array<[number, number]>
  objects: SceneObject[]
}

export interface ServiceMeta {
  categories: string[]
  n_categories: number
  room_type: string
  likelihood_threshold: number | null
  max_objects: number
  config: Record<string, unknown>
}

/** Axis ranges for /suggest: min and max are (x, y, z) corners. */
export interface ConstraintBox {
  min: [number, number, number]
  max: [number, number, number]
}

export interface CorrectionRecord {
  index: number
  old_log_likelihood: number
  new_log_likelihood: number
}

export interface AnomalyReport {
  scores: number[]
  threshold: number
  flagged: number[]
  corrections: CorrectionRecord[]
}

export interface SynthesizeResponse {
  scene: Scene
  truncated: boolean
  seed: number
}

export interface SuggestResponse {
  suggestion: SceneObject | null
  seed: number
}

export interface PlaceResponse {
  object: SceneObject
  seed: number
}

export interface DetectResponse {
  scene: Scene
  report: AnomalyReport
  seed: number
}

export interface LikelihoodsResponse {
  scores: number[]
}
