/**
 * Top-down canvas view: renders the floor, the object footprints, ghost
 * proposals, and the suggest constraint box; translates pointer gestures
 * into store mutations.
 */

import {
  boxFromDrag,
  fitViewport,
  footprintCorners,
  hitTestObjects,
  rotateHandlePosition,
  screenToWorld,
  worldToScreen,
  type Viewport,
} from './geometry'
import type { EditorStore } from './store'
import type { Scene, SceneObject } from './types'

export type Mode = 'select' | 'floor' | 'box'

const CATEGORY_COLORS = [
  '#c2703d',
  '#4f7fc2',
  '#c2b23d',
  '#6ec24f',
  '#a44fc2',
  '#c24f6e',
  '#4fc2b2',
  '#8c8c5a',
]

export function categoryColor(category: number): string {
  return CATEGORY_COLORS[category % CATEGORY_COLORS.length]
}

const HANDLE_PX = 7

export class LayoutCanvas {
  private canvas: HTMLCanvasElement
  private ctx: CanvasRenderingContext2D
  private store: EditorStore
  private viewport: Viewport = { scale: 80, offsetX: 0, offsetY: 0 }

  mode: Mode = 'select'

  // in-progress gestures
  private draftFloor: Array<[number, number]> = []
  private dragIndex = -1
  private dragOffset: [number, number] = [0, 0]
  private rotating = false
  private boxStart: [number, number] | null = null
  private hover: [number, number] | null = null

  constructor(canvas: HTMLCanvasElement, store: EditorStore) {
    this.canvas = canvas
    const ctx = canvas.getContext('2d')
    if (!ctx) throw new Error('no 2d context')
    this.ctx = ctx
    this.store = store

    canvas.addEventListener('pointerdown', (e) => this.onDown(e))
    canvas.addEventListener('pointermove', (e) => this.onMove(e))
    canvas.addEventListener('pointerup', (e) => this.onUp(e))
    canvas.addEventListener('dblclick', () => this.onDoubleClick())
    store.subscribe(() => this.render())
  }

  setMode(mode: Mode) {
    this.mode = mode
    this.draftFloor = []
    this.boxStart = null
    this.render()
  }

  /** Fit the view to the scene bounds; call on resize and scene load. */
  fit() {
    const b = this.store.scene.bounds
    this.viewport = fitViewport(
      this.canvas.width,
      this.canvas.height,
      b[0],
      b[2],
      b[3],
      b[5],
    )
    this.render()
  }

  private pointer(e: PointerEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect()
    const px = ((e.clientX - rect.left) * this.canvas.width) / rect.width
    const py = ((e.clientY - rect.top) * this.canvas.height) / rect.height
    return screenToWorld(this.viewport, px, py)
  }

  private onDown(e: PointerEvent) {
    const [x, z] = this.pointer(e)
    if (this.mode === 'floor') {
      this.draftFloor.push([x, z])
      this.render()
      return
    }
    if (this.mode === 'box') {
      this.boxStart = [x, z]
      this.store.setConstraintBox(boxFromDrag(x, z, x, z))
      return
    }
    const store = this.store
    // rotate handle of the selected object has priority over body hits
    if (store.selection >= 0) {
      const o = store.scene.objects[store.selection]
      if (o && this.nearHandle(x, z, o)) {
        store.checkpoint()
        this.rotating = true
        this.canvas.setPointerCapture(e.pointerId)
        return
      }
    }
    const hit = hitTestObjects(store.scene, x, z)
    store.select(hit)
    if (hit >= 0) {
      const o = store.scene.objects[hit]
      store.checkpoint()
      this.dragIndex = hit
      this.dragOffset = [o.location[0] - x, o.location[2] - z]
      this.canvas.setPointerCapture(e.pointerId)
    }
  }

  private nearHandle(x: number, z: number, o: SceneObject): boolean {
    const [hx, hz] = rotateHandlePosition(o)
    const [sx, sy] = worldToScreen(this.viewport, hx, hz)
    const [px, py] = worldToScreen(this.viewport, x, z)
    return Math.hypot(px - sx, py - sy) <= HANDLE_PX + 4
  }

  private onMove(e: PointerEvent) {
    const [x, z] = this.pointer(e)
    this.hover = [x, z]
    if (this.mode === 'box' && this.boxStart) {
      this.store.setConstraintBox(boxFromDrag(this.boxStart[0], this.boxStart[1], x, z))
      return
    }
    if (this.rotating && this.store.selection >= 0) {
      const o = this.store.scene.objects[this.store.selection]
      this.store.rotateObject(
        this.store.selection,
        Math.atan2(z - o.location[2], x - o.location[0]),
      )
      return
    }
    if (this.dragIndex >= 0) {
      this.store.moveObject(this.dragIndex, x + this.dragOffset[0], z + this.dragOffset[1])
      return
    }
    if (this.mode === 'floor') this.render()
  }

  private onUp(e: PointerEvent) {
    if (this.dragIndex >= 0 || this.rotating) {
      this.canvas.releasePointerCapture(e.pointerId)
    }
    this.dragIndex = -1
    this.rotating = false
    this.boxStart = null
  }

  private onDoubleClick() {
    if (this.mode === 'floor' && this.draftFloor.length >= 3) {
      // the double-click registered two extra pointerdown vertices
      this.store.setFloor(this.draftFloor.slice(0, -2))
      this.draftFloor = []
      this.fit()
    }
  }

  // ----- rendering -----

  render() {
    const { ctx, canvas, viewport: v } = this
    const scene = this.store.scene
    ctx.clearRect(0, 0, canvas.width, canvas.height)
    ctx.fillStyle = '#14141e'
    ctx.fillRect(0, 0, canvas.width, canvas.height)

    this.drawGrid()
    this.drawFloor(scene)
    this.drawConstraintBox()

    const scores = this.store.likelihoodScores
    const worst =
      scores && scores.length ? scores.indexOf(Math.min(...scores)) : -1
    scene.objects.forEach((o, i) => {
      this.drawObject(o, {
        selected: i === this.store.selection,
        heat: scores ? this.heatColor(scores, i) : null,
        worst: i === worst,
      })
    })

    this.drawProposal()
    this.drawDraftFloor()
  }

  private drawGrid() {
    const { ctx, canvas, viewport: v } = this
    ctx.strokeStyle = '#23233a'
    ctx.lineWidth = 1
    const step = v.scale // 1 meter
    for (let x = v.offsetX % step; x < canvas.width; x += step) {
      ctx.beginPath()
      ctx.moveTo(x, 0)
      ctx.lineTo(x, canvas.height)
      ctx.stroke()
    }
    for (let y = v.offsetY % step; y < canvas.height; y += step) {
      ctx.beginPath()
      ctx.moveTo(0, y)
      ctx.lineTo(canvas.width, y)
      ctx.stroke()
    }
  }

  private polyPath(points: Array<[number, number]>) {
    const { ctx, viewport: v } = this
    ctx.beginPath()
    points.forEach(([x, z], i) => {
      const [sx, sy] = worldToScreen(v, x, z)
      if (i === 0) ctx.moveTo(sx, sy)
      else ctx.lineTo(sx, sy)
    })
    ctx.closePath()
  }

  private drawFloor(scene: Scene) {
    const { ctx } = this
    this.polyPath(scene.floor_polygon)
    ctx.fillStyle = '#1e2832'
    ctx.fill()
    ctx.strokeStyle = '#3d5166'
    ctx.lineWidth = 2
    ctx.stroke()
  }

  private drawDraftFloor() {
    if (this.mode !== 'floor' || this.draftFloor.length === 0) return
    const { ctx, viewport: v } = this
    ctx.strokeStyle = '#7fb2e5'
    ctx.setLineDash([6, 4])
    ctx.lineWidth = 1.5
    ctx.beginPath()
    this.draftFloor.forEach(([x, z], i) => {
      const [sx, sy] = worldToScreen(v, x, z)
      if (i === 0) ctx.moveTo(sx, sy)
      else ctx.lineTo(sx, sy)
    })
    if (this.hover) {
      const [sx, sy] = worldToScreen(v, this.hover[0], this.hover[1])
      ctx.lineTo(sx, sy)
    }
    ctx.stroke()
    ctx.setLineDash([])
  }

  private drawConstraintBox() {
    const box = this.store.constraintBox
    if (!box) return
    const { ctx, viewport: v } = this
    const [x0, y0] = worldToScreen(v, box.min[0], box.min[2])
    const [x1, y1] = worldToScreen(v, box.max[0], box.max[2])
    ctx.strokeStyle = '#d04040'
    ctx.setLineDash([5, 4])
    ctx.lineWidth = 1.5
    ctx.strokeRect(x0, y0, x1 - x0, y1 - y0)
    ctx.setLineDash([])
  }

  private heatColor(scores: number[], index: number): string {
    const lo = Math.min(...scores)
    const hi = Math.max(...scores)
    const t = hi > lo ? (scores[index] - lo) / (hi - lo) : 1
    // red (low likelihood) to green (high)
    const r = Math.round(220 - 120 * t)
    const g = Math.round(90 + 130 * t)
    return `rgb(${r}, ${g}, 80)`
  }

  private drawObject(
    o: SceneObject,
    flags: { selected: boolean; heat: string | null; worst: boolean },
  ) {
    const { ctx, viewport: v } = this
    const corners = footprintCorners(o)
    this.polyPath(corners)
    ctx.fillStyle = flags.heat ?? categoryColor(o.category)
    ctx.globalAlpha = 0.85
    ctx.fill()
    ctx.globalAlpha = 1
    ctx.strokeStyle = flags.worst ? '#ff2d2d' : flags.selected ? '#ffffff' : '#10101a'
    ctx.lineWidth = flags.worst || flags.selected ? 3 : 1.5
    ctx.stroke()

    // heading tick from centroid toward +x of the box frame
    const [cx, cz] = [o.location[0], o.location[2]]
    const hx = cx + o.size[0] * 0.9 * Math.cos(o.orientation)
    const hz = cz + o.size[0] * 0.9 * Math.sin(o.orientation)
    const [sx0, sy0] = worldToScreen(v, cx, cz)
    const [sx1, sy1] = worldToScreen(v, hx, hz)
    ctx.strokeStyle = '#10101a'
    ctx.beginPath()
    ctx.moveTo(sx0, sy0)
    ctx.lineTo(sx1, sy1)
    ctx.stroke()

    if (flags.selected) {
      const [rx, rz] = rotateHandlePosition(o)
      const [px, py] = worldToScreen(v, rx, rz)
      ctx.beginPath()
      ctx.arc(px, py, HANDLE_PX, 0, Math.PI * 2)
      ctx.fillStyle = '#ffffff'
      ctx.fill()
    }
  }

  private drawProposal() {
    const p = this.store.proposal
    if (!p) return
    const { ctx } = this
    ctx.globalAlpha = 0.45
    if (p.kind === 'object') {
      this.drawObject(p.object, { selected: false, heat: null, worst: false })
    } else {
      // ghost only the objects past the current scene (completion) or the
      // whole replacement when the server rewrote existing ones (detect)
      const current = this.store.scene.objects.length
      const changed = p.report !== undefined
      p.scene.objects.forEach((o, i) => {
        if (changed ? p.report!.flagged.includes(i) : i >= current) {
          this.drawObject(o, { selected: false, heat: null, worst: false })
        }
      })
    }
    ctx.globalAlpha = 1
  }
}
