/**
 * App wiring: builds the toolbar, palette, and action panel around the
 * canvas and connects them to the store.
 */

import { LayoutApi } from './api'
import { categoryColor, LayoutCanvas, type Mode } from './canvas'
import { parseScene } from './schema'
import { EditorStore } from './store'
import './style.css'

const SERVICE_URL = (import.meta as any).env?.VITE_SERVICE_URL ?? ''

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag)
  if (className) node.className = className
  if (text !== undefined) node.textContent = text
  return node
}

function button(label: string, onClick: () => void): HTMLButtonElement {
  const b = el('button', 'btn', label)
  b.addEventListener('click', onClick)
  return b
}

function download(filename: string, text: string) {
  const a = document.createElement('a')
  a.href = URL.createObjectURL(new Blob([text], { type: 'application/json' }))
  a.download = filename
  a.click()
  URL.revokeObjectURL(a.href)
}

export function mountApp(root: HTMLElement) {
  const store = new EditorStore(new LayoutApi(SERVICE_URL))

  const banner = el('div', 'banner hidden', 'service unreachable; editing offline')
  const statusLine = el('div', 'status')
  const canvasEl = el('canvas', 'stage')
  canvasEl.width = 880
  canvasEl.height = 640
  const canvas = new LayoutCanvas(canvasEl, store)

  // --- toolbar: modes + undo/export/import ---
  const toolbar = el('div', 'toolbar')
  const modeButtons = new Map<Mode, HTMLButtonElement>()
  const setMode = (m: Mode) => {
    canvas.setMode(m)
    modeButtons.forEach((b, mode) => b.classList.toggle('active', mode === m))
  }
  for (const m of ['select', 'floor', 'box'] as Mode[]) {
    const label = m === 'select' ? 'Select' : m === 'floor' ? 'Draw floor' : 'Suggest box'
    const b = button(label, () => setMode(m))
    modeButtons.set(m, b)
    toolbar.appendChild(b)
  }
  toolbar.appendChild(button('Undo', () => store.undo()))
  toolbar.appendChild(
    button('Export', () => {
      try {
        download('scene.json', store.exportJson())
      } catch (err) {
        store.setStatus(err instanceof Error ? err.message : String(err), 'error')
      }
    }),
  )
  const importInput = el('input') as HTMLInputElement
  importInput.type = 'file'
  importInput.accept = 'application/json'
  importInput.style.display = 'none'
  importInput.addEventListener('change', async () => {
    const file = importInput.files?.[0]
    if (!file) return
    try {
      store.loadScene(parseScene(JSON.parse(await file.text())))
      canvas.fit()
    } catch (err) {
      store.setStatus(err instanceof Error ? err.message : String(err), 'error')
    }
    importInput.value = ''
  })
  toolbar.appendChild(button('Import', () => importInput.click()))
  toolbar.appendChild(importInput)

  // --- sampling controls ---
  const controls = el('div', 'controls')
  const seedInput = el('input') as HTMLInputElement
  seedInput.type = 'number'
  seedInput.placeholder = 'random'
  seedInput.addEventListener('change', () => {
    store.seed = seedInput.value === '' ? null : Number(seedInput.value)
  })
  const tempInput = el('input') as HTMLInputElement
  tempInput.type = 'number'
  tempInput.step = '0.1'
  tempInput.min = '0.1'
  tempInput.value = '1.0'
  tempInput.addEventListener('change', () => {
    store.temperature = Number(tempInput.value) || 1.0
  })
  controls.append(
    el('label', 'lbl', 'seed'),
    seedInput,
    el('label', 'lbl', 'temperature'),
    tempInput,
  )

  // --- actions ---
  const actions = el('div', 'actions')
  const actionButtons: HTMLButtonElement[] = []
  const addAction = (label: string, fn: () => void) => {
    const b = button(label, fn)
    actionButtons.push(b)
    actions.appendChild(b)
    return b
  }
  addAction('Synthesize', () => void store.requestSynthesize())
  addAction('Complete', () => void store.requestComplete())
  addAction('Suggest in box', () => void store.requestSuggest())
  addAction('Detect & fix', () => void store.requestDetect())
  addAction('Likelihoods', () => void store.requestLikelihoods())

  const placeRow = el('div', 'actions')
  const placeSelect = el('select') as HTMLSelectElement
  placeRow.appendChild(placeSelect)
  const placeBtn = button('Place', () => void store.requestPlace(Number(placeSelect.value)))
  actionButtons.push(placeBtn)
  placeRow.appendChild(placeBtn)

  // --- proposal bar ---
  const proposalBar = el('div', 'proposal hidden')
  const proposalLabel = el('span', 'proposal-label')
  const acceptBtn = button('Accept', () => store.acceptProposal())
  const rejectBtn = button('Reject', () => store.rejectProposal())
  proposalBar.append(proposalLabel, acceptBtn, rejectBtn)

  // --- palette + legend from /meta ---
  const palette = el('div', 'palette')

  const side = el('div', 'side')
  side.append(toolbar, controls, actions, placeRow, palette, statusLine)

  const main = el('div', 'main')
  main.append(banner, proposalBar, canvasEl)
  const wrap = el('div', 'wrap')
  wrap.append(side, main)
  root.appendChild(wrap)

  function renderPalette() {
    palette.textContent = ''
    placeSelect.textContent = ''
    const names = store.meta?.categories ?? []
    names.forEach((name, i) => {
      const chip = el('div', 'chip')
      const swatch = el('span', 'swatch')
      swatch.style.background = categoryColor(i)
      chip.append(swatch, el('span', undefined, name))
      chip.addEventListener('click', () => store.addObject(i))
      chip.title = `pin a ${name}`
      palette.appendChild(chip)

      const opt = el('option', undefined, name) as HTMLOptionElement
      opt.value = String(i)
      placeSelect.appendChild(opt)
    })
  }

  store.subscribe(() => {
    banner.classList.toggle('hidden', !store.offline)
    proposalBar.classList.toggle('hidden', store.proposal === null)
    if (store.proposal) proposalLabel.textContent = store.proposal.label
    statusLine.textContent = store.status?.text ?? ''
    statusLine.className = `status ${store.status?.tone ?? ''}`
    for (const b of actionButtons) b.disabled = store.busy
  })

  void store.loadMeta().then(() => renderPalette())
  canvas.fit()
  setMode('select')
  return { store, canvas }
}

const rootEl = document.getElementById('app')
if (rootEl) mountApp(rootEl)
