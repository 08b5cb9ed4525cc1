import { ApiClient, ApiError } from './api'
import { pollUntilTerminal, type PollOptions } from './poll'
import { SessionState } from './state'
import type { ImageEntry, ParamSpec, ResultsDocument } from './types'

function el<T extends HTMLElement>(root: ParentNode, selector: string): T {
  const node = root.querySelector(selector)
  if (!node) throw new Error(`missing element ${selector}`)
  return node as T
}

export const APP_HTML = `
  <header class="topbar">
    <h1>WheatAI</h1>
    <span id="api-state" class="api-state"></span>
  </header>
  <div id="error-banner" class="banner hidden">
    <span id="error-text"></span>
    <button id="error-retry">Retry</button>
  </div>
  <section class="panel" id="pipeline-panel">
    <label>Pipeline
      <select id="pipeline-select"><option value="">select a pipeline</option></select>
    </label>
    <div id="param-controls" class="params"></div>
  </section>
  <section class="panel" id="run-panel">
    <input type="file" id="file-input" multiple accept="image/png,image/jpeg" />
    <label>Mode
      <select id="mode-select">
        <option value="bulk">bulk</option>
        <option value="single">single</option>
      </select>
    </label>
    <label>Prediction source
      <input type="text" id="backend-ref" value="preds" />
    </label>
    <button id="run-button" disabled>Upload &amp; run</button>
  </section>
  <section class="panel hidden" id="progress-panel">
    <progress id="progress-bar" value="0" max="1"></progress>
    <span id="progress-text"></span>
  </section>
  <section class="panel hidden" id="results-panel">
    <div id="job-meta"></div>
    <div id="gallery" class="gallery"></div>
    <div id="viewer" class="viewer hidden">
      <img id="viewer-image" alt="overlay full view" />
      <button id="viewer-close">Close</button>
    </div>
    <div class="downloads">
      <button id="download-csv" disabled>Download results.csv</button>
      <button id="download-audit" disabled>Download audit CSV</button>
    </div>
  </section>
`

interface AppOptions {
  poll?: PollOptions
  download?: (name: string, content: string) => void
}

export class App {
  readonly state = new SessionState()
  lastResults: ResultsDocument | null = null

  private views: {
    errorBanner: HTMLElement
    errorText: HTMLElement
    pipelineSelect: HTMLSelectElement
    paramControls: HTMLElement
    fileInput: HTMLInputElement
    modeSelect: HTMLSelectElement
    backendRef: HTMLInputElement
    runButton: HTMLButtonElement
    progressPanel: HTMLElement
    progressBar: HTMLProgressElement
    progressText: HTMLElement
    resultsPanel: HTMLElement
    jobMeta: HTMLElement
    gallery: HTMLElement
    viewer: HTMLElement
    viewerImage: HTMLImageElement
    downloadCsv: HTMLButtonElement
    downloadAudit: HTMLButtonElement
  }

  constructor(
    root: HTMLElement,
    private api: ApiClient,
    private options: AppOptions = {},
  ) {
    root.innerHTML = APP_HTML
    this.views = {
      errorBanner: el(root, '#error-banner'),
      errorText: el(root, '#error-text'),
      pipelineSelect: el(root, '#pipeline-select'),
      paramControls: el(root, '#param-controls'),
      fileInput: el(root, '#file-input'),
      modeSelect: el(root, '#mode-select'),
      backendRef: el(root, '#backend-ref'),
      runButton: el(root, '#run-button'),
      progressPanel: el(root, '#progress-panel'),
      progressBar: el(root, '#progress-bar'),
      progressText: el(root, '#progress-text'),
      resultsPanel: el(root, '#results-panel'),
      jobMeta: el(root, '#job-meta'),
      gallery: el(root, '#gallery'),
      viewer: el(root, '#viewer'),
      viewerImage: el(root, '#viewer-image'),
      downloadCsv: el(root, '#download-csv'),
      downloadAudit: el(root, '#download-audit'),
    }
    this.views.pipelineSelect.addEventListener('change', () => {
      if (this.views.pipelineSelect.value) this.selectPipeline(this.views.pipelineSelect.value)
    })
    this.views.fileInput.addEventListener('change', () => this.updateRunButton())
    this.views.runButton.addEventListener('click', () => void this.uploadAndRun())
    el<HTMLButtonElement>(root, '#error-retry').addEventListener('click', () => void this.loadPipelines())
    el<HTMLButtonElement>(root, '#viewer-close').addEventListener('click', () =>
      this.views.viewer.classList.add('hidden'),
    )
    this.views.downloadCsv.addEventListener('click', () => void this.downloadExports(false))
    this.views.downloadAudit.addEventListener('click', () => void this.downloadExports(true))
  }

  async init(): Promise<void> {
    await this.loadPipelines()
  }

  // -- pipelines and parameters ------------------------------------------

  async loadPipelines(): Promise<void> {
    try {
      const descriptors = await this.api.listPipelines()
      this.state.setDescriptors(descriptors)
      this.hideError()
      const select = this.views.pipelineSelect
      select.innerHTML = '<option value="">select a pipeline</option>'
      for (const d of descriptors) {
        const option = document.createElement('option')
        option.value = d.pipeline_id
        option.textContent = d.display_name
        select.appendChild(option)
      }
    } catch (err) {
      this.showError(err, 'API unreachable')
    }
  }

  selectPipeline(pipelineId: string): void {
    const descriptor = this.state.selectPipeline(pipelineId)
    this.views.pipelineSelect.value = pipelineId
    const controls = this.views.paramControls
    controls.innerHTML = ''
    for (const spec of descriptor.params) {
      controls.appendChild(this.paramControl(spec))
    }
    this.updateRunButton()
  }

  private paramControl(spec: ParamSpec): HTMLElement {
    const wrap = document.createElement('label')
    wrap.className = 'param'
    wrap.textContent = spec.name
    const input = document.createElement('input')
    const bounded = spec.min !== null && spec.max !== null
    input.type = bounded ? 'range' : 'number'
    input.dataset.param = spec.name
    if (spec.min !== null) input.min = String(spec.min)
    if (spec.max !== null) input.max = String(spec.max)
    input.step = spec.type === 'int' ? '1' : '0.01'
    const current = this.state.getParam(spec.name)
    if (current !== undefined) input.value = String(current)
    const value = document.createElement('span')
    value.className = 'param-value'
    value.textContent = current !== undefined ? String(current) : ''
    input.addEventListener('change', () => {
      const clamped = this.state.setParam(spec.name, Number(input.value))
      input.value = String(clamped)
      value.textContent = String(clamped)
    })
    wrap.appendChild(input)
    wrap.appendChild(value)
    return wrap
  }

  private updateRunButton(): void {
    const files = this.views.fileInput.files?.length ?? 0
    this.views.runButton.disabled = !this.state.pipelineId || files === 0
  }

  // -- run ----------------------------------------------------------------

  async uploadAndRun(): Promise<void> {
    const files = [...(this.views.fileInput.files ?? [])]
    if (!this.state.pipelineId || files.length === 0) return
    this.state.mode = files.length === 1 && this.views.modeSelect.value === 'single' ? 'single' : 'bulk'
    this.hideError()
    try {
      this.state.clearUploads()
      for (const file of files) {
        const uploaded = await this.api.uploadImage(file)
        this.state.addUpload(uploaded.image_id, uploaded.filename)
      }
      await this.runJob()
    } catch (err) {
      this.showError(err, 'upload failed')
    }
  }

  /** Submit a job for the current uploads and params; resolves when the
   *  results are rendered. */
  async runJob(): Promise<void> {
    if (!this.state.pipelineId) return
    const imageIds = this.state.uploadedImages.map((u) => u.imageId)
    const body = {
      pipeline: this.state.pipelineId,
      image_ids: imageIds,
      params: this.state.currentParams(),
      backend_ref: this.views.backendRef.value,
      mode: this.state.mode,
    }
    this.rememberSummaries()
    try {
      const submitted = await this.api.submitJob(body)
      this.state.activeJobId = submitted.job_id
      if (this.state.mode === 'single' && submitted.results) {
        this.renderResults(submitted.results)
        return
      }
      this.showProgress(0, imageIds.length)
      const record = await pollUntilTerminal(
        this.api,
        submitted.job_id,
        (r) => this.showProgress(r.progress.done, r.progress.total),
        this.options.poll,
      )
      this.views.progressPanel.classList.add('hidden')
      if (record.state !== 'completed') {
        this.showError(new ApiError(0, record.error ?? record.state, `job ${record.state}`), 'job did not complete')
        return
      }
      this.renderResults(await this.api.jobResults(submitted.job_id))
    } catch (err) {
      this.views.progressPanel.classList.add('hidden')
      this.showError(err, 'job failed')
    }
  }

  /** Re-run the same uploads with the current (changed) parameters. */
  async rerunWithParams(): Promise<void> {
    if (this.state.uploadedImages.length === 0) return
    await this.runJob()
  }

  private rememberSummaries(): void {
    if (!this.lastResults) return
    this.state.previousSummary = new Map(
      this.lastResults.images.map((im) => [im.image_id, im.summary ?? {}]),
    )
  }

  // -- results -------------------------------------------------------------

  private renderResults(doc: ResultsDocument): void {
    this.lastResults = doc
    this.views.resultsPanel.classList.remove('hidden')
    this.views.jobMeta.textContent =
      `${doc.pipeline}: ${doc.images.length} image(s), ` +
      `${String(doc.aggregate['n_records'] ?? '')} records`
    const gallery = this.views.gallery
    gallery.innerHTML = ''
    for (const entry of doc.images) {
      gallery.appendChild(this.galleryCard(entry))
    }
    this.views.downloadCsv.disabled = false
    this.views.downloadAudit.disabled = false
  }

  private galleryCard(entry: ImageEntry): HTMLElement {
    const card = document.createElement('div')
    card.className = 'card'
    card.dataset.imageId = entry.image_id

    const title = document.createElement('div')
    title.className = 'card-title'
    title.textContent = entry.image
    card.appendChild(title)

    if (entry.error) {
      const err = document.createElement('div')
      err.className = 'card-error'
      err.textContent = `failed: ${entry.error}`
      card.appendChild(err)
      return card
    }

    const img = document.createElement('img')
    img.className = 'thumb'
    img.alt = `overlay for ${entry.image}`
    if (this.state.activeJobId) {
      img.src = this.api.overlayUrl(this.state.activeJobId, entry.image_id)
    }
    img.addEventListener('click', () => {
      this.views.viewerImage.src = img.src
      this.views.viewer.classList.remove('hidden')
    })
    card.appendChild(img)

    const metrics = document.createElement('dl')
    metrics.className = 'metrics'
    const previous = this.state.previousSummary?.get(entry.image_id)
    for (const [key, value] of Object.entries(entry.summary ?? {})) {
      if (value === null || typeof value === 'object') continue
      const dt = document.createElement('dt')
      dt.textContent = key
      const dd = document.createElement('dd')
      const old = previous?.[key]
      dd.textContent =
        old !== undefined && old !== value ? `${String(old)} → ${String(value)}` : String(value)
      dd.dataset.metric = key
      metrics.appendChild(dt)
      metrics.appendChild(dd)
    }
    card.appendChild(metrics)

    const audit = document.createElement('div')
    audit.className = 'audit'
    const badge = document.createElement('span')
    badge.className = 'badge'
    badge.textContent = this.state.auditFlag(entry.image_id)
    for (const flag of ['accepted', 'rejected'] as const) {
      const button = document.createElement('button')
      button.textContent = flag === 'accepted' ? 'Accept' : 'Reject'
      button.dataset.flag = flag
      button.addEventListener('click', () => {
        this.state.setAuditFlag(entry.image_id, flag)
        badge.textContent = flag
      })
      audit.appendChild(button)
    }
    audit.appendChild(badge)
    card.appendChild(audit)
    return card
  }

  // -- downloads -------------------------------------------------------------

  async downloadExports(withAudit: boolean): Promise<void> {
    if (!this.state.activeJobId || !this.lastResults) return
    try {
      const csv = await this.api.resultsCsv(this.state.activeJobId)
      const content = withAudit ? this.state.augmentCsvWithAudit(csv) : csv
      const name = withAudit ? `${this.lastResults.pipeline}_audit.csv` : `${this.lastResults.pipeline}.csv`
      const save = this.options.download ?? defaultDownload
      save(name, content)
    } catch (err) {
      this.showError(err, 'download failed')
    }
  }

  // -- errors ------------------------------------------------------------------

  private showError(err: unknown, context: string): void {
    const message =
      err instanceof ApiError ? `${context}: ${err.code} (${err.message})` : `${context}: ${String(err)}`
    this.views.errorText.textContent = message
    this.views.errorBanner.classList.remove('hidden')
  }

  private hideError(): void {
    this.views.errorBanner.classList.add('hidden')
  }

  private showProgress(done: number, total: number): void {
    this.views.progressPanel.classList.remove('hidden')
    this.views.progressBar.max = Math.max(1, total)
    this.views.progressBar.value = done
    this.views.progressText.textContent = `${done} / ${total}`
  }
}

function defaultDownload(name: string, content: string): void {
  const blob = new Blob([content], { type: 'text/csv' })
  const url = URL.createObjectURL(blob)
  const link = document.createElement('a')
  link.href = url
  link.download = name
  link.click()
  URL.revokeObjectURL(url)
}
