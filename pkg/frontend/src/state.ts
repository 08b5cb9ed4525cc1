import type { AuditFlag, ParamSpec, PipelineDescriptor } from './types'

// smallest increment the UI allows above an exclusive lower bound
const EXCLUSIVE_STEP = 1e-6

export function clampParam(spec: ParamSpec, raw: number): number {
  let value = raw
  if (!Number.isFinite(value)) value = spec.default ?? spec.min ?? 0
  if (spec.min !== null) {
    const floor = spec.exclusive_min ? spec.min + EXCLUSIVE_STEP : spec.min
    if (value < floor) value = floor
  }
  if (spec.max !== null && value > spec.max) value = spec.max
  if (spec.type === 'int') value = Math.round(value)
  return value
}

/** Client session: selection, validated params, uploads, audit flags.
 *  Params can never leave their descriptor ranges; audit flags are keyed by
 *  image id so they survive parameter reruns. */
export class SessionState {
  pipelineId: string | null = null
  mode: 'single' | 'bulk' = 'bulk'
  uploadedImages: { imageId: string; filename: string }[] = []
  activeJobId: string | null = null
  previousSummary: Map<string, Record<string, unknown>> | null = null

  private descriptors = new Map<string, PipelineDescriptor>()
  private params = new Map<string, number>()
  private audit = new Map<string, AuditFlag>()

  setDescriptors(descriptors: PipelineDescriptor[]): void {
    this.descriptors.clear()
    for (const d of descriptors) this.descriptors.set(d.pipeline_id, d)
  }

  get descriptorList(): PipelineDescriptor[] {
    return [...this.descriptors.values()]
  }

  selectPipeline(pipelineId: string): PipelineDescriptor {
    const descriptor = this.descriptors.get(pipelineId)
    if (!descriptor) throw new Error(`unknown pipeline ${pipelineId}`)
    this.pipelineId = pipelineId
    this.params.clear()
    for (const p of descriptor.params) {
      if (p.default !== null) this.params.set(p.name, p.default)
    }
    return descriptor
  }

  paramSpec(name: string): ParamSpec {
    const descriptor = this.pipelineId ? this.descriptors.get(this.pipelineId) : undefined
    const spec = descriptor?.params.find((p) => p.name === name)
    if (!spec) throw new Error(`unknown parameter ${name}`)
    return spec
  }

  setParam(name: string, raw: number): number {
    const clamped = clampParam(this.paramSpec(name), raw)
    this.params.set(name, clamped)
    return clamped
  }

  getParam(name: string): number | undefined {
    return this.params.get(name)
  }

  currentParams(): Record<string, number> {
    return Object.fromEntries(this.params)
  }

  addUpload(imageId: string, filename: string): void {
    if (!this.uploadedImages.some((u) => u.imageId === imageId)) {
      this.uploadedImages.push({ imageId, filename })
    }
  }

  clearUploads(): void {
    this.uploadedImages = []
  }

  auditFlag(imageId: string): AuditFlag {
    return this.audit.get(imageId) ?? 'unreviewed'
  }

  setAuditFlag(imageId: string, flag: AuditFlag): void {
    if (flag === 'unreviewed') this.audit.delete(imageId)
    else this.audit.set(imageId, flag)
  }

  /** Append an `audit` column to a results CSV, matched by image filename. */
  augmentCsvWithAudit(csv: string): string {
    const lines = csv.split('\n')
    const byFilename = new Map<string, AuditFlag>()
    for (const { imageId, filename } of this.uploadedImages) {
      byFilename.set(filename, this.auditFlag(imageId))
    }
    const out = lines.map((line, i) => {
      if (line === '') return line
      if (i === 0) return `${line},audit`
      const filename = line.split(',', 1)[0]
      return `${line},${byFilename.get(filename) ?? 'unreviewed'}`
    })
    return out.join('\n')
  }
}
