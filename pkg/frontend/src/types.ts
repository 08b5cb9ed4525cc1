// API payload shapes (mirrors the server's job documents)

export interface ParamSpec {
  name: string
  type: 'float' | 'int'
  default: number | null
  min: number | null
  max: number | null
  exclusive_min: boolean
  required: boolean
  description: string
}

export interface PipelineDescriptor {
  pipeline_id: string
  display_name: string
  params: ParamSpec[]
}

export interface JobProgress {
  done: number
  total: number
}

export interface JobRecord {
  job_id: string
  pipeline: string
  image_ids: string[]
  state: 'queued' | 'running' | 'completed' | 'failed' | 'cancelled'
  progress: JobProgress
  error: string | null
}

export interface ImageEntry {
  image_id: string
  image: string
  records?: Record<string, unknown>[]
  summary?: Record<string, unknown>
  summary_row?: Record<string, unknown>
  warnings?: string[]
  error?: string
}

export interface ResultsDocument {
  pipeline: string
  images: ImageEntry[]
  aggregate: Record<string, unknown>
}

export type AuditFlag = 'accepted' | 'rejected' | 'unreviewed'

export const TERMINAL_STATES = ['completed', 'failed', 'cancelled'] as const
