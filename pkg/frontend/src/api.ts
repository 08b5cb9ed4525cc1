import type { JobRecord, PipelineDescriptor, ResultsDocument } from './types'

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message)
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  try {
    const body = await resp.json()
    return new ApiError(resp.status, body.code ?? 'unknown_error', body.message ?? resp.statusText)
  } catch {
    return new ApiError(resp.status, 'unknown_error', resp.statusText)
  }
}

export class ApiClient {
  constructor(
    private base = '/api/v1',
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(`${this.base}${path}`)
    if (!resp.ok) throw await parseError(resp)
    return resp.json() as Promise<T>
  }

  async health(): Promise<void> {
    await this.getJson<{ status: string }>('/health')
  }

  async listPipelines(): Promise<PipelineDescriptor[]> {
    const body = await this.getJson<{ pipelines: PipelineDescriptor[] }>('/pipelines')
    return body.pipelines
  }

  async uploadImage(file: File): Promise<{ image_id: string; filename: string }> {
    const form = new FormData()
    form.append('file', file, file.name)
    const resp = await this.fetchFn(`${this.base}/images`, { method: 'POST', body: form })
    if (!resp.ok) throw await parseError(resp)
    return resp.json()
  }

  async submitJob(spec: {
    pipeline: string
    image_ids: string[]
    params: Record<string, number>
    backend_ref: string
    mode: 'single' | 'bulk'
  }): Promise<{ job_id: string; state: string; results?: ResultsDocument }> {
    const resp = await this.fetchFn(`${this.base}/jobs`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(spec),
    })
    if (!resp.ok) throw await parseError(resp)
    return resp.json()
  }

  jobStatus(jobId: string): Promise<JobRecord> {
    return this.getJson<JobRecord>(`/jobs/${jobId}`)
  }

  jobResults(jobId: string): Promise<ResultsDocument> {
    return this.getJson<ResultsDocument>(`/jobs/${jobId}/results`)
  }

  async resultsCsv(jobId: string): Promise<string> {
    const resp = await this.fetchFn(`${this.base}/jobs/${jobId}/results.csv`)
    if (!resp.ok) throw await parseError(resp)
    return resp.text()
  }

  overlayUrl(jobId: string, imageId: string): string {
    return `${this.base}/jobs/${jobId}/overlays/${imageId}.png`
  }
}
