import type { ApiClient } from './api'
import type { JobRecord } from './types'
import { TERMINAL_STATES } from './types'

export interface PollOptions {
  initialMs?: number
  maxMs?: number
  backoff?: number
  sleep?: (ms: number) => Promise<void>
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms))

/** Poll a job until it reaches a terminal state (completed, failed or
 *  cancelled), starting at 1 s and backing off to 5 s. */
export async function pollUntilTerminal(
  api: ApiClient,
  jobId: string,
  onUpdate: (record: JobRecord) => void,
  options: PollOptions = {},
): Promise<JobRecord> {
  const initial = options.initialMs ?? 1000
  const max = options.maxMs ?? 5000
  const backoff = options.backoff ?? 1.5
  const sleep = options.sleep ?? defaultSleep
  let interval = initial
  for (;;) {
    const record = await api.jobStatus(jobId)
    onUpdate(record)
    if ((TERMINAL_STATES as readonly string[]).includes(record.state)) {
      return record
    }
    await sleep(interval)
    interval = Math.min(max, interval * backoff)
  }
}
