import { describe, expect, it } from 'vitest'

import { SessionState, clampParam } from '../src/state'
import { DESCRIPTORS } from './mock_api'
import type { ParamSpec } from '../src/types'

const conf: ParamSpec = {
  name: 'conf_thresh', type: 'float', default: 0.25, min: 0, max: 1,
  exclusive_min: false, required: false, description: '',
}
const nms: ParamSpec = { ...conf, name: 'nms_iou', default: 0.3, exclusive_min: true }
const tile: ParamSpec = {
  name: 'tile_size', type: 'int', default: 1024, min: 64, max: 8192,
  exclusive_min: false, required: false, description: '',
}

describe('clampParam', () => {
  it('clamps into the declared range', () => {
    expect(clampParam(conf, 1.7)).toBe(1)
    expect(clampParam(conf, -0.3)).toBe(0)
    expect(clampParam(conf, 0.6)).toBe(0.6)
  })

  it('respects exclusive lower bounds', () => {
    expect(clampParam(nms, 0)).toBeGreaterThan(0)
    expect(clampParam(nms, -5)).toBeGreaterThan(0)
  })

  it('rounds integer params', () => {
    expect(clampParam(tile, 511.7)).toBe(512)
    expect(clampParam(tile, 1e9)).toBe(8192)
  })

  it('falls back to the default for non-finite input', () => {
    expect(clampParam(conf, Number.NaN)).toBe(0.25)
  })
})

describe('SessionState', () => {
  function freshState(): SessionState {
    const s = new SessionState()
    s.setDescriptors(DESCRIPTORS)
    return s
  }

  it('loads defaults when a pipeline is selected', () => {
    const s = freshState()
    s.selectPipeline('fhb-field')
    expect(s.getParam('conf_thresh')).toBe(0.25)
    expect(s.getParam('crop_padding')).toBe(0.1)
  })

  it('setParam can never leave the descriptor range', () => {
    const s = freshState()
    s.selectPipeline('spike')
    expect(s.setParam('conf_thresh', 99)).toBe(1)
    expect(s.setParam('conf_thresh', -99)).toBe(0)
    expect(s.currentParams().conf_thresh).toBe(0)
  })

  it('audit flags default to unreviewed and are keyed by image id', () => {
    const s = freshState()
    expect(s.auditFlag('x')).toBe('unreviewed')
    s.setAuditFlag('x', 'rejected')
    expect(s.auditFlag('x')).toBe('rejected')
    s.setAuditFlag('x', 'unreviewed')
    expect(s.auditFlag('x')).toBe('unreviewed')
  })

  it('augments a results CSV with the audit column', () => {
    const s = freshState()
    s.addUpload('img1', 'a_1.png')
    s.addUpload('img2', 'b_1.png')
    s.setAuditFlag('img2', 'rejected')
    const csv = 'image,plot_id,spike_count,spikes_per_m2\na_1.png,a,5,\nb_1.png,b,7,\n'
    const expected =
      'image,plot_id,spike_count,spikes_per_m2,audit\na_1.png,a,5,,unreviewed\nb_1.png,b,7,,rejected\n'
    expect(s.augmentCsvWithAudit(csv)).toBe(expected)
  })

  it('uploads are idempotent per image id', () => {
    const s = freshState()
    s.addUpload('img1', 'a.png')
    s.addUpload('img1', 'a.png')
    expect(s.uploadedImages).toHaveLength(1)
  })
})
