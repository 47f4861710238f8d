import { describe, expect, it } from 'vitest';

import { parseNpy } from '../src/npy.js';
import { buildNpy } from './npyHelpers.js';

describe('parseNpy', () => {
  it('reads a structured array field by field', () => {
    const buffer = buildNpy(
      [{ name: 'B1', dtype: '<u2' }, { name: 'SCL', dtype: '<u1' }],
      [2, 2],
      { B1: [100, 200, 300, 400], SCL: [6, 9, 6, 9] },
    );
    const parsed = parseNpy(buffer);
    expect(parsed.shape).toEqual([2, 2]);
    expect(parsed.fields.get('B1')).toEqual([100, 200, 300, 400]);
    expect(parsed.fields.get('SCL')).toEqual([6, 9, 6, 9]);
  });

  it('reads a plain (non-structured) array under the empty key', () => {
    const buffer = buildNpy([{ name: '', dtype: '<f8' }], [3], { '': [1.5, -2.25, 0] });
    const parsed = parseNpy(buffer);
    expect(parsed.shape).toEqual([3]);
    expect(parsed.fields.get('')).toEqual([1.5, -2.25, 0]);
  });

  it('handles signed and floating dtypes', () => {
    const buffer = buildNpy(
      [{ name: 'a', dtype: '<i4' }, { name: 'b', dtype: '<f4' }],
      [2],
      { a: [-5, 7], b: [0.5, -1.5] },
    );
    const parsed = parseNpy(buffer);
    expect(parsed.fields.get('a')).toEqual([-5, 7]);
    expect(parsed.fields.get('b')).toEqual([0.5, -1.5]);
  });

  it('rejects buffers without the magic prefix', () => {
    expect(() => parseNpy(new Uint8Array([1, 2, 3]))).toThrow('not an NPY buffer');
  });

  it('rejects truncated data sections', () => {
    const buffer = buildNpy([{ name: 'B1', dtype: '<u2' }], [4], { B1: [1, 2, 3, 4] });
    expect(() => parseNpy(buffer.subarray(0, buffer.length - 3))).toThrow('truncated');
  });

  it('rejects fortran-ordered arrays', () => {
    const buffer = buildNpy([{ name: 'B1', dtype: '<u2' }], [1], { B1: [1] });
    const text = Buffer.from(buffer).toString('latin1').replace('False', 'True ');
    expect(() => parseNpy(new Uint8Array(Buffer.from(text, 'latin1')))).toThrow('C-order');
  });
});
