import { describe, expect, it } from 'vitest';

import { readNpz } from '../src/npz.js';
import { encodeNpy, writeZip } from './helpers.js';

describe('readNpz', () => {
  it('reads a stored float64 member', () => {
    const data = new Float64Array([1.5, -2.25, 3.125, 0, 4, 5]);
    const zip = writeZip([{ name: 'data.npy', data: encodeNpy(data, [2, 3]) }]);
    const arrays = readNpz(zip);
    const array = arrays.get('data')!;
    expect(array.descr).toBe('<f8');
    expect(array.shape).toEqual([2, 3]);
    expect([...array.data]).toEqual([...data]);
  });

  it('reads a deflate-compressed member', () => {
    const data = new Float64Array(1000).map((_, i) => Math.sin(i / 10));
    const zip = writeZip([
      { name: 'data.npy', data: encodeNpy(data, [10, 10, 10]), deflate: true },
    ]);
    const array = readNpz(zip).get('data')!;
    expect(array.shape).toEqual([10, 10, 10]);
    expect(array.data[123]).toBeCloseTo(Math.sin(12.3), 12);
  });

  it('reads float32 members exactly', () => {
    const data = new Float32Array([0.1, 0.2, 0.3, 0.4]);
    const zip = writeZip([{ name: 'x.npy', data: encodeNpy(data, [4]) }]);
    const array = readNpz(zip).get('x')!;
    expect(array.descr).toBe('<f4');
    expect(Math.fround(array.data[0])).toBe(data[0]);
  });

  it('keeps multiple members apart', () => {
    const zip = writeZip([
      { name: 'a.npy', data: encodeNpy(new Float64Array([1]), [1]) },
      { name: 'b.npy', data: encodeNpy(new Float64Array([2]), [1]), deflate: true },
    ]);
    const arrays = readNpz(zip);
    expect(arrays.get('a')!.data[0]).toBe(1);
    expect(arrays.get('b')!.data[0]).toBe(2);
  });

  it('rejects non-zip input', () => {
    expect(() => readNpz(Buffer.from('definitely not a zip file, honestly...')))
      .toThrow(/end-of-central-directory/);
  });

  it('rejects fortran-order arrays', () => {
    const npy = encodeNpy(new Float64Array([1, 2]), [2]);
    const mangled = Buffer.from(
      npy.toString('latin1').replace("'fortran_order': False", "'fortran_order': True "),
      'latin1',
    );
    const zip = writeZip([{ name: 'data.npy', data: mangled }]);
    expect(() => readNpz(zip)).toThrow(/fortran/);
  });

  it('rejects unsupported dtypes', () => {
    const npy = encodeNpy(new Float64Array([1]), [1]);
    const mangled = Buffer.from(
      npy.toString('latin1').replace("'<f8'", "'<c16'".padEnd(6)), 'latin1',
    );
    const zip = writeZip([{ name: 'data.npy', data: mangled }]);
    expect(() => readNpz(zip)).toThrow(/dtype|npy/);
  });
});
