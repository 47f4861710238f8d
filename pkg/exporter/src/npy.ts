/**
 * Minimal reader for NPY buffers holding structured arrays, the wire format
 * returned by the catalog's pixel-compute endpoint (one named field per
 * band, little-endian scalar dtypes).
 */

interface FieldSpec {
  name: string;
  /** Dtype code without byte order, e.g. 'u2', 'f8'. */
  kind: string;
  size: number;
}

interface NpyHeader {
  fields: FieldSpec[];
  shape: number[];
}

const MAGIC = '\x93NUMPY';

function parseHeaderDict(text: string): NpyHeader {
  // Header is a Python literal dict, e.g.
  // {'descr': [('B1', '<u2'), ('B2', '<u2')], 'fortran_order': False, 'shape': (2, 3), }
  const fortran = /'fortran_order'\s*:\s*(True|False)/.exec(text);
  if (!fortran || fortran[1] !== 'False') {
    throw new Error('unsupported NPY layout: need C-order data');
  }
  const shapeMatch = /'shape'\s*:\s*\(([^)]*)\)/.exec(text);
  if (!shapeMatch) {
    throw new Error('NPY header missing shape');
  }
  const shape = (shapeMatch[1] ?? '')
    .split(',')
    .map((s) => s.trim())
    .filter((s) => s.length > 0)
    .map((s) => Number(s));

  const descrMatch = /'descr'\s*:\s*(\[[^\]]*\]|'[^']*')/.exec(text);
  if (!descrMatch) {
    throw new Error('NPY header missing descr');
  }
  const descr = descrMatch[1] ?? '';
  const fields: FieldSpec[] = [];
  if (descr.startsWith('[')) {
    const fieldRe = /\('([^']+)'\s*,\s*'([<|=])([a-z])(\d+)'\)/g;
    let m: RegExpExecArray | null;
    while ((m = fieldRe.exec(descr)) !== null) {
      fields.push({ name: m[1]!, kind: `${m[3]}${m[4]}`, size: Number(m[4]) });
    }
    if (fields.length === 0) {
      throw new Error(`unsupported structured descr: ${descr}`);
    }
  } else {
    const m = /^'([<|=])([a-z])(\d+)'$/.exec(descr);
    if (!m) {
      throw new Error(`unsupported descr: ${descr}`);
    }
    fields.push({ name: '', kind: `${m[2]}${m[3]}`, size: Number(m[3]) });
  }
  return { fields, shape };
}

function readScalar(view: DataView, offset: number, kind: string): number {
  switch (kind) {
    case 'u1': return view.getUint8(offset);
    case 'i1': return view.getInt8(offset);
    case 'u2': return view.getUint16(offset, true);
    case 'i2': return view.getInt16(offset, true);
    case 'u4': return view.getUint32(offset, true);
    case 'i4': return view.getInt32(offset, true);
    case 'f4': return view.getFloat32(offset, true);
    case 'f8': return view.getFloat64(offset, true);
    case 'u8': return Number(view.getBigUint64(offset, true));
    case 'i8': return Number(view.getBigInt64(offset, true));
    default:
      throw new Error(`unsupported NPY dtype kind ${kind}`);
  }
}

/**
 * Parse an NPY buffer into per-field flat arrays plus the array shape.
 * Structured dtypes yield one entry per field; plain dtypes yield a single
 * entry under the empty-string key.
 */
export function parseNpy(buffer: Uint8Array): { shape: number[]; fields: Map<string, number[]> } {
  const ascii = (start: number, end: number) =>
    String.fromCharCode(...buffer.subarray(start, end));
  if (buffer.length < 10 || ascii(0, 6) !== MAGIC) {
    throw new Error('not an NPY buffer');
  }
  const major = buffer[6]!;
  const view = new DataView(buffer.buffer, buffer.byteOffset, buffer.byteLength);
  let headerLen: number;
  let dataStart: number;
  if (major === 1) {
    headerLen = view.getUint16(8, true);
    dataStart = 10 + headerLen;
  } else {
    headerLen = view.getUint32(8, true);
    dataStart = 12 + headerLen;
  }
  const header = parseHeaderDict(ascii(dataStart - headerLen, dataStart));

  const count = header.shape.reduce((a, b) => a * b, 1);
  const itemSize = header.fields.reduce((a, f) => a + f.size, 0);
  if (dataStart + count * itemSize > buffer.length) {
    throw new Error('truncated NPY buffer');
  }

  const fields = new Map<string, number[]>();
  for (const f of header.fields) {
    fields.set(f.name, new Array<number>(count));
  }
  let offset = dataStart;
  for (let i = 0; i < count; i++) {
    for (const f of header.fields) {
      fields.get(f.name)![i] = readScalar(view, offset, f.kind);
      offset += f.size;
    }
  }
  return { shape: header.shape, fields };
}
