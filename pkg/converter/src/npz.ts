/**
 * Minimal reader for numpy .npz archives (zip of .npy members).
 *
 * Supports the two storage methods numpy emits (stored and raw deflate)
 * and .npy format versions 1.x/2.x with C-order numeric arrays.
 */

import { inflateRawSync } from 'node:zlib';

const EOCD_SIGNATURE = 0x06054b50;
const CENTRAL_SIGNATURE = 0x02014b50;
const LOCAL_SIGNATURE = 0x04034b50;

export interface NpyArray {
  descr: string;
  shape: number[];
  data: Float64Array;
}

interface ZipEntry {
  name: string;
  method: number;
  compressedSize: number;
  localHeaderOffset: number;
}

function findEndOfCentralDirectory(buffer: Buffer): number {
  // EOCD is at the end, possibly followed by a comment (<= 65535 bytes)
  const floor = Math.max(0, buffer.length - 65557);
  for (let offset = buffer.length - 22; offset >= floor; offset--) {
    if (buffer.readUInt32LE(offset) === EOCD_SIGNATURE) {
      return offset;
    }
  }
  throw new Error('not a zip archive: end-of-central-directory not found');
}

function readCentralDirectory(buffer: Buffer): ZipEntry[] {
  const eocd = findEndOfCentralDirectory(buffer);
  const count = buffer.readUInt16LE(eocd + 10);
  let offset = buffer.readUInt32LE(eocd + 16);
  const entries: ZipEntry[] = [];
  for (let i = 0; i < count; i++) {
    if (buffer.readUInt32LE(offset) !== CENTRAL_SIGNATURE) {
      throw new Error(`corrupt zip: bad central directory entry at ${offset}`);
    }
    const method = buffer.readUInt16LE(offset + 10);
    const compressedSize = buffer.readUInt32LE(offset + 20);
    const nameLength = buffer.readUInt16LE(offset + 28);
    const extraLength = buffer.readUInt16LE(offset + 30);
    const commentLength = buffer.readUInt16LE(offset + 32);
    const localHeaderOffset = buffer.readUInt32LE(offset + 42);
    const name = buffer
      .subarray(offset + 46, offset + 46 + nameLength)
      .toString('utf8');
    entries.push({ name, method, compressedSize, localHeaderOffset });
    offset += 46 + nameLength + extraLength + commentLength;
  }
  return entries;
}

function extractEntry(buffer: Buffer, entry: ZipEntry): Buffer {
  const at = entry.localHeaderOffset;
  if (buffer.readUInt32LE(at) !== LOCAL_SIGNATURE) {
    throw new Error(`corrupt zip: bad local header for ${entry.name}`);
  }
  const nameLength = buffer.readUInt16LE(at + 26);
  const extraLength = buffer.readUInt16LE(at + 28);
  const start = at + 30 + nameLength + extraLength;
  const raw = buffer.subarray(start, start + entry.compressedSize);
  if (entry.method === 0) {
    return Buffer.from(raw);
  }
  if (entry.method === 8) {
    return inflateRawSync(raw);
  }
  throw new Error(`unsupported zip compression method ${entry.method} for ${entry.name}`);
}

function parseNpy(buffer: Buffer, name: string): NpyArray {
  if (buffer.length < 10 || buffer[0] !== 0x93 || buffer.toString('ascii', 1, 6) !== 'NUMPY') {
    throw new Error(`${name}: not an npy payload`);
  }
  const major = buffer[6];
  let headerLength: number;
  let headerStart: number;
  if (major === 1) {
    headerLength = buffer.readUInt16LE(8);
    headerStart = 10;
  } else {
    headerLength = buffer.readUInt32LE(8);
    headerStart = 12;
  }
  const header = buffer.toString('latin1', headerStart, headerStart + headerLength);
  const descr = /'descr':\s*'([^']+)'/.exec(header)?.[1];
  const fortran = /'fortran_order':\s*(True|False)/.exec(header)?.[1];
  const shapeText = /'shape':\s*\(([^)]*)\)/.exec(header)?.[1];
  if (!descr || !fortran || shapeText === undefined) {
    throw new Error(`${name}: malformed npy header: ${header.trim()}`);
  }
  if (fortran === 'True') {
    throw new Error(`${name}: fortran-order arrays are not supported`);
  }
  const shape = shapeText
    .split(',')
    .map((part) => part.trim())
    .filter((part) => part.length > 0)
    .map((part) => Number.parseInt(part, 10));
  const count = shape.reduce((a, b) => a * b, 1);
  const payload = buffer.subarray(headerStart + headerLength);

  const data = new Float64Array(count);
  const view = new DataView(payload.buffer, payload.byteOffset, payload.byteLength);
  const readers: Record<string, (i: number) => number> = {
    '<f8': (i) => view.getFloat64(8 * i, true),
    '<f4': (i) => view.getFloat32(4 * i, true),
    '<i8': (i) => Number(view.getBigInt64(8 * i, true)),
    '<i4': (i) => view.getInt32(4 * i, true),
  };
  const read = readers[descr];
  if (!read) {
    throw new Error(`${name}: unsupported dtype ${descr}`);
  }
  const itemSize = Number.parseInt(descr.slice(2), 10);
  if (payload.length < count * itemSize) {
    throw new Error(`${name}: truncated payload (${payload.length} bytes for ${count} items)`);
  }
  for (let i = 0; i < count; i++) {
    data[i] = read(i);
  }
  return { descr, shape, data };
}

/** All arrays stored in an .npz file, keyed by member name without .npy. */
export function readNpz(buffer: Buffer): Map<string, NpyArray> {
  const arrays = new Map<string, NpyArray>();
  for (const entry of readCentralDirectory(buffer)) {
    if (!entry.name.endsWith('.npy')) continue;
    const key = entry.name.slice(0, -4);
    arrays.set(key, parseNpy(extractEntry(buffer, entry), entry.name));
  }
  if (arrays.size === 0) {
    throw new Error('npz archive holds no .npy members');
  }
  return arrays;
}
