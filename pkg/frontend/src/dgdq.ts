// Client-side parsing of DGDQ query-embedding files, so a bad file is
// rejected before it ever reaches the service.

const MAGIC = 0x51444744; // "DGDQ" little-endian

export class DgdqParseError extends Error {}

export function parseQueryEmbedding(buffer: ArrayBuffer): Float32Array {
  if (buffer.byteLength < 12) {
    throw new DgdqParseError(`file too short (${buffer.byteLength} bytes)`);
  }
  const dv = new DataView(buffer);
  if (dv.getUint32(0, true) !== MAGIC) {
    throw new DgdqParseError("bad magic: not a DGDQ file");
  }
  const version = dv.getUint32(4, true);
  if (version !== 1) {
    throw new DgdqParseError(`unsupported version ${version}`);
  }
  const dim = dv.getUint32(8, true);
  const expected = 12 + 4 * dim;
  if (buffer.byteLength !== expected) {
    throw new DgdqParseError(
      `length ${buffer.byteLength} != expected ${expected} for dim ${dim}`);
  }
  const out = new Float32Array(dim);
  for (let i = 0; i < dim; i++) out[i] = dv.getFloat32(12 + 4 * i, true);
  return out;
}
