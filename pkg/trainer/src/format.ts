/**
 * Binary interchange with the partition toolkit (all little-endian):
 *   MVFI - training samples (read here, written by the toolkit)
 *   MVFP - per-CTU predictions (written here, read by the toolkit)
 *   MVFL - loss parity cases (written here, checked by `qtmt loss-check`)
 */

import * as fs from 'fs';

export const MSMVF_GRIDS = [2, 4, 8, 16, 32] as const;
export const NUM_MT_LEVELS = 3;
export const NUM_CLASSES = 5;

export interface SampleRecord {
  luma: Uint8Array;        // ctu*ctu
  residual: Int16Array;    // ctu*ctu
  msmvf: Float32Array[];   // five grids, g*g*6 each
  qp: number;
  tid: number;
  qtMap: Uint8Array;       // (ctu/8)^2
  mtMaps: Uint8Array;      // 3*(ctu/4)^2
}

export interface RecordMeta {
  poc: number;
  ctu_x: number;
  ctu_y: number;
  qp: number;
}

export interface Dataset {
  ctuSize: number;
  records: SampleRecord[];
  meta: RecordMeta[];
  config: Record<string, unknown>;
}

function checkMagic(buf: Buffer, magic: string, path: string): void {
  if (buf.length < 4 || buf.toString('latin1', 0, 4) !== magic) {
    throw new Error(`${path}: bad magic (expected ${magic})`);
  }
}

export function readMvfi(path: string): Dataset {
  const buf = fs.readFileSync(path);
  checkMagic(buf, 'MVFI', path);
  const version = buf.readUInt16LE(4);
  if (version !== 1) throw new Error(`${path}: unsupported MVFI version ${version}`);
  const ctuSize = buf.readUInt16LE(6);
  const count = buf.readUInt32LE(8);
  const n8 = (ctuSize / 8) ** 2;
  const n4 = (ctuSize / 4) ** 2;
  const mvfFloats = MSMVF_GRIDS.reduce((acc, g) => acc + g * g * 6, 0);
  const recBytes = ctuSize * ctuSize * 3 + 4 * mvfFloats + 2 + n8 + NUM_MT_LEVELS * n4;
  if (buf.length !== 12 + count * recBytes) {
    throw new Error(`${path}: truncated record section (${buf.length} bytes for ${count} records)`);
  }

  const records: SampleRecord[] = [];
  let pos = 12;
  for (let i = 0; i < count; i++) {
    const luma = new Uint8Array(buf.buffer, buf.byteOffset + pos, ctuSize * ctuSize).slice();
    pos += ctuSize * ctuSize;
    const residual = new Int16Array(ctuSize * ctuSize);
    for (let j = 0; j < residual.length; j++) residual[j] = buf.readInt16LE(pos + 2 * j);
    pos += 2 * ctuSize * ctuSize;
    const msmvf: Float32Array[] = [];
    for (const g of MSMVF_GRIDS) {
      const n = g * g * 6;
      const arr = new Float32Array(n);
      for (let j = 0; j < n; j++) arr[j] = buf.readFloatLE(pos + 4 * j);
      pos += 4 * n;
      msmvf.push(arr);
    }
    const qp = buf.readUInt8(pos);
    const tid = buf.readUInt8(pos + 1);
    pos += 2;
    const qtMap = new Uint8Array(buf.buffer, buf.byteOffset + pos, n8).slice();
    pos += n8;
    const mtMaps = new Uint8Array(buf.buffer, buf.byteOffset + pos, NUM_MT_LEVELS * n4).slice();
    pos += NUM_MT_LEVELS * n4;
    for (const v of mtMaps) {
      if (v > 4) throw new Error(`${path}: out-of-range MT label in record ${i}`);
    }
    records.push({ luma, residual, msmvf, qp, tid, qtMap, mtMaps });
  }

  let meta: RecordMeta[] = [];
  let config: Record<string, unknown> = {};
  const sidecarPath = path + '.json';
  if (fs.existsSync(sidecarPath)) {
    const sidecar = JSON.parse(fs.readFileSync(sidecarPath, 'utf-8'));
    meta = sidecar.records ?? [];
    config = sidecar.config ?? {};
  }
  if (meta.length && meta.length !== records.length) {
    throw new Error(`${path}: sidecar lists ${meta.length} records, file has ${records.length}`);
  }
  return { ctuSize, records, meta, config };
}

export interface PredictionRecord {
  poc: number;
  ctuX: number;
  ctuY: number;
  qtDepth: Float32Array;  // (ctu/8)^2
  mtProbs: Float32Array;  // 3*(ctu/4)^2*5
}

export function writeMvfp(path: string, ctuSize: number, records: PredictionRecord[]): void {
  const n8 = (ctuSize / 8) ** 2;
  const n4 = (ctuSize / 4) ** 2;
  const recBytes = 8 + 4 * n8 + 4 * NUM_MT_LEVELS * n4 * NUM_CLASSES;
  const buf = Buffer.alloc(12 + records.length * recBytes);
  buf.write('MVFP', 0, 'latin1');
  buf.writeUInt16LE(1, 4);
  buf.writeUInt16LE(ctuSize, 6);
  buf.writeUInt32LE(records.length, 8);
  let pos = 12;
  const sorted = [...records].sort(
    (a, b) => a.poc - b.poc || a.ctuX - b.ctuX || a.ctuY - b.ctuY
  );
  for (const rec of sorted) {
    buf.writeUInt32LE(rec.poc, pos);
    buf.writeUInt16LE(rec.ctuX, pos + 4);
    buf.writeUInt16LE(rec.ctuY, pos + 6);
    pos += 8;
    if (rec.qtDepth.length !== n8 || rec.mtProbs.length !== NUM_MT_LEVELS * n4 * NUM_CLASSES) {
      throw new Error(`prediction record (${rec.poc},${rec.ctuX},${rec.ctuY}) has wrong shape`);
    }
    for (const v of rec.qtDepth) {
      buf.writeFloatLE(v, pos);
      pos += 4;
    }
    for (const v of rec.mtProbs) {
      buf.writeFloatLE(v, pos);
      pos += 4;
    }
  }
  fs.writeFileSync(path, buf);
}

export function readMvfp(path: string): { ctuSize: number; records: PredictionRecord[] } {
  const buf = fs.readFileSync(path);
  checkMagic(buf, 'MVFP', path);
  const ctuSize = buf.readUInt16LE(6);
  const count = buf.readUInt32LE(8);
  const n8 = (ctuSize / 8) ** 2;
  const n4 = (ctuSize / 4) ** 2;
  const records: PredictionRecord[] = [];
  let pos = 12;
  for (let i = 0; i < count; i++) {
    const poc = buf.readUInt32LE(pos);
    const ctuX = buf.readUInt16LE(pos + 4);
    const ctuY = buf.readUInt16LE(pos + 6);
    pos += 8;
    const qtDepth = new Float32Array(n8);
    for (let j = 0; j < n8; j++) qtDepth[j] = buf.readFloatLE(pos + 4 * j);
    pos += 4 * n8;
    const nProbs = NUM_MT_LEVELS * n4 * NUM_CLASSES;
    const mtProbs = new Float32Array(nProbs);
    for (let j = 0; j < nProbs; j++) mtProbs[j] = buf.readFloatLE(pos + 4 * j);
    pos += 4 * nProbs;
    records.push({ poc, ctuX, ctuY, qtDepth, mtProbs });
  }
  return { ctuSize, records };
}

export interface ParityCase {
  a: number;
  lambdas: Float64Array;      // 5
  proportions: Float64Array;  // 3*5
  qtTrue: Uint8Array;         // (ctu/8)^2
  qtPred: Float32Array;
  mtTrue: Uint8Array;         // 3*(ctu/4)^2
  mtProbs: Float32Array;      // 3*(ctu/4)^2*5
  loss: number;
}

export function writeMvfl(path: string, ctuSize: number, meanCe: boolean, cases: ParityCase[]): void {
  const n8 = (ctuSize / 8) ** 2;
  const n4 = (ctuSize / 4) ** 2;
  const caseBytes =
    8 + 8 * NUM_CLASSES + 8 * NUM_MT_LEVELS * NUM_CLASSES +
    n8 + 4 * n8 + NUM_MT_LEVELS * n4 + 4 * NUM_MT_LEVELS * n4 * NUM_CLASSES + 8;
  const buf = Buffer.alloc(13 + cases.length * caseBytes);
  buf.write('MVFL', 0, 'latin1');
  buf.writeUInt16LE(1, 4);
  buf.writeUInt16LE(ctuSize, 6);
  buf.writeUInt8(meanCe ? 1 : 0, 8);
  buf.writeUInt32LE(cases.length, 9);
  let pos = 13;
  for (const c of cases) {
    buf.writeDoubleLE(c.a, pos);
    pos += 8;
    for (const v of c.lambdas) { buf.writeDoubleLE(v, pos); pos += 8; }
    for (const v of c.proportions) { buf.writeDoubleLE(v, pos); pos += 8; }
    Buffer.from(c.qtTrue).copy(buf, pos);
    pos += n8;
    for (const v of c.qtPred) { buf.writeFloatLE(v, pos); pos += 4; }
    Buffer.from(c.mtTrue).copy(buf, pos);
    pos += NUM_MT_LEVELS * n4;
    for (const v of c.mtProbs) { buf.writeFloatLE(v, pos); pos += 4; }
    buf.writeDoubleLE(c.loss, pos);
    pos += 8;
  }
  fs.writeFileSync(path, buf);
}
