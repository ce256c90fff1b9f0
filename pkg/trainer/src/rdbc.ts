// ---------------------------------------------------------------------------
// Reader for the binary columnar table format produced by the data pipeline.
//
// Layout, all integers little-endian:
//
//     magic   "RDBC"
//     version u16 (currently 1)
//     ncols   u32
//     per column:
//         name        u16 length + utf8 bytes
//         dtype tag   u8
//         row_count   u64
//         null mask   row_count bytes (1 = null)
//         payload     dtype-specific packed values
//
// Float and datetime payloads are f64/i64 arrays, int is i64, categorical is
// a string dictionary followed by i64 codes, text is length-prefixed utf8
// per cell, vector is a u32 dim followed by f64 row-major data, and keys
// carry a kind byte selecting i64 or string encoding. Integer payloads are
// converted to doubles on read; ids and epoch-millisecond timestamps sit
// far below 2^53 so the conversion is exact.
// ---------------------------------------------------------------------------

export type ColumnDtype =
  | 'float'
  | 'int'
  | 'categorical'
  | 'datetime'
  | 'text'
  | 'vector'
  | 'primary_key'
  | 'foreign_key';

const DTYPE_BY_TAG: ColumnDtype[] = [
  'float',
  'int',
  'categorical',
  'datetime',
  'text',
  'vector',
  'primary_key',
  'foreign_key',
];

export interface Column {
  name: string;
  dtype: ColumnDtype;
  rowCount: number;
  /** Per-row null flags (1 = null). */
  nulls: Uint8Array;
  /** Numeric payload: values, codes, i64 keys, or row-major vector data. */
  numbers: Float64Array | null;
  /** String payload for text columns and string keys (null where masked). */
  strings: (string | null)[] | null;
  /** Category names indexed by code, for categorical columns. */
  dictionary: string[] | null;
  /** Vector width, for vector columns. */
  dim: number | null;
}

const utf8 = new TextDecoder();

class Cursor {
  private view: DataView;
  private pos = 0;

  constructor(private bytes: Uint8Array) {
    this.view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  }

  u8(): number {
    return this.view.getUint8(this.pos++);
  }

  u16(): number {
    const v = this.view.getUint16(this.pos, true);
    this.pos += 2;
    return v;
  }

  u32(): number {
    const v = this.view.getUint32(this.pos, true);
    this.pos += 4;
    return v;
  }

  u64(): number {
    const v = this.view.getBigUint64(this.pos, true);
    this.pos += 8;
    return Number(v);
  }

  str(width: 2 | 4): string {
    const n = width === 2 ? this.u16() : this.u32();
    const s = utf8.decode(this.bytes.subarray(this.pos, this.pos + n));
    this.pos += n;
    return s;
  }

  f64array(n: number): Float64Array {
    const out = new Float64Array(n);
    for (let i = 0; i < n; i++) {
      out[i] = this.view.getFloat64(this.pos, true);
      this.pos += 8;
    }
    return out;
  }

  i64array(n: number): Float64Array {
    const out = new Float64Array(n);
    for (let i = 0; i < n; i++) {
      out[i] = Number(this.view.getBigInt64(this.pos, true));
      this.pos += 8;
    }
    return out;
  }

  raw(n: number): Uint8Array {
    const out = this.bytes.subarray(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }

  get remaining(): number {
    return this.bytes.byteLength - this.pos;
  }
}

function readColumn(cur: Cursor): Column {
  const name = cur.str(2);
  const tag = cur.u8();
  const dtype = DTYPE_BY_TAG[tag];
  if (dtype === undefined) throw new Error(`unknown dtype tag ${tag}`);
  const n = cur.u64();
  const nulls = new Uint8Array(cur.raw(n));
  const col: Column = {
    name,
    dtype,
    rowCount: n,
    nulls,
    numbers: null,
    strings: null,
    dictionary: null,
    dim: null,
  };
  if (dtype === 'float') {
    col.numbers = cur.f64array(n);
  } else if (dtype === 'int' || dtype === 'datetime') {
    col.numbers = cur.i64array(n);
  } else if (dtype === 'categorical') {
    const k = cur.u32();
    const dictionary: string[] = [];
    for (let i = 0; i < k; i++) dictionary.push(cur.str(4));
    col.dictionary = dictionary;
    col.numbers = cur.i64array(n);
  } else if (dtype === 'text') {
    const strings: (string | null)[] = [];
    for (let i = 0; i < n; i++) {
      const s = cur.str(4);
      strings.push(nulls[i] ? null : s);
    }
    col.strings = strings;
  } else if (dtype === 'vector') {
    col.dim = cur.u32();
    col.numbers = cur.f64array(n * col.dim);
  } else {
    const kind = cur.u8();
    if (kind === 0) {
      col.numbers = cur.i64array(n);
    } else {
      const strings: (string | null)[] = [];
      for (let i = 0; i < n; i++) {
        const s = cur.str(4);
        strings.push(nulls[i] ? null : s);
      }
      col.strings = strings;
    }
  }
  return col;
}

/** Decode a single serialized column (the batch-file blob encoding). */
export function columnFromBytes(raw: Uint8Array): Column {
  return readColumn(new Cursor(raw));
}

/** Decode a whole table file: magic, version, then packed columns. */
export function readTable(raw: Uint8Array): Column[] {
  const cur = new Cursor(raw);
  const magic = utf8.decode(cur.raw(4));
  if (magic !== 'RDBC') throw new Error(`bad magic ${JSON.stringify(magic)}`);
  const version = cur.u16();
  if (version !== 1) throw new Error(`unsupported format version ${version}`);
  const ncols = cur.u32();
  const cols: Column[] = [];
  for (let i = 0; i < ncols; i++) cols.push(readColumn(cur));
  return cols;
}
