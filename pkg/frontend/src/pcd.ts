/**
 * Minimal PCD v0.7 reader for the clouds the reconstruction pipeline writes.
 *
 * The pipeline emits FIELDS x y z rgb (plus normal_x normal_y normal_z when
 * normals were estimated), every field a 4-byte little-endian float, DATA
 * ascii or binary. Color rides in the usual packed form: the float's bit
 * pattern is the 32-bit word 0x00RRGGBB. We accept the plain x y z layout
 * too and substitute mid-gray. Anything else is refused loudly rather than
 * guessed at.
 */

export interface ParsedCloud {
  /** flat xyz triples, meters */
  positions: Float32Array;
  /** flat rgb triples in [0,1] */
  colors: Float32Array;
  pointCount: number;
}

/** Header is structurally broken or contradicts the data that follows. */
export class MalformedHeader extends Error {
  constructor(message: string) {
    super(message);
    this.name = "MalformedHeader";
  }
}

/** Valid PCD, but a variant this viewer does not handle. */
export class UnsupportedPcd extends Error {
  constructor(message: string) {
    super(message);
    this.name = "UnsupportedPcd";
  }
}

const KNOWN_FIELD_SETS = [
  "x y z",
  "x y z rgb",
  "x y z rgb normal_x normal_y normal_z",
  "x y z normal_x normal_y normal_z",
];

const scratchF32 = new Float32Array(1);
const scratchU32 = new Uint32Array(scratchF32.buffer);

/** Decode one packed-rgb float into [r, g, b] in [0,1]. */
export function unpackRgb(value: number): [number, number, number] {
  scratchF32[0] = value;
  const word = scratchU32[0];
  return [((word >> 16) & 0xff) / 255, ((word >> 8) & 0xff) / 255, (word & 0xff) / 255];
}

interface Header {
  values: Map<string, string>;
  bodyOffset: number;
}

function parseHeader(bytes: Uint8Array): Header {
  const decoder = new TextDecoder("ascii");
  const values = new Map<string, string>();
  let offset = 0;
  while (true) {
    let end = bytes.indexOf(0x0a, offset);
    if (end < 0) throw new MalformedHeader("header ends before DATA line");
    const line = decoder.decode(bytes.subarray(offset, end)).trim();
    offset = end + 1;
    if (line === "" || line.startsWith("#")) continue;
    const space = line.indexOf(" ");
    const key = space < 0 ? line : line.slice(0, space);
    values.set(key, space < 0 ? "" : line.slice(space + 1).trim());
    if (key === "DATA") return { values, bodyOffset: offset };
    if (values.size > 20) throw new MalformedHeader("not a PCD header");
  }
}

function checkUniform(header: Map<string, string>, key: string, want: string, ncols: number) {
  const raw = header.get(key);
  if (raw === undefined) return; // absent is tolerated, the writer always emits it
  const got = raw.split(/\s+/);
  if (got.length !== ncols) {
    throw new MalformedHeader(`${key} lists ${got.length} entries for ${ncols} fields`);
  }
  for (const entry of got) {
    if (entry !== want) {
      throw new UnsupportedPcd(`only ${key} ${want} fields supported, got ${raw}`);
    }
  }
}

/**
 * Parse a PCD v0.7 byte buffer into flat position/color arrays.
 *
 * Throws UnsupportedPcd for compressed data, unknown field layouts, or
 * non-float fields; MalformedHeader when the header is broken or the body
 * does not hold the number of points the header promises.
 */
export function parsePcd(bytes: ArrayBuffer | Uint8Array): ParsedCloud {
  const buf = bytes instanceof Uint8Array ? bytes : new Uint8Array(bytes);
  const { values: header, bodyOffset } = parseHeader(buf);

  for (const key of ["FIELDS", "POINTS", "DATA"]) {
    if (!header.has(key)) throw new MalformedHeader(`missing ${key} in header`);
  }

  const fieldSpec = header.get("FIELDS")!.split(/\s+/).join(" ");
  if (!KNOWN_FIELD_SETS.includes(fieldSpec)) {
    throw new UnsupportedPcd(`unsupported FIELDS ${fieldSpec}`);
  }
  const fields = fieldSpec.split(" ");
  const ncols = fields.length;
  const hasRgb = fields.includes("rgb");

  const encoding = header.get("DATA")!;
  if (encoding !== "ascii" && encoding !== "binary") {
    throw new UnsupportedPcd(`unsupported DATA encoding ${encoding}`);
  }
  checkUniform(header, "SIZE", "4", ncols);
  checkUniform(header, "TYPE", "F", ncols);
  checkUniform(header, "COUNT", "1", ncols);

  const pointsRaw = header.get("POINTS")!;
  const n = Number(pointsRaw);
  if (!Number.isInteger(n) || n < 0) {
    throw new MalformedHeader(`bad POINTS value ${pointsRaw}`);
  }

  const positions = new Float32Array(3 * n);
  const colors = new Float32Array(3 * n);

  if (encoding === "binary") {
    const need = n * ncols * 4;
    if (buf.byteLength - bodyOffset < need) {
      throw new MalformedHeader(
        `expected ${need} data bytes, found ${buf.byteLength - bodyOffset}`
      );
    }
    const view = new DataView(buf.buffer, buf.byteOffset + bodyOffset, need);
    for (let i = 0; i < n; i++) {
      const row = i * ncols * 4;
      positions[3 * i] = view.getFloat32(row, true);
      positions[3 * i + 1] = view.getFloat32(row + 4, true);
      positions[3 * i + 2] = view.getFloat32(row + 8, true);
      if (hasRgb) {
        const word = view.getUint32(row + 12, true);
        colors[3 * i] = ((word >> 16) & 0xff) / 255;
        colors[3 * i + 1] = ((word >> 8) & 0xff) / 255;
        colors[3 * i + 2] = (word & 0xff) / 255;
      }
    }
  } else {
    const text = new TextDecoder("ascii").decode(buf.subarray(bodyOffset));
    const tokens = text.split(/\s+/).filter((t) => t.length > 0);
    if (tokens.length !== n * ncols) {
      throw new MalformedHeader(`expected ${n * ncols} values, found ${tokens.length}`);
    }
    for (let i = 0; i < n; i++) {
      const row = i * ncols;
      for (let c = 0; c < ncols; c++) {
        const v = Number(tokens[row + c]);
        if (!Number.isFinite(v)) {
          throw new MalformedHeader(`bad ascii value ${tokens[row + c]}`);
        }
        if (c < 3) {
          positions[3 * i + c] = v;
        } else if (c === 3 && hasRgb) {
          // str() of a float32 round-trips exactly, so fround recovers the bits
          scratchF32[0] = v;
          const word = scratchU32[0];
          colors[3 * i] = ((word >> 16) & 0xff) / 255;
          colors[3 * i + 1] = ((word >> 8) & 0xff) / 255;
          colors[3 * i + 2] = (word & 0xff) / 255;
        }
      }
    }
  }

  if (!hasRgb) colors.fill(0.5);

  for (let i = 0; i < positions.length; i++) {
    if (!Number.isFinite(positions[i])) {
      throw new MalformedHeader(`non-finite position at point ${Math.floor(i / 3)}`);
    }
  }

  return { positions, colors, pointCount: n };
}
