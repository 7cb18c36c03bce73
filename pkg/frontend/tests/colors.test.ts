import { describe, expect, it } from "vitest";

import { unpackRgb } from "../src/pcd";

// Independent packer: build the 0x00RRGGBB word and reinterpret as float,
// the same convention the pipeline uses on the writing side.
function packRgb(r: number, g: number, b: number): number {
  const word = new Uint32Array([((r & 0xff) << 16) | ((g & 0xff) << 8) | (b & 0xff)]);
  return new Float32Array(word.buffer)[0];
}

// deterministic PRNG so a failure is reproducible (mulberry32)
function seededRandom(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

describe("rgb bit packing", () => {
  it("unpack of pack is the identity along each channel axis", () => {
    for (let v = 0; v < 256; v++) {
      expect(unpackRgb(packRgb(v, 0, 0))).toEqual([v / 255, 0, 0]);
      expect(unpackRgb(packRgb(0, v, 0))).toEqual([0, v / 255, 0]);
      expect(unpackRgb(packRgb(0, 0, v))).toEqual([0, 0, v / 255]);
    }
  });

  it("unpack of pack is the identity on random triples", () => {
    const rand = seededRandom(123);
    for (let trial = 0; trial < 10_000; trial++) {
      const r = Math.floor(rand() * 256);
      const g = Math.floor(rand() * 256);
      const b = Math.floor(rand() * 256);
      const [ur, ug, ub] = unpackRgb(packRgb(r, g, b));
      expect(Math.round(ur * 255)).toBe(r);
      expect(Math.round(ug * 255)).toBe(g);
      expect(Math.round(ub * 255)).toBe(b);
      expect(ur).toBe(r / 255);
      expect(ug).toBe(g / 255);
      expect(ub).toBe(b / 255);
    }
  });

  it("handles the extreme words", () => {
    expect(unpackRgb(packRgb(0, 0, 0))).toEqual([0, 0, 0]);
    expect(unpackRgb(packRgb(255, 255, 255))).toEqual([1, 1, 1]);
  });
});
