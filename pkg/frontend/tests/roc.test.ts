import { describe, expect, it } from "vitest";
import {
  operatingMarkers,
  parseRocCsv,
  renderRocSvg,
  tprAtFpr,
} from "../src/roc.js";

const PERFECT = [
  "threshold,fpr,tpr",
  "Infinity,0.0,0.0",
  "0.9,0.0,1.0",
  "0.1,1.0,1.0",
].join("\n");

describe("parseRocCsv", () => {
  it("parses a well-formed file", () => {
    const points = parseRocCsv(PERFECT);
    expect(points).toHaveLength(3);
    expect(points[0]).toEqual({ threshold: Infinity, fpr: 0, tpr: 0 });
    expect(points[2]).toEqual({ threshold: 0.1, fpr: 1, tpr: 1 });
  });

  it("rejects a wrong header", () => {
    expect(() => parseRocCsv("fpr,tpr\n0,0")).toThrow(/header/);
  });

  it("rejects non-numeric rows", () => {
    expect(() => parseRocCsv("threshold,fpr,tpr\nx,0,0")).toThrow(/non-numeric/);
  });

  it("rejects rows with the wrong arity", () => {
    expect(() => parseRocCsv("threshold,fpr,tpr\n0.5,0.1")).toThrow(/malformed/);
  });
});

describe("tprAtFpr", () => {
  it("takes the best step at or below the cap, no interpolation", () => {
    const points = parseRocCsv(
      ["threshold,fpr,tpr", "Infinity,0,0", "0.8,0.1,0.5", "0.5,0.25,0.7", "0.2,1,1"].join("\n"),
    );
    expect(tprAtFpr(points, 0.2)).toBe(0.5);
    expect(tprAtFpr(points, 0.3)).toBe(0.7);
  });

  it("perfect classifier reaches TPR 1 at both operating points", () => {
    const markers = operatingMarkers(parseRocCsv(PERFECT));
    expect(markers).toEqual([
      { fpr: 0.2, tpr: 1 },
      { fpr: 0.3, tpr: 1 },
    ]);
  });
});

describe("renderRocSvg", () => {
  it("draws one marker per operating point at the right x positions", () => {
    const svg = renderRocSvg(parseRocCsv(PERFECT), 320);
    const doc = new DOMParser().parseFromString(svg, "image/svg+xml");
    const markers = Array.from(doc.querySelectorAll("circle.roc-marker"));
    expect(markers).toHaveLength(2);
    const caps = markers.map((m) => m.getAttribute("data-fpr"));
    expect(caps).toEqual(["0.2", "0.3"]);
    // pad=30, scale=260: x(0.2)=82, x(0.3)=108
    expect(Number(markers[0]?.getAttribute("cx"))).toBeCloseTo(82, 0);
    expect(Number(markers[1]?.getAttribute("cx"))).toBeCloseTo(108, 0);
  });

  it("perfect classifier curve passes through the top-left corner", () => {
    const svg = renderRocSvg(parseRocCsv(PERFECT), 320);
    const doc = new DOMParser().parseFromString(svg, "image/svg+xml");
    const d = doc.querySelector("path.roc-curve")?.getAttribute("d") ?? "";
    // (fpr=0, tpr=1) maps to (30, 30) with the default size
    expect(d).toContain("L30.0,30.0");
  });
});
