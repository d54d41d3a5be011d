/** Evaluation-dashboard data: report.json and roc.csv parsing, plus the
 * geometry for the ROC plot with its fixed operating-point markers. */

export interface RocPoint {
  threshold: number;
  fpr: number;
  tpr: number;
}

export interface EvalReport {
  auc: number;
  tpr_at_fpr: Record<string, number>;
  n_pos: number;
  n_neg: number;
}

export const OPERATING_FPRS = [0.2, 0.3];

export function parseRocCsv(text: string): RocPoint[] {
  const lines = text
    .split(/\r?\n/)
    .map((l) => l.trim())
    .filter((l) => l.length > 0);
  if (lines.length < 2 || lines[0] !== "threshold,fpr,tpr") {
    throw new Error("malformed roc.csv: expected header 'threshold,fpr,tpr'");
  }
  const points: RocPoint[] = [];
  for (const line of lines.slice(1)) {
    const cells = line.split(",");
    if (cells.length !== 3) throw new Error(`malformed roc.csv row: ${line}`);
    const [threshold, fpr, tpr] = cells.map(Number) as [number, number, number];
    if ([threshold, fpr, tpr].some((v) => Number.isNaN(v))) {
      throw new Error(`non-numeric roc.csv row: ${line}`);
    }
    points.push({ threshold, fpr, tpr });
  }
  return points;
}

/** TPR achieved at an FPR cap: the curve is a step function, so take the
 * highest TPR among points at or below the cap (no interpolation). */
export function tprAtFpr(points: RocPoint[], cap: number): number {
  let best = 0;
  for (const p of points) {
    if (p.fpr <= cap && p.tpr > best) best = p.tpr;
  }
  return best;
}

export interface RocMarker {
  fpr: number;
  tpr: number;
}

export function operatingMarkers(points: RocPoint[]): RocMarker[] {
  return OPERATING_FPRS.map((cap) => ({ fpr: cap, tpr: tprAtFpr(points, cap) }));
}

/** Render the ROC curve as a standalone SVG string (step plot, diagonal
 * reference, and one labelled marker per fixed operating point). */
export function renderRocSvg(points: RocPoint[], size = 320): string {
  const pad = 30;
  const scale = size - 2 * pad;
  const sx = (fpr: number) => pad + fpr * scale;
  const sy = (tpr: number) => size - pad - tpr * scale;

  let d = "";
  points.forEach((p, i) => {
    d += `${i === 0 ? "M" : "L"}${sx(p.fpr).toFixed(1)},${sy(p.tpr).toFixed(1)}`;
  });

  const markers = operatingMarkers(points)
    .map(
      (m) =>
        `<circle class="roc-marker" cx="${sx(m.fpr).toFixed(1)}" ` +
        `cy="${sy(m.tpr).toFixed(1)}" r="4" data-fpr="${m.fpr}"/>` +
        `<line class="roc-marker-line" x1="${sx(m.fpr).toFixed(1)}" y1="${sy(0).toFixed(1)}" ` +
        `x2="${sx(m.fpr).toFixed(1)}" y2="${sy(1).toFixed(1)}"/>`,
    )
    .join("");

  return (
    `<svg class="roc-plot" viewBox="0 0 ${size} ${size}" xmlns="http://www.w3.org/2000/svg">` +
    `<line class="roc-diag" x1="${sx(0)}" y1="${sy(0)}" x2="${sx(1)}" y2="${sy(1)}"/>` +
    `<path class="roc-curve" d="${d}" fill="none"/>` +
    markers +
    `</svg>`
  );
}
