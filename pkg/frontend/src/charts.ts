// Dependency-free SVG charts. Pure functions from fetched values to markup:
// the console displays report numbers, it never derives new ones.

export interface XY {
  x: number;
  y: number;
}

export interface BandPoint extends XY {
  lo: number;
  hi: number;
}

const W = 560;
const H = 180;
const PAD = 28;

function scale(values: number[], lo: number, hi: number, outLo: number, outHi: number) {
  const span = hi - lo || 1;
  return values.map((v) => outLo + ((v - lo) / span) * (outHi - outLo));
}

function polyline(xs: number[], ys: number[]): string {
  return xs.map((x, i) => `${x.toFixed(1)},${ys[i].toFixed(1)}`).join(" ");
}

export function lineChart(points: XY[], opts: { yMin?: number; yMax?: number; title: string }): string {
  if (points.length === 0) {
    return `<svg viewBox="0 0 ${W} ${H}" class="chart empty"><text x="10" y="20">${opts.title}: no data yet</text></svg>`;
  }
  const ys = points.map((p) => p.y);
  const yMin = opts.yMin ?? Math.min(...ys);
  const yMax = opts.yMax ?? Math.max(...ys);
  const sx = scale(points.map((p) => p.x), points[0].x, points[points.length - 1].x, PAD, W - 8);
  const sy = scale(ys, yMin, yMax, H - PAD, 10);
  return `<svg viewBox="0 0 ${W} ${H}" class="chart">
  <text x="8" y="14" class="title">${opts.title}</text>
  <line x1="${PAD}" y1="${H - PAD}" x2="${W - 8}" y2="${H - PAD}" class="axis"/>
  <text x="2" y="${H - PAD}" class="tick">${yMin.toFixed(2)}</text>
  <text x="2" y="18" class="tick">${yMax.toFixed(2)}</text>
  <polyline points="${polyline(sx, sy)}" class="line"/>
</svg>`;
}

export function bandChart(points: BandPoint[], opts: { title: string }): string {
  if (points.length === 0) {
    return `<svg viewBox="0 0 ${W} ${H}" class="chart empty"><text x="10" y="20">${opts.title}: no data yet</text></svg>`;
  }
  const xs = points.map((p) => p.x);
  const sx = scale(xs, xs[0], xs[xs.length - 1], PAD, W - 8);
  const sy = (v: number) => H - PAD - v * (H - PAD - 10);
  const upper = points.map((p, i) => `${sx[i].toFixed(1)},${sy(p.hi).toFixed(1)}`);
  const lower = points
    .map((p, i) => `${sx[i].toFixed(1)},${sy(p.lo).toFixed(1)}`)
    .reverse();
  const mid = polyline(sx, points.map((p) => sy(p.y)));
  return `<svg viewBox="0 0 ${W} ${H}" class="chart">
  <text x="8" y="14" class="title">${opts.title}</text>
  <line x1="${PAD}" y1="${H - PAD}" x2="${W - 8}" y2="${H - PAD}" class="axis"/>
  <text x="2" y="${H - PAD}" class="tick">0</text>
  <text x="2" y="18" class="tick">1</text>
  <polygon points="${[...upper, ...lower].join(" ")}" class="band"/>
  <polyline points="${mid}" class="line"/>
</svg>`;
}

export function barChart(
  rows: { label: string; value: number }[],
  opts: { title: string },
): string {
  if (rows.length === 0) {
    return `<svg viewBox="0 0 ${W} ${H}" class="chart empty"><text x="10" y="20">${opts.title}: no data yet</text></svg>`;
  }
  const max = Math.max(...rows.map((r) => Math.abs(r.value))) || 1;
  const rowH = Math.min(16, (H - 24) / rows.length);
  const bars = rows
    .map((r, i) => {
      const w = (Math.abs(r.value) / max) * (W - 180);
      const y = 20 + i * rowH;
      const cls = r.value >= 0 ? "bar pos" : "bar neg";
      return (
        `<rect x="150" y="${y.toFixed(1)}" width="${w.toFixed(1)}" height="${(rowH - 2).toFixed(1)}" class="${cls}"/>` +
        `<text x="146" y="${(y + rowH - 4).toFixed(1)}" class="label" text-anchor="end">${r.label}</text>` +
        `<text x="${(152 + w).toFixed(1)}" y="${(y + rowH - 4).toFixed(1)}" class="value">${r.value.toFixed(3)}</text>`
      );
    })
    .join("\n");
  const height = Math.max(H, 24 + rows.length * rowH);
  return `<svg viewBox="0 0 ${W} ${height}" class="chart">
  <text x="8" y="14" class="title">${opts.title}</text>
  ${bars}
</svg>`;
}
