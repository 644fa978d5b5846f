// Learning dashboard: live charts fed purely by the metrics endpoint and the
// event stream, so every shown value matches the offline report battery.

import { bandChart, barChart, lineChart } from "./charts";
import type { BandPoint, XY } from "./charts";
import type { SessionMetrics, SessionView } from "./types";

export function successCurvePoints(metrics: SessionMetrics): BandPoint[] {
  return metrics.success_curve.map((p) => ({
    x: p.step,
    y: p.rate,
    lo: p.lower,
    hi: p.upper,
  }));
}

export function entropyPoints(metrics: SessionMetrics): XY[] {
  return metrics.entropy.map((p, i) => ({ x: i, y: p.entropy }));
}

export function entropyMeanPoints(metrics: SessionMetrics): XY[] {
  return metrics.entropy.map((p, i) => ({ x: i, y: p.running_mean }));
}

export function weightRows(view: SessionView): { label: string; value: number }[] {
  return [...view.weights_top, ...view.weights_bottom.slice().reverse()].map((w) => ({
    label: w.label,
    value: w.weight,
  }));
}

export function usageRows(metrics: SessionMetrics): { label: string; value: number }[] {
  return Object.entries(metrics.operator_uses)
    .filter(([, uses]) => uses > 0)
    .sort((a, b) => b[1] - a[1])
    .map(([op, uses]) => ({ label: op, value: uses }));
}

export function renderDashboard(metrics: SessionMetrics, view: SessionView): string {
  return [
    bandChart(successCurvePoints(metrics), { title: "trailing success rate (95% bounds)" }),
    lineChart(entropyMeanPoints(metrics), { title: "vote entropy (running mean, nats)" }),
    barChart(weightRows(view), { title: "strongest / weakest selector weights" }),
    barChart(usageRows(metrics), { title: "operator usage" }),
  ].join("\n");
}
