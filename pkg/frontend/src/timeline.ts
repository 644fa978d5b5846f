// History-travel picker: a timeline of the states seen while answering the
// current question; selecting one issues the restore request.

import type { TimelineEntry } from "./types";

export interface TimelineItem {
  t: number;
  summary: string;
  isCurrent: boolean;
}

export function buildTimeline(entries: TimelineEntry[], currentTimestep: number): TimelineItem[] {
  const items = entries.map((e) => ({
    t: e.t,
    summary: `t=${e.t} ${e.op} (${e.unique_named} named) → ${e.feedback}`,
    isCurrent: e.t === currentTimestep,
  }));
  if (!items.some((i) => i.isCurrent)) {
    items.push({ t: currentTimestep, summary: `t=${currentTimestep} (current)`, isCurrent: true });
  }
  return items;
}

// Travel makes no sense when there is nothing to go back to.
export function travelEnabled(items: TimelineItem[]): boolean {
  return items.length > 1;
}

export function renderTimeline(items: TimelineItem[]): string {
  const enabled = travelEnabled(items);
  const rows = items
    .map((item) => {
      const cls = item.isCurrent ? "entry current" : "entry";
      const button =
        enabled && !item.isCurrent
          ? `<button class="travel" data-travel-to="${item.t}">restore</button>`
          : "";
      return `<li class="${cls}">${item.summary} ${button}</li>`;
    })
    .join("\n");
  return `<ol class="timeline" ${enabled ? "" : 'data-disabled="true"'}>${rows}</ol>`;
}
