// Session panel: render the current description and map the four request
// kinds onto controls. Controls disable while a timestep is in flight and
// the whole panel locks when the session closes.

import type { ApiClient } from "./api";
import type { FeedbackKind, FeedbackPayload, SessionView } from "./types";

export interface PanelState {
  view: SessionView | null;
  inFlight: boolean;
  submenuOpen: boolean;
}

export function initialPanelState(): PanelState {
  return { view: null, inFlight: false, submenuOpen: false };
}

export function canAct(state: PanelState, kind: FeedbackKind): boolean {
  if (state.inFlight || !state.view || !state.view.open) return false;
  return state.view.allowed_actions.includes(kind);
}

export function renderDescription(view: SessionView): string {
  const d = view.description;
  const chips = d.named_predicates
    .map(
      (p) =>
        `<span class="chip" title="${p.count} occurrence(s)">` +
        `${p.id}&times;${p.count}` +
        `<span class="coverage"><span class="fill" style="width:${Math.round(p.share * 100)}%"></span></span>` +
        `</span>`,
    )
    .join(" ");
  const barred = d.disallowed_predicates.length
    ? `<div class="barred">barred: ${d.disallowed_predicates.join(", ")}</div>`
    : "";
  return `
<div class="description">
  <div class="headline">
    ${d.disjunct_count} case(s), ${d.conjunct_count} condition(s),
    ${d.box_range_count} numeric range(s) over ${d.n_boxes} region(s)
  </div>
  <div class="chips">${chips || "<em>no named predicates</em>"}</div>
  ${barred}
  <div class="volumes">
    named coverage ${(d.volumes.named_total * 100).toFixed(1)}% &middot;
    range coverage ${(d.volumes.box_total * 100).toFixed(1)}%
  </div>
</div>`;
}

export function renderStatus(view: SessionView): string {
  const closed = view.open
    ? ""
    : `<span class="closed">session ended (${view.close_reason ?? "user exit"})</span>`;
  return `step ${view.timestep} &middot; last operator <code>${view.last_operator}</code>` +
    (view.fell_back ? " (not applicable, state kept)" : "") +
    ` &middot; success rate ${(view.success_rate * 100).toFixed(1)}% ${closed}`;
}

export async function issueFeedback(
  api: ApiClient,
  state: PanelState,
  payload: FeedbackPayload,
): Promise<SessionView> {
  if (!state.view) throw new Error("no session open");
  if (state.inFlight) throw new Error("a request is already in flight");
  state.inFlight = true;
  try {
    const view = await api.postFeedback(state.view.session_id, payload);
    state.view = view;
    state.submenuOpen = false;
    return view;
  } finally {
    state.inFlight = false;
  }
}

export function requestMoreAbstract(api: ApiClient, state: PanelState) {
  return issueFeedback(api, state, { kind: "m" });
}

export function requestLessAbstract(api: ApiClient, state: PanelState) {
  return issueFeedback(api, state, { kind: "l" });
}

export function endSession(api: ApiClient, state: PanelState) {
  return issueFeedback(api, state, { kind: "b" });
}

export function applyManualOperator(api: ApiClient, state: PanelState, op: string) {
  return issueFeedback(api, state, { kind: "u", manual_operator: op });
}

export function travelToTimestep(api: ApiClient, state: PanelState, t: number) {
  return issueFeedback(api, state, { kind: "u", travel_to: t });
}
