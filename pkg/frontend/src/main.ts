// Browser wiring: one session panel, the live dashboard, and the travel
// picker, all driven by the HTTP API plus the event stream.

import { ApiClient } from "./api";
import { EventStream } from "./events";
import {
  applyManualOperator,
  canAct,
  endSession,
  initialPanelState,
  renderDescription,
  renderStatus,
  requestLessAbstract,
  requestMoreAbstract,
  travelToTimestep,
} from "./panel";
import { renderDashboard } from "./dashboard";
import { buildTimeline, renderTimeline } from "./timeline";
import type { SessionView } from "./types";

const base = (window as unknown as { ABSTEER_API?: string }).ABSTEER_API ?? "http://127.0.0.1:8000";
const api = new ApiClient(base);
const state = initialPanelState();
let stream: EventStream | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function refreshDashboard(view: SessionView): Promise<void> {
  const metrics = await api.getMetrics(view.session_id);
  el("dashboard").innerHTML = renderDashboard(metrics, view);
}

async function refreshTimeline(view: SessionView): Promise<void> {
  const history = await api.getHistory(view.session_id);
  const items = buildTimeline(history.timeline, view.timestep);
  el("timeline").innerHTML = renderTimeline(items);
  el("timeline")
    .querySelectorAll<HTMLButtonElement>("button.travel")
    .forEach((btn) => {
      btn.onclick = () => {
        void travelToTimestep(api, state, Number(btn.dataset.travelTo)).then(applyView);
      };
    });
}

function syncButtons(): void {
  (["m", "l", "b", "u"] as const).forEach((kind) => {
    el<HTMLButtonElement>(`btn-${kind}`).disabled = !canAct(state, kind);
  });
}

function applyView(view: SessionView): void {
  state.view = view;
  el("status").innerHTML = renderStatus(view);
  el("description").innerHTML = renderDescription(view);
  syncButtons();
  void refreshDashboard(view);
  void refreshTimeline(view);
  if (!view.open) {
    el("summary").textContent =
      `Session closed after ${view.timestep + 1} states; ` +
      `global success rate ${(view.success_rate * 100).toFixed(1)}%.`;
  }
}

async function openSubmenu(): Promise<void> {
  const catalog = await api.getCatalog();
  const list = el("submenu");
  state.submenuOpen = true;
  list.innerHTML = catalog.selectable
    .map((op) => `<button class="manual" data-op="${op}">${op}</button>`)
    .join(" ");
  list.querySelectorAll<HTMLButtonElement>("button.manual").forEach((btn) => {
    btn.onclick = () => {
      void applyManualOperator(api, state, btn.dataset.op as string).then(applyView);
      list.innerHTML = "";
    };
  });
}

async function start(): Promise<void> {
  const { session_id, view } = await api.createSession();
  applyView(view);
  stream = new EventStream(
    (after) => api.eventsUrl(session_id, after),
    (event) => applyView(event.view),
  );
  stream.start();

  el<HTMLButtonElement>("btn-m").onclick = () => {
    void requestMoreAbstract(api, state).then(applyView);
  };
  el<HTMLButtonElement>("btn-l").onclick = () => {
    void requestLessAbstract(api, state).then(applyView);
  };
  el<HTMLButtonElement>("btn-b").onclick = () => {
    void endSession(api, state).then((v) => {
      applyView(v);
      stream?.stop();
    });
  };
  el<HTMLButtonElement>("btn-u").onclick = () => {
    void openSubmenu();
  };
}

window.addEventListener("load", () => {
  void start().catch((err) => {
    el("status").textContent = `failed to open session: ${err}`;
  });
});
