// Ordered, resumable delivery of session events. The transport (EventSource
// in the browser) is injectable so ordering and resume logic are testable.

import type { SessionEvent } from "./types";

export interface EventTransport {
  connect(url: string, onMessage: (data: string) => void, onError: () => void): () => void;
}

export const eventSourceTransport: EventTransport = {
  connect(url, onMessage, onError) {
    const source = new EventSource(url);
    source.onmessage = (ev) => onMessage(ev.data);
    source.onerror = () => onError();
    return () => source.close();
  },
};

export class EventStream {
  lastEventId = 0;
  private close: (() => void) | null = null;
  private stopped = false;

  constructor(
    private urlFor: (after: number) => string,
    private onEvent: (event: SessionEvent) => void,
    private transport: EventTransport = eventSourceTransport,
    private reconnectDelayMs = 500,
  ) {}

  start(): void {
    this.stopped = false;
    this.open();
  }

  private open(): void {
    this.close = this.transport.connect(
      this.urlFor(this.lastEventId),
      (data) => this.deliver(data),
      () => this.reconnect(),
    );
  }

  // Events must arrive in order and exactly once; a resumed connection
  // replays from lastEventId, so stale or duplicate ids are dropped.
  deliver(data: string): void {
    let event: SessionEvent;
    try {
      event = JSON.parse(data) as SessionEvent;
    } catch {
      return;
    }
    if (event.id <= this.lastEventId) return;
    this.lastEventId = event.id;
    this.onEvent(event);
  }

  private reconnect(): void {
    if (this.stopped) return;
    this.close?.();
    setTimeout(() => {
      if (!this.stopped) this.open();
    }, this.reconnectDelayMs);
  }

  stop(): void {
    this.stopped = true;
    this.close?.();
    this.close = null;
  }
}
