// WebSocket client for the coaching session service.
//
// Handles the hello handshake, JSON encoding and automatic reconnection
// with capped exponential backoff. The service replays the full event
// history when a known session id reconnects, so the client signals
// onOpen before delivering messages and the consumer rebuilds its view
// from scratch on every (re)connection.

import {
  encode,
  helloMessage,
  parseServerMessage,
  type ControlType,
  type ServerMessage,
  type SessionWireConfig,
} from "./protocol.js";

/** The subset of the WebSocket API the client needs; the browser's
 * WebSocket and the `ws` package both satisfy it. */
export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

export interface CoachClientOptions {
  url: string;
  sessionId: string;
  config: SessionWireConfig;
  /** Defaults to the browser WebSocket. Tests inject `ws` here. */
  webSocketFactory?: WebSocketFactory;
  baseBackoffMs?: number;
  maxBackoffMs?: number;
  /** Fired after the hello is sent on a new connection; reset views here. */
  onOpen?: () => void;
  onMessage?: (msg: ServerMessage) => void;
  /** Fired when the connection drops; willRetry is false after stop(). */
  onClose?: (willRetry: boolean) => void;
}

const defaultFactory: WebSocketFactory = (url) =>
  new WebSocket(url) as unknown as WebSocketLike;

export class CoachClient {
  private readonly opts: Required<
    Pick<CoachClientOptions, "url" | "sessionId" | "config">
  > &
    CoachClientOptions;
  private readonly factory: WebSocketFactory;
  private ws: WebSocketLike | null = null;
  private stopped = false;
  private retryMs: number;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(options: CoachClientOptions) {
    this.opts = options;
    this.factory = options.webSocketFactory ?? defaultFactory;
    this.retryMs = options.baseBackoffMs ?? 500;
  }

  connect(): void {
    this.stopped = false;
    this.open();
  }

  /** Close for good; no further reconnect attempts. */
  stop(): void {
    this.stopped = true;
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    this.ws?.close();
    this.ws = null;
  }

  get connected(): boolean {
    return this.ws !== null;
  }

  sendControl(type: ControlType): void {
    this.send(encode({ type }));
  }

  sendFrame(t: number, joints: number[][]): void {
    this.send(encode({ type: "frame", t, joints }));
  }

  private send(data: string): void {
    if (this.ws === null) {
      throw new Error("not connected");
    }
    this.ws.send(data);
  }

  private open(): void {
    const ws = this.factory(this.opts.url);
    ws.onopen = () => {
      this.ws = ws;
      this.retryMs = this.opts.baseBackoffMs ?? 500;
      ws.send(encode(helloMessage(this.opts.sessionId, this.opts.config)));
      this.opts.onOpen?.();
    };
    ws.onmessage = (ev) => {
      const msg = parseServerMessage(String(ev.data));
      if (msg !== null) {
        this.opts.onMessage?.(msg);
      }
    };
    ws.onerror = () => {
      // the close handler owns retry scheduling
    };
    ws.onclose = () => {
      const wasOpen = this.ws === ws;
      if (wasOpen) {
        this.ws = null;
      }
      if (this.stopped) {
        this.opts.onClose?.(false);
        return;
      }
      this.opts.onClose?.(true);
      const delay = this.retryMs;
      this.retryMs = Math.min(this.retryMs * 2, this.opts.maxBackoffMs ?? 8000);
      this.retryTimer = setTimeout(() => {
        this.retryTimer = null;
        if (!this.stopped) {
          this.open();
        }
      }, delay);
    };
  }
}
