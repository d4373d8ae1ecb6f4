// Session-service client: websocket lifecycle, the hello handshake, and a
// typed send surface that refuses schema-invalid frames. Reconnects with
// exponential backoff; the panel disables controls while the link is down.
import {
  ClientFrame,
  encodeClientFrame,
  parseServerFrame,
  RegistryFrame,
  ServerFrame,
} from "./protocol";

// the subset of the WebSocket surface the client uses; injectable for tests
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientCallbacks {
  onRegistry?(reg: RegistryFrame): void;
  onFrame?(frame: ServerFrame): void;
  onStatus?(connected: boolean, status: string): void;
}

export const BACKOFF_BASE_MS = 500;
export const BACKOFF_CAP_MS = 10_000;

export class CommanderClient {
  readonly url: string;
  private readonly makeSocket: SocketFactory;
  private readonly cb: ClientCallbacks;
  private socket: SocketLike | null = null;
  private live = false; // hello accepted, registry received
  private attempts = 0;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;
  registry: RegistryFrame | null = null;

  constructor(url: string, cb: ClientCallbacks = {}, factory?: SocketFactory) {
    this.url = url;
    this.cb = cb;
    this.makeSocket =
      factory ?? ((u: string) => new WebSocket(u) as unknown as SocketLike);
  }

  get isLive(): boolean {
    return this.live;
  }

  /** Delay before reconnect attempt n (1-based): 500ms doubling, 10s cap. */
  static backoffMs(attempt: number): number {
    return Math.min(BACKOFF_BASE_MS * 2 ** (attempt - 1), BACKOFF_CAP_MS);
  }

  connect(): void {
    this.stopped = false;
    this.open();
  }

  stop(): void {
    this.stopped = true;
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    this.reconnectTimer = null;
    this.socket?.close();
    this.socket = null;
    this.setLive(false, "stopped");
  }

  private open(): void {
    this.setLive(false, this.attempts ? `reconnecting (try ${this.attempts + 1})` : "connecting");
    let sock: SocketLike;
    try {
      sock = this.makeSocket(this.url);
    } catch {
      this.scheduleReconnect();
      return;
    }
    this.socket = sock;
    sock.onopen = () => {
      // expected-registry checks are done client side on the reply; the
      // hello itself stays permissive so one panel fits any bundle
      sock.send(encodeClientFrame({ type: "hello" }));
    };
    sock.onmessage = (ev) => {
      if (typeof ev.data !== "string") return;
      this.handleFrame(ev.data);
    };
    sock.onerror = () => {
      // the close handler owns recovery
    };
    sock.onclose = () => {
      if (this.socket !== sock) return;
      this.socket = null;
      this.setLive(false, "connection lost");
      this.scheduleReconnect();
    };
  }

  private handleFrame(text: string): void {
    const frame = parseServerFrame(text);
    if (!frame) return; // unknown or malformed server frame: ignore
    if (frame.type === "registry") {
      this.registry = frame;
      this.attempts = 0;
      this.setLive(true, "live");
      this.cb.onRegistry?.(frame);
    }
    this.cb.onFrame?.(frame);
  }

  private scheduleReconnect(): void {
    if (this.stopped || this.reconnectTimer !== null) return;
    this.attempts += 1;
    const delay = CommanderClient.backoffMs(this.attempts);
    this.setLive(false, `connection lost, retry in ${(delay / 1000).toFixed(1)}s`);
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      if (!this.stopped) this.open();
    }, delay);
  }

  private setLive(live: boolean, status: string): void {
    this.live = live;
    this.cb.onStatus?.(live, status);
  }

  /** Validate and send; returns false (and sends nothing) when not live. */
  send(frame: ClientFrame): boolean {
    if (!this.live || !this.socket) return false;
    this.socket.send(encodeClientFrame(frame));
    return true;
  }

  sendSkill(factor: string, values: number[]): boolean {
    return this.send({ type: "set_skill", factor, values });
  }

  sendWeights(values: number[]): boolean {
    return this.send({ type: "set_weights", values });
  }

  resample(): boolean {
    return this.send({ type: "resample" });
  }

  reset(): boolean {
    return this.send({ type: "reset" });
  }

  pause(): boolean {
    return this.send({ type: "pause" });
  }

  resume(): boolean {
    return this.send({ type: "resume" });
  }
}
