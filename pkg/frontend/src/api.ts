// Typed client for the cart-control endpoints and the store GET passthrough.
// The panel computes nothing itself; every value shown comes from these calls.

export type Button = "up" | "down" | "delete" | "pay" | "reset";

export type CartEvent =
  | { card: string }
  | { tag: string }
  | { button: Button };

export interface FrameDoc {
  cart: string;
  phase: string;
  ascii: string;
  pbm: string; // 1-bit P4 image, hex encoded
}

export interface TraceDoc {
  cart: string;
  phases: [number, string][];
  log: [number, string][];
  http: [number, string, number | string | null][];
  beeps: number;
  fault: string | null;
}

export interface EventResult {
  status: number;
  phase?: string;
  error?: string;
}

export interface HistoryItem {
  uid: string;
  name: string;
  cost: number;
}

export interface HistoryRecord {
  at: number;
  items: HistoryItem[];
  total: number;
}

export interface UserDoc {
  _id: string;
  _rev: string;
  name: string;
  cash: number;
  history: HistoryRecord[];
}

export interface UserFetch {
  status: number;
  raw: string; // exact response body; the account page displays it untouched
  doc: UserDoc | null;
}

export class PanelApi {
  constructor(private readonly base: string = "") {}

  async postEvent(cartId: string, event: CartEvent): Promise<EventResult> {
    const resp = await fetch(`${this.base}/carts/${cartId}/events`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(event),
    });
    const body = (await resp.json()) as { phase?: string; error?: string };
    return { status: resp.status, phase: body.phase, error: body.error };
  }

  async getFrame(cartId: string): Promise<FrameDoc> {
    const resp = await fetch(`${this.base}/carts/${cartId}/frame`);
    if (!resp.ok) throw new Error(`frame: HTTP ${resp.status}`);
    return (await resp.json()) as FrameDoc;
  }

  async getTrace(cartId: string): Promise<TraceDoc> {
    const resp = await fetch(`${this.base}/carts/${cartId}/trace`);
    if (!resp.ok) throw new Error(`trace: HTTP ${resp.status}`);
    return (await resp.json()) as TraceDoc;
  }

  async getUser(uid: string): Promise<UserFetch> {
    const resp = await fetch(`${this.base}/users/${uid}`);
    const raw = await resp.text();
    return {
      status: resp.status,
      raw,
      doc: resp.status === 200 ? (JSON.parse(raw) as UserDoc) : null,
    };
  }
}
