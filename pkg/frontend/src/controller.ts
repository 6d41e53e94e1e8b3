import { CompletionClient, ServiceError } from "./api.js";
import { debounce, type Debounced } from "./debounce.js";
import { applyCandidate, initialState, type SessionState } from "./session.js";

export type ControllerOptions = {
  debounceMs?: number;
  topK?: number;
};

type Listener = (state: SessionState) => void;

/** Owns the session state. Typed-prefix edits funnel through a debouncer so
 * bursts of keystrokes cost one request, and every request carries a
 * sequence number so a late response can never clobber a newer one. */
export class CompletionController {
  private state: SessionState = initialState();
  private readonly client: CompletionClient;
  private readonly topK: number;
  private readonly schedule: Debounced<[]>;
  private readonly listeners = new Set<Listener>();
  private seq = 0;
  private settledSeq = 0;

  constructor(client: CompletionClient, options: ControllerOptions = {}) {
    this.client = client;
    this.topK = options.topK ?? 5;
    this.schedule = debounce(() => void this.issue(), options.debounceMs ?? 150);
  }

  getState(): SessionState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  setSource(text: string): void {
    this.update({ ...this.state, srcText: text });
    this.rescheduleIfTyping();
  }

  setLeft(text: string): void {
    this.update({ ...this.state, leftText: text });
    this.rescheduleIfTyping();
  }

  setRight(text: string): void {
    this.update({ ...this.state, rightText: text });
    this.rescheduleIfTyping();
  }

  setHardPrefix(on: boolean): void {
    this.update({ ...this.state, hardPrefix: on });
    this.rescheduleIfTyping();
  }

  setTyped(text: string): void {
    if (text === "") {
      this.invalidateInFlight();
      this.schedule.cancel();
      this.update({ ...this.state, typed: "", candidates: [], pendingSeq: null, error: null });
      return;
    }
    this.update({ ...this.state, typed: text });
    this.schedule();
  }

  acceptCandidate(index: number): boolean {
    const next = applyCandidate(this.state, index);
    if (next === this.state) return false;
    this.invalidateInFlight();
    this.schedule.cancel();
    this.update(next);
    return true;
  }

  /** Keyboard-first acceptance: digits 1-5 take the matching candidate. */
  handleKey(key: string): boolean {
    if (key.length === 1 && key >= "1" && key <= "5") {
      return this.acceptCandidate(key.charCodeAt(0) - "1".charCodeAt(0));
    }
    return false;
  }

  hasPendingRequest(): boolean {
    return this.schedule.pending() || this.state.pendingSeq !== null;
  }

  private rescheduleIfTyping(): void {
    if (this.state.typed !== "") this.schedule();
  }

  private invalidateInFlight(): void {
    this.settledSeq = this.seq;
  }

  private async issue(): Promise<void> {
    const snapshot = this.state;
    if (snapshot.typed === "") return;
    const mySeq = ++this.seq;
    this.update({ ...snapshot, pendingSeq: mySeq });
    try {
      const resp = await this.client.complete({
        src: snapshot.srcText,
        leftContext: snapshot.leftText,
        rightContext: snapshot.rightText,
        typed: snapshot.typed,
        topK: this.topK,
        hardPrefix: snapshot.hardPrefix,
      });
      if (mySeq <= this.settledSeq) return;
      this.settledSeq = mySeq;
      this.update({
        ...this.state,
        candidates: resp.candidates,
        pendingSeq: this.state.pendingSeq === mySeq ? null : this.state.pendingSeq,
        error: null,
      });
    } catch (err) {
      if (mySeq <= this.settledSeq) return;
      this.settledSeq = mySeq;
      const message = err instanceof ServiceError ? err.message : "completion service unreachable";
      this.update({
        ...this.state,
        candidates: [],
        pendingSeq: this.state.pendingSeq === mySeq ? null : this.state.pendingSeq,
        error: message,
      });
    }
  }

  private update(next: SessionState): void {
    this.state = next;
    for (const listener of this.listeners) listener(next);
  }
}
