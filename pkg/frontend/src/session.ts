import type { Candidate } from "./api.js";

/** Editor state: the completion point is the boundary between the left and
 * right panes, and the candidate list always reflects the newest settled
 * request (enforced by the controller's sequence numbers). */
export type SessionState = {
  srcText: string;
  leftText: string;
  rightText: string;
  typed: string;
  candidates: Candidate[];
  pendingSeq: number | null;
  hardPrefix: boolean;
  error: string | null;
};

export function initialState(): SessionState {
  return {
    srcText: "",
    leftText: "",
    rightText: "",
    typed: "",
    candidates: [],
    pendingSeq: null,
    hardPrefix: false,
    error: null,
  };
}

/** Accepting a candidate appends its word at the completion point and
 * empties the typed buffer; an out-of-range index is a no-op. */
export function applyCandidate(state: SessionState, index: number): SessionState {
  if (!Number.isInteger(index) || index < 0 || index >= state.candidates.length) {
    return state;
  }
  const word = state.candidates[index].word;
  return {
    ...state,
    leftText: state.leftText ? `${state.leftText} ${word}` : word,
    typed: "",
    candidates: [],
    pendingSeq: null,
    error: null,
  };
}

export function clearCandidates(state: SessionState): SessionState {
  if (state.candidates.length === 0 && state.pendingSeq === null) return state;
  return { ...state, candidates: [], pendingSeq: null };
}

/** Moving the caret re-splits the translation around the completion point. */
export function splitAt(state: SessionState, text: string, offset: number): SessionState {
  const at = Math.max(0, Math.min(text.length, offset));
  return {
    ...state,
    leftText: text.slice(0, at).trim(),
    rightText: text.slice(at).trim(),
  };
}
