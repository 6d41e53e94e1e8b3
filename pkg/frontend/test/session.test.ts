import { describe, expect, it } from "vitest";
import { applyCandidate, clearCandidates, initialState, splitAt } from "../src/session.js";
import type { SessionState } from "../src/session.js";

function withCandidates(words: string[], left = "I like"): SessionState {
  return {
    ...initialState(),
    leftText: left,
    typed: "peo",
    candidates: words.map((w, i) => ({ word: w, logprob: -(i + 1) })),
  };
}

describe("applyCandidate", () => {
  it("appends the word after a space and clears the typed buffer", () => {
    const next = applyCandidate(withCandidates(["people-centered", "peoples"]), 0);
    expect(next.leftText).toBe("I like people-centered");
    expect(next.typed).toBe("");
    expect(next.candidates).toEqual([]);
  });

  it("needs no space when the left pane is empty", () => {
    const next = applyCandidate(withCandidates(["people"], ""), 0);
    expect(next.leftText).toBe("people");
  });

  it("applies the k-th candidate, not the first", () => {
    const next = applyCandidate(withCandidates(["people", "peoples", "peony"]), 2);
    expect(next.leftText).toBe("I like peony");
  });

  it("is a no-op on an out-of-range or fractional index", () => {
    const state = withCandidates(["people"]);
    expect(applyCandidate(state, 1)).toBe(state);
    expect(applyCandidate(state, -1)).toBe(state);
    expect(applyCandidate(state, 0.5)).toBe(state);
    const empty = initialState();
    expect(applyCandidate(empty, 0)).toBe(empty);
  });

  it("drops any error banner", () => {
    const state = { ...withCandidates(["people"]), error: "boom" };
    expect(applyCandidate(state, 0).error).toBeNull();
  });
});

describe("state helpers", () => {
  it("clearCandidates is identity when already clear", () => {
    const state = initialState();
    expect(clearCandidates(state)).toBe(state);
    const filled = withCandidates(["x"]);
    expect(clearCandidates(filled).candidates).toEqual([]);
  });

  it("splitAt re-splits the translation around the caret", () => {
    const s = splitAt(initialState(), "the plan is good", 8);
    expect(s.leftText).toBe("the plan");
    expect(s.rightText).toBe("is good");
    const ends = splitAt(initialState(), "abc", 99);
    expect(ends.leftText).toBe("abc");
    expect(ends.rightText).toBe("");
  });
});
