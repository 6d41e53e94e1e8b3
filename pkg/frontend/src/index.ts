export { CompletionClient, ServiceError } from "./api.js";
export type {
  Candidate,
  CompleteRequest,
  CompleteResponse,
  FetchLike,
  HealthResponse,
} from "./api.js";
export { CompletionController } from "./controller.js";
export type { ControllerOptions } from "./controller.js";
export { debounce } from "./debounce.js";
export type { Debounced } from "./debounce.js";
export { applyCandidate, clearCandidates, initialState, splitAt } from "./session.js";
export type { SessionState } from "./session.js";
export { mountWorkspace } from "./widget.js";
