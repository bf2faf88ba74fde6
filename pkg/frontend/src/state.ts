// Application state and transitions, kept free of DOM concerns so the
// chat flow (including failure/retry) is unit-testable with a fake API.

import type {
  ApiClient,
  ChatResponse,
  SessionSummary,
  SourcesInfo,
  ViewTurn,
} from "./api.js";
import { ApiError } from "./api.js";

export type ErrorBubble = {
  message: string;
  retryText: string; // the message to resend; also preserved in the input box
};

export type AppState = {
  sessionId: string | null;
  turns: ViewTurn[];
  sessions: SessionSummary[];
  sources: SourcesInfo | null;
  disclaimer: string;
  pending: boolean;
  input: string;
  error: ErrorBubble | null;
};

export function initialState(): AppState {
  return {
    sessionId: null,
    turns: [],
    sessions: [],
    sources: null,
    disclaimer: "",
    pending: false,
    input: "",
    error: null,
  };
}

export async function bootstrap(api: ApiClient, state: AppState,
                                rememberedSession: string | null = null): Promise<AppState> {
  let next = { ...state };
  try {
    const [health, sources, sessions] = await Promise.all([
      api.health(),
      api.sources(),
      api.listSessions(),
    ]);
    next = {
      ...next,
      disclaimer: health.disclaimer,
      sources,
      sessions,
    };
  } catch {
    next = {
      ...next,
      error: { message: "Could not reach the service.", retryText: "" },
    };
    return next;
  }
  if (rememberedSession && next.sessions.some((s) => s.session_id === rememberedSession)) {
    next = await openSession(api, next, rememberedSession);
  }
  return next;
}

function assistantTurnFromResponse(resp: ChatResponse, turnId: number): ViewTurn {
  const turn: ViewTurn = {
    turn_id: turnId,
    role: "assistant",
    text: resp.answer,
    timestamp: new Date().toISOString(),
    local_sources: resp.local_sources,
    literature_sources: resp.literature_sources,
    degraded: resp.degraded,
    reformulated_query: resp.reformulated_query,
  };
  if (resp.reasoning_trace) turn.reasoning_trace = resp.reasoning_trace;
  return turn;
}

export function beginSubmit(state: AppState, text: string): AppState {
  return { ...state, pending: true, error: null, input: text };
}

export async function completeSubmit(api: ApiClient, state: AppState,
                                     text: string): Promise<AppState> {
  const trimmed = text.trim();
  if (!trimmed) {
    return { ...state, pending: false };
  }
  try {
    const resp = await api.chat(state.sessionId, trimmed);
    const userTurn: ViewTurn = {
      turn_id: state.turns.length,
      role: "user",
      text: trimmed,
      timestamp: new Date().toISOString(),
    };
    const turns = [
      ...state.turns,
      userTurn,
      assistantTurnFromResponse(resp, state.turns.length + 1),
    ];
    let sessions = state.sessions;
    try {
      sessions = await api.listSessions();
    } catch {
      // sidebar refresh is best-effort; the conversation already advanced
    }
    return {
      ...state,
      sessionId: resp.session_id,
      turns,
      sessions,
      pending: false,
      input: "",
      error: null,
    };
  } catch (err) {
    const message =
      err instanceof ApiError
        ? `The service answered with an error (${err.status}): ${err.message}`
        : "Network failure while sending the message.";
    return {
      ...state,
      pending: false,
      input: text, // keep what the user typed for the retry
      error: { message, retryText: text },
    };
  }
}

export async function openSession(api: ApiClient, state: AppState,
                                  sessionId: string): Promise<AppState> {
  try {
    const detail = await api.getSession(sessionId);
    return {
      ...state,
      sessionId: detail.session_id,
      turns: detail.turns,
      pending: false,
      error: null,
    };
  } catch (err) {
    const message = err instanceof ApiError && err.status === 404
      ? "That conversation no longer exists."
      : "Could not load the conversation.";
    return { ...state, error: { message, retryText: "" } };
  }
}

export function newChat(state: AppState): AppState {
  return { ...state, sessionId: null, turns: [], input: "", error: null, pending: false };
}
