// Browser bootstrap: owns the state, re-renders on change, and wires
// DOM events to the state transitions. The only client-side persistence
// is the current session id in localStorage.

import { ApiClient } from "./api.js";
import {
  AppState,
  beginSubmit,
  bootstrap,
  completeSubmit,
  initialState,
  newChat,
  openSession,
} from "./state.js";
import { renderApp } from "./render.js";

const SESSION_KEY = "evrag.session_id";

const api = new ApiClient("");
const root = document.getElementById("app") as HTMLElement;
let state: AppState = initialState();

function setState(next: AppState): void {
  state = next;
  if (state.sessionId) {
    localStorage.setItem(SESSION_KEY, state.sessionId);
  } else {
    localStorage.removeItem(SESSION_KEY);
  }
  root.innerHTML = renderApp(state);
  const input = root.querySelector<HTMLInputElement>(".composer input");
  if (input && !state.pending) input.focus();
}

async function submit(text: string): Promise<void> {
  if (state.pending) return; // one in-flight request per session
  setState(beginSubmit(state, text));
  setState(await completeSubmit(api, state, text));
}

root.addEventListener("click", async (event) => {
  const target = event.target as HTMLElement;
  const sessionButton = target.closest<HTMLElement>("[data-session-id]");
  if (sessionButton) {
    setState(await openSession(api, state, sessionButton.dataset.sessionId ?? ""));
    return;
  }
  const action = target.closest<HTMLElement>("[data-action]")?.dataset.action;
  if (action === "new-chat") {
    setState(newChat(state));
  } else if (action === "retry" && state.error) {
    await submit(state.error.retryText);
  }
});

root.addEventListener("submit", async (event) => {
  const form = (event.target as HTMLElement).closest<HTMLFormElement>(
    '[data-action="composer"]');
  if (!form) return;
  event.preventDefault();
  const field = form.querySelector<HTMLInputElement>('input[name="message"]');
  const text = field?.value ?? "";
  if (text.trim()) await submit(text);
});

bootstrap(api, state, localStorage.getItem(SESSION_KEY)).then(setState);
