// HTML renderers. All functions return markup strings from state alone,
// so tests can assert on output without a browser. Attribution rows use
// the server's `display` strings byte-for-byte; the client never derives
// a percentage or citation line itself.

import type {
  LiteratureSource,
  LocalSource,
  SessionSummary,
  SourcesInfo,
  ViewTurn,
} from "./api.js";
import type { AppState } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function localRowText(row: LocalSource): string {
  return row.display;
}

export function literatureRowText(row: LiteratureSource): string {
  return row.display;
}

export function renderAttribution(turn: ViewTurn): string {
  const local = turn.local_sources ?? [];
  const literature = turn.literature_sources ?? [];
  if (local.length === 0 && literature.length === 0) return "";
  const parts: string[] = ['<div class="attribution">'];
  if (local.length > 0) {
    parts.push('<h4>Local Source Documents Used</h4><ul class="local-sources">');
    for (const row of local) {
      parts.push(
        `<li title="${escapeHtml(row.chunk_id)}">${escapeHtml(localRowText(row))}</li>`,
      );
    }
    parts.push("</ul>");
  }
  if (literature.length > 0) {
    parts.push('<h4>Research Articles Used</h4><ul class="literature-sources">');
    for (const row of literature) {
      parts.push(
        `<li><a href="${escapeHtml(row.url)}" target="_blank" rel="noopener">` +
        `${escapeHtml(literatureRowText(row))}</a></li>`,
      );
    }
    parts.push("</ul>");
  }
  parts.push("</div>");
  return parts.join("");
}

export function renderTurn(turn: ViewTurn): string {
  const classes = ["turn", turn.role];
  if (turn.error) classes.push("failed");
  const parts = [`<article class="${classes.join(" ")}" data-turn-id="${turn.turn_id}">`];
  if (turn.reasoning_trace) {
    parts.push(
      '<details class="trace"><summary>Thinking</summary>' +
      `<pre>${escapeHtml(turn.reasoning_trace)}</pre></details>`,
    );
  }
  parts.push(`<p class="text">${escapeHtml(turn.text)}</p>`);
  if (turn.degraded) {
    parts.push('<p class="degraded-note">Literature search was unavailable; ' +
               "answer uses local sources only.</p>");
  }
  parts.push(renderAttribution(turn));
  parts.push("</article>");
  return parts.join("");
}

export function renderConversation(turns: ViewTurn[]): string {
  if (turns.length === 0) {
    return '<p class="empty-chat">Ask about drug effects, prevention strategies, ' +
           "policies, or research findings.</p>";
  }
  return turns.map(renderTurn).join("");
}

export function renderErrorBubble(error: { message: string } | null): string {
  if (!error) return "";
  return (
    '<div class="error-bubble" role="alert">' +
    `<p>${escapeHtml(error.message)}</p>` +
    '<button type="button" data-action="retry">Retry</button>' +
    "</div>"
  );
}

export function renderSessionList(sessions: SessionSummary[],
                                  activeId: string | null): string {
  if (sessions.length === 0) {
    return '<p class="empty-history">No conversations yet.</p>';
  }
  const items = sessions.map((session) => {
    const active = session.session_id === activeId ? " active" : "";
    const corrupt = session.corrupt ? " ⚠" : "";
    return (
      `<li class="session-entry${active}">` +
      `<button type="button" data-session-id="${escapeHtml(session.session_id)}">` +
      `<span class="title">${escapeHtml(session.title)}${corrupt}</span>` +
      `<time>${escapeHtml(session.updated_at)}</time>` +
      "</button></li>"
    );
  });
  return `<ul class="sessions">${items.join("")}</ul>`;
}

export function renderSourcesPanel(sources: SourcesInfo | null): string {
  if (!sources) return "";
  const family = (f: { label: string; items: string[] }) =>
    `<h4>${escapeHtml(f.label)}</h4><ul>` +
    f.items.map((item) => `<li>${escapeHtml(item)}</li>`).join("") +
    "</ul>";
  return (
    '<section class="data-sources"><h3>Data Sources</h3>' +
    family(sources.sources.local) +
    family(sources.sources.literature) +
    "</section>"
  );
}

export function renderSidebar(state: AppState): string {
  return (
    '<button type="button" class="new-chat" data-action="new-chat">+ New Chat</button>' +
    '<section class="history"><h3>Chat History</h3>' +
    renderSessionList(state.sessions, state.sessionId) +
    "</section>" +
    renderSourcesPanel(state.sources)
  );
}

export function renderApp(state: AppState): string {
  const pendingNote = state.pending
    ? '<p class="pending" aria-live="polite">Thinking…</p>'
    : "";
  return (
    '<div class="layout">' +
    `<aside class="sidebar">${renderSidebar(state)}</aside>` +
    '<main class="chat">' +
    `<div class="conversation">${renderConversation(state.turns)}` +
    pendingNote +
    renderErrorBubble(state.error) +
    "</div>" +
    '<form class="composer" data-action="composer">' +
    `<input name="message" type="text" autocomplete="off" ` +
    `placeholder="Ask about drug effects, prevention strategies, policies, or research findings…" ` +
    `value="${escapeHtml(state.input)}" ${state.pending ? "disabled" : ""} />` +
    `<button type="submit" ${state.pending ? "disabled" : ""}>Send</button>` +
    "</form>" +
    `<footer class="disclaimer">${escapeHtml(state.disclaimer)}</footer>` +
    "</main></div>"
  );
}
