// Typed client for the chat service JSON API. The UI never computes or
// reformats evidence numbers: display strings arrive ready-made from the
// server and are rendered verbatim.

export type LocalSource = {
  rank: number;
  title: string;
  match_percent: number;
  chunk_id: string;
  display: string;
};

export type LiteratureSource = {
  rank: number;
  authors_display: string;
  year: number;
  journal: string;
  title: string;
  url: string;
  display: string;
};

export type ChatResponse = {
  session_id: string;
  answer: string;
  local_sources: LocalSource[];
  literature_sources: LiteratureSource[];
  reformulated_query: string;
  degraded: boolean;
  reasoning_trace: string | null;
};

export type SessionSummary = {
  session_id: string;
  title: string;
  created_at: string;
  updated_at: string;
  turn_count: number;
  corrupt: boolean;
};

export type ViewTurn = {
  turn_id: number;
  role: "user" | "assistant";
  text: string;
  timestamp: string;
  local_sources?: LocalSource[];
  literature_sources?: LiteratureSource[];
  degraded?: boolean;
  reformulated_query?: string;
  reasoning_trace?: string;
  error?: string;
};

export type SessionDetail = {
  session_id: string;
  title: string;
  created_at: string;
  updated_at: string;
  corrupt: boolean;
  turns: ViewTurn[];
};

export type SourceFamily = { label: string; items: string[] };

export type SourcesInfo = {
  sources: { local: SourceFamily; literature: SourceFamily };
  disclaimer: string;
};

export type HealthInfo = {
  status: string;
  disclaimer: string;
  index_items: number;
  literature_enabled: boolean;
};

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let message = `HTTP ${response.status}`;
  try {
    const body = await response.json();
    if (body?.error?.message) {
      message = body.error.message;
    }
  } catch {
    // keep the status-only message
  }
  return new ApiError(response.status, message);
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private async get<T>(path: string): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`);
    if (!response.ok) throw await parseError(response);
    return response.json() as Promise<T>;
  }

  health(): Promise<HealthInfo> {
    return this.get("/api/health");
  }

  sources(): Promise<SourcesInfo> {
    return this.get("/api/sources");
  }

  listSessions(): Promise<SessionSummary[]> {
    return this.get<{ sessions: SessionSummary[] }>("/api/sessions").then(
      (body) => body.sessions,
    );
  }

  getSession(sessionId: string): Promise<SessionDetail> {
    return this.get(`/api/sessions/${encodeURIComponent(sessionId)}`);
  }

  async chat(sessionId: string | null, message: string): Promise<ChatResponse> {
    const payload: Record<string, string> = { message };
    if (sessionId) payload.session_id = sessionId;
    const response = await fetch(`${this.baseUrl}/api/chat`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!response.ok) throw await parseError(response);
    return response.json() as Promise<ChatResponse>;
  }
}
