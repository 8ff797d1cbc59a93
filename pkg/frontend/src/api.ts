// Thin typed client over the session HTTP API. The fetch implementation is
// injectable so tests can stub the network.

export interface LiteralJson {
  subject: string;
  relation: string;
  value: string;
  positive: boolean;
}

export interface KbItem {
  id: string;
  kind: 'fact' | 'rule';
  text: string;
  layer?: string;
  priority?: number;
  rank: number;
  contested: boolean;
}

export interface KbView {
  items: KbItem[];
  decision_query: [string, string];
  state_version: number;
}

export interface DecideResponse {
  decision: LiteralJson;
  used_facts: string[];
  used_rules: string[];
  defeated: string[];
  state_version: number;
}

export interface ExplainTopEntry {
  id: string;
  kind: 'fact' | 'rule';
  depth: number;
  defeated: boolean;
  rank: number;
  contested: boolean;
}

export interface ExplainResponse {
  strategy: string;
  confirmed: boolean;
  rendered: string;
  top: ExplainTopEntry[];
  decision?: LiteralJson;
  expected?: LiteralJson;
  state_version: number;
}

export interface TeachResponse {
  item: string;
  rank: number;
  contested: boolean;
  state_version: number;
}

export interface SessionInfo {
  session_id: string;
  state_version: number;
}

export type TeachPayload =
  | { action: 'assert_fact'; id: string; subject: string; relation: string; value: string; positive?: boolean }
  | { action: 'retract_fact'; id: string }
  | { action: 'replace_fact_value'; id: string; value: string }
  | { action: 'set_rule_priority'; id: string; priority: number };

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
    public readonly stateVersion?: number,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { 'content-type': 'application/json' } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const payload = await response.json();
    if (!response.ok) {
      const detail = payload?.detail ?? {};
      throw new ApiError(
        response.status,
        detail.code ?? 'HttpError',
        detail.message ?? `request failed with ${response.status}`,
        detail.state_version,
      );
    }
    return payload as T;
  }

  health(): Promise<{ status: string }> {
    return this.request('GET', '/health');
  }

  listScenarios(): Promise<{ scenarios: string[] }> {
    return this.request('GET', '/scenarios');
  }

  createSession(scenarioName: string, persona: string): Promise<SessionInfo> {
    return this.request('POST', '/sessions', { scenario_name: scenarioName, persona });
  }

  getKb(sessionId: string): Promise<KbView> {
    return this.request('GET', `/sessions/${sessionId}/kb`);
  }

  decide(sessionId: string, stateVersion?: number): Promise<DecideResponse> {
    return this.request('POST', `/sessions/${sessionId}/decide`, {
      state_version: stateVersion,
    });
  }

  explain(
    sessionId: string,
    strategy: string,
    options: { expected?: string; topK?: number; stateVersion?: number } = {},
  ): Promise<ExplainResponse> {
    return this.request('POST', `/sessions/${sessionId}/explain`, {
      strategy,
      expected: options.expected,
      top_k: options.topK,
      state_version: options.stateVersion,
    });
  }

  teach(sessionId: string, payload: TeachPayload, stateVersion?: number): Promise<TeachResponse> {
    return this.request('POST', `/sessions/${sessionId}/teach`, {
      ...payload,
      state_version: stateVersion,
    });
  }

  addEvent(
    sessionId: string,
    kind: string,
    item: string,
    stateVersion?: number,
  ): Promise<TeachResponse & { kind: string }> {
    return this.request('POST', `/sessions/${sessionId}/events`, {
      kind,
      item,
      state_version: stateVersion,
    });
  }
}
