// Session view-model: holds the console's state, talks to the API with
// optimistic concurrency (every mutation carries the last seen
// state_version; on 409 it re-syncs once and retries), and renders plain
// strings so the DOM layer stays a thin shell.

import {
  ApiClient,
  ApiError,
  DecideResponse,
  ExplainResponse,
  KbItem,
  LiteralJson,
  TeachPayload,
} from './api.js';

export const MAX_RANK = 3;

export function stars(rank: number, contested = false): string {
  const clamped = Math.max(0, Math.min(MAX_RANK, rank));
  const filled = '★'.repeat(clamped);
  const empty = '☆'.repeat(MAX_RANK - clamped);
  return contested ? `${filled}${empty}!` : filled + empty;
}

export function literalText(lit: LiteralJson): string {
  const core = `${lit.subject} ${lit.relation} ${lit.value}`;
  return lit.positive ? core : `not ${core}`;
}

export interface LogLine {
  role: 'user' | 'agent' | 'system';
  text: string;
}

export class SessionViewModel {
  sessionId: string | null = null;
  persona = '';
  scenario = '';
  stateVersion = 0;
  kbItems: KbItem[] = [];
  decisionQuery: [string, string] | null = null;
  lastDecision: DecideResponse | null = null;
  lastExplanation: ExplainResponse | null = null;
  log: LogLine[] = [];

  constructor(private readonly client: ApiClient) {}

  private say(role: LogLine['role'], text: string): void {
    this.log.push({ role, text });
  }

  rankOf(itemId: string): KbItem | undefined {
    return this.kbItems.find((item) => item.id === itemId);
  }

  async connect(scenario: string, persona: string): Promise<void> {
    const session = await this.client.createSession(scenario, persona);
    this.sessionId = session.session_id;
    this.stateVersion = session.state_version;
    this.scenario = scenario;
    this.persona = persona;
    await this.refreshKb();
    this.say('system', `session opened: ${scenario} as ${persona}`);
  }

  async refreshKb(): Promise<void> {
    const view = await this.client.getKb(this.requireSession());
    this.kbItems = view.items;
    this.decisionQuery = view.decision_query;
    this.stateVersion = view.state_version;
  }

  private requireSession(): string {
    if (this.sessionId === null) throw new Error('no session open');
    return this.sessionId;
  }

  // Run a mutation with the current state_version; on a stale-version
  // conflict adopt the server's version and retry once.
  private async withVersion<T extends { state_version: number }>(
    run: (version: number) => Promise<T>,
  ): Promise<T> {
    try {
      const result = await run(this.stateVersion);
      this.stateVersion = result.state_version;
      return result;
    } catch (error) {
      if (error instanceof ApiError && error.status === 409 && error.stateVersion !== undefined) {
        this.say('system', 'state changed elsewhere; retrying with fresh version');
        const result = await run(error.stateVersion);
        this.stateVersion = result.state_version;
        return result;
      }
      throw error;
    }
  }

  async decide(): Promise<DecideResponse> {
    const sid = this.requireSession();
    this.say('user', 'decide');
    const result = await this.withVersion((v) => this.client.decide(sid, v));
    this.lastDecision = result;
    this.say('agent', `I concluded ${literalText(result.decision)}.`);
    return result;
  }

  async why(strategy: string, expected?: string): Promise<ExplainResponse> {
    const sid = this.requireSession();
    this.say('user', expected ? `why not ${expected}?` : `why? (${strategy})`);
    const result = await this.withVersion((v) =>
      this.client.explain(sid, strategy, { expected, stateVersion: v }),
    );
    this.lastExplanation = result;
    this.say('agent', result.rendered);
    return result;
  }

  async teach(payload: TeachPayload): Promise<void> {
    const sid = this.requireSession();
    this.say('user', `teach ${payload.action} ${payload.id}`);
    const result = await this.withVersion((v) => this.client.teach(sid, payload, v));
    await this.refreshKb();
    this.say(
      'agent',
      `noted: ${result.item} now at ${stars(result.rank, result.contested)}`,
    );
  }

  async addEvent(kind: string, item: string): Promise<void> {
    const sid = this.requireSession();
    const result = await this.withVersion((v) => this.client.addEvent(sid, kind, item, v));
    await this.refreshKb();
    this.say('system', `${kind}(${item}) -> ${stars(result.rank, result.contested)}`);
  }
}

// --- plain-string rendering ------------------------------------------------

export function renderKbRows(items: KbItem[]): string[] {
  return items.map((item) => {
    const extra = item.kind === 'rule' ? ` [${item.layer}, prio ${item.priority}]` : '';
    return `${item.id}  ${stars(item.rank, item.contested)}  ${item.text}${extra}`;
  });
}

export function renderExplanation(explanation: ExplainResponse, items: KbItem[]): string[] {
  const byId = new Map(items.map((item) => [item.id, item]));
  const lines = [explanation.rendered];
  for (const entry of explanation.top) {
    const item = byId.get(entry.id);
    const text = item ? item.text : entry.id;
    const flag = entry.defeated ? ' (defeated)' : '';
    lines.push(`  ${entry.id} ${stars(entry.rank, entry.contested)} ${text}${flag}`);
  }
  return lines;
}
