// DOM shell: wires buttons and inputs to the SessionViewModel and repaints
// from its state after every action. Everything interactive is a real
// <button> or labelled form control, so keyboard navigation works for free.

import { ApiClient } from './api.js';
import { renderExplanation, renderKbRows, SessionViewModel } from './model.js';

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function repaint(model: SessionViewModel): void {
  const logNode = byId<HTMLUListElement>('log');
  logNode.replaceChildren(
    ...model.log.map((line) => {
      const li = document.createElement('li');
      li.className = `line-${line.role}`;
      li.textContent = `${line.role}: ${line.text}`;
      return li;
    }),
  );
  logNode.scrollTop = logNode.scrollHeight;

  const kbNode = byId<HTMLPreElement>('kb');
  kbNode.textContent = renderKbRows(model.kbItems).join('\n');

  const explanationNode = byId<HTMLPreElement>('explanation');
  explanationNode.textContent = model.lastExplanation
    ? renderExplanation(model.lastExplanation, model.kbItems).join('\n')
    : '';

  byId<HTMLSpanElement>('version').textContent = String(model.stateVersion);
}

async function guard(model: SessionViewModel, action: () => Promise<unknown>): Promise<void> {
  try {
    await action();
  } catch (error) {
    model.log.push({ role: 'system', text: `error: ${(error as Error).message}` });
  }
  repaint(model);
}

export function start(): void {
  const client = new ApiClient('');
  const model = new SessionViewModel(client);

  const scenarioSelect = byId<HTMLSelectElement>('scenario');
  client.listScenarios().then(({ scenarios }) => {
    scenarioSelect.replaceChildren(
      ...scenarios.map((name) => new Option(name, name)),
    );
  });

  byId<HTMLButtonElement>('connect').addEventListener('click', () =>
    guard(model, () =>
      model.connect(scenarioSelect.value, byId<HTMLInputElement>('persona').value),
    ),
  );
  byId<HTMLButtonElement>('decide').addEventListener('click', () =>
    guard(model, () => model.decide()),
  );
  byId<HTMLButtonElement>('why').addEventListener('click', () =>
    guard(model, () => model.why(byId<HTMLSelectElement>('strategy').value)),
  );
  byId<HTMLButtonElement>('why-not').addEventListener('click', () =>
    guard(model, () =>
      model.why('contrastive', byId<HTMLInputElement>('expected').value),
    ),
  );

  const teachForm = byId<HTMLFormElement>('teach-form');
  teachForm.addEventListener('submit', (event) => {
    event.preventDefault();
    const [id, subject, relation, value] = ['fact-id', 'fact-subject', 'fact-relation', 'fact-value']
      .map((name) => byId<HTMLInputElement>(name).value.trim());
    guard(model, () =>
      model.teach({ action: 'assert_fact', id, subject, relation, value }),
    );
  });
}

if (typeof document !== 'undefined') {
  document.addEventListener('DOMContentLoaded', start);
}
