// Pure HTML renderers for the account page: balance and purchase history as
// fetched from the store, plus the raw document for exact comparison.

import type { UserDoc } from "./api";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderAccount(user: UserDoc, raw: string): string {
  const rows = user.history
    .map((rec) => {
      const items = rec.items
        .map((i) => `${escapeHtml(i.name)} (${i.cost})`)
        .join(", ");
      return (
        `<tr><td>${rec.at}</td>` +
        `<td>${items}</td>` +
        `<td class="num">${rec.total}</td></tr>`
      );
    })
    .join("");
  const table = user.history.length
    ? `<table class="history"><thead><tr>` +
      `<th>time</th><th>items</th><th>total</th></tr></thead>` +
      `<tbody>${rows}</tbody></table>`
    : `<p class="empty">no purchases yet</p>`;
  return (
    `<h2>${escapeHtml(user.name)}</h2>` +
    `<p class="balance">balance <strong>${user.cash}</strong></p>` +
    table +
    `<details><summary>stored document</summary>` +
    `<pre class="raw">${escapeHtml(raw)}</pre></details>`
  );
}

export function renderUnknown(uid: string): string {
  return `<h2>unknown user</h2><p>no account for card ${escapeHtml(uid)}</p>`;
}
