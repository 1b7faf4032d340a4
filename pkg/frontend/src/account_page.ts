// Account page: balance and purchase history for one card, straight from the
// store document; re-polled so a payment on the cart shows up on refresh.

import { PanelApi } from "./api";
import { renderAccount, renderUnknown } from "./account";

const POLL_MS = 500;

function main(): void {
  const api = new PanelApi();
  const uid = new URLSearchParams(window.location.search).get("uid") ?? "";
  const target = document.getElementById("account");
  const heading = document.getElementById("card-uid");
  if (!target || !heading) throw new Error("missing page skeleton");
  heading.textContent = uid || "(no card)";

  const refresh = async (): Promise<void> => {
    if (!uid) {
      target.innerHTML = renderUnknown("");
      return;
    }
    try {
      const user = await api.getUser(uid);
      target.innerHTML =
        user.doc === null ? renderUnknown(uid) : renderAccount(user.doc, user.raw);
    } catch (err) {
      target.innerHTML = `<p class="empty">offline: ${String(err)}</p>`;
    }
  };

  void refresh();
  window.setInterval(() => void refresh(), POLL_MS);
}

main();
