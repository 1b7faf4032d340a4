// Front panel page: mirrors one cart's OLED and forwards swipes and button
// presses as cart events. All state lives server-side; this page only polls.

import { PanelApi, type Button } from "./api";
import { enabledControls } from "./controls";
import { paintBitmap } from "./oled";
import { decodePbmHex } from "./pbm";

const POLL_MS = 500;
const BUTTONS: Button[] = ["up", "down", "delete", "pay", "reset"];

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

function cartIdFromUrl(): string {
  const id = new URLSearchParams(window.location.search).get("cart") ?? "c1";
  return /^[A-Za-z0-9_-]+$/.test(id) ? id : "c1";
}

function main(): void {
  const api = new PanelApi();
  const cartId = cartIdFromUrl();
  const canvas = el<HTMLCanvasElement>("oled");
  const asciiPre = el<HTMLPreElement>("ascii");
  const phaseLabel = el<HTMLElement>("phase");
  const status = el<HTMLElement>("status");
  const cardInput = el<HTMLInputElement>("card-uid");
  const tagInput = el<HTMLInputElement>("tag-uid");
  const accountLink = el<HTMLAnchorElement>("account-link");
  el<HTMLElement>("cart-name").textContent = cartId;

  let lastPbm = "";

  const refresh = async (): Promise<void> => {
    try {
      const frame = await api.getFrame(cartId);
      phaseLabel.textContent = frame.phase;
      asciiPre.textContent = frame.ascii;
      if (frame.pbm !== lastPbm) {
        lastPbm = frame.pbm;
        paintBitmap(canvas, decodePbmHex(frame.pbm));
      }
      const enabled = enabledControls(frame.phase);
      cardInput.disabled = !enabled.card;
      el<HTMLButtonElement>("swipe-card").disabled = !enabled.card;
      tagInput.disabled = !enabled.tag;
      el<HTMLButtonElement>("swipe-tag").disabled = !enabled.tag;
      for (const name of BUTTONS) {
        el<HTMLButtonElement>(`btn-${name}`).disabled =
          !enabled.buttons.includes(name);
      }
      status.textContent = "";
    } catch (err) {
      status.textContent = `offline: ${String(err)}`;
    }
  };

  const send = async (event: Parameters<PanelApi["postEvent"]>[1]) => {
    const result = await api.postEvent(cartId, event);
    if (result.error) status.textContent = `rejected: ${result.error}`;
    await refresh();
  };

  el<HTMLButtonElement>("swipe-card").addEventListener("click", () => {
    const uid = cardInput.value.trim();
    if (!uid) return;
    accountLink.href = `account.html?uid=${encodeURIComponent(uid)}`;
    accountLink.classList.remove("hidden");
    void send({ card: uid });
  });
  el<HTMLButtonElement>("swipe-tag").addEventListener("click", () => {
    const uid = tagInput.value.trim();
    if (!uid) return;
    tagInput.value = "";
    void send({ tag: uid });
  });
  for (const name of BUTTONS) {
    el<HTMLButtonElement>(`btn-${name}`).addEventListener("click", () => {
      void send({ button: name });
    });
  }

  void refresh();
  window.setInterval(() => void refresh(), POLL_MS);
}

main();
