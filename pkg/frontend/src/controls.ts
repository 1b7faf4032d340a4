// Which inputs are worth offering per cart phase. Pure affordance: the
// firmware still decides what an event does; this only greys out dead ends.

import type { Button } from "./api";

export interface Enabled {
  card: boolean;
  tag: boolean;
  buttons: Button[];
}

const ALL: Button[] = ["up", "down", "delete", "pay", "reset"];

export function enabledControls(phase: string): Enabled {
  switch (phase) {
    case "await_card":
      return { card: true, tag: false, buttons: [] };
    case "scanning":
      return { card: false, tag: true, buttons: ALL };
    default:
      // boot, joining_wifi, connecting_server, showing_user, paying, fault:
      // the firmware drops every button and swipe in these phases
      return { card: false, tag: false, buttons: [] };
  }
}
