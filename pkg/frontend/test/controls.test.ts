import { describe, expect, it } from "vitest";
import { enabledControls } from "../src/controls";

describe("enabledControls", () => {
  it("offers only the card reader while awaiting a card", () => {
    expect(enabledControls("await_card")).toEqual({
      card: true,
      tag: false,
      buttons: [],
    });
  });

  it("offers tags and all five buttons while scanning", () => {
    const enabled = enabledControls("scanning");
    expect(enabled.card).toBe(false);
    expect(enabled.tag).toBe(true);
    expect(enabled.buttons).toEqual(["up", "down", "delete", "pay", "reset"]);
  });

  it("offers nothing in passive phases", () => {
    for (const phase of ["boot", "joining_wifi", "connecting_server",
                         "showing_user", "paying", "fault", "bogus"]) {
      expect(enabledControls(phase)).toEqual({
        card: false,
        tag: false,
        buttons: [],
      });
    }
  });
});
