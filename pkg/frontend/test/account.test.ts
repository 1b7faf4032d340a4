import { describe, expect, it } from "vitest";
import { escapeHtml, renderAccount, renderUnknown } from "../src/account";
import type { UserDoc } from "../src/api";

const USER: UserDoc = {
  _id: "6C92D391",
  _rev: "2-abc",
  name: "Yerlan Berdaliyev",
  cash: 9495,
  history: [
    {
      at: 10500,
      items: [
        { uid: "E2003412", name: "MILK", cost: 120 },
        { uid: "E2003413", name: "BREAD", cost: 85 },
        { uid: "E2003414", name: "CHEESE", cost: 300 },
      ],
      total: 505,
    },
  ],
};

describe("renderAccount", () => {
  it("shows balance, one row per record, and the raw document", () => {
    const raw = '{"cash":9495}';
    const html = renderAccount(USER, raw);
    expect(html).toContain("Yerlan Berdaliyev");
    expect(html).toContain("<strong>9495</strong>");
    expect(html.match(/<tr><td>/g)).toHaveLength(1);
    expect(html).toContain("MILK (120), BREAD (85), CHEESE (300)");
    expect(html).toContain('<td class="num">505</td>');
    expect(html).toContain("&quot;cash&quot;:9495");
  });

  it("renders an empty history as a note, not a table", () => {
    const html = renderAccount({ ...USER, history: [] }, "{}");
    expect(html).toContain("no purchases yet");
    expect(html).not.toContain("<table");
  });

  it("escapes markup in store-provided strings", () => {
    const hostile = { ...USER, name: '<script>alert("x")</script>' };
    const html = renderAccount(hostile, "{}");
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });
});

describe("renderUnknown", () => {
  it("names the card uid, escaped", () => {
    expect(renderUnknown("AB<1>")).toContain("AB&lt;1&gt;");
  });
});

describe("escapeHtml", () => {
  it("covers the four specials", () => {
    expect(escapeHtml('&<>"')).toBe("&amp;&lt;&gt;&quot;");
  });
});
