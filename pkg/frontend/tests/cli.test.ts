import assert from "node:assert/strict";
import { test } from "node:test";
import { mkdtempSync, readFileSync, existsSync } from "node:fs";
import { tmpdir } from "node:os";
import path from "node:path";
import { fileURLToPath } from "node:url";

import { main } from "../src/cli.js";

const here = path.dirname(fileURLToPath(import.meta.url));
const fixture = path.join(here, "..", "..", "testdata", "thm3.csv");

test("render writes an SVG and a caption file", async () => {
  const dir = mkdtempSync(path.join(tmpdir(), "plots-"));
  const out = path.join(dir, "fig.svg");
  const code = await main([
    "render", "--csv", fixture, "--kind", "price_vs_N", "--out", out,
  ]);
  assert.equal(code, 0);
  assert.ok(existsSync(out));
  const svg = readFileSync(out, "utf8");
  assert.ok(svg.startsWith("<svg"));
  const caption = readFileSync(path.join(dir, "fig.caption.txt"), "utf8");
  assert.ok(caption.includes("--kind price_vs_N"));
});

test("missing flags are usage errors", async () => {
  assert.equal(await main(["render", "--csv", fixture]), 1);
  assert.equal(await main(["nope"]), 1);
});

test("unreadable csv path fails cleanly", async () => {
  const code = await main([
    "render", "--csv", "/no/such/file.csv", "--kind", "price_vs_N",
    "--out", "/tmp/x.svg",
  ]);
  assert.equal(code, 1);
});

test("figure kind is validated", async () => {
  const code = await main([
    "render", "--csv", fixture, "--kind", "pie", "--out", "/tmp/x.svg",
  ]);
  assert.equal(code, 1);
});
