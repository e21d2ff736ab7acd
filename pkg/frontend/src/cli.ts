/**
 * Thin CLI: render --csv <path> --kind <kind> --out <image.svg>
 *
 * Writes the SVG plus a sibling .caption.txt containing the exact
 * reproduction command. Exit codes: 0 rendered, 1 usage or validation error.
 */

import { readFile, writeFile } from "fs/promises";
import path from "path";
import process from "process";

import { readMetrics } from "./csv.js";
import { FigureKind, renderFigure } from "./figures.js";

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 1) {
    const token = argv[i];
    if (token.startsWith("--")) {
      const value = argv[i + 1];
      if (value === undefined || value.startsWith("--")) {
        throw new Error(`flag ${token} needs a value`);
      }
      args.set(token.slice(2), value);
      i += 1;
    }
  }
  return args;
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  if (command !== "render") {
    console.error("usage: render --csv <metrics.csv> --kind <kind> --out <file.svg>");
    return 1;
  }
  let args: Map<string, string>;
  try {
    args = parseArgs(rest);
  } catch (err) {
    console.error(String(err));
    return 1;
  }
  const csvPath = args.get("csv");
  const kind = args.get("kind") as FigureKind | undefined;
  const outPath = args.get("out");
  if (!csvPath || !kind || !outPath) {
    console.error("missing required flags: --csv, --kind, --out");
    return 1;
  }
  if (!["price_vs_N", "price_vs_M", "bound_table"].includes(kind)) {
    console.error(`unknown figure kind: ${kind}`);
    return 1;
  }
  let text: string;
  try {
    text = await readFile(csvPath, "utf8");
  } catch (err) {
    console.error(`cannot read ${csvPath}: ${err}`);
    return 1;
  }
  let figure;
  try {
    const rows = readMetrics(text);
    const invocation = `node dist/src/cli.js render --csv ${csvPath} --kind ${kind} --out ${outPath}`;
    figure = renderFigure(kind, rows, invocation);
  } catch (err) {
    console.error(String(err));
    return 1;
  }
  await writeFile(outPath, figure.svg, "utf8");
  const captionPath = outPath.replace(/\.svg$/, "") + ".caption.txt";
  await writeFile(captionPath, figure.caption + "\n", "utf8");
  const primary = figure.points.filter((p) => p.primary);
  console.log(
    `wrote ${path.resolve(outPath)} (${primary.length} primary points, ` +
      `all in band: ${figure.allPrimaryInBand})`
  );
  return 0;
}

const isDirect =
  process.argv[1] !== undefined &&
  path.resolve(process.argv[1]) === new URL(import.meta.url).pathname;
if (isDirect) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
