/**
 * Minimal RFC 4180 CSV reader for the experiments metrics schema.
 */

export interface MetricsRow {
  experiment_id: string;
  construction: string;
  N: number | null;
  K: number | null;
  T: number | null;
  M: number | null;
  defectors: string;
  learner: string;
  mode: string;
  sampling_mode: string;
  replicates: number | null;
  seed: number | null;
  market_price: number | null;
  stderr: number | null;
  baseline_price: number | null;
  defector_utility_mean: number | null;
  regret_measured_max: number | null;
  regret_bound: number | null;
  bound_id: string;
  bound_value: number | null;
  pass: boolean | null;
}

export const REQUIRED_COLUMNS = [
  "experiment_id",
  "construction",
  "N",
  "K",
  "T",
  "M",
  "defectors",
  "learner",
  "mode",
  "sampling_mode",
  "replicates",
  "seed",
  "market_price",
  "stderr",
  "baseline_price",
  "defector_utility_mean",
  "regret_measured_max",
  "regret_bound",
  "bound_id",
  "bound_value",
  "pass",
];

/** Split raw CSV text into records, honoring quoted fields and CRLF. */
export function parseCsv(text: string): string[][] {
  const records: string[][] = [];
  let field = "";
  let record: string[] = [];
  let inQuotes = false;
  let i = 0;
  while (i < text.length) {
    const ch = text[i];
    if (inQuotes) {
      if (ch === '"') {
        if (text[i + 1] === '"') {
          field += '"';
          i += 2;
          continue;
        }
        inQuotes = false;
        i += 1;
        continue;
      }
      field += ch;
      i += 1;
      continue;
    }
    if (ch === '"') {
      inQuotes = true;
      i += 1;
    } else if (ch === ",") {
      record.push(field);
      field = "";
      i += 1;
    } else if (ch === "\r" && text[i + 1] === "\n") {
      record.push(field);
      records.push(record);
      field = "";
      record = [];
      i += 2;
    } else if (ch === "\n") {
      record.push(field);
      records.push(record);
      field = "";
      record = [];
      i += 1;
    } else {
      field += ch;
      i += 1;
    }
  }
  if (field.length > 0 || record.length > 0) {
    record.push(field);
    records.push(record);
  }
  return records;
}

function num(value: string): number | null {
  if (value === "") return null;
  const parsed = Number(value);
  if (Number.isNaN(parsed)) {
    throw new Error(`expected a number, got ${JSON.stringify(value)}`);
  }
  return parsed;
}

function bool(value: string): boolean | null {
  if (value === "") return null;
  if (value === "True" || value === "true") return true;
  if (value === "False" || value === "false") return false;
  throw new Error(`expected a boolean, got ${JSON.stringify(value)}`);
}

/** Parse a metrics CSV, validating that every schema column is present. */
export function readMetrics(text: string): MetricsRow[] {
  const records = parseCsv(text);
  if (records.length === 0) {
    throw new Error("empty CSV");
  }
  const header = records[0];
  for (const col of REQUIRED_COLUMNS) {
    if (!header.includes(col)) {
      throw new Error(`missing column: ${col}`);
    }
  }
  const idx = new Map(header.map((name, j) => [name, j]));
  const get = (rec: string[], name: string) => rec[idx.get(name)!] ?? "";
  const rows: MetricsRow[] = [];
  for (const rec of records.slice(1)) {
    if (rec.length === 1 && rec[0] === "") continue;
    rows.push({
      experiment_id: get(rec, "experiment_id"),
      construction: get(rec, "construction"),
      N: num(get(rec, "N")),
      K: num(get(rec, "K")),
      T: num(get(rec, "T")),
      M: num(get(rec, "M")),
      defectors: get(rec, "defectors"),
      learner: get(rec, "learner"),
      mode: get(rec, "mode"),
      sampling_mode: get(rec, "sampling_mode"),
      replicates: num(get(rec, "replicates")),
      seed: num(get(rec, "seed")),
      market_price: num(get(rec, "market_price")),
      stderr: num(get(rec, "stderr")),
      baseline_price: num(get(rec, "baseline_price")),
      defector_utility_mean: num(get(rec, "defector_utility_mean")),
      regret_measured_max: num(get(rec, "regret_measured_max")),
      regret_bound: num(get(rec, "regret_bound")),
      bound_id: get(rec, "bound_id"),
      bound_value: num(get(rec, "bound_value")),
      pass: bool(get(rec, "pass")),
    });
  }
  return rows;
}
