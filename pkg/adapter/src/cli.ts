/**
 * Standalone export script.
 *
 *   node dist/cli.js --qa qa.jsonl --images DIR --out DIR [options]
 *   node dist/cli.js --self-test
 *
 * Flags mirror the export spec: checkpoint shape (--layers, --heads,
 * --d-model, --vocab, --seed), region tokenization (--grid), layer
 * selection (--layer-select all|0,2,...), and the recorded gradient
 * target (--grad-target).
 */

import { mkdirSync } from "node:fs";
import { DEFAULT_GRAD_TARGET, ExportError, ExportSpec, exportAll } from "./export.js";
import { selfTest } from "./selftest.js";

interface Args {
  [key: string]: string | boolean;
}

function parseArgs(argv: string[]): Args {
  const args: Args = {};
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) throw new ExportError(`unexpected argument ${arg}`);
    const name = arg.slice(2);
    if (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
      args[name] = argv[++i];
    } else {
      args[name] = true;
    }
  }
  return args;
}

function intFlag(args: Args, name: string, fallback: number): number {
  const raw = args[name];
  if (raw === undefined) return fallback;
  const value = parseInt(String(raw), 10);
  if (!Number.isFinite(value) || value < 1) {
    throw new ExportError(`--${name} must be a positive integer, got ${raw}`);
  }
  return value;
}

function main(): number {
  let args: Args;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (e) {
    console.error(String(e));
    return 2;
  }

  if (args["self-test"]) {
    const report = selfTest();
    for (const c of report.cases) {
      console.error(`${c.passed ? "PASS" : "FAIL"} ${c.name}: ${c.detail}`);
    }
    return report.passed ? 0 : 1;
  }

  if (!args["qa"] || !args["images"] || !args["out"]) {
    console.error("usage: --qa FILE --images DIR --out DIR "
      + "[--seed N --layers N --heads N --d-model N --vocab N --grid N "
      + "--layer-select all|i,j --grad-target TEXT --regions-out FILE]");
    return 2;
  }

  try {
    const layers = intFlag(args, "layers", 2);
    let layerSelection: number[] | null = null;
    const rawSelect = args["layer-select"];
    if (rawSelect !== undefined && rawSelect !== "all") {
      layerSelection = String(rawSelect)
        .split(",")
        .map((s) => parseInt(s.trim(), 10));
      if (layerSelection.some((v) => !Number.isFinite(v))) {
        throw new ExportError(`bad --layer-select ${rawSelect}`);
      }
    }
    const spec: ExportSpec = {
      checkpoint: {
        layers,
        heads: intFlag(args, "heads", 2),
        dModel: intFlag(args, "d-model", 16),
        vocab: intFlag(args, "vocab", 64),
        seed: intFlag(args, "seed", 42),
      },
      grid: intFlag(args, "grid", 2),
      layerSelection,
      gradTarget: String(args["grad-target"] ?? DEFAULT_GRAD_TARGET),
    };
    mkdirSync(String(args["out"]), { recursive: true });
    const results = exportAll(
      spec,
      String(args["qa"]),
      String(args["images"]),
      String(args["out"]),
      args["regions-out"] ? String(args["regions-out"]) : null,
    );
    for (const r of results) {
      console.error(`wrote ${r.path} sha256=${r.sha256.slice(0, 12)}`);
    }
    console.log(JSON.stringify(results.map(({ path, sha256 }) => ({ path, sha256 }))));
    return 0;
  } catch (e) {
    console.error(String(e));
    return 1;
  }
}

process.exit(main());
