#!/usr/bin/env node
/**
 * extract-embeddings --classes classes.txt --joints joints.txt --prompt p3
 *                    --out emb.json [--dim 256] [--stub]
 *
 * Name files hold one name per line (blank lines ignored). The output file
 * is written atomically and validates against the consumer's schema.
 */

import { readFileSync, renameSync, writeFileSync } from "node:fs";
import { PROMPTS, PromptId } from "./prompts.js";
import {
  EmptyNameList,
  EncoderUnavailable,
  extract,
  serialize,
  validateEmbeddingFile,
} from "./extract.js";

interface parsedArgs {
  classes?: string;
  joints?: string;
  prompt: PromptId;
  out?: string;
  dim?: number;
  stub: boolean;
}

function usage(): string {
  return (
    "usage: extract-embeddings --classes <file> --joints <file> " +
    "--prompt p1..p6 --out <file> [--dim N] [--stub]"
  );
}

function parseArgs(argv: string[]): parsedArgs {
  const args: parsedArgs = { prompt: "p3", stub: false };
  for (let i = 0; i < argv.length; i += 1) {
    const flag = argv[i];
    switch (flag) {
      case "--classes":
        args.classes = argv[++i];
        break;
      case "--joints":
        args.joints = argv[++i];
        break;
      case "--prompt": {
        const value = argv[++i];
        if (!(value in PROMPTS)) {
          throw new Error(`unknown prompt ${value}; expected p1..p6`);
        }
        args.prompt = value as PromptId;
        break;
      }
      case "--out":
        args.out = argv[++i];
        break;
      case "--dim":
        args.dim = Number(argv[++i]);
        if (!Number.isInteger(args.dim) || args.dim < 1) {
          throw new Error("--dim must be a positive integer");
        }
        break;
      case "--stub":
        args.stub = true;
        break;
      case "--help":
      case "-h":
        console.log(usage());
        process.exit(0);
        break;
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  if (!args.classes || !args.joints || !args.out) {
    throw new Error(usage());
  }
  return args;
}

function readNames(path: string): string[] {
  return readFileSync(path, "utf-8")
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
}

export function main(argv: string[]): number {
  let args: parsedArgs;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`extract-embeddings: ${(err as Error).message}`);
    return 2;
  }
  try {
    const file = extract(readNames(args.classes!), readNames(args.joints!), {
      prompt: args.prompt,
      stub: args.stub,
      dim: args.dim,
    });
    validateEmbeddingFile(file);
    const tmp = `${args.out}.tmp`;
    writeFileSync(tmp, serialize(file), "utf-8");
    renameSync(tmp, args.out!);
    console.log(args.out);
    return 0;
  } catch (err) {
    if (err instanceof EncoderUnavailable || err instanceof EmptyNameList) {
      console.error(`extract-embeddings: ${err.name}: ${err.message}`);
      return 2;
    }
    console.error(`extract-embeddings: ${(err as Error).message}`);
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
