/**
 * Build an embedding table over every (class, joint) pair.
 *
 * Output follows the schema consumed by `kinegraph graphs`:
 * {"version":1, "classes":M, "joints":V, "dim":C, "prompt":..., "encoder":...,
 *  "class_names":[...], "joint_names":[...], "vectors": MxVxC}
 * plus an optional stored projection block for reproducibility.
 */

import { PROMPTS, PromptId, renderPrompt } from "./prompts.js";
import {
  STUB_NAME,
  STUB_NATIVE_DIM,
  applyProjection,
  randomProjection,
  stubEncode,
} from "./stub.js";

export class EncoderUnavailable extends Error {
  constructor(message: string) {
    super(message);
    this.name = "EncoderUnavailable";
  }
}

export class EmptyNameList extends Error {
  constructor(which: string) {
    super(`${which} name list is empty`);
    this.name = "EmptyNameList";
  }
}

export interface ExtractOptions {
  prompt: PromptId;
  stub: boolean;
  /** target dimension; omit to keep the encoder's native width */
  dim?: number;
}

export interface EmbeddingFile {
  version: 1;
  classes: number;
  joints: number;
  dim: number;
  prompt: PromptId;
  encoder: string;
  class_names: string[];
  joint_names: string[];
  vectors: number[][][];
  projection?: {
    rows: number;
    cols: number;
    seed_text: string;
    matrix: number[][];
  };
}

export function extract(
  classNames: string[],
  jointNames: string[],
  options: ExtractOptions,
): EmbeddingFile {
  if (classNames.length === 0) {
    throw new EmptyNameList("class");
  }
  if (jointNames.length === 0) {
    throw new EmptyNameList("joint");
  }
  if (!options.stub) {
    // a real text encoder is deliberately not bundled; offline runs use the
    // deterministic stub and keep the identical file shape
    throw new EncoderUnavailable(
      "no local text-encoder runtime is bundled; rerun with --stub",
    );
  }
  const tpl = PROMPTS[options.prompt];
  const nativeDim = STUB_NATIVE_DIM;
  const targetDim = options.dim ?? nativeDim;

  let projection: EmbeddingFile["projection"];
  if (targetDim !== nativeDim) {
    const seedText = `${options.prompt}|${targetDim}<-${nativeDim}`;
    projection = {
      rows: targetDim,
      cols: nativeDim,
      seed_text: seedText,
      matrix: randomProjection(targetDim, nativeDim, seedText),
    };
  }

  const vectors: number[][][] = classNames.map((className) =>
    jointNames.map((jointName) => {
      const sentence = renderPrompt(tpl, jointName, className);
      const native = stubEncode(sentence, nativeDim);
      return projection ? applyProjection(projection.matrix, native) : native;
    }),
  );

  const file: EmbeddingFile = {
    version: 1,
    classes: classNames.length,
    joints: jointNames.length,
    dim: targetDim,
    prompt: options.prompt,
    encoder: STUB_NAME,
    class_names: classNames,
    joint_names: jointNames,
    vectors,
  };
  if (projection) {
    file.projection = projection;
  }
  return file;
}

/** Self-check mirroring the consumer-side schema validation. */
export function validateEmbeddingFile(file: EmbeddingFile): void {
  if (file.version !== 1) {
    throw new Error(`/version: unsupported ${file.version}`);
  }
  if (file.vectors.length !== file.classes) {
    throw new Error("/vectors: class count mismatch");
  }
  for (const perClass of file.vectors) {
    if (perClass.length !== file.joints) {
      throw new Error("/vectors: joint count mismatch");
    }
    for (const vec of perClass) {
      if (vec.length !== file.dim) {
        throw new Error("/vectors: dim mismatch");
      }
      for (const x of vec) {
        if (!Number.isFinite(x)) {
          throw new Error("/vectors: non-finite entry");
        }
      }
    }
  }
  if (file.class_names.length !== file.classes) {
    throw new Error("/class_names: length mismatch");
  }
  if (file.joint_names.length !== file.joints) {
    throw new Error("/joint_names: length mismatch");
  }
}

export function serialize(file: EmbeddingFile): string {
  return JSON.stringify(file, null, 2) + "\n";
}
