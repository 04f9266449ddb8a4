/**
 * Prompt templates pairing an action class [C] with a joint name [J].
 *
 * The six templates are fixed; rendered sentences must be byte-stable since
 * the stub encoder derives embeddings from the exact sentence text.
 */

export type PromptId = "p1" | "p2" | "p3" | "p4" | "p5" | "p6";

export interface PromptTemplate {
  id: PromptId;
  template: string;
}

export const PROMPTS: Record<PromptId, PromptTemplate> = {
  p1: { id: "p1", template: "[J] function in [C]." },
  p2: { id: "p2", template: "What happens to [J] when a person is [C]?" },
  p3: { id: "p3", template: "What will [J] act like when [C]?" },
  p4: { id: "p4", template: "When [C][J] of human body." },
  p5: { id: "p5", template: "When [C] what will [J] act like?" },
  p6: { id: "p6", template: "When a person is [C], [J] is in motion." },
};

export class MissingSlot extends Error {
  constructor(slot: string, template: string) {
    super(`template ${JSON.stringify(template)} is missing slot ${slot}`);
    this.name = "MissingSlot";
  }
}

function countOccurrences(haystack: string, needle: string): number {
  let count = 0;
  let idx = haystack.indexOf(needle);
  while (idx !== -1) {
    count += 1;
    idx = haystack.indexOf(needle, idx + needle.length);
  }
  return count;
}

/** Validate that both slots appear exactly once. */
export function validateTemplate(tpl: PromptTemplate): void {
  for (const slot of ["[J]", "[C]"]) {
    const n = countOccurrences(tpl.template, slot);
    if (n !== 1) {
      throw new MissingSlot(slot, tpl.template);
    }
  }
}

/** Substitute joint and class names into the template, byte-exact. */
export function renderPrompt(
  tpl: PromptTemplate,
  jointName: string,
  className: string,
): string {
  if (!jointName || !className) {
    throw new Error("joint and class names must be nonempty");
  }
  validateTemplate(tpl);
  return tpl.template.replace("[J]", jointName).replace("[C]", className);
}
