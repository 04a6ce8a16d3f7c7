/**
 * Pure editor-state helpers: trigger detection, candidate scoping and
 * completion insertion. No DOM here, which keeps them trivially testable.
 */

export interface CompletionTrigger {
  /** Identifier immediately before the dot. */
  receiver: string;
  /** Buffer prefix up to and including the dot, sent as model context. */
  context: string;
}

const IDENT = /[A-Za-z_][A-Za-z0-9_]*$/;

/**
 * A completion point is a "." typed directly after an identifier; returns
 * null anywhere else (numbers, whitespace, start of buffer...).
 */
export function triggerAt(buffer: string, cursor: number): CompletionTrigger | null {
  const prefix = buffer.slice(0, cursor);
  if (!prefix.endsWith(".")) return null;
  const m = IDENT.exec(prefix.slice(0, -1));
  if (!m) return null;
  return { receiver: m[0], context: prefix };
}

/** Insert the accepted candidate at the cursor, exactly as returned. */
export function insertCompletion(
  buffer: string, cursor: number, name: string,
): { buffer: string; cursor: number } {
  return {
    buffer: buffer.slice(0, cursor) + name + buffer.slice(cursor),
    cursor: cursor + name.length,
  };
}

function tokenize(text: string): string[] {
  return text.match(/[A-Za-z_][A-Za-z0-9_]*|[^\sA-Za-z0-9_]/g) ?? [];
}

/**
 * Resolve the candidate list for a receiver against the bundled API table,
 * mirroring the service's scope provider: the most recent `recv = Type (...)`
 * or `import Type as recv` binding wins, otherwise fall back to the union of
 * all members.
 */
export function resolveCandidates(
  table: Record<string, string[]>, context: string, receiver: string,
  union: string[],
): string[] {
  const toks = tokenize(context);
  let bound: string | null = null;
  for (let i = 0; i < toks.length; i++) {
    if (toks[i] === receiver && toks[i + 1] === "=" && toks[i + 2] in table) {
      bound = toks[i + 2];
    }
    if (toks[i] === "import" && toks[i + 1] in table) {
      const alias = toks[i + 2] === "as" ? toks[i + 3] : toks[i + 1];
      if (alias === receiver) bound = toks[i + 1];
    }
  }
  return bound ? [...table[bound]] : union;
}
