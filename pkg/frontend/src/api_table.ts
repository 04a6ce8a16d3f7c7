/**
 * Bundled API surface so the playground is useful out of the box.
 *
 * Members reuse the subword pool the synthetic training corpus draws from,
 * so any subword-level model ranks them meaningfully even though it has
 * never seen these exact type names.
 */
export const API_TABLE: Record<string, string[]> = {
  FileReader: [
    "read_line", "read_byte", "read_text", "open_stream", "close_stream",
    "get_path", "find_line", "load_buffer",
  ],
  FileWriter: [
    "write_line", "write_byte", "write_text", "open_stream", "close_stream",
    "save_file", "set_path", "make_file",
  ],
  Table: [
    "get_row", "get_col", "set_value", "find_index", "read_value",
    "write_value", "load_data", "save_data", "make_index",
  ],
  Buffer: [
    "read_byte", "write_byte", "get_value", "set_value", "find_byte",
    "load_stream", "save_stream", "close_stream",
  ],
};

/** Union of every member, for receivers we cannot bind to a type. */
export function allMembers(table: Record<string, string[]>): string[] {
  const seen = new Set<string>();
  for (const members of Object.values(table)) {
    for (const m of members) seen.add(m);
  }
  return [...seen].sort();
}
