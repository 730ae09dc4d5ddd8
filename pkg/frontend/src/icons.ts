/** Static category icons.
 *
 * The map is keyed by category name; unknown names fall back to a
 * neutral marker so the UI never blocks on missing art. */

export const CATEGORY_ICONS: Record<string, string> = {
  run: "▶",
  jump: "▲",
  throw: "●",
  lift: "■",
  swim: "▼",
  spin: "◆",
  kick: "◀",
  background: "∅",
};

export const FALLBACK_ICON = "○";

export function iconFor(categoryName: string): string {
  return CATEGORY_ICONS[categoryName] ?? FALLBACK_ICON;
}
