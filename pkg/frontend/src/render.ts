/** Storyline rendering.
 *
 * renderStoryline is a pure function of the layout payload plus a small
 * view snapshot, returning an SVG document string. Callers diff or
 * snapshot the output; nothing here touches the DOM or the network.
 *
 * Scene, back to front: cluster contour bands (skipped when the layout
 * has fewer than two lines), one polyline per action (thick when the
 * action is annotated), a glyph per sampled frame (star when the frame
 * carries an annotation, circle otherwise, orange when the frame is a
 * cluster representative), overlays for pending corrections, the action
 * length histogram on the right, and a strip of representative frames
 * along the bottom. Without a media base URL the strip degrades to
 * plain frame-number chips.
 */

import { iconFor } from "./icons.js";
import type { Correction, LayoutLine, LayoutPayload, LayoutPoint } from "./types.js";

export const PALETTE = [
  "#4269d0", "#efb118", "#ff725c", "#6cc5b0", "#3ca951",
  "#ff8ab7", "#a463f2", "#97bbf5", "#9c6b4e", "#9498a0",
];

export const REPRESENTATIVE_COLOR = "#ff8c00";

export interface RenderOptions {
  selectedAction?: number | null;
  pending?: Correction[];
  categoryName?: string | null;
  mediaBase?: string | null;
  xStep?: number;
  yStep?: number;
  margin?: number;
}

const HIST_PANEL_WIDTH = 150;
const STRIP_HEIGHT = 40;
const CHIP_WIDTH = 44;
const CHIP_HEIGHT = 24;

function fmt(v: number): string {
  return v.toFixed(2);
}

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function isFiniteNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function isCoordPair(v: unknown): v is [number, number] {
  return (
    Array.isArray(v) && v.length === 2 && isFiniteNumber(v[0]) && isFiniteNumber(v[1])
  );
}

/** Returns a human-readable defect, or null when the payload is
 * renderable. Only structural problems count; extra keys are fine. */
export function layoutDefect(layout: unknown): string | null {
  if (typeof layout !== "object" || layout === null || Array.isArray(layout)) {
    return "layout is not an object";
  }
  const obj = layout as Record<string, unknown>;
  if (!Array.isArray(obj.lines)) {
    return "layout has no lines array";
  }
  for (const line of obj.lines) {
    if (typeof line !== "object" || line === null) {
      return "line is not an object";
    }
    const ln = line as Record<string, unknown>;
    if (!isFiniteNumber(ln.action)) {
      return "line has no action id";
    }
    if (!Array.isArray(ln.points) || ln.points.length === 0) {
      return `line ${ln.action} has no points`;
    }
    for (const point of ln.points) {
      const pt = point as Record<string, unknown>;
      if (
        typeof point !== "object" || point === null ||
        !isFiniteNumber(pt.col) || !isFiniteNumber(pt.y) || !isFiniteNumber(pt.frame)
      ) {
        return `line ${ln.action} has a malformed point`;
      }
    }
  }
  if (obj.contours !== undefined) {
    if (!Array.isArray(obj.contours)) {
      return "contours is not an array";
    }
    for (const band of obj.contours) {
      if (typeof band !== "object" || band === null) {
        return "contour band is not an object";
      }
      const bd = band as Record<string, unknown>;
      if (!Array.isArray(bd.top) || !Array.isArray(bd.bottom)) {
        return "contour band is missing top or bottom edge";
      }
      if (![...bd.top, ...bd.bottom].every(isCoordPair)) {
        return "contour band has a malformed coordinate";
      }
    }
  }
  if (obj.representatives !== undefined && !Array.isArray(obj.representatives)) {
    return "representatives is not an array";
  }
  return null;
}

function errorPanel(reason: string): string {
  const parts = [
    '<?xml version="1.0" encoding="UTF-8"?>',
    '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="480.00" ' +
      'height="120.00" viewBox="0 0 480.00 120.00" data-error="true">',
    '<rect x="0.50" y="0.50" width="479.00" height="119.00" fill="#fff5f5" ' +
      'stroke="#d43f3f" stroke-width="1.0"/>',
    '<text x="20.00" y="48.00" font-family="sans-serif" font-size="16" ' +
      'fill="#d43f3f">storyline unavailable</text>',
    '<text x="20.00" y="76.00" font-family="sans-serif" font-size="12" ' +
      `fill="#6b2b2b">${escapeXml(reason)}</text>`,
    "</svg>",
  ];
  return parts.join("\n") + "\n";
}

function starPoints(cx: number, cy: number, rOuter: number, rInner: number): string {
  const pts: string[] = [];
  for (let i = 0; i < 10; i += 1) {
    const r = i % 2 === 0 ? rOuter : rInner;
    const angle = -Math.PI / 2 + (i * Math.PI) / 5;
    pts.push(`${fmt(cx + r * Math.cos(angle))},${fmt(cy + r * Math.sin(angle))}`);
  }
  return pts.join(" ");
}

interface Placement {
  x: number;
  y: number;
  action: number;
}

export function renderStoryline(layout: unknown, options: RenderOptions = {}): string {
  const defect = layoutDefect(layout);
  if (defect !== null) {
    return errorPanel(defect);
  }
  const payload = layout as LayoutPayload;
  const xStep = options.xStep ?? 48.0;
  const yStep = options.yStep ?? 22.0;
  const margin = options.margin ?? 40.0;
  const lines: LayoutLine[] = payload.lines;
  const contours = payload.contours ?? [];
  const representatives = new Set((payload.representatives ?? []).map((f) => Math.trunc(f)));
  const pending = options.pending ?? [];

  const pointCols = lines.flatMap((ln) => ln.points.map((pt) => pt.col));
  const bandYs = contours.flatMap((bd) => [...bd.top, ...bd.bottom].map((cy) => cy[1]));
  const maxCol = Math.max(
    isFiniteNumber(payload.columns) ? payload.columns - 1 : 0,
    ...(pointCols.length > 0 ? pointCols : [0]),
  );
  const maxY = Math.max(
    0,
    ...lines.flatMap((ln) => ln.points.map((pt) => pt.y)),
    ...bandYs,
  );

  const storyWidth = margin * 2 + maxCol * xStep;
  const plotHeight = margin * 2 + maxY * yStep;
  const counts = payload.histogram?.counts ?? [];
  const edges = payload.histogram?.edges ?? [];
  const panelWidth = counts.length > 0 ? HIST_PANEL_WIDTH : 0;
  const stripHeight = representatives.size > 0 ? STRIP_HEIGHT : 0;
  const stripWidth =
    representatives.size > 0
      ? margin * 2 + representatives.size * (CHIP_WIDTH + 6)
      : 0;
  const width = Math.max(storyWidth + panelWidth, stripWidth);
  const height = plotHeight + stripHeight;

  const X = (col: number) => margin + col * xStep;
  const Y = (y: number) => margin + y * yStep;

  const parts: string[] = [
    '<?xml version="1.0" encoding="UTF-8"?>',
    '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" ' +
      `width="${fmt(width)}" height="${fmt(height)}" ` +
      `viewBox="0 0 ${fmt(width)} ${fmt(height)}">`,
    `<rect width="${fmt(width)}" height="${fmt(height)}" fill="#ffffff"/>`,
  ];

  if (options.categoryName) {
    const icon = iconFor(options.categoryName);
    parts.push(
      `<text x="${fmt(margin)}" y="20.00" font-family="sans-serif" ` +
        'font-size="13" fill="#30343a" class="title">' +
        `${escapeXml(icon)} ${escapeXml(options.categoryName)}</text>`,
    );
  }

  // A single storyline needs no band behind it.
  if (lines.length >= 2) {
    for (const band of contours) {
      const color = PALETTE[Math.trunc(band.cluster) % PALETTE.length];
      const top = band.top.map(([c, y]) => `${fmt(X(c))},${fmt(Y(y))}`);
      const bottom = band.bottom.map(([c, y]) => `${fmt(X(c))},${fmt(Y(y))}`);
      parts.push(
        `<polygon class="contour" data-cluster="${Math.trunc(band.cluster)}" ` +
          `points="${[...top, ...bottom].join(" ")}" fill="${color}" ` +
          'opacity="0.12" stroke="none"/>',
      );
    }
  }

  const placements = new Map<number, Placement>();
  const lineByAction = new Map<number, LayoutLine>();
  for (const line of lines) {
    lineByAction.set(line.action, line);
    for (const point of line.points) {
      placements.set(point.frame, { x: X(point.col), y: Y(point.y), action: line.action });
    }
  }

  for (const line of lines) {
    const color = PALETTE[Math.trunc(line.action) % PALETTE.length];
    const selected = options.selectedAction === line.action;
    const strokeWidth = (line.thick ? 4.0 : 1.6) + (selected ? 1.2 : 0);
    const pts = line.points
      .map((pt) => `${fmt(X(pt.col))},${fmt(Y(pt.y))}`)
      .join(" ");
    const selectedAttr = selected ? ' data-selected="true"' : "";
    parts.push(
      `<polyline class="line" data-action="${line.action}"${selectedAttr} ` +
        `points="${pts}" fill="none" stroke="${color}" ` +
        `stroke-width="${fmt(strokeWidth)}" stroke-linejoin="round" ` +
        'stroke-linecap="round"/>',
    );
    const first = line.points[0] as LayoutPoint;
    parts.push(
      `<text x="${fmt(X(first.col) - 6)}" y="${fmt(Y(first.y) + 3)}" ` +
        'text-anchor="end" font-family="sans-serif" font-size="10" ' +
        `fill="${color}">${line.action}</text>`,
    );
  }

  for (const line of lines) {
    const color = PALETTE[Math.trunc(line.action) % PALETTE.length];
    for (const point of line.points) {
      const cx = X(point.col);
      const cy = Y(point.y);
      const frame = Math.trunc(point.frame);
      const isRep = representatives.has(frame);
      const fill = isRep ? REPRESENTATIVE_COLOR : color;
      const repAttr = isRep ? ' data-representative="true"' : "";
      if (point.annotated) {
        parts.push(
          `<polygon class="glyph star" data-frame="${frame}"${repAttr} ` +
            `points="${starPoints(cx, cy, 4.8, 1.9)}" fill="${fill}" ` +
            'stroke="#ffffff" stroke-width="0.8"/>',
        );
      } else {
        parts.push(
          `<circle class="glyph circle" data-frame="${frame}"${repAttr} ` +
            `cx="${fmt(cx)}" cy="${fmt(cy)}" r="2.60" fill="${fill}" ` +
            'stroke="#ffffff" stroke-width="0.8"/>',
        );
      }
    }
  }

  for (const correction of pending) {
    parts.push(...pendingOverlay(correction, placements, lineByAction, X, Y));
  }

  if (counts.length > 0) {
    parts.push(...histogramPanel(counts, edges, storyWidth, plotHeight, margin));
  }

  if (representatives.size > 0) {
    parts.push(
      ...frameStrip(
        [...representatives].sort((a, b) => a - b),
        plotHeight,
        margin,
        options.mediaBase ?? null,
      ),
    );
  }

  parts.push("</svg>");
  return parts.join("\n") + "\n";
}

function pendingOverlay(
  correction: Correction,
  placements: Map<number, Placement>,
  lineByAction: Map<number, LayoutLine>,
  X: (col: number) => number,
  Y: (y: number) => number,
): string[] {
  if (correction.kind === "must_link" || correction.kind === "cannot_link") {
    const a = placements.get(correction.frames[0]);
    const b = placements.get(correction.frames[1]);
    if (a === undefined || b === undefined) {
      return [];
    }
    const color = correction.kind === "must_link" ? "#3ca951" : "#ff725c";
    return [
      `<line class="pending-link" data-kind="${correction.kind}" ` +
        `x1="${fmt(a.x)}" y1="${fmt(a.y)}" x2="${fmt(b.x)}" y2="${fmt(b.y)}" ` +
        `stroke="${color}" stroke-width="1.4" stroke-dasharray="3,3"/>`,
    ];
  }
  if (correction.kind === "boundary") {
    const line = lineByAction.get(correction.action);
    if (line === undefined) {
      return [];
    }
    const exact = placements.get(correction.frame);
    let cx: number;
    let cy: number;
    if (exact !== undefined && exact.action === correction.action) {
      cx = exact.x;
      cy = exact.y;
    } else {
      const end =
        correction.side === "left"
          ? (line.points[0] as LayoutPoint)
          : (line.points[line.points.length - 1] as LayoutPoint);
      cx = X(end.col);
      cy = Y(end.y);
    }
    return [
      `<circle class="pending-boundary" data-action="${correction.action}" ` +
        `data-side="${correction.side}" cx="${fmt(cx)}" cy="${fmt(cy)}" ` +
        'r="7.00" fill="none" stroke="#30343a" stroke-width="1.2" ' +
        'stroke-dasharray="2,2"/>',
    ];
  }
  if (correction.kind === "mark_background") {
    const line = lineByAction.get(correction.action);
    if (line === undefined) {
      return [];
    }
    const first = line.points[0] as LayoutPoint;
    const last = line.points[line.points.length - 1] as LayoutPoint;
    return [
      `<line class="pending-remove" data-action="${correction.action}" ` +
        `x1="${fmt(X(first.col))}" y1="${fmt(Y(first.y))}" ` +
        `x2="${fmt(X(last.col))}" y2="${fmt(Y(last.y))}" ` +
        'stroke="#30343a" stroke-width="1.4" stroke-dasharray="5,3"/>',
    ];
  }
  if (correction.kind === "relabel") {
    const line = lineByAction.get(correction.action);
    if (line === undefined) {
      return [];
    }
    const first = line.points[0] as LayoutPoint;
    return [
      `<rect class="pending-relabel" data-action="${correction.action}" ` +
        `x="${fmt(X(first.col) - 4)}" y="${fmt(Y(first.y) - 14)}" ` +
        'width="8.00" height="8.00" fill="none" stroke="#30343a" ' +
        'stroke-width="1.2" stroke-dasharray="2,2"/>',
    ];
  }
  return [];
}

function histogramPanel(
  counts: number[],
  edges: number[],
  panelX: number,
  plotHeight: number,
  margin: number,
): string[] {
  const parts: string[] = [];
  const innerHeight = Math.max(plotHeight - margin * 2, 10);
  const innerWidth = HIST_PANEL_WIDTH - 30;
  const barWidth = innerWidth / counts.length;
  const maxCount = Math.max(...counts, 1);
  const baseline = margin + innerHeight;
  parts.push(
    `<text x="${fmt(panelX + 15)}" y="${fmt(margin - 10)}" ` +
      'font-family="sans-serif" font-size="11" fill="#30343a" ' +
      'class="hist-title">action lengths</text>',
  );
  counts.forEach((count, i) => {
    const barHeight = (count / maxCount) * innerHeight;
    const x = panelX + 15 + i * barWidth;
    parts.push(
      `<rect class="hist-bar" data-count="${count}" x="${fmt(x)}" ` +
        `y="${fmt(baseline - barHeight)}" width="${fmt(barWidth - 1)}" ` +
        `height="${fmt(barHeight)}" fill="#9498a0"/>`,
    );
  });
  parts.push(
    `<line x1="${fmt(panelX + 15)}" y1="${fmt(baseline)}" ` +
      `x2="${fmt(panelX + 15 + innerWidth)}" y2="${fmt(baseline)}" ` +
      'stroke="#30343a" stroke-width="1.0"/>',
  );
  if (edges.length >= 2) {
    parts.push(
      `<text x="${fmt(panelX + 15)}" y="${fmt(baseline + 14)}" ` +
        'font-family="sans-serif" font-size="9" fill="#6b7078">' +
        `${fmt(edges[0] as number)}</text>`,
      `<text x="${fmt(panelX + 15 + innerWidth)}" y="${fmt(baseline + 14)}" ` +
        'text-anchor="end" font-family="sans-serif" font-size="9" ' +
        `fill="#6b7078">${fmt(edges[edges.length - 1] as number)}</text>`,
    );
  }
  return parts;
}

function frameStrip(
  frames: number[],
  stripY: number,
  margin: number,
  mediaBase: string | null,
): string[] {
  const parts: string[] = [];
  const y = stripY + (STRIP_HEIGHT - CHIP_HEIGHT) / 2;
  frames.forEach((frame, i) => {
    const x = margin + i * (CHIP_WIDTH + 6);
    if (mediaBase !== null) {
      parts.push(
        `<image class="frame-chip" data-frame="${frame}" ` +
          `href="${escapeXml(mediaBase)}/${frame}.jpg" x="${fmt(x)}" ` +
          `y="${fmt(y)}" width="${fmt(CHIP_WIDTH)}" height="${fmt(CHIP_HEIGHT)}"/>`,
      );
    } else {
      parts.push(
        `<rect class="frame-chip" data-frame="${frame}" x="${fmt(x)}" ` +
          `y="${fmt(y)}" width="${fmt(CHIP_WIDTH)}" height="${fmt(CHIP_HEIGHT)}" ` +
          `fill="#fff3e0" stroke="${REPRESENTATIVE_COLOR}" stroke-width="1.0"/>`,
        `<text x="${fmt(x + CHIP_WIDTH / 2)}" y="${fmt(y + CHIP_HEIGHT / 2 + 3)}" ` +
          'text-anchor="middle" font-family="sans-serif" font-size="9" ' +
          `fill="#30343a">${frame}</text>`,
      );
    }
  });
  return parts;
}
