/** Payload shapes of the review service. Field names mirror the wire
 * format exactly; everything here is plain JSON data. */

export type Side = "left" | "right";

export type Correction =
  | { kind: "must_link"; pair: [number, number]; frames: [number, number] }
  | { kind: "cannot_link"; pair: [number, number]; frames: [number, number] }
  | { kind: "boundary"; action: number; side: Side; frame: number }
  | { kind: "relabel"; action: number; category: number }
  | { kind: "mark_background"; action: number };

export interface LayoutPoint {
  col: number;
  y: number;
  frame: number;
  annotated: boolean;
}

export interface LayoutLine {
  action: number;
  thick: boolean;
  unit: number | null;
  points: LayoutPoint[];
}

export interface ContourBand {
  cluster: number;
  top: Array<[number, number]>;
  bottom: Array<[number, number]>;
}

export interface LayoutPayload {
  columns: number;
  lines: LayoutLine[];
  contours: ContourBand[];
  representatives: number[];
  histogram: { edges?: number[]; counts?: number[] };
  metrics: Record<string, number>;
  revision?: number;
  cluster?: number;
  category?: number;
  depth?: number;
  medoid?: number;
  children?: number[];
  silhouette?: number;
  action?: number;
  neighbors?: number[];
  frames?: number[];
  clip?: string | null;
}

export interface CategoryRow {
  id: number;
  name: string;
  actions: number;
  uncertainty: number | null;
  root_cluster: number | null;
}

export interface OverviewPayload {
  revision: number;
  categories: CategoryRow[];
}

export interface CorrectionDiff {
  spans: Array<{ action: number; old: [number, number]; new: [number, number] }>;
  alignments: Array<{ pair: [number, number]; added: number; removed: number }>;
  relabeled: Array<{ action: number; category: [number, number] }>;
  removed: number[];
  anomalies: number[];
}

export interface SubmitResponse {
  revision: number;
  diff: CorrectionDiff;
  hash: string;
}

export interface RecommendResponse {
  revision: number;
  action: number;
  side: Side;
  frame: number;
}

export interface SessionInfo {
  session_id: string;
  revision: number;
  hash: string;
}

export interface ExportPayload {
  revision: number;
  annotations: {
    anchors: Array<{ action: number; frame: number; category: number }>;
    boundaries: Array<{ action: number; side: Side; frame: number }>;
    background: number[];
  };
  log: Array<{ revision: number; corrections: Correction[] }>;
  hash: string;
}
