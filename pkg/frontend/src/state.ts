// View state of the review client. State only moves on server confirmation
// (no optimistic writes), which keeps conflict handling trivial.

import type { DeniedLayer, Feature, FlagItem, LayerInfo, Position } from "./types.js";

export interface Viewport {
  centerX: number;
  centerY: number;
  /** pixels per meter */
  scale: number;
}

export interface QueryPanel {
  layers: Record<string, Feature[]>;
  denied: DeniedLayer[];
  predicate: string;
}

export interface ImpactPanel {
  edgeId: string;
  blocks: string[];
  total: number;
  attributeKey: string;
}

export interface ViewState {
  token: string;
  role: string;
  revision: number | null;
  layers: LayerInfo[];
  visible: Record<string, boolean>;
  featuresByLayer: Record<string, Feature[]>;
  deniedLayers: DeniedLayer[];
  flags: FlagItem[];
  selectedFlagId: string | null;
  /** flag ids with a decision in flight; repeat clicks are suppressed */
  pendingDecisions: Set<string>;
  drawVertices: Position[];
  drawError: string | null;
  queryPanel: QueryPanel | null;
  impactPanel: ImpactPanel | null;
  errorBanner: string | null;
  notice: string | null;
  /** data on screen may not reflect the server (a fetch failed) */
  stale: boolean;
  viewport: Viewport;
}

export function initialState(token: string): ViewState {
  return {
    token,
    role: "public",
    revision: null,
    layers: [],
    visible: {},
    featuresByLayer: {},
    deniedLayers: [],
    flags: [],
    selectedFlagId: null,
    pendingDecisions: new Set(),
    drawVertices: [],
    drawError: null,
    queryPanel: null,
    impactPanel: null,
    errorBanner: null,
    notice: null,
    stale: false,
    viewport: { centerX: 0, centerY: 0, scale: 2.0 },
  };
}

/** Selected flag must exist in the last fetched ledger snapshot. */
export function selectFlag(state: ViewState, flagId: string | null): void {
  if (flagId === null) {
    state.selectedFlagId = null;
    return;
  }
  if (state.flags.some((f) => f.id === flagId)) {
    state.selectedFlagId = flagId;
  }
}

export function setFlags(state: ViewState, flags: FlagItem[]): void {
  state.flags = flags;
  if (state.selectedFlagId && !flags.some((f) => f.id === state.selectedFlagId)) {
    state.selectedFlagId = null;
  }
}

export function openFlags(state: ViewState): FlagItem[] {
  return state.flags.filter((f) => f.status === "open");
}

export function resolvedFlags(state: ViewState): FlagItem[] {
  return state.flags.filter((f) => f.status !== "open");
}

export function flagById(state: ViewState, flagId: string): FlagItem | undefined {
  return state.flags.find((f) => f.id === flagId);
}

export function toggleLayer(state: ViewState, layerId: string): void {
  if (layerId in state.visible) {
    state.visible[layerId] = !state.visible[layerId];
  }
}

export function fitViewport(state: ViewState, width: number, height: number): void {
  let minX = Infinity;
  let minY = Infinity;
  let maxX = -Infinity;
  let maxY = -Infinity;
  const visit = (position: Position) => {
    minX = Math.min(minX, position[0]);
    minY = Math.min(minY, position[1]);
    maxX = Math.max(maxX, position[0]);
    maxY = Math.max(maxY, position[1]);
  };
  for (const features of Object.values(state.featuresByLayer)) {
    for (const feature of features) {
      walkPositions(feature, visit);
    }
  }
  if (!isFinite(minX)) return;
  const spanX = Math.max(maxX - minX, 1);
  const spanY = Math.max(maxY - minY, 1);
  state.viewport = {
    centerX: (minX + maxX) / 2,
    centerY: (minY + maxY) / 2,
    scale: Math.min(width / (spanX * 1.15), height / (spanY * 1.15)),
  };
}

export function walkPositions(feature: Feature, visit: (p: Position) => void): void {
  const geometry = feature.geometry;
  if (geometry.type === "Point") {
    visit(geometry.coordinates);
  } else if (geometry.type === "LineString") {
    geometry.coordinates.forEach(visit);
  } else if (geometry.type === "Polygon") {
    geometry.coordinates.forEach((ring) => ring.forEach(visit));
  } else {
    geometry.coordinates.forEach((poly) => poly.forEach((ring) => ring.forEach(visit)));
  }
}

/** world meters -> canvas pixels (y flipped) */
export function worldToScreen(
  viewport: Viewport,
  width: number,
  height: number,
  position: Position,
): Position {
  return [
    width / 2 + (position[0] - viewport.centerX) * viewport.scale,
    height / 2 - (position[1] - viewport.centerY) * viewport.scale,
  ];
}

export function screenToWorld(
  viewport: Viewport,
  width: number,
  height: number,
  position: Position,
): Position {
  return [
    viewport.centerX + (position[0] - width / 2) / viewport.scale,
    viewport.centerY - (position[1] - height / 2) / viewport.scale,
  ];
}
