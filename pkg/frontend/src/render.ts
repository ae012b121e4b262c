// Render model: what gets drawn, with what style. Built as plain data so
// tests can assert styling (dashed suggestions, highlights) without a
// canvas; the painter below just walks the model.

import type { ViewState } from "./state.js";
import { worldToScreen } from "./state.js";
import type { Feature, FlagItem, Position } from "./types.js";
import { featureFlagRefs } from "./types.js";

export interface ShapeStyle {
  color: string;
  width: number;
  dashed: boolean;
  highlighted: boolean;
  fill: string | null;
}

export interface Shape {
  layerId: string;
  featureId: string;
  kind: "point" | "line" | "polygon";
  /** world coordinates; polygons are ring lists */
  coordinates: Position[] | Position[][];
  style: ShapeStyle;
}

export interface RenderModel {
  shapes: Shape[];
  /** layers the service denied: listed as locked, never drawn */
  lockedLayers: string[];
  /** in-progress region draw */
  drawVertices: Position[];
  banner: string | null;
  stale: boolean;
}

// conventional utility-map palette: streets black, pipes blue, buildings
// purple, census green-gray
const LAYER_COLORS: Record<string, string> = {
  streets: "#222222",
  pipes: "#1668c8",
  buildings: "#7d3fa8",
  census: "#5a7a5a",
  rail: "#8a5a2a",
  other: "#666666",
};

const LAYER_FILLS: Record<string, string | null> = {
  census: "rgba(110, 160, 110, 0.25)",
  buildings: "rgba(125, 63, 168, 0.15)",
  pipes: null,
  streets: null,
  rail: null,
  other: null,
};

function colorFor(kind: string): string {
  return LAYER_COLORS[kind] ?? LAYER_COLORS.other;
}

function openFlagIdsByTarget(flags: FlagItem[]): Map<string, FlagItem[]> {
  const out = new Map<string, FlagItem[]>();
  for (const flag of flags) {
    const bucket = out.get(flag.target) ?? [];
    bucket.push(flag);
    out.set(flag.target, bucket);
  }
  return out;
}

function featureShape(
  layerId: string,
  kind: string,
  feature: Feature,
  style: ShapeStyle,
): Shape {
  const geometry = feature.geometry;
  if (geometry.type === "Point") {
    return { layerId, featureId: feature.id, kind: "point", coordinates: [geometry.coordinates], style };
  }
  if (geometry.type === "LineString") {
    return { layerId, featureId: feature.id, kind: "line", coordinates: geometry.coordinates, style };
  }
  if (geometry.type === "Polygon") {
    return { layerId, featureId: feature.id, kind: "polygon", coordinates: geometry.coordinates, style };
  }
  // MultiPolygon: flatten to outer rings for drawing purposes
  return {
    layerId,
    featureId: feature.id,
    kind: "polygon",
    coordinates: geometry.coordinates.map((poly) => poly[0]),
    style,
  };
}

export function buildRenderModel(state: ViewState): RenderModel {
  const shapes: Shape[] = [];
  const flagsByTarget = openFlagIdsByTarget(state.flags);
  const selected = state.selectedFlagId
    ? state.flags.find((f) => f.id === state.selectedFlagId) ?? null
    : null;
  const selectedTargets = new Set<string>();
  if (selected) {
    selectedTargets.add(selected.target);
    const payload = selected.suggestion?.payload ?? {};
    for (const key of ["node_a", "node_b", "new_node_id", "edge_id"]) {
      const value = payload[key];
      if (typeof value === "string") selectedTargets.add(value);
    }
    const nodeIds = payload["node_ids"];
    if (Array.isArray(nodeIds)) nodeIds.forEach((n) => selectedTargets.add(String(n)));
  }

  for (const layer of state.layers) {
    if (!layer.readable) continue;
    if (!state.visible[layer.id]) continue;
    const features = state.featuresByLayer[layer.id] ?? [];
    const baseColor = colorFor(layer.kind);
    for (const feature of features) {
      const refs = featureFlagRefs(feature);
      const openHere =
        refs.some((r) => r.status === "open") ||
        (flagsByTarget.get(feature.id) ?? []).some((f) => f.status === "open");
      const impactHit = state.impactPanel?.blocks.includes(feature.id) ?? false;
      shapes.push(
        featureShape(layer.id, layer.kind, feature, {
          color: baseColor,
          width: layer.kind === "streets" ? 3 : 2,
          // applied-but-still-open repairs stay provisional until accepted
          dashed: openHere,
          highlighted: openHere || selectedTargets.has(feature.id) || impactHit,
          fill: LAYER_FILLS[layer.kind] ?? null,
        }),
      );
    }
  }

  // pending (unapplied) suggestion geometries: provisional dashed overlays
  for (const flag of state.flags) {
    if (flag.status !== "open" || !flag.suggestion || flag.suggestion.applied) continue;
    const geometry = flag.suggestion.payload["geometry"];
    if (!Array.isArray(geometry) || geometry.length < 2) continue;
    shapes.push({
      layerId: flag.layer_id ?? "suggestions",
      featureId: `suggestion:${flag.suggestion.id}`,
      kind: "line",
      coordinates: geometry as Position[],
      style: {
        color: "#d2691e",
        width: 2,
        dashed: true,
        highlighted: selected?.id === flag.id,
        fill: null,
      },
    });
  }

  const lockedLayers = [
    ...state.layers.filter((l) => !l.readable).map((l) => l.id),
    ...state.deniedLayers.map((d) => d.layer_id),
  ];
  return {
    shapes,
    lockedLayers: [...new Set(lockedLayers)].sort(),
    drawVertices: [...state.drawVertices],
    banner: state.errorBanner,
    stale: state.stale,
  };
}

export function shapesById(model: RenderModel, featureId: string): Shape[] {
  return model.shapes.filter((s) => s.featureId === featureId);
}

/** Canvas painter: strictly a function of the render model. */
export function paint(
  ctx: CanvasRenderingContext2D,
  model: RenderModel,
  state: ViewState,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  const project = (p: Position) => worldToScreen(state.viewport, width, height, p);

  for (const shape of model.shapes) {
    ctx.lineWidth = shape.style.highlighted ? shape.style.width + 2 : shape.style.width;
    ctx.strokeStyle = shape.style.color;
    ctx.setLineDash(shape.style.dashed ? [6, 4] : []);
    if (shape.kind === "point") {
      const [x, y] = project((shape.coordinates as Position[])[0]);
      ctx.beginPath();
      ctx.arc(x, y, shape.style.highlighted ? 6 : 4, 0, Math.PI * 2);
      if (shape.style.highlighted) {
        ctx.fillStyle = "#ffcc00";
        ctx.fill();
      }
      ctx.stroke();
    } else if (shape.kind === "line") {
      ctx.beginPath();
      (shape.coordinates as Position[]).forEach((p, i) => {
        const [x, y] = project(p);
        if (i === 0) ctx.moveTo(x, y);
        else ctx.lineTo(x, y);
      });
      ctx.stroke();
    } else {
      for (const ring of shape.coordinates as Position[][]) {
        ctx.beginPath();
        ring.forEach((p, i) => {
          const [x, y] = project(p);
          if (i === 0) ctx.moveTo(x, y);
          else ctx.lineTo(x, y);
        });
        ctx.closePath();
        if (shape.style.fill) {
          ctx.fillStyle = shape.style.fill;
          ctx.fill();
        }
        ctx.stroke();
      }
    }
  }

  // region draw in progress
  if (model.drawVertices.length > 0) {
    ctx.setLineDash([3, 3]);
    ctx.strokeStyle = "#cc2222";
    ctx.beginPath();
    model.drawVertices.forEach((p, i) => {
      const [x, y] = project(p);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
    ctx.setLineDash([]);
  }
}
