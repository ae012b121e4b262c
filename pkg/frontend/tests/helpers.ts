// Shared fixtures for unit tests: a small in-memory scene.

import type { Feature, FlagItem, LayerInfo } from "../src/types.js";
import { initialState, type ViewState } from "../src/state.js";

export function layerInfo(partial: Partial<LayerInfo> & { id: string }): LayerInfo {
  return {
    name: partial.id,
    kind: "pipes",
    sensitivity: "public",
    temporal_resolution: "none",
    readable: true,
    ...partial,
  };
}

export function pointFeature(id: string, x: number, y: number, props: Record<string, unknown> = {}): Feature {
  return { type: "Feature", id, geometry: { type: "Point", coordinates: [x, y] }, properties: props };
}

export function lineFeature(id: string, coords: [number, number][], props: Record<string, unknown> = {}): Feature {
  return { type: "Feature", id, geometry: { type: "LineString", coordinates: coords }, properties: props };
}

export function flagItem(partial: Partial<FlagItem> & { id: string; target: string }): FlagItem {
  return {
    rule: "dangling_end",
    status: "open",
    detail: "",
    layer_id: "pipes",
    created_rev: 0,
    suggestion: null,
    ...partial,
  };
}

export function sceneState(): ViewState {
  const state = initialState("tok");
  state.layers = [
    layerInfo({ id: "pipes", kind: "pipes" }),
    layerInfo({ id: "streets", kind: "streets" }),
    layerInfo({ id: "secret", kind: "rail", readable: false }),
  ];
  state.visible = { pipes: true, streets: true, secret: false };
  state.featuresByLayer = {
    pipes: [
      pointFeature("p1", 0, 0),
      lineFeature("pe1", [[0, 0], [50, 0]]),
    ],
    streets: [lineFeature("st1", [[-10, 0], [60, 0]])],
  };
  state.flags = [
    flagItem({ id: "f1", target: "p1", rule: "dangling_end" }),
    flagItem({
      id: "f2",
      target: "p1",
      rule: "inferred_edge",
      suggestion: {
        id: "s1",
        action: "add_edge",
        payload: { node_a: "p1", node_b: "p9", geometry: [[0, 0], [25, 0]] },
        applied: false,
      },
    }),
  ];
  return state;
}
