import { describe, expect, it } from "vitest";

import { buildRenderModel, shapesById } from "../src/render.js";
import { FLAGS_PROPERTY } from "../src/types.js";
import { lineFeature, pointFeature, sceneState } from "./helpers.js";

describe("render model", () => {
  it("renders visible layers with distinct colors", () => {
    const model = buildRenderModel(sceneState());
    const byLayer = new Map(model.shapes.map((s) => [s.layerId, s.style.color]));
    expect(byLayer.get("pipes")).not.toBe(byLayer.get("streets"));
  });

  it("pending suggestion geometry is drawn dashed", () => {
    const model = buildRenderModel(sceneState());
    const provisional = shapesById(model, "suggestion:s1");
    expect(provisional).toHaveLength(1);
    expect(provisional[0].style.dashed).toBe(true);
    expect(provisional[0].kind).toBe("line");
  });

  it("suggestion overlay disappears once accepted (geometry restyles)", () => {
    const state = sceneState();
    state.flags[1].status = "accepted";
    state.flags[1].suggestion!.applied = true;
    // the applied edge now arrives as a real feature with an accepted flag ref
    state.featuresByLayer.pipes.push(
      lineFeature("e-new", [[0, 0], [25, 0]], {
        [FLAGS_PROPERTY]: [{ id: "f2", rule: "inferred_edge", status: "accepted" }],
      }),
    );
    const model = buildRenderModel(state);
    expect(shapesById(model, "suggestion:s1")).toHaveLength(0);
    const edge = shapesById(model, "e-new");
    expect(edge).toHaveLength(1);
    expect(edge[0].style.dashed).toBe(false); // solid once accepted
  });

  it("applied-but-open repairs stay provisional (dashed)", () => {
    const state = sceneState();
    state.featuresByLayer.pipes.push(
      lineFeature("e-applied", [[0, 0], [10, 10]], {
        [FLAGS_PROPERTY]: [{ id: "f7", rule: "open_boundary", status: "open" }],
      }),
    );
    const model = buildRenderModel(state);
    expect(shapesById(model, "e-applied")[0].style.dashed).toBe(true);
  });

  it("toggled-off layer contributes no shapes", () => {
    const state = sceneState();
    state.visible.streets = false;
    const model = buildRenderModel(state);
    expect(model.shapes.some((s) => s.layerId === "streets")).toBe(false);
  });

  it("unreadable layer is listed as locked, never rendered", () => {
    const state = sceneState();
    state.visible.secret = true; // even if toggled on
    state.featuresByLayer.secret = [pointFeature("s1", 5, 5)];
    const model = buildRenderModel(state);
    expect(model.shapes.some((s) => s.layerId === "secret")).toBe(false);
    expect(model.lockedLayers).toContain("secret");
  });

  it("never renders a feature the API did not return", () => {
    const state = sceneState();
    const returned = new Set(
      Object.values(state.featuresByLayer).flatMap((fs) => fs.map((f) => f.id)),
    );
    const model = buildRenderModel(state);
    for (const shape of model.shapes) {
      if (shape.featureId.startsWith("suggestion:")) continue; // ledger geometry
      expect(returned.has(shape.featureId)).toBe(true);
    }
  });

  it("flagged entities are highlighted", () => {
    const model = buildRenderModel(sceneState());
    const flagged = shapesById(model, "p1");
    expect(flagged[0].style.highlighted).toBe(true);
    const plain = shapesById(model, "st1");
    expect(plain[0].style.highlighted).toBe(false);
  });

  it("impact blocks are highlighted", () => {
    const state = sceneState();
    state.featuresByLayer.pipes.push(pointFeature("blockish", 9, 9));
    state.impactPanel = { edgeId: "pe1", blocks: ["blockish"], total: 120, attributeKey: "low_income" };
    const model = buildRenderModel(state);
    expect(shapesById(model, "blockish")[0].style.highlighted).toBe(true);
  });

  it("error banner and staleness surface in the model", () => {
    const state = sceneState();
    state.errorBanner = "failed to load data: 0: network failure";
    state.stale = true;
    const model = buildRenderModel(state);
    expect(model.banner).toContain("failed to load data");
    expect(model.stale).toBe(true);
  });
});
