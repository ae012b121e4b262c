// Browser entry point: binds the controller to a minimal DOM shell.

import { ApiClient } from "./api.js";
import { ReviewApp } from "./controller.js";
import { buildRenderModel, paint } from "./render.js";
import { openFlags, resolvedFlags, screenToWorld } from "./state.js";
import type { FlagItem } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text) node.textContent = text;
  return node;
}

function flagLabel(flag: FlagItem): string {
  const action = flag.suggestion ? ` [${flag.suggestion.action}]` : "";
  return `${flag.id} ${flag.rule}${action} @ ${flag.target}`;
}

export function mount(root: HTMLElement, baseUrl: string): void {
  const tokenInput = el("input", { placeholder: "session token", id: "token" });
  const connect = el("button", {}, "connect");
  const banner = el("div", { class: "banner" });
  const canvas = el("canvas", { width: "900", height: "600" });
  const layersBox = el("div", { class: "layers" });
  const flagsBox = el("div", { class: "flags" });
  const panel = el("div", { class: "panel" });
  const drawButton = el("button", {}, "query drawn region");
  const clearButton = el("button", {}, "clear draw");

  root.append(tokenInput, connect, banner, layersBox, canvas, flagsBox, drawButton, clearButton, panel);

  let app: ReviewApp | null = null;
  let drawMode = false;

  function redraw(): void {
    if (!app) return;
    const model = buildRenderModel(app.state);
    const ctx = canvas.getContext("2d");
    if (ctx) paint(ctx, model, app.state, canvas.width, canvas.height);

    banner.textContent = model.banner ?? app.state.notice ?? "";
    banner.className = model.banner ? "banner error" : "banner";
    if (model.stale) banner.textContent += " (data may be stale)";

    layersBox.replaceChildren();
    for (const layer of app.state.layers) {
      const label = el("label");
      const box = el("input", { type: "checkbox" }) as HTMLInputElement;
      box.checked = !!app.state.visible[layer.id];
      box.disabled = !layer.readable;
      box.addEventListener("change", () => app!.toggleLayer(layer.id));
      label.append(box, document.createTextNode(layer.readable ? layer.name : `${layer.name} (locked)`));
      layersBox.append(label);
    }

    flagsBox.replaceChildren();
    flagsBox.append(el("h3", {}, "open flags"));
    for (const flag of openFlags(app.state)) {
      const row = el("div", { class: "flag-row" }, flagLabel(flag));
      row.addEventListener("click", () => app!.selectFlag(flag.id));
      const accept = el("button", {}, "accept");
      accept.addEventListener("click", () => void app!.submitDecision(flag.id, "accepted"));
      const reject = el("button", {}, "reject");
      reject.addEventListener("click", () => void app!.submitDecision(flag.id, "rejected"));
      row.append(accept, reject);
      flagsBox.append(row);
    }
    flagsBox.append(el("h3", {}, "resolved"));
    for (const flag of resolvedFlags(app.state)) {
      flagsBox.append(el("div", { class: "flag-row resolved" }, `${flagLabel(flag)} -> ${flag.status}`));
    }

    panel.replaceChildren();
    if (app.state.drawError) panel.append(el("div", { class: "error" }, app.state.drawError));
    if (app.state.queryPanel) {
      for (const [layerId, features] of Object.entries(app.state.queryPanel.layers)) {
        panel.append(el("div", {}, `${layerId}: ${features.length} features`));
        for (const feature of features) {
          const row = el("div", { class: "result-row" }, feature.id);
          if (feature.geometry.type === "LineString") {
            const impact = el("button", {}, "impact");
            impact.addEventListener(
              "click",
              () => void app!.runImpact(feature.id, "census", "low_income"),
            );
            row.append(impact);
          }
          panel.append(row);
        }
      }
      for (const denied of app.state.queryPanel.denied) {
        panel.append(el("div", { class: "denied" }, `${denied.layer_id}: locked (${denied.reason})`));
      }
    }
    if (app.state.impactPanel) {
      const p = app.state.impactPanel;
      panel.append(
        el(
          "div",
          { class: "impact" },
          `pipe ${p.edgeId} affects ${p.blocks.join(", ") || "no blocks"}; ${p.attributeKey} total ${p.total}`,
        ),
      );
    }
  }

  connect.addEventListener("click", () => {
    const api = new ApiClient(baseUrl, tokenInput.value);
    app = new ReviewApp(api, tokenInput.value);
    app.onChange = redraw;
    void app.start();
  });

  canvas.addEventListener("click", (event) => {
    if (!app || !drawMode) return;
    const rect = canvas.getBoundingClientRect();
    const world = screenToWorld(
      app.state.viewport,
      canvas.width,
      canvas.height,
      [event.clientX - rect.left, event.clientY - rect.top],
    );
    app.addDrawVertex(world);
  });

  canvas.addEventListener("dblclick", () => {
    drawMode = !drawMode;
  });

  drawButton.addEventListener("click", () => {
    if (!app) return;
    void app.runRegionQuery(["pipes", "buildings", "census"]);
  });
  clearButton.addEventListener("click", () => app?.clearDraw());
}

declare global {
  interface Window {
    UNDERGRID_BASE_URL?: string;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mount(
    document.getElementById("app") as HTMLElement,
    window.UNDERGRID_BASE_URL ?? "http://127.0.0.1:8787",
  );
}
