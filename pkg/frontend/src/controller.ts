// Application controller: all behavior, no DOM. The browser entry point
// (main.ts) binds events to these methods; tests drive them directly.

import { ApiClient, ApiError } from "./api.js";
import type { ViewState } from "./state.js";
import {
  fitViewport,
  initialState,
  selectFlag,
  setFlags,
  toggleLayer,
} from "./state.js";
import type { FlagItem, Position } from "./types.js";

/** bbox queried at startup; comfortably under the service area cap */
const HOME_EXTENT: [number, number, number, number] = [-2000, -2000, 2000, 2000];

export type DecisionOutcome = "confirmed" | "suppressed" | "conflict" | "denied" | "failed";

export class ReviewApp {
  readonly state: ViewState;
  onChange: (() => void) | null = null;

  constructor(
    readonly api: ApiClient,
    token: string,
    private canvasSize: { width: number; height: number } = { width: 900, height: 600 },
  ) {
    this.state = initialState(token);
  }

  private changed(): void {
    this.onChange?.();
  }

  async start(): Promise<void> {
    try {
      const layersResponse = await this.api.layers();
      this.state.role = layersResponse.role;
      this.state.revision = layersResponse.revision;
      this.state.layers = layersResponse.layers;
      for (const layer of layersResponse.layers) {
        this.state.visible[layer.id] = layer.readable;
      }
      await this.refreshFeatures();
      await this.refreshFlags();
      fitViewport(this.state, this.canvasSize.width, this.canvasSize.height);
      this.state.errorBanner = null;
      this.state.stale = false;
    } catch (err) {
      this.state.errorBanner = `failed to load data: ${describe(err)}`;
      this.state.stale = true;
    }
    this.changed();
  }

  async refreshFeatures(layerIds?: string[]): Promise<void> {
    const kinds = [
      ...new Set(
        this.state.layers
          .filter((l) => l.readable && (!layerIds || layerIds.includes(l.id)))
          .map((l) => l.kind),
      ),
    ];
    if (kinds.length === 0) return;
    const response = await this.api.query({
      region: HOME_EXTENT,
      layer_kinds: kinds,
      predicate: "intersects",
    });
    this.state.revision = response.revision;
    for (const [layerId, collection] of Object.entries(response.layers)) {
      this.state.featuresByLayer[layerId] = collection.features;
    }
    this.state.deniedLayers = response.denied_layers;
  }

  async refreshFlags(): Promise<void> {
    const response = await this.api.flags();
    setFlags(this.state, response.flags);
  }

  toggleLayer(layerId: string): void {
    toggleLayer(this.state, layerId);
    this.changed();
  }

  selectFlag(flagId: string | null): void {
    selectFlag(this.state, flagId);
    this.changed();
  }

  flag(flagId: string): FlagItem | undefined {
    return this.state.flags.find((f) => f.id === flagId);
  }

  /**
   * Accept or reject a flag. State changes only after the server confirms;
   * a decision already in flight for the same flag is suppressed, so a
   * double click issues a single request.
   */
  async submitDecision(flagId: string, decision: "accepted" | "rejected"): Promise<DecisionOutcome> {
    if (this.state.pendingDecisions.has(flagId)) {
      return "suppressed";
    }
    const flag = this.flag(flagId);
    if (!flag || flag.status !== "open") {
      return "conflict";
    }
    this.state.pendingDecisions.add(flagId);
    this.changed();
    try {
      const response = await this.api.resolveFlag(flagId, decision);
      this.state.revision = response.revision;
      // move the flag between lists and restyle geometry without a full reload:
      // refetch the ledger and the affected layer only
      await this.refreshFlags();
      const affected = flag.layer_id ? [flag.layer_id] : undefined;
      await this.refreshFeatures(affected);
      this.state.notice = `flag ${flagId} ${decision}`;
      return "confirmed";
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // already resolved elsewhere: refresh and inform
        await this.refreshFlags().catch(() => undefined);
        this.state.notice = `flag ${flagId} was already resolved`;
        return "conflict";
      }
      if (err instanceof ApiError && err.status === 403) {
        this.state.notice = `not allowed: ${err.message}`;
        return "denied";
      }
      this.state.errorBanner = `decision failed: ${describe(err)}`;
      this.state.stale = true;
      return "failed";
    } finally {
      this.state.pendingDecisions.delete(flagId);
      this.changed();
    }
  }

  // -- region query tool -----------------------------------------------------

  addDrawVertex(world: Position): void {
    this.state.drawVertices.push(world);
    this.state.drawError = null;
    this.changed();
  }

  clearDraw(): void {
    this.state.drawVertices = [];
    this.state.drawError = null;
    this.state.queryPanel = null;
    this.changed();
  }

  /**
   * Run the drawn-region query. Fewer than 3 vertices is inline validation,
   * no request leaves the client.
   */
  async runRegionQuery(
    layerKinds: string[],
    interval?: [string, string],
    predicate: "within" | "crosses" | "intersects" = "within",
  ): Promise<boolean> {
    if (this.state.drawVertices.length < 3) {
      this.state.drawError = "draw at least 3 vertices";
      this.changed();
      return false;
    }
    const ring = [...this.state.drawVertices, this.state.drawVertices[0]];
    try {
      const response = await this.api.query({
        region: { type: "Polygon", coordinates: [ring] },
        layer_kinds: layerKinds,
        interval,
        predicate,
      });
      this.state.queryPanel = {
        layers: Object.fromEntries(
          Object.entries(response.layers).map(([k, v]) => [k, v.features]),
        ),
        denied: response.denied_layers,
        predicate,
      };
      this.state.drawError = null;
      this.changed();
      return true;
    } catch (err) {
      this.state.errorBanner = `query failed: ${describe(err)}`;
      this.changed();
      return false;
    }
  }

  /** Impact shortcut for a selected pipe: affected blocks + attribute sum. */
  async runImpact(edgeId: string, censusLayer: string, attributeKey: string): Promise<boolean> {
    try {
      const response = await this.api.impact(edgeId, censusLayer, attributeKey);
      this.state.impactPanel = {
        edgeId,
        blocks: response.blocks,
        total: response.total,
        attributeKey,
      };
      this.changed();
      return true;
    } catch (err) {
      this.state.notice = `impact query failed: ${describe(err)}`;
      this.changed();
      return false;
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.status}: ${err.message}`;
  return String(err);
}
