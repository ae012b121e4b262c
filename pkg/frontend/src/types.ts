// Shapes of the service API payloads.

export type Position = [number, number];

export interface PointGeometry {
  type: "Point";
  coordinates: Position;
}

export interface LineStringGeometry {
  type: "LineString";
  coordinates: Position[];
}

export interface PolygonGeometry {
  type: "Polygon";
  coordinates: Position[][];
}

export interface MultiPolygonGeometry {
  type: "MultiPolygon";
  coordinates: Position[][][];
}

export type Geometry =
  | PointGeometry
  | LineStringGeometry
  | PolygonGeometry
  | MultiPolygonGeometry;

export interface Feature {
  type: "Feature";
  id: string;
  geometry: Geometry;
  properties: Record<string, unknown>;
}

export interface FeatureCollection {
  type: "FeatureCollection";
  features: Feature[];
}

export interface LayerInfo {
  id: string;
  name: string;
  kind: string;
  sensitivity: "public" | "sensitive";
  temporal_resolution: string;
  readable: boolean;
}

export interface SuggestionInfo {
  id: string;
  action: "merge_nodes" | "replace_symbol" | "add_edge" | "connect_boundary";
  payload: Record<string, unknown>;
  applied: boolean;
}

export type FlagStatus = "open" | "accepted" | "rejected";

export interface FlagItem {
  id: string;
  target: string;
  rule: string;
  status: FlagStatus;
  detail: string;
  layer_id: string | null;
  created_rev: number;
  suggestion: SuggestionInfo | null;
}

export interface DeniedLayer {
  layer_id: string;
  reason: string;
}

export interface LayersResponse {
  revision: number;
  layers: LayerInfo[];
  role: string;
}

export interface QueryResponse {
  revision: number;
  layers: Record<string, FeatureCollection>;
  denied_layers: DeniedLayer[];
}

export interface FlagsResponse {
  revision: number;
  flags: FlagItem[];
}

export interface ResolveResponse {
  revision: number;
  flag: { id: string; status: FlagStatus; resolved_by: string };
}

export interface ImpactResponse {
  revision: number;
  edge_id: string;
  blocks: string[];
  attribute_key: string;
  total: number;
  features: FeatureCollection;
}

export interface UpdateResponse {
  revision: number;
  flag_id: string;
}

/** Reserved property key carrying flag annotations on exported features. */
export const FLAGS_PROPERTY = "_guides_flags";

export interface FeatureFlagRef {
  id: string;
  rule?: string;
  status?: FlagStatus;
}

export function featureFlagRefs(feature: Feature): FeatureFlagRef[] {
  const raw = feature.properties?.[FLAGS_PROPERTY];
  return Array.isArray(raw) ? (raw as FeatureFlagRef[]) : [];
}
