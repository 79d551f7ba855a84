// Wire types for the /v1 inference endpoints.

export interface ComponentEntry {
  id: number;
  token: string;
  kind: "base" | "noise";
  expression: string;
  dim: number;
  bounds: [number, number][];
}

export interface Metadata {
  library: ComponentEntry[];
  lambda_range: [number, number];
  n_points: number;
  grid: number[];
  checkpoint_info: {
    path: string | null;
    step: number;
    base_count: number;
    noise_count: number;
  };
}

export interface ModelPosterior {
  masks: number[][];
  log_probs: number[];
  median_active: number;
}

export interface ParamPosterior {
  params_latent: number[][];
  params_natural: number[][];
  layout: { dims: number[]; offsets: number[] };
}

export interface Predictive {
  curves: number[][];
  masks: number[][];
  quantile_band: { lo: number[]; hi: number[] };
}

export type Observation = { x: number; y: number }[];
