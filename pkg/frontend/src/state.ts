import type {
  Metadata,
  ModelPosterior,
  Observation,
  ParamPosterior,
  Predictive,
} from "./types";

export interface SessionState {
  observation: Observation | null;
  lambda: number;
  seed: number;
  metadata: Metadata | null;
  modelPosterior: ModelPosterior | null;
  selectedMask: number[] | null;
  paramPosterior: ParamPosterior | null;
  localPredictive: Predictive | null;
  globalPredictive: Predictive | null;
  showGlobal: boolean;
  banner: string | null;
}

export function initialState(seed = 0): SessionState {
  return {
    observation: null,
    lambda: 0.5,
    seed,
    metadata: null,
    modelPosterior: null,
    selectedMask: null,
    paramPosterior: null,
    localPredictive: null,
    globalPredictive: null,
    showGlobal: false,
    banner: null,
  };
}

export function clampLambda(value: number): number {
  if (!Number.isFinite(value)) return 0;
  // slider granularity is 0.01
  return Math.min(1, Math.max(0, Math.round(value * 100) / 100));
}

export function setLambda(state: SessionState, value: number): SessionState {
  return { ...state, lambda: clampLambda(value) };
}

export function setModelPosterior(
  state: SessionState,
  payload: ModelPosterior,
): SessionState {
  const masks = payload.masks.map((m) => m.join(""));
  const keep =
    state.selectedMask !== null && masks.includes(state.selectedMask.join(""));
  return {
    ...state,
    modelPosterior: payload,
    // the selected mask must always come from the current payload
    selectedMask: keep ? state.selectedMask : null,
    paramPosterior: keep ? state.paramPosterior : null,
    localPredictive: keep ? state.localPredictive : null,
  };
}

export function selectMask(state: SessionState, mask: number[]): SessionState {
  const current = state.modelPosterior?.masks.map((m) => m.join("")) ?? [];
  if (!current.includes(mask.join(""))) {
    throw new Error("mask is not part of the current model posterior");
  }
  return { ...state, selectedMask: [...mask] };
}

export function setBanner(state: SessionState, msg: string | null): SessionState {
  return { ...state, banner: msg };
}

export function toggleGlobal(state: SessionState): SessionState {
  return { ...state, showGlobal: !state.showGlobal };
}
