import { ApiClient, ServiceError } from "./api";
import { parseObservationCsv } from "./csv";
import { debounce } from "./debounce";
import { RequestSequencer } from "./sequencer";
import {
  initialState,
  selectMask,
  setBanner,
  setLambda,
  setModelPosterior,
  SessionState,
} from "./state";
import {
  histogram,
  renderBandSvg,
  renderBanner,
  renderHistogramSvg,
  renderMaskTable,
  renderMedianActive,
  topMasks,
} from "./views";

const N_SAMPLES = 256;

/** Wires the explorer UI onto an existing document. All inference numbers
 * come from the service; this module only renders and routes requests. */
export function mountApp(root: Document, client: ApiClient): void {
  let state: SessionState = initialState();
  const seq = new RequestSequencer();

  const el = (id: string) => {
    const node = root.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node;
  };
  const slider = el("lambda-slider") as HTMLInputElement;
  const lambdaLabel = el("lambda-value");
  const fileInput = el("obs-file") as HTMLInputElement;
  const globalToggle = el("global-toggle") as HTMLInputElement;

  function render(): void {
    el("banner-area").innerHTML = renderBanner(state.banner);
    lambdaLabel.textContent = state.lambda.toFixed(2);
    if (state.modelPosterior && state.metadata) {
      const rows = topMasks(state.modelPosterior);
      el("mask-area").innerHTML =
        renderMedianActive(state.modelPosterior) +
        renderMaskTable(
          rows,
          state.metadata,
          state.selectedMask ? state.selectedMask.join("") : null,
        );
      for (const tr of root.querySelectorAll<HTMLElement>("tr[data-mask]")) {
        tr.addEventListener("click", () => {
          const bits = (tr.dataset.mask ?? "").split("").map(Number);
          state = selectMask(state, bits);
          void refreshMaskDetail();
        });
      }
    } else {
      el("mask-area").innerHTML = "";
    }
    renderParams();
    renderPredictive();
  }

  function renderParams(): void {
    const area = el("param-area");
    if (!state.paramPosterior || !state.selectedMask || !state.metadata) {
      area.innerHTML = "";
      return;
    }
    const { params_natural, layout } = state.paramPosterior;
    const parts: string[] = [];
    state.metadata.library.forEach((entry, c) => {
      if (state.selectedMask![c] !== 1) return;
      for (let j = 0; j < entry.dim; j++) {
        const col = layout.offsets[c] + j;
        const [lo, hi] = entry.bounds[j];
        const values = params_natural.map((row) => row[col]);
        parts.push(
          renderHistogramSvg(histogram(values, lo, hi), `${entry.token}[${j}]`),
        );
      }
    });
    area.innerHTML = parts.join("");
  }

  function renderPredictive(): void {
    const area = el("predictive-area");
    const payload = state.showGlobal
      ? state.globalPredictive
      : state.localPredictive ?? state.globalPredictive;
    if (!payload || !state.metadata || !state.observation) {
      area.innerHTML = "";
      return;
    }
    const mode = payload === state.globalPredictive ? "global" : "local";
    area.innerHTML =
      `<div class="predictive-mode">${mode} 95% band</div>` +
      renderBandSvg(state.metadata.grid, payload, state.observation);
  }

  function fail(e: unknown): void {
    const msg =
      e instanceof ServiceError ? `request failed: ${e.message}` : String(e);
    state = setBanner(state, msg);
    render();
  }

  async function refreshPosterior(): Promise<void> {
    if (!state.observation) return;
    try {
      const payload = await seq.run("model_posterior", () =>
        client.modelPosterior(
          state.observation!,
          state.lambda,
          N_SAMPLES,
          state.seed,
        ),
      );
      if (payload === null) return; // superseded by a newer request
      state = setBanner(setModelPosterior(state, payload), null);
      await refreshGlobalPredictive();
      render();
    } catch (e) {
      fail(e);
    }
  }

  async function refreshGlobalPredictive(): Promise<void> {
    if (!state.observation) return;
    const payload = await seq.run("predictive_global", () =>
      client.predictive(
        state.observation!,
        state.lambda,
        "global",
        N_SAMPLES,
        state.seed,
      ),
    );
    if (payload !== null) state = { ...state, globalPredictive: payload };
  }

  async function refreshMaskDetail(): Promise<void> {
    if (!state.observation || !state.selectedMask) return;
    try {
      const mask = state.selectedMask;
      const [params, pred] = await Promise.all([
        seq.run("param_posterior", () =>
          client.paramPosterior(
            state.observation!,
            mask,
            state.lambda,
            N_SAMPLES,
            state.seed,
          ),
        ),
        seq.run("predictive_local", () =>
          client.predictive(
            state.observation!,
            state.lambda,
            "local",
            N_SAMPLES,
            state.seed,
            mask,
          ),
        ),
      ]);
      if (params !== null) state = { ...state, paramPosterior: params };
      if (pred !== null) state = { ...state, localPredictive: pred };
      render();
    } catch (e) {
      fail(e);
    }
  }

  const debouncedRefresh = debounce(() => void refreshPosterior(), 250);

  slider.addEventListener("input", () => {
    state = setLambda(state, Number(slider.value));
    lambdaLabel.textContent = state.lambda.toFixed(2);
    debouncedRefresh();
  });

  globalToggle.addEventListener("change", () => {
    state = { ...state, showGlobal: globalToggle.checked };
    render();
  });

  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    file
      .text()
      .then((text) => {
        state = setBanner(
          { ...state, observation: parseObservationCsv(text) },
          null,
        );
        void refreshPosterior();
      })
      .catch((e) => fail(e));
  });

  client
    .metadata()
    .then((md) => {
      state = { ...state, metadata: md };
      render();
    })
    .catch((e) => fail(e));
}
