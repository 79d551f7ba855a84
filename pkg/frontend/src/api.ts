import type {
  Metadata,
  ModelPosterior,
  Observation,
  ParamPosterior,
  Predictive,
} from "./types";

export class ServiceError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

function pairs(obs: Observation): number[][] {
  return obs.map((p) => [p.x, p.y]);
}

/** Thin typed client over the /v1 endpoints; no inference happens here. */
export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.baseUrl + path, init);
    } catch (e) {
      throw new ServiceError(0, `service unreachable: ${e}`);
    }
    if (!resp.ok) {
      let detail = `${resp.status}`;
      try {
        const body = await resp.json();
        detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
      } catch {
        // keep the bare status
      }
      throw new ServiceError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  metadata(): Promise<Metadata> {
    return this.request<Metadata>("/v1/metadata");
  }

  modelPosterior(
    obs: Observation,
    lambda: number,
    nSamples: number,
    seed: number,
  ): Promise<ModelPosterior> {
    return this.post<ModelPosterior>("/v1/model_posterior", {
      x: pairs(obs),
      lambda,
      n_samples: nSamples,
      seed,
    });
  }

  paramPosterior(
    obs: Observation,
    mask: number[],
    lambda: number,
    nSamples: number,
    seed: number,
  ): Promise<ParamPosterior> {
    return this.post<ParamPosterior>("/v1/param_posterior", {
      x: pairs(obs),
      mask,
      lambda,
      n_samples: nSamples,
      seed,
    });
  }

  predictive(
    obs: Observation,
    lambda: number,
    mode: "global" | "local",
    nSamples: number,
    seed: number,
    mask?: number[],
  ): Promise<Predictive> {
    return this.post<Predictive>("/v1/predictive", {
      x: pairs(obs),
      lambda,
      mode,
      mask: mask ?? null,
      n_samples: nSamples,
      seed,
    });
  }
}
