/** Typed client for the risk service's HTTP/JSON API.
 *
 * The UI never computes risk locally; every probability it shows comes out
 * of one of these calls.
 */

export interface PatientListItem {
  patient_id: string;
  label: number;
}

export interface PatientListPage {
  page: number;
  total: number;
  patients: PatientListItem[];
}

export interface PatientDetail {
  patient_id: string;
  clinical: Record<string, string | number>;
  radiomic: number[];
  label: number;
}

export interface ChannelSummary {
  e_c_norm: number;
  e_r_norm: number;
  e_m_norm: number;
}

export interface PredictResponse {
  session_token: string;
  patient_id: string;
  probability: number;
  mc_std: number;
  remark_text: string;
  remark_origin: string;
  channel_summary: ChannelSummary;
}

export interface InterveneResponse {
  session_token: string;
  probability: number;
  mc_std: number;
  delta_vs_previous: number;
  remark_text: string;
}

export interface ModelInfo {
  config: Record<string, unknown>;
  embed_dim: number;
  embedder: string;
  param_checksum: string;
  n_demo_patients: number;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

async function toApiError(resp: Response): Promise<ApiError> {
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") detail = body.detail;
    else if (body && body.detail) detail = JSON.stringify(body.detail);
  } catch {
    /* non-JSON error body; keep the status text */
  }
  return new ApiError(resp.status, detail);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path);
    if (!resp.ok) throw await toApiError(resp);
    return (await resp.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) throw await toApiError(resp);
    return (await resp.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.get("/healthz");
  }

  modelInfo(): Promise<ModelInfo> {
    return this.get("/model/info");
  }

  listPatients(page = 0, pageSize = 50): Promise<PatientListPage> {
    return this.get(`/patients?page=${page}&page_size=${pageSize}`);
  }

  getPatient(id: string): Promise<PatientDetail> {
    return this.get(`/patients/${encodeURIComponent(id)}`);
  }

  predict(patientId: string): Promise<PredictResponse> {
    return this.post("/predict", { patient_id: patientId });
  }

  intervene(sessionToken: string, editedRemark: string): Promise<InterveneResponse> {
    return this.post("/intervene", {
      session_token: sessionToken,
      edited_remark: editedRemark,
    });
  }
}
