/** In-memory stand-in for the risk service, faithful to its JSON contract:
 * session tokens, signed deltas, 410 on unknown sessions, 503 before load. */
import { PredictResponse } from "../src/api.js";

interface MockPatient {
  patient_id: string;
  clinical: Record<string, string | number>;
  label: number;
  probability: number;
  remark: string;
}

export class MockService {
  up = true;
  patients: MockPatient[] = [
    {
      patient_id: "P00001",
      clinical: { age: 67, fev1_pct: 48.0, sex: "female" },
      label: 1,
      probability: 0.81,
      remark: "reduced pulmonary reserve with heavy smoking history",
    },
    {
      patient_id: "P00002",
      clinical: { age: 54, fev1_pct: 88.0, sex: "male" },
      label: 0,
      probability: 0.22,
      remark: "largely unremarkable profile",
    },
  ];
  sessions = new Map<string, { patientId: string; probability: number; remark: string }>();
  requestLog: string[] = [];
  /** Probability the mock returns for any edited (non-original) remark. */
  editedProbability = 0.66;
  private tokenCounter = 0;
  /** Delay injected before /intervene responses resolve, for ordering tests. */
  interveneDelayMs = 0;

  private probabilityFor(patientId: string, remark: string): number {
    const patient = this.patients.find((p) => p.patient_id === patientId)!;
    return remark === patient.remark ? patient.probability : this.editedProbability;
  }

  fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = typeof input === "string" ? input : input.toString();
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    this.requestLog.push(path);
    if (!this.up) {
      return json(503, { detail: "model not loaded" });
    }
    if (path === "/healthz") return json(200, { status: "ok" });
    if (path.startsWith("/patients?")) {
      return json(200, {
        page: 0,
        total: this.patients.length,
        patients: this.patients.map((p) => ({ patient_id: p.patient_id, label: p.label })),
      });
    }
    const detailMatch = path.match(/^\/patients\/([^/?]+)$/);
    if (detailMatch) {
      const p = this.patients.find((x) => x.patient_id === detailMatch[1]);
      if (!p) return json(404, { detail: `unknown patient '${detailMatch[1]}'` });
      return json(200, { ...p, radiomic: new Array(113).fill(0) });
    }
    if (path === "/predict") {
      const body = JSON.parse(String(init?.body));
      const p = this.patients.find((x) => x.patient_id === body.patient_id);
      if (!p) return json(404, { detail: `unknown patient '${body.patient_id}'` });
      const token = `tok-${++this.tokenCounter}`;
      this.sessions.set(token, {
        patientId: p.patient_id,
        probability: p.probability,
        remark: p.remark,
      });
      const resp: PredictResponse = {
        session_token: token,
        patient_id: p.patient_id,
        probability: p.probability,
        mc_std: 0.05,
        remark_text: p.remark,
        remark_origin: "stub",
        channel_summary: { e_c_norm: 1, e_r_norm: 1, e_m_norm: 1 },
      };
      return json(200, resp);
    }
    if (path === "/intervene") {
      const body = JSON.parse(String(init?.body));
      const session = this.sessions.get(body.session_token);
      if (!session) return json(410, { detail: "session expired or unknown" });
      if (!String(body.edited_remark).trim()) {
        return json(400, { detail: "edited remark must be nonempty" });
      }
      if (this.interveneDelayMs > 0) {
        await new Promise((r) => setTimeout(r, this.interveneDelayMs));
      }
      const newP = this.probabilityFor(session.patientId, body.edited_remark);
      const delta = newP - session.probability;
      session.probability = newP;
      session.remark = body.edited_remark;
      return json(200, {
        session_token: body.session_token,
        probability: newP,
        mc_std: 0.04,
        delta_vs_previous: delta,
        remark_text: body.edited_remark,
      });
    }
    return json(404, { detail: `no route for ${path}` });
  };
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
