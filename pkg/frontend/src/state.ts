/** Session state for one patient under review.
 *
 * The displayed probability is always the latest server response; the delta
 * history is append-only for the life of the session, and at most one
 * intervention is in flight at a time.
 */
import { ApiClient, PredictResponse } from "./api.js";

export interface HistoryRow {
  editHash: string;
  probability: number;
  delta: number;
  timestamp: number;
}

/** Small stable display hash (FNV-1a); not cryptographic, just a fingerprint
 * the clinician can match against the service audit log. */
export function editHash(text: string): string {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return (h >>> 0).toString(16).padStart(8, "0");
}

export class PatientSession {
  readonly patientId: string;
  readonly sessionToken: string;
  readonly originalRemark: string;
  readonly originalProbability: number;

  probability: number;
  mcStd: number;
  remarkText: string;
  readonly history: HistoryRow[] = [];

  private inFlight = false;

  constructor(
    private readonly api: ApiClient,
    prediction: PredictResponse,
    private readonly now: () => number = Date.now,
  ) {
    this.patientId = prediction.patient_id;
    this.sessionToken = prediction.session_token;
    this.originalRemark = prediction.remark_text;
    this.originalProbability = prediction.probability;
    this.probability = prediction.probability;
    this.mcStd = prediction.mc_std;
    this.remarkText = prediction.remark_text;
  }

  get busy(): boolean {
    return this.inFlight;
  }

  /** Uncertainty band: probability +/- one MC standard deviation, clipped. */
  get band(): [number, number] {
    return [
      Math.max(0, this.probability - this.mcStd),
      Math.min(1, this.probability + this.mcStd),
    ];
  }

  async applyEdit(text: string): Promise<HistoryRow> {
    if (!text.trim()) throw new Error("edited remark must be nonempty");
    if (this.inFlight) throw new Error("an intervention is already in flight");
    this.inFlight = true;
    try {
      const resp = await this.api.intervene(this.sessionToken, text);
      this.probability = resp.probability;
      this.mcStd = resp.mc_std;
      this.remarkText = resp.remark_text;
      const row: HistoryRow = {
        editHash: editHash(text),
        probability: resp.probability,
        delta: resp.delta_vs_previous,
        timestamp: this.now(),
      };
      this.history.push(row);
      return row;
    } finally {
      this.inFlight = false;
    }
  }

  /** Re-apply the original generated remark through the service. */
  revert(): Promise<HistoryRow> {
    return this.applyEdit(this.originalRemark);
  }
}
