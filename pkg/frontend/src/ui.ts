/** DOM construction and the top-level controller.
 *
 * The layout is three panes: patient list, patient detail (gauge + editable
 * remark + history), and the evaluation dashboard. All probabilities shown
 * come straight from service responses.
 */
import { ApiClient, ApiError, PatientListItem } from "./api.js";
import { PatientSession } from "./state.js";
import { EvalReport, parseRocCsv, renderRocSvg, RocPoint } from "./roc.js";

export function formatPercent(p: number): string {
  return `${Math.round(p * 100)}% risk`;
}

export function formatDelta(delta: number): string {
  const pct = (delta * 100).toFixed(1);
  return delta > 0 ? `+${pct}%` : `${pct}%`;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class App {
  session: PatientSession | null = null;

  private readonly banner: HTMLElement;
  private readonly listPane: HTMLElement;
  private readonly detailPane: HTMLElement;
  private readonly dashPane: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {
    this.banner = el("div", "banner hidden");
    this.listPane = el("section", "pane patient-list");
    this.detailPane = el("section", "pane patient-detail");
    this.dashPane = el("section", "pane dashboard");
    root.replaceChildren(this.banner, this.listPane, this.detailPane, this.dashPane);
  }

  // -- service-down banner ---------------------------------------------

  showBanner(message: string): void {
    this.banner.classList.remove("hidden");
    this.banner.replaceChildren(
      el("span", "banner-text", message),
      this.button("Retry", "banner-retry", () => void this.start()),
    );
  }

  hideBanner(): void {
    this.banner.classList.add("hidden");
    this.banner.replaceChildren();
  }

  private button(label: string, className: string, onClick: () => void): HTMLButtonElement {
    const b = el("button", className, label);
    b.addEventListener("click", onClick);
    return b;
  }

  // -- startup and patient list ----------------------------------------

  async start(): Promise<void> {
    try {
      await this.api.health();
      this.hideBanner();
    } catch (err) {
      this.showBanner(this.describe(err, "Risk service unavailable"));
      return;
    }
    const page = await this.api.listPatients(0, 100);
    this.renderPatientList(page.patients);
  }

  private renderPatientList(patients: PatientListItem[]): void {
    const list = el("ul", "patient-items");
    for (const p of patients) {
      const item = el("li", "patient-item");
      item.appendChild(
        this.button(p.patient_id, "patient-link", () => void this.openPatient(p.patient_id)),
      );
      list.appendChild(item);
    }
    this.listPane.replaceChildren(el("h2", undefined, "Patients"), list);
  }

  // -- patient detail ---------------------------------------------------

  async openPatient(patientId: string): Promise<void> {
    let detail;
    let prediction;
    try {
      detail = await this.api.getPatient(patientId);
      prediction = await this.api.predict(patientId);
      this.hideBanner();
    } catch (err) {
      this.showBanner(this.describe(err, `Cannot load patient ${patientId}`));
      return;
    }
    this.session = new PatientSession(this.api, prediction);

    const summary = el("dl", "clinical-summary");
    for (const [name, value] of Object.entries(detail.clinical)) {
      summary.appendChild(el("dt", undefined, name));
      summary.appendChild(el("dd", undefined, String(value)));
    }

    const remarkBox = el("textarea", "remark-editor") as HTMLTextAreaElement;
    remarkBox.value = this.session.remarkText;

    const applyBtn = this.button("Apply edit", "apply-btn", () =>
      void this.apply(remarkBox.value),
    );
    const revertBtn = this.button("Revert to generated", "revert-btn", () =>
      void this.apply(this.session!.originalRemark, true),
    );

    this.detailPane.replaceChildren(
      el("h2", undefined, patientId),
      summary,
      el("div", "risk-gauge"),
      el("div", "delta-chip hidden"),
      el("h3", undefined, "Remark"),
      remarkBox,
      el("div", "edit-error hidden"),
      applyBtn,
      revertBtn,
      el("h3", undefined, "Edit history"),
      el("table", "history"),
    );
    this.renderGauge();
    this.renderHistory();
  }

  private async apply(text: string, isRevert = false): Promise<void> {
    const session = this.session;
    if (!session || session.busy) return;
    const errBox = this.detailPane.querySelector(".edit-error") as HTMLElement;
    if (!text.trim()) {
      errBox.classList.remove("hidden");
      errBox.textContent = "The remark cannot be empty.";
      return;
    }
    errBox.classList.add("hidden");
    this.setApplyEnabled(false);
    try {
      const row = await session.applyEdit(text);
      if (isRevert) {
        const editor = this.detailPane.querySelector(".remark-editor") as HTMLTextAreaElement;
        editor.value = session.originalRemark;
      }
      this.renderGauge();
      this.renderDeltaChip(row.delta);
      this.renderHistory();
    } catch (err) {
      if (err instanceof ApiError && err.status === 410) {
        this.showBanner("Session expired — reload the patient to re-predict.");
      } else {
        errBox.classList.remove("hidden");
        errBox.textContent = this.describe(err, "Intervention failed");
      }
    } finally {
      this.setApplyEnabled(true);
    }
  }

  private setApplyEnabled(enabled: boolean): void {
    for (const sel of [".apply-btn", ".revert-btn"]) {
      const b = this.detailPane.querySelector(sel) as HTMLButtonElement | null;
      if (b) b.disabled = !enabled;
    }
  }

  private renderGauge(): void {
    const session = this.session;
    const gauge = this.detailPane.querySelector(".risk-gauge") as HTMLElement | null;
    if (!session || !gauge) return;
    const [lo, hi] = session.band;
    gauge.replaceChildren(
      el("span", "gauge-value", formatPercent(session.probability)),
      el(
        "span",
        "gauge-band",
        `band ${Math.round(lo * 100)}–${Math.round(hi * 100)}%`,
      ),
    );
    gauge.setAttribute("data-probability", String(session.probability));
  }

  private renderDeltaChip(delta: number): void {
    const chip = this.detailPane.querySelector(".delta-chip") as HTMLElement | null;
    if (!chip) return;
    chip.classList.remove("hidden");
    chip.textContent = formatDelta(delta);
    chip.setAttribute("data-delta", String(delta));
  }

  private renderHistory(): void {
    const session = this.session;
    const table = this.detailPane.querySelector(".history") as HTMLElement | null;
    if (!session || !table) return;
    const rows = session.history.map((row) => {
      const tr = el("tr", "history-row");
      tr.appendChild(el("td", undefined, row.editHash));
      tr.appendChild(el("td", undefined, formatPercent(row.probability)));
      tr.appendChild(el("td", undefined, formatDelta(row.delta)));
      return tr;
    });
    table.replaceChildren(...rows);
  }

  // -- dashboard ---------------------------------------------------------

  renderDashboard(report: EvalReport | null, rocCsv: string | null): void {
    if (report === null || rocCsv === null) {
      this.dashPane.replaceChildren(
        el("div", "dash-empty", "No evaluation artifacts found."),
      );
      return;
    }
    let points: RocPoint[];
    try {
      points = parseRocCsv(rocCsv);
    } catch (err) {
      this.dashPane.replaceChildren(
        el("div", "dash-error", this.describe(err, "Bad ROC data")),
      );
      return;
    }
    const readouts = el("dl", "metric-readouts");
    readouts.appendChild(el("dt", undefined, "AUC"));
    readouts.appendChild(el("dd", "metric-auc", report.auc.toFixed(4)));
    for (const [cap, tpr] of Object.entries(report.tpr_at_fpr)) {
      readouts.appendChild(el("dt", undefined, `TPR@FPR=${cap}`));
      readouts.appendChild(el("dd", `metric-tpr-${cap.replace(".", "_")}`, tpr.toFixed(4)));
    }
    const plot = el("div", "roc-container");
    plot.innerHTML = renderRocSvg(points);
    this.dashPane.replaceChildren(el("h2", undefined, "Evaluation"), readouts, plot);
  }

  private describe(err: unknown, prefix: string): string {
    if (err instanceof ApiError) return `${prefix}: ${err.detail} (HTTP ${err.status})`;
    if (err instanceof Error) return `${prefix}: ${err.message}`;
    return prefix;
  }
}
