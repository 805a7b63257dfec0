import { ApiClient } from "./api.js";
import { createHistogram } from "./histogram.js";
import { renderSample } from "./sampling.js";
import { createScatter } from "./scatter.js";
import { ThresholdExplorer, axisValues, snapThreshold } from "./state.js";
import type { Preview, ScoreAxis } from "./types.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

async function boot(): Promise<void> {
  const api = new ApiClient();
  const errorBanner = $("error-banner");

  const showError = (message: string) => {
    errorBanner.textContent = message;
    errorBanner.style.display = "block";
  };
  const clearError = () => {
    errorBanner.style.display = "none";
  };

  let report: Awaited<ReturnType<ApiClient["report"]>>;
  try {
    report = await api.report();
  } catch (err) {
    showError(`failed to load report: ${(err as Error).message}`);
    return;
  }

  const explorer = new ThresholdExplorer(report);
  $("dataset-name").textContent =
    `${report.dataset_id || "report"} · ${report.points.length} instances · ` +
    `${report.num_iterations} iterations`;

  const sample = renderSample(report.points);
  $("sample-badge").style.display = sample.sampled ? "inline-block" : "none";

  const scatter = createScatter(
    $("scatter") as unknown as HTMLCanvasElement,
    $("tooltip"),
    () => explorer.axis,
  );
  scatter.setPoints(sample.points);

  const slider = $("threshold-slider") as HTMLInputElement;
  const thresholdLabel = $("threshold-value");
  const axisSelect = $("axis-select") as HTMLSelectElement;
  for (const axis of explorer.axes) {
    const option = document.createElement("option");
    option.value = axis;
    option.textContent = axis;
    axisSelect.appendChild(option);
  }
  axisSelect.value = explorer.axis;

  const histogram = createHistogram(
    $("histogram") as unknown as HTMLCanvasElement,
    (value) => {
      void requestPreview(explorer.setThreshold(value));
    },
    (value) => {
      void requestPreview(explorer.setThreshold(value));
    },
  );

  function renderPreview(preview: Preview | null): void {
    explorer.applyPreview(preview);
    const current = explorer.preview;
    if (!current) return;
    const threshold = explorer.effectiveThreshold;
    if (threshold !== null) {
      slider.value = String(threshold);
      thresholdLabel.textContent = threshold.toFixed(3) + (current.auto ? " (auto)" : "");
      histogram.setThreshold(threshold);
    }
    $("flagged-count").textContent =
      `${current.flagged_count} / ${current.total} flagged`;
    const perClass = Object.entries(current.per_class_flagged)
      .map(([label, count]) => `class ${label}: ${count}`)
      .join("  ");
    $("per-class").textContent = perClass || "none flagged";
    $("id-sample").textContent = current.flagged_ids_sample.length
      ? `ids: ${current.flagged_ids_sample.join(", ")}`
      : "";
    const threshold2 = explorer.effectiveThreshold;
    scatter.setFlagPredicate((p) => {
      if (threshold2 === null) return false;
      const score = explorer.axis === "weight" ? p.weight ?? 0 : p.product;
      return score < threshold2;
    });
  }

  async function requestPreview(threshold: number | "auto"): Promise<void> {
    clearError();
    try {
      renderPreview(await api.preview(explorer.axis, threshold));
    } catch (err) {
      showError(`preview failed: ${(err as Error).message}`);
    }
  }

  function switchAxis(axis: ScoreAxis): void {
    if (!explorer.setAxis(axis)) return;
    histogram.setValues(axisValues(report, explorer.axis));
    histogram.setThreshold(null);
    void requestPreview("auto");
  }

  axisSelect.addEventListener("change", () => switchAxis(axisSelect.value as ScoreAxis));
  slider.addEventListener("input", () => {
    void requestPreview(explorer.setThreshold(snapThreshold(Number(slider.value))));
  });
  $("auto-button").addEventListener("click", () => {
    explorer.resetToAuto();
    void requestPreview("auto");
  });
  $("export-button").addEventListener("click", async () => {
    clearError();
    const threshold = explorer.effectiveThreshold;
    if (threshold === null) {
      showError("no threshold resolved yet");
      return;
    }
    try {
      const result = await api.export(explorer.axis, threshold);
      const cleaned = result.cleaned_csv ? `, cleaned: ${result.cleaned_csv}` : "";
      $("export-status").textContent =
        `exported ${result.flagged_count} flags to ${result.flags_csv}${cleaned}`;
    } catch (err) {
      showError(`export failed: ${(err as Error).message}`);
    }
  });

  histogram.setValues(axisValues(report, explorer.axis));
  void requestPreview("auto");
}

void boot();
