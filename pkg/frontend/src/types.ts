export interface CartographyPoint {
  id: number;
  mu: number;
  sigma: number;
  correctness: number;
  product: number;
  label: number;
  weight?: number;
  flagged?: boolean;
}

export interface CartographyReport {
  format_version: number;
  dataset_id: string;
  num_iterations: number;
  points: CartographyPoint[];
}

export type ScoreAxis = "product" | "weight";

export interface Preview {
  score: ScoreAxis;
  threshold: number;
  auto: boolean;
  flagged_count: number;
  total: number;
  per_class_flagged: Record<string, number>;
  flagged_ids_sample: number[];
}

export interface ExportResult {
  flags_csv: string;
  flags_header: string;
  flagged_count: number;
  cleaned_csv?: string;
  kept_rows?: number;
}
