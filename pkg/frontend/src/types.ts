// Wire types mirroring the session service JSON. The console never computes
// learning math; every number shown comes from these payloads.

export type FeedbackKind = "m" | "l" | "b" | "u";

export interface NamedPredicateChip {
  id: string;
  count: number;
  share: number;
}

export interface DescriptionView {
  text: string;
  fingerprint: string;
  unique_named: number;
  named_occurrences: number;
  conjunct_count: number;
  disjunct_count: number;
  box_range_count: number;
  n_boxes: number;
  volumes: {
    named_total: number;
    named_unique: number;
    box_total: number;
    box_unique: number;
    conjunct_total: number;
    conjunct_unique: number;
  };
  named_predicates: NamedPredicateChip[];
  disallowed_predicates: string[];
}

export interface WeightRow {
  selector: number;
  label: string;
  weight: number;
}

export interface SessionView {
  session_id: string;
  open: boolean;
  close_reason: string | null;
  timestep: number;
  question: { id: string; dims: number[] };
  last_operator: string;
  fell_back: boolean;
  description: DescriptionView;
  params: Record<string, number | boolean>;
  last_d_samp: number[] | null;
  entropy: number | null;
  weights_top: WeightRow[];
  weights_bottom: WeightRow[];
  success_rate: number;
  allowed_actions: FeedbackKind[];
  operators: string[];
  event_id: number;
}

export interface SessionEvent {
  id: number;
  type: "state" | "closed";
  session: string;
  view: SessionView;
}

export interface SuccessPoint {
  step: number;
  rate: number;
  lower: number;
  upper: number;
  n: number;
}

export interface EntropyPoint {
  session: string;
  t: number;
  entropy: number;
  running_mean: number;
}

export interface SessionMetrics {
  session: string;
  success_curve: SuccessPoint[];
  entropy: EntropyPoint[];
  global_success_rate: number;
  operator_uses: Record<string, number>;
}

export interface TimelineEntry {
  t: number;
  op: string;
  feedback: FeedbackKind;
  fingerprint: string;
  unique_named: number;
}

export interface FeedbackPayload {
  kind: FeedbackKind;
  manual_operator?: string;
  travel_to?: number;
}
