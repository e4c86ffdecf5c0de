/**
 * Fixed CSV schemas of the primary component, by figure kind.
 *
 * The plotting layer never recomputes physics: every annotated quantity
 * (fitted slopes included) must already be a column in the input CSV.
 */

export type FigureKind =
  | "convergence"
  | "gronwall_timeseries"
  | "variance_scaling"
  | "blowup_panel";

export const REQUIRED_COLUMNS: Record<FigureKind, string[]> = {
  convergence: ["n_particles", "beta", "t", "trdist", "fit_slope"],
  gronwall_timeseries: [
    "t",
    "alpha",
    "gamma_total",
    "dalpha_dt",
    "dvar_dt_abs",
    "violation",
  ],
  variance_scaling: [
    "n_particles",
    "beta",
    "var_quad",
    "predicted_slope",
    "fitted_slope",
  ],
  blowup_panel: ["t", "sup_norm", "grad_l2", "blown"],
};

export const FIGURE_KINDS = Object.keys(REQUIRED_COLUMNS) as FigureKind[];

export function isFigureKind(kind: string): kind is FigureKind {
  return (FIGURE_KINDS as string[]).includes(kind);
}
