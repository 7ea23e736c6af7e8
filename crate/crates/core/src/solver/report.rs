use serde::{Deserialize, Serialize};

use super::{GroupPenalty, SolveReport, SolverConfig};

/// `"FCLS"` for the unregularized problem, `"GLUP-Lap"` otherwise.
pub fn method_label(config: &SolverConfig) -> &'static str {
    if config.lambda == 0.0 && config.mu == 0.0 {
        "FCLS"
    } else {
        "GLUP-Lap"
    }
}

/// JSON form of a [`SolveReport`]; the abundances are referenced by path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub method: String,
    pub mu: f64,
    pub lambda: f64,
    pub rho: f64,
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub group: String,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: Option<f64>,
    pub min_abundance: f64,
    pub max_sum_to_one_deviation: f64,
    pub active_rows: Vec<usize>,
    pub abundances_csv: String,
    pub objective_trace: Vec<f64>,
    pub primal_residual_trace: Vec<f64>,
    pub dual_residual_trace: Vec<f64>,
}

impl ReportDocument {
    pub fn new(report: &SolveReport, config: &SolverConfig, abundances_csv: impl Into<String>) -> Self {
        let feas = report.abundances.feasibility();
        Self {
            method: method_label(config).to_string(),
            mu: config.mu,
            lambda: config.lambda,
            rho: config.rho,
            max_iter: config.max_iter,
            eps_abs: config.eps_abs,
            eps_rel: config.eps_rel,
            group: match config.group {
                GroupPenalty::PerPixel => "pixel",
                GroupPenalty::PerEndmember => "endmember",
            }
            .to_string(),
            iterations: report.iterations,
            converged: report.converged,
            final_objective: report.objective_trace.last().copied(),
            min_abundance: feas.min_entry,
            max_sum_to_one_deviation: feas.max_sum_deviation,
            active_rows: report.active_rows.clone(),
            abundances_csv: abundances_csv.into(),
            objective_trace: report.objective_trace.clone(),
            primal_residual_trace: report.residual_trace.iter().map(|r| r.0).collect(),
            dual_residual_trace: report.residual_trace.iter().map(|r| r.1).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
