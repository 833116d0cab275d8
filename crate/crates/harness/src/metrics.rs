//! Metric extraction from closed-loop trajectory logs: settling time,
//! overshoot, steady-state error, solve-time bookkeeping.

use serde::{Deserialize, Serialize};

use uwmpc_core::controller::Limits;
use uwmpc_core::trajectory::Trajectory;

/// Per-step budget at 20 Hz, ms; steps above it are flagged, not failed.
pub const SOLVE_BUDGET_MS: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// First entry into the settling band that is never left, s per joint;
    /// `None` when the joint ends the run outside the band.
    pub settling_time_s: Vec<Option<f64>>,
    /// Peak excursion past the reference, % of step size, >= 0.
    pub overshoot_pct: Vec<f64>,
    /// Mean |error| over the final 20% of the run, rad.
    pub steady_state_error_rad: Vec<f64>,
    pub solve_time_mean_ms: f64,
    pub solve_time_max_ms: f64,
    /// Steps whose solve exceeded the 50 ms control period.
    pub over_budget_steps: usize,
    pub fallback_steps: usize,
    /// Applied commands or measured positions outside their boxes.
    pub constraint_violations: usize,
    pub steps: usize,
    pub duration_s: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("empty trajectory")]
    Empty,
}

/// Settling band per joint: `band_frac` of the step magnitude with an
/// absolute floor so a zero-size step still has a well-defined band.
pub fn compute_metrics(
    traj: &Trajectory<f64>,
    band_frac: f64,
    band_floor_rad: f64,
    limits: Option<&Limits<f64>>,
) -> Result<RunMetrics, MetricsError> {
    let rows = &traj.rows;
    if rows.is_empty() {
        return Err(MetricsError::Empty);
    }
    let dof = rows[0].q.len();
    let reference = &rows.last().unwrap().r_q;
    let q0 = &rows[0].q;

    let mut settling = Vec::with_capacity(dof);
    let mut overshoot = Vec::with_capacity(dof);
    let mut sse = Vec::with_capacity(dof);
    let tail_start = rows.len() - (rows.len() as f64 * 0.2).ceil().max(1.0) as usize;

    for i in 0..dof {
        let step = reference[i] - q0[i];
        let band = (band_frac * step.abs()).max(band_floor_rad);

        // last sample outside the band determines settling
        let mut last_outside: Option<usize> = None;
        for (k, r) in rows.iter().enumerate() {
            if (r.q[i] - reference[i]).abs() > band {
                last_outside = Some(k);
            }
        }
        settling.push(match last_outside {
            None => Some(0.0),
            Some(k) if k + 1 < rows.len() => Some(rows[k + 1].t),
            Some(_) => None, // still outside at the end
        });

        if step.abs() > 1e-9 {
            let sign = step.signum();
            let peak = rows
                .iter()
                .map(|r| (r.q[i] - reference[i]) * sign)
                .fold(f64::NEG_INFINITY, f64::max);
            overshoot.push((peak.max(0.0) / step.abs()) * 100.0);
        } else {
            overshoot.push(0.0);
        }

        let tail = &rows[tail_start..];
        let mean_abs: f64 = tail
            .iter()
            .map(|r| (r.q[i] - reference[i]).abs())
            .sum::<f64>()
            / tail.len() as f64;
        sse.push(mean_abs);
    }

    let mut mean_ms = 0.0;
    let mut max_ms: f64 = 0.0;
    let mut over_budget = 0;
    let mut fallbacks = 0;
    let mut violations = 0;
    for r in rows {
        mean_ms += r.solve_ms;
        max_ms = max_ms.max(r.solve_ms);
        if r.solve_ms > SOLVE_BUDGET_MS {
            over_budget += 1;
        }
        if r.fallback {
            fallbacks += 1;
        }
        if let Some(l) = limits {
            for i in 0..dof {
                if r.u[i] < l.tau_min[i] - 1e-9 || r.u[i] > l.tau_max[i] + 1e-9 {
                    violations += 1;
                }
                if r.q[i] < l.q_min[i] - 1e-9 || r.q[i] > l.q_max[i] + 1e-9 {
                    violations += 1;
                }
            }
        }
    }
    mean_ms /= rows.len() as f64;

    Ok(RunMetrics {
        settling_time_s: settling,
        overshoot_pct: overshoot,
        steady_state_error_rad: sse,
        solve_time_mean_ms: mean_ms,
        solve_time_max_ms: max_ms,
        over_budget_steps: over_budget,
        fallback_steps: fallbacks,
        constraint_violations: violations,
        steps: rows.len(),
        duration_s: rows.last().unwrap().t,
    })
}

impl RunMetrics {
    /// Key/value lines for the CLI.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.settling_time_s.iter().enumerate() {
            match s {
                Some(t) => out.push_str(&format!("settling_time_s.joint{}={:.3}\n", i + 1, t)),
                None => out.push_str(&format!("settling_time_s.joint{}=unsettled\n", i + 1)),
            }
        }
        for (i, v) in self.overshoot_pct.iter().enumerate() {
            out.push_str(&format!("overshoot_pct.joint{}={:.3}\n", i + 1, v));
        }
        for (i, v) in self.steady_state_error_rad.iter().enumerate() {
            out.push_str(&format!("steady_state_error_rad.joint{}={:.6}\n", i + 1, v));
        }
        out.push_str(&format!("solve_time_mean_ms={:.3}\n", self.solve_time_mean_ms));
        out.push_str(&format!("solve_time_max_ms={:.3}\n", self.solve_time_max_ms));
        out.push_str(&format!("over_budget_steps={}\n", self.over_budget_steps));
        out.push_str(&format!("fallback_steps={}\n", self.fallback_steps));
        out.push_str(&format!("constraint_violations={}\n", self.constraint_violations));
        out.push_str(&format!("steps={}\n", self.steps));
        out.push_str(&format!("duration_s={:.3}\n", self.duration_s));
        out
    }
}
