//! Aggregate metrics across runs: one CSV row per run, summarized into a
//! per-scenario table by `report`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::metrics::RunMetrics;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("aggregate parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub fn aggregate_header(dof: usize) -> String {
    let mut cols = vec!["scenario".to_string(), "seed".to_string()];
    for i in 1..=dof {
        cols.push(format!("settling{i}_s"));
    }
    for i in 1..=dof {
        cols.push(format!("overshoot{i}_pct"));
    }
    for i in 1..=dof {
        cols.push(format!("sse{i}_rad"));
    }
    for c in [
        "solve_mean_ms",
        "solve_max_ms",
        "over_budget",
        "fallbacks",
        "violations",
    ] {
        cols.push(c.to_string());
    }
    cols.join(",")
}

pub fn aggregate_row(scenario: &str, seed: u64, m: &RunMetrics) -> String {
    let mut fields = vec![scenario.to_string(), seed.to_string()];
    for s in &m.settling_time_s {
        fields.push(match s {
            Some(t) => format!("{t:.8e}"),
            None => "unsettled".to_string(),
        });
    }
    for v in &m.overshoot_pct {
        fields.push(format!("{v:.8e}"));
    }
    for v in &m.steady_state_error_rad {
        fields.push(format!("{v:.8e}"));
    }
    fields.push(format!("{:.8e}", m.solve_time_mean_ms));
    fields.push(format!("{:.8e}", m.solve_time_max_ms));
    fields.push(m.over_budget_steps.to_string());
    fields.push(m.fallback_steps.to_string());
    fields.push(m.constraint_violations.to_string());
    fields.join(",")
}

#[derive(Debug, Default, Clone)]
struct Group {
    runs: usize,
    unsettled: usize,
    worst_settling: Vec<f64>,
    solve_mean: Vec<f64>,
    violations: usize,
    fallbacks: usize,
}

/// Summarize an aggregate CSV into a fixed-width per-scenario table. Pure
/// text transform: re-running on the same input yields the same output.
pub fn summarize(csv_text: &str) -> Result<String, ReportError> {
    let mut lines = csv_text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ReportError::Parse {
        line: 1,
        msg: "empty aggregate".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    let dof = cols.iter().filter(|c| c.starts_with("settling")).count();
    if dof == 0 {
        return Err(ReportError::Parse {
            line: 1,
            msg: "no settling columns".into(),
        });
    }
    let mut groups: BTreeMap<String, Group> = BTreeMap::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(ReportError::Parse {
                line: idx + 1,
                msg: format!("expected {} fields, found {}", cols.len(), fields.len()),
            });
        }
        let g = groups.entry(fields[0].to_string()).or_default();
        g.runs += 1;
        let settlings: Vec<Option<f64>> = fields[2..2 + dof]
            .iter()
            .map(|s| s.parse::<f64>().ok())
            .collect();
        if settlings.iter().any(Option::is_none) {
            g.unsettled += 1;
        } else {
            let worst = settlings
                .iter()
                .map(|s| s.unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            g.worst_settling.push(worst);
        }
        let base = 2 + 3 * dof;
        let parse = |i: usize| -> Result<f64, ReportError> {
            fields[i].parse().map_err(|e| ReportError::Parse {
                line: idx + 1,
                msg: format!("bad number {:?}: {e}", fields[i]),
            })
        };
        g.solve_mean.push(parse(base)?);
        g.fallbacks += parse(base + 3)? as usize;
        g.violations += parse(base + 4)? as usize;
    }

    let mut out = String::new();
    writeln!(
        out,
        "{:<16} {:>5} {:>10} {:>12} {:>12} {:>10} {:>10}",
        "scenario", "runs", "unsettled", "settle_avg_s", "settle_max_s", "solve_ms", "violations"
    )
    .unwrap();
    for (name, g) in &groups {
        let (avg, max) = if g.worst_settling.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (
                g.worst_settling.iter().sum::<f64>() / g.worst_settling.len() as f64,
                g.worst_settling.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)),
            )
        };
        let solve = g.solve_mean.iter().sum::<f64>() / g.solve_mean.len().max(1) as f64;
        writeln!(
            out,
            "{:<16} {:>5} {:>10} {:>12.3} {:>12.3} {:>10.2} {:>10}",
            name, g.runs, g.unsettled, avg, max, solve, g.violations
        )
        .unwrap();
    }
    Ok(out)
}
