//! Closed-loop trajectory log and its CSV serialization. Floats are written
//! with 9 significant digits in scientific notation so repeated runs with
//! the same seed produce byte-identical files.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow<T> {
    pub t: T,
    pub q: Vec<T>,
    pub qdot: Vec<T>,
    pub u: Vec<T>,
    pub r_q: Vec<T>,
    /// Stage cost realized at this step.
    pub cost: T,
    /// Optimizer evaluations spent on this step (0 on fallback).
    pub evals: usize,
    pub termination: String,
    /// Horizon objective at the warm start and at the returned plan.
    pub obj_initial: T,
    pub obj_final: T,
    /// Wall-clock solve time. Kept out of the CSV (it is not reproducible
    /// across runs); summarized separately by the run metrics.
    pub solve_ms: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory<T> {
    pub rows: Vec<TrajectoryRow<T>>,
}

#[derive(Debug, thiserror::Error)]
pub enum TrajError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn fmt<T: Scalar>(v: T) -> String {
    format!("{:.8e}", v.to_f64().unwrap_or(f64::NAN))
}

impl<T: Scalar> Trajectory<T> {
    pub fn new() -> Self {
        Trajectory { rows: Vec::new() }
    }

    pub fn dof(&self) -> usize {
        self.rows.first().map_or(0, |r| r.q.len())
    }

    fn header(dof: usize) -> String {
        let mut cols = vec!["t".to_string()];
        for p in ["q", "qd", "u", "r"] {
            for i in 1..=dof {
                cols.push(format!("{p}{i}"));
            }
        }
        for c in ["cost", "evals", "termination", "obj_initial", "obj_final", "fallback"] {
            cols.push(c.to_string());
        }
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), TrajError> {
        let dof = self.dof();
        writeln!(w, "{}", Self::header(dof))?;
        for row in &self.rows {
            let mut fields = vec![fmt(row.t)];
            for group in [&row.q, &row.qdot, &row.u, &row.r_q] {
                fields.extend(group.iter().map(|&v| fmt(v)));
            }
            fields.push(fmt(row.cost));
            fields.push(row.evals.to_string());
            fields.push(row.termination.clone());
            fields.push(fmt(row.obj_initial));
            fields.push(fmt(row.obj_final));
            fields.push(if row.fallback { "1" } else { "0" }.to_string());
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), TrajError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        // write-then-rename so a crash never leaves a truncated file
        let tmp = path.with_extension("csv.tmp");
        std::fs::write(&tmp, &buf)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, TrajError> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or(TrajError::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        let header = header?;
        let ncols = header.split(',').count();
        // column layout: t, 4 groups of dof, then 6 trailing columns
        if ncols < 7 || (ncols - 7) % 4 != 0 {
            return Err(TrajError::Parse {
                line: 1,
                msg: format!("unexpected column count {ncols}"),
            });
        }
        let dof = (ncols - 7) / 4;
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != ncols {
                return Err(TrajError::Parse {
                    line: idx + 1,
                    msg: format!("expected {ncols} fields, found {}", fields.len()),
                });
            }
            let parse = |s: &str| -> Result<T, TrajError> {
                s.parse::<f64>()
                    .map(T::c)
                    .map_err(|e| TrajError::Parse {
                        line: idx + 1,
                        msg: format!("bad float {s:?}: {e}"),
                    })
            };
            let vecs = |start: usize| -> Result<Vec<T>, TrajError> {
                fields[start..start + dof].iter().map(|s| parse(s)).collect()
            };
            rows.push(TrajectoryRow {
                t: parse(fields[0])?,
                q: vecs(1)?,
                qdot: vecs(1 + dof)?,
                u: vecs(1 + 2 * dof)?,
                r_q: vecs(1 + 3 * dof)?,
                cost: parse(fields[1 + 4 * dof])?,
                evals: fields[2 + 4 * dof].parse().map_err(|e| TrajError::Parse {
                    line: idx + 1,
                    msg: format!("bad eval count: {e}"),
                })?,
                termination: fields[3 + 4 * dof].to_string(),
                obj_initial: parse(fields[4 + 4 * dof])?,
                obj_final: parse(fields[5 + 4 * dof])?,
                solve_ms: 0.0,
                fallback: fields[6 + 4 * dof] == "1",
            });
        }
        Ok(Trajectory { rows })
    }

    pub fn load_csv(path: &Path) -> Result<Self, TrajError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
