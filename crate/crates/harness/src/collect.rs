//! Excitation-data collection: drive the plant (no payload) with randomized
//! torque programs and log one-step state transitions for training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uwmpc_core::dynamics::{self, JointState};
use uwmpc_core::nn::{DataRow, Dataset, DatasetMeta};

use crate::config::HarnessConfig;

#[derive(Debug, thiserror::Error)]
pub enum CollectError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("collection produced no rows")]
    Empty,
}

/// Deterministic per-episode seed derived from the run seed.
fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed ^ (episode as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

enum Signal {
    /// Per joint: list of (end_time_s, torque) holds.
    Piecewise(Vec<Vec<(f64, f64)>>),
    /// Per joint: list of (amplitude, freq_hz, phase), normalized to the box.
    MultiSine(Vec<Vec<(f64, f64, f64)>>),
}

impl Signal {
    fn sample(&self, joint: usize, t: f64, mid: f64, half_amp: f64) -> f64 {
        match self {
            Signal::Piecewise(holds) => {
                for &(end, v) in &holds[joint] {
                    if t < end {
                        return mid + v * half_amp;
                    }
                }
                holds[joint].last().map_or(mid, |&(_, v)| mid + v * half_amp)
            }
            Signal::MultiSine(sines) => {
                let total: f64 = sines[joint].iter().map(|&(a, _, _)| a).sum();
                let s: f64 = sines[joint]
                    .iter()
                    .map(|&(a, f, p)| a * (2.0 * std::f64::consts::PI * f * t + p).sin())
                    .sum();
                mid + half_amp * s / total
            }
        }
    }
}

fn make_signal(cfg: &HarnessConfig, rng: &mut ChaCha8Rng, episode: usize, duration: f64) -> Signal {
    let dof = cfg.plant.dof();
    let e = &cfg.excitation;
    if episode % 2 == 0 {
        let holds = (0..dof)
            .map(|_| {
                let mut t = 0.0;
                let mut h = Vec::new();
                while t < duration {
                    t += rng.gen_range(e.hold_range_s[0]..=e.hold_range_s[1]);
                    h.push((t, rng.gen_range(-1.0..=1.0)));
                }
                h
            })
            .collect();
        Signal::Piecewise(holds)
    } else {
        let sines = (0..dof)
            .map(|_| {
                (0..e.sines_per_joint.max(1))
                    .map(|_| {
                        (
                            rng.gen_range(0.3..=1.0),
                            rng.gen_range(e.freq_range_hz[0]..=e.freq_range_hz[1]),
                            rng.gen_range(0.0..std::f64::consts::TAU),
                        )
                    })
                    .collect()
            })
            .collect();
        Signal::MultiSine(sines)
    }
}

/// Run the excitation plan and assemble the transition dataset. Episodes
/// whose simulation diverges are discarded with a note on stderr; the run
/// continues with the remaining episodes.
pub fn collect_data(cfg: &HarnessConfig, seed: u64) -> Result<Dataset<f64>, CollectError> {
    let dof = cfg.plant.dof();
    let dt = cfg.sim.control_period;
    let samples = (cfg.excitation.episode_duration_s / dt).round() as usize;
    let mut rows = Vec::new();

    for ep in 0..cfg.excitation.episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(seed, ep));
        // start somewhere in the interior of the joint box, at rest
        let q0: Vec<f64> = cfg
            .plant
            .joints
            .iter()
            .map(|j| {
                let margin = 0.1 * (j.q_max - j.q_min);
                rng.gen_range(j.q_min + margin..=j.q_max - margin)
            })
            .collect();
        let signal = make_signal(cfg, &mut rng, ep, cfg.excitation.episode_duration_s);

        let mut state = JointState::at_rest(q0);
        let mut episode_rows = Vec::with_capacity(samples.saturating_sub(1));
        let mut diverged = false;
        for k in 0..samples.saturating_sub(1) {
            let t = k as f64 * dt;
            let eta = if cfg.excitation.gravity_comp {
                dynamics::restoring_torques(&state.q, &cfg.plant)
            } else {
                vec![0.0; dof]
            };
            let u: Vec<f64> = (0..dof)
                .map(|i| {
                    let j = &cfg.plant.joints[i];
                    let mid = 0.5 * (j.tau_max + j.tau_min);
                    let half = 0.5 * (j.tau_max - j.tau_min) * cfg.excitation.amplitude_frac;
                    let q_mid = 0.5 * (j.q_max + j.q_min);
                    let centering = cfg.excitation.centering_stiffness * (q_mid - state.q[i])
                        - cfg.excitation.centering_damping * state.qdot[i];
                    let raw = signal.sample(i, t, mid, half) + eta[i] + centering;
                    raw.clamp(j.tau_min, j.tau_max)
                })
                .collect();
            let out = match dynamics::step(&state, &u, &cfg.plant, &cfg.sim) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("episode {ep} discarded at t = {t:.2} s: {e}");
                    diverged = true;
                    break;
                }
            };
            let keep = !(cfg.excitation.filter_clamped && !out.clamps.is_empty());
            if keep {
                episode_rows.push(DataRow {
                    q: state.q.clone(),
                    qdot: state.qdot.clone(),
                    u,
                    dq: out
                        .state
                        .q
                        .iter()
                        .zip(&state.q)
                        .map(|(a, b)| a - b)
                        .collect(),
                    dqdot: out
                        .state
                        .qdot
                        .iter()
                        .zip(&state.qdot)
                        .map(|(a, b)| a - b)
                        .collect(),
                });
            }
            state = out.state;
        }
        if !diverged {
            rows.extend(episode_rows);
        }
    }

    if rows.is_empty() {
        return Err(CollectError::Empty);
    }
    Ok(Dataset {
        rows,
        meta: DatasetMeta {
            sample_period_s: dt,
            seed,
            scenario: "excitation".into(),
        },
    })
}

fn fmt(v: f64) -> String {
    format!("{v:.8e}")
}

/// CSV with a TOML sidecar (`<path>.meta.toml`) for provenance.
pub fn save_dataset(data: &Dataset<f64>, path: &std::path::Path) -> Result<(), CollectError> {
    let dof = data.dof();
    let mut out = String::new();
    let mut cols = Vec::new();
    for p in ["q", "qd", "u", "dq", "dqd"] {
        for i in 1..=dof {
            cols.push(format!("{p}{i}"));
        }
    }
    out.push_str(&cols.join(","));
    out.push('\n');
    for r in &data.rows {
        let fields: Vec<String> = r
            .q
            .iter()
            .chain(&r.qdot)
            .chain(&r.u)
            .chain(&r.dq)
            .chain(&r.dqdot)
            .map(|&v| fmt(v))
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    let meta = toml::to_string_pretty(&data.meta).expect("meta serializes");
    std::fs::write(sidecar_path(path), meta)?;
    Ok(())
}

fn sidecar_path(path: &std::path::Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta.toml");
    std::path::PathBuf::from(s)
}

pub fn load_dataset(path: &std::path::Path) -> Result<Dataset<f64>, CollectError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(CollectError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let ncols = header.split(',').count();
    if ncols % 5 != 0 || ncols == 0 {
        return Err(CollectError::Parse {
            line: 1,
            msg: format!("column count {ncols} is not a multiple of 5"),
        });
    }
    let dof = ncols / 5;
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| CollectError::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        if vals.len() != ncols {
            return Err(CollectError::Parse {
                line: idx + 1,
                msg: format!("expected {ncols} fields, found {}", vals.len()),
            });
        }
        rows.push(DataRow {
            q: vals[0..dof].to_vec(),
            qdot: vals[dof..2 * dof].to_vec(),
            u: vals[2 * dof..3 * dof].to_vec(),
            dq: vals[3 * dof..4 * dof].to_vec(),
            dqdot: vals[4 * dof..5 * dof].to_vec(),
        });
    }
    let meta_text = std::fs::read_to_string(sidecar_path(path))?;
    let meta: DatasetMeta = toml::from_str(&meta_text).map_err(|e| CollectError::Parse {
        line: 0,
        msg: format!("sidecar: {e}"),
    })?;
    Ok(Dataset { rows, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_cfg() -> HarnessConfig {
        let mut cfg = HarnessConfig::default();
        cfg.excitation.episodes = 1;
        cfg.excitation.episode_duration_s = 1.0;
        cfg
    }

    #[test]
    fn one_second_episode_yields_nineteen_transitions() {
        let cfg = short_cfg();
        let data = collect_data(&cfg, 0).unwrap();
        assert_eq!(data.rows.len(), 19);
    }

    #[test]
    fn fixed_seed_gives_identical_dataset_bytes() {
        let cfg = short_cfg();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        save_dataset(&collect_data(&cfg, 5).unwrap(), &p1).unwrap();
        save_dataset(&collect_data(&cfg, 5).unwrap(), &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let d3 = collect_data(&cfg, 6).unwrap();
        assert_ne!(collect_data(&cfg, 5).unwrap().rows, d3.rows);
    }

    #[test]
    fn deltas_match_replayed_simulation() {
        // re-simulate each row's transition and compare the logged deltas
        let mut cfg = short_cfg();
        cfg.excitation.episodes = 2;
        let data = collect_data(&cfg, 11).unwrap();
        for r in &data.rows {
            let s = JointState::new(r.q.clone(), r.qdot.clone());
            let out = dynamics::step(&s, &r.u, &cfg.plant, &cfg.sim).unwrap();
            for i in 0..4 {
                assert!((out.state.q[i] - r.q[i] - r.dq[i]).abs() < 1e-14);
                assert!((out.state.qdot[i] - r.qdot[i] - r.dqdot[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn commands_stay_inside_the_torque_box() {
        let mut cfg = short_cfg();
        cfg.excitation.episodes = 4;
        cfg.excitation.episode_duration_s = 5.0;
        let data = collect_data(&cfg, 3).unwrap();
        for r in &data.rows {
            for (i, j) in cfg.plant.joints.iter().enumerate() {
                assert!(r.u[i] >= j.tau_min - 1e-12 && r.u[i] <= j.tau_max + 1e-12);
            }
        }
    }

    #[test]
    fn dataset_round_trips_through_csv() {
        let cfg = short_cfg();
        let data = collect_data(&cfg, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        save_dataset(&data, &p).unwrap();
        let back = load_dataset(&p).unwrap();
        assert_eq!(back.rows.len(), data.rows.len());
        assert_eq!(back.meta, data.meta);
        for (a, b) in data.rows.iter().zip(&back.rows) {
            for i in 0..4 {
                assert!((a.q[i] - b.q[i]).abs() <= a.q[i].abs() * 1e-8 + 1e-12);
                assert!((a.dqdot[i] - b.dqdot[i]).abs() <= a.dqdot[i].abs() * 1e-8 + 1e-12);
            }
        }
    }
}
