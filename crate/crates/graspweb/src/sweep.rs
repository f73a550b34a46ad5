//! Parallel sweep execution and success-matrix export.

use std::fs;
use std::path::Path;

use graspweb_core::env::EpisodeConfig;
use graspweb_core::eval::{run_cell, CellResult, EvalError, Policy, SuccessMatrix, SweepSpec};
use graspweb_core::randomize::RandomizationConfig;
use graspweb_core::reward::Outcome;

use crate::error::Error;

/// Runs the grid on `threads` scoped threads, each with its own policy from
/// `make_policy`. Cells are dealt round-robin and merged by index.
pub fn run_sweep_parallel<P, F>(
    spec: &SweepSpec,
    config: &EpisodeConfig,
    randomization: &RandomizationConfig,
    threads: usize,
    make_policy: F,
) -> Result<SuccessMatrix, EvalError>
where
    P: Policy,
    F: Fn() -> P + Sync,
{
    spec.validate()?;
    let noise = spec.noise_patterns(randomization);
    let n = spec.cell_count();
    let threads = threads.clamp(1, n.max(1));
    let mut cells: Vec<Option<CellResult>> = vec![None; n];
    let parts = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let (noise, make_policy) = (&noise, &make_policy);
                s.spawn(move || {
                    let mut policy = make_policy();
                    (t..n)
                        .step_by(threads)
                        .map(|c| run_cell(spec, config, randomization, noise, c, &mut policy))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep thread panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;
    for c in parts.into_iter().flatten() {
        let i = c.index;
        cells[i] = Some(c);
    }
    Ok(SuccessMatrix {
        spec: spec.clone(),
        cells: cells.into_iter().map(|c| c.expect("every cell ran")).collect(),
        config_hash: String::new(),
    })
}

/// Column names: axis names, then counts, then one column per outcome code.
pub fn csv_header(matrix: &SuccessMatrix) -> Vec<String> {
    let mut h: Vec<String> = matrix.spec.axes.iter().map(|a| a.name.name().to_string()).collect();
    h.push("successes".into());
    h.push("trials".into());
    h.extend(Outcome::ALL.iter().map(|o| o.code().to_string()));
    h
}

pub fn to_csv(matrix: &SuccessMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header(matrix)).expect("in-memory write");
    for c in &matrix.cells {
        let mut row: Vec<String> = c.coords.iter().map(|v| v.to_string()).collect();
        row.push(c.successes.to_string());
        row.push(c.trials.len().to_string());
        for o in Outcome::ALL {
            row.push(c.trials.iter().filter(|t| t.outcome == o).count().to_string());
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn to_json(matrix: &SuccessMatrix) -> String {
    serde_json::to_string_pretty(matrix).expect("matrix serializes")
}

pub fn from_json(text: &str) -> Result<SuccessMatrix, serde_json::Error> {
    serde_json::from_str(text)
}

/// Writes `<stem>.csv` and `<stem>.json`.
pub fn export(matrix: &SuccessMatrix, stem: &Path) -> Result<(), Error> {
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let csv = stem.with_extension("csv");
    fs::write(&csv, to_csv(matrix)).map_err(|e| Error::io(&csv, e))?;
    let json = stem.with_extension("json");
    fs::write(&json, to_json(matrix)).map_err(|e| Error::io(&json, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use graspweb_core::env::GraspEnv;
    use graspweb_core::eval::{run_sweep, TrialResult};
    use graspweb_core::gripper::ACTION_DIM;
    use graspweb_core::web::{GraspType, WebNoise};

    struct Idle;

    impl Policy for Idle {
        fn act(&mut self, _env: &GraspEnv) -> Result<[f64; ACTION_DIM], EvalError> {
            Ok([0.0; ACTION_DIM])
        }
    }

    fn fake_matrix() -> SuccessMatrix {
        let spec = SweepSpec::shape_grid(GraspType::ActiveForce, false, 1);
        let cells = (0..spec.cell_count())
            .map(|i| CellResult {
                index: i,
                coords: spec.cell_coords(i),
                successes: i % 2,
                trials: vec![TrialResult {
                    seed: i as u64,
                    noise: WebNoise::zero(),
                    outcome: if i % 2 == 1 { Outcome::Success } else { Outcome::LiftFail },
                }],
            })
            .collect();
        SuccessMatrix {
            spec,
            cells,
            config_hash: "h".into(),
        }
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let m = fake_matrix();
        let text = to_csv(&m);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 76);
        assert!(lines[0].starts_with("depth,width,eps2,successes,trials,success,timeout"));
        assert_eq!(lines[1], "0.02,0.06,0.05,0,1,0,0,0,0,0,1,0,0");
    }

    #[test]
    fn json_round_trips() {
        let m = fake_matrix();
        assert_eq!(from_json(&to_json(&m)).unwrap(), m);
    }

    #[test]
    fn parallel_matches_sequential_in_any_order() {
        let mut spec = SweepSpec::approach_grid(GraspType::ActiveForce, SweepSpec::probe_objects()[0], 4);
        spec.axes[0].values.truncate(2);
        spec.axes[1].values = vec![-15.0, 0.0];
        spec.max_steps = 3;
        let cfg = EpisodeConfig::default();
        let rc = RandomizationConfig::default();
        let seq = run_sweep(&spec, &cfg, &rc, &mut Idle).unwrap();
        for threads in [1, 3] {
            assert_eq!(run_sweep_parallel(&spec, &cfg, &rc, threads, || Idle).unwrap(), seq);
        }
        assert!(seq.cells.iter().all(|c| c.trials[0].outcome == Outcome::Truncated));
    }
}
