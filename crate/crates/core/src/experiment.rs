//! Trial batches, initial-condition sweeps and rollout benchmarks, with their
//! CSV and JSON outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{ConfigError, ReplanError};
use crate::glider::GliderState;
use crate::mppi::{sample_controls, terminal_cost, MppiConfig};
use crate::nmpc::{control_loop, perch_error, plan_offline, streams, sub_seed, Experiment, Mode, TrialRecord};
use crate::rollout::{batch_rollout, Dynamics, GliderModel, RolloutRequest};
use crate::synthesis::Policy;

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 11] = [
    "t",
    "r_x",
    "r_z",
    "theta",
    "phi",
    "v_x",
    "v_z",
    "omega",
    "u",
    "wake_count",
    "replanned",
];

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("offline plan failed: {0}")]
    Plan(#[from] ReplanError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub median_error_m: f64,
    pub q25: f64,
    pub q75: f64,
    pub trials: usize,
    /// Per-trial errors in seed order.
    pub errors: Vec<f64>,
    /// Trials that logged at least one failure.
    pub failed_trials: usize,
}

impl ModeSummary {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let errors: Vec<f64> = records.iter().map(|r| r.perch_error).collect();
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        Self {
            median_error_m: quantile(&sorted, 0.5),
            q25: quantile(&sorted, 0.25),
            q75: quantile(&sorted, 0.75),
            trials: records.len(),
            errors,
            failed_trials: records.iter().filter(|r| !r.failures.is_empty()).count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub modes: BTreeMap<Mode, ModeSummary>,
}

#[derive(Clone, Debug)]
pub struct TrialRun {
    pub summary: TrialSummary,
    pub records: Vec<TrialRecord>,
}

impl TrialRun {
    pub fn median(&self, mode: Mode) -> Option<f64> {
        self.summary.modes.get(&mode).map(|m| m.median_error_m)
    }

    pub fn all_completed(&self) -> bool {
        self.records.iter().all(|r| r.failures.is_empty())
    }
}

/// One row per tick. Inputs and flags describe the tick leaving each state,
/// so the last row carries `u = 0` and `replanned = 0`.
pub fn trial_csv(record: &TrialRecord, config_hash: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# config_hash={config_hash} seed={} mode={}",
        record.seed, record.mode
    );
    s.push_str(&CSV_COLUMNS.join(","));
    s.push('\n');
    for (k, x) in record.states.iter().enumerate() {
        let u = record.inputs.get(k).copied().unwrap_or(0.0);
        let wake = match k {
            0 => 0,
            _ => record.wake_sizes[k - 1],
        };
        let replanned = record.replanned.get(k).copied().unwrap_or(false) as u8;
        let _ = write!(s, "{}", k as f64 * record.dt);
        for v in x.to_array() {
            let _ = write!(s, ",{v}");
        }
        let _ = writeln!(s, ",{u},{wake},{replanned}");
    }
    s
}

/// Runs `trials` seeded trials per mode against one shared offline plan.
/// With `out` set, writes one CSV and one replan log per trial plus
/// `summary.json`.
pub fn run_trials(
    cfg: &ExperimentConfig,
    modes: &[Mode],
    seed: u64,
    trials: usize,
    out: Option<&Path>,
) -> Result<TrialRun, ExperimentError> {
    cfg.validate()?;
    let hash = cfg.hash();
    let exp = Experiment::prepare(cfg.planner(), cfg.scenario.clone(), seed)?;
    if let Some(c) = &exp.characterization {
        log::info!("ring trips the sensor {} steps after release", c.steps);
    } else {
        log::warn!("nominal ring never trips the sensor");
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let mut records = Vec::new();
    let mut summaries = BTreeMap::new();
    for &mode in modes {
        let mut batch = Vec::with_capacity(trials);
        for i in 0..trials {
            let trial_seed = seed.wrapping_add(i as u64);
            let rec = control_loop(&exp, mode, trial_seed);
            log::info!("{mode} seed {trial_seed}: perch error {:.4} m", rec.perch_error);
            for f in &rec.failures {
                log::warn!("{mode} seed {trial_seed}: {f}");
            }
            if let Some(dir) = out {
                let stem = format!("{mode}_seed{trial_seed}");
                fs::write(dir.join(format!("{stem}.csv")), trial_csv(&rec, &hash))?;
                let log = serde_json::json!({
                    "config_hash": hash,
                    "seed": trial_seed,
                    "mode": mode,
                    "fire_time": rec.fire_time,
                    "trigger_time": rec.trigger_time,
                    "crossing_time": rec.crossing_time,
                    "perch_error": rec.perch_error,
                    "failures": rec.failures,
                    "replans": rec.replans,
                });
                fs::write(
                    dir.join(format!("{stem}_replans.json")),
                    serde_json::to_string_pretty(&log)?,
                )?;
            }
            batch.push(rec);
        }
        summaries.insert(mode, ModeSummary::from_records(&batch));
        records.extend(batch);
    }
    let summary = TrialSummary {
        schema_version: SCHEMA_VERSION,
        config_hash: hash,
        seed,
        modes: summaries,
    };
    if let Some(dir) = out {
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(TrialRun { summary, records })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub open_cost: f64,
    pub closed_cost: f64,
    pub open_error: f64,
    pub closed_error: f64,
}

/// Flies from `x0` until the perch plane is crossed or `steps` run out.
fn fly(
    model: &GliderModel,
    x0: &GliderState,
    steps: usize,
    perch_x: f64,
    input: impl Fn(usize, &GliderState) -> f64,
) -> Vec<GliderState> {
    let mut fluid = model.still_air();
    let mut x = *x0;
    let mut states = vec![x];
    for k in 0..steps {
        match model.step(&x, input(k, &x), &mut fluid) {
            Ok(next) => x = next,
            Err(_) => break,
        }
        states.push(x);
        if x.r_x >= perch_x {
            break;
        }
    }
    states
}

/// Open-loop replay of `controls` and closed-loop flight under `policy` from
/// one initial state: `(final cost, perch error)` for each.
pub fn compare_loops(
    model: &GliderModel,
    mppi: &MppiConfig,
    controls: &[f64],
    policy: &Policy,
    x0: &GliderState,
) -> ((f64, f64), (f64, f64)) {
    let perch = crate::vpm::Vec2::new(mppi.target[0], mppi.target[1]);
    let score = |states: &[GliderState]| {
        let last = states.last().expect("at least the initial state");
        (terminal_cost(last, mppi), perch_error(states, perch).0)
    };
    let dt = model.dt();
    let t0 = policy.t_start();
    let open = fly(model, x0, controls.len(), perch.x, |k, _| controls[k]);
    let closed = fly(model, x0, controls.len(), perch.x, |k, x| {
        policy.evaluate(x, t0 + k as f64 * dt)
    });
    (score(&open), score(&closed))
}

/// Sweep values: `points` evenly spaced over `[min, max]`, plus the nominal
/// value when it lies inside the range. A zero-width range gives one point.
pub fn sweep_values(min: f64, max: f64, points: usize, nominal: f64) -> Vec<f64> {
    let mut v: Vec<f64> = if min == max || points == 1 {
        vec![min]
    } else {
        (0..points)
            .map(|i| min + (max - min) * i as f64 / (points - 1) as f64)
            .collect()
    };
    if (min..=max).contains(&nominal) && !v.iter().any(|x| (x - nominal).abs() < 1e-12) {
        v.push(nominal);
        v.sort_by(f64::total_cmp);
    }
    v
}

/// Plans once from the nominal launch state, then perturbs one component of
/// the initial state and compares open-loop replay against the TVLQR policy.
pub fn run_sweep(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<SweepRow>, ExperimentError> {
    cfg.validate()?;
    let planner = cfg.planner();
    let launch = GliderState::from_array(cfg.scenario.launch_state);
    let plan = plan_offline(&planner, &launch, sub_seed(seed, streams::OFFLINE))?;
    let idx = cfg.sweep.state_index - 1;
    let nominal = cfg.scenario.launch_state[idx];
    let rows = sweep_values(cfg.sweep.min, cfg.sweep.max, cfg.sweep.points, nominal)
        .into_iter()
        .map(|value| {
            let mut a = cfg.scenario.launch_state;
            a[idx] = value;
            let ((open_cost, open_error), (closed_cost, closed_error)) = compare_loops(
                &planner.model,
                &planner.mppi,
                &plan.controls,
                &plan.policy,
                &GliderState::from_array(a),
            );
            SweepRow {
                value,
                open_cost,
                closed_cost,
                open_error,
                closed_error,
            }
        })
        .collect();
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow], cfg: &ExperimentConfig, seed: u64) -> String {
    let name = GliderState::NAMES[cfg.sweep.state_index - 1];
    let mut s = format!("# config_hash={} seed={seed} state={name}\n", cfg.hash());
    s.push_str("value,open_cost,closed_cost,open_error,closed_error\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.value, r.open_cost, r.closed_cost, r.open_error, r.closed_error
        );
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub batch: usize,
    /// Median wall time over the repeats (s).
    pub seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub hardware_threads: usize,
    pub steps: usize,
    pub particle_cap: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, batch: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.batch == batch)
    }
}

/// Random input sequences for benchmarking, drawn around zero.
pub fn bench_controls(model: &GliderModel, count: usize, steps: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_controls(&vec![0.0; steps], 2.0, count, model.u_limit(), &mut rng)
}

/// Times batched rollouts from the launch state in still air on the current
/// rayon pool.
pub fn run_bench(cfg: &ExperimentConfig, seed: u64) -> Result<BenchReport, ExperimentError> {
    cfg.validate()?;
    let model = cfg.model();
    let launch = [GliderState::from_array(cfg.scenario.launch_state)];
    let ctx = model.still_air();
    let mut rows = Vec::new();
    for &batch in &cfg.bench.batch_sizes {
        let controls = bench_controls(&model, batch, cfg.bench.steps, seed);
        let req = RolloutRequest {
            initial: &launch,
            context: &ctx,
            controls: &controls,
            record: false,
        };
        let mut times: Vec<f64> = (0..cfg.bench.repeats)
            .map(|_| {
                let t = Instant::now();
                let res = batch_rollout(&model, &req);
                std::hint::black_box(res);
                t.elapsed().as_secs_f64()
            })
            .collect();
        times.sort_by(f64::total_cmp);
        rows.push(BenchRow {
            batch,
            seconds: quantile(&times, 0.5),
            min_seconds: times[0],
            max_seconds: times[times.len() - 1],
        });
    }
    Ok(BenchReport {
        schema_version: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        seed,
        threads: rayon::current_num_threads(),
        hardware_threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        steps: cfg.bench.steps,
        particle_cap: cfg.vpm.particle_cap,
        rows,
    })
}

pub fn bench_csv(report: &BenchReport) -> String {
    let mut s = format!(
        "# config_hash={} seed={} threads={} hardware_threads={} steps={} particle_cap={}\n",
        report.config_hash, report.seed, report.threads, report.hardware_threads, report.steps, report.particle_cap
    );
    s.push_str("batch,seconds,min_seconds,max_seconds\n");
    for r in &report.rows {
        let _ = writeln!(s, "{},{},{},{}", r.batch, r.seconds, r.min_seconds, r.max_seconds);
    }
    s
}
