//! Wall-clock control loop with the replanning worker on its own thread.
//!
//! Requests and results travel over bounded channels of capacity one, so at
//! most one request is outstanding. The control loop only ever polls.

use std::sync::mpsc::{sync_channel, TryRecvError};
use std::thread;
use std::time::{Duration, Instant};

use super::{replan, streams, sub_seed, Experiment, LoopState, Mode, TrialRecord, WorkerStatus};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ThreadedStats {
    /// Worker time per replan.
    pub replan_latencies: Vec<Duration>,
    /// Ticks that finished after their wall-clock deadline.
    pub overruns: usize,
}

/// Runs one trial with ticks paced at `tick_period` of wall time. Not
/// reproducible: which tick a policy lands on depends on the worker's speed.
pub fn control_loop_threaded(
    exp: &Experiment,
    mode: Mode,
    seed: u64,
    tick_period: Duration,
) -> (TrialRecord, ThreadedStats) {
    let mut stats = ThreadedStats::default();
    let (req_tx, req_rx) = sync_channel(1);
    let (res_tx, res_rx) = sync_channel(1);
    thread::scope(|scope| {
        scope.spawn(move || {
            for (req, replan_seed) in req_rx {
                let started = Instant::now();
                let result = replan(&exp.planner, &req, replan_seed);
                if res_tx.send((req.tick, result, started.elapsed())).is_err() {
                    break;
                }
            }
        });

        let mut s = LoopState::new(exp, mode, seed);
        let mut replans = 0u64;
        let start = Instant::now();
        while !s.finished() {
            s.disturbance_events();
            match res_rx.try_recv() {
                Ok((tick, result, latency)) => {
                    s.deliver(tick, result);
                    stats.replan_latencies.push(latency);
                    s.status = WorkerStatus::Ready;
                }
                Err(TryRecvError::Empty) => {}
                Err(TryRecvError::Disconnected) => {
                    s.record.failures.push("replanning worker exited".into());
                    s.status = WorkerStatus::Busy;
                }
            }
            let adopted = s.adopt_pending();
            if s.status == WorkerStatus::Ready && s.pending.is_none() && s.replan_possible() {
                s.status = WorkerStatus::Requested;
                if req_tx
                    .try_send((s.snapshot(), sub_seed(seed, streams::REPLAN + replans)))
                    .is_ok()
                {
                    replans += 1;
                    s.status = WorkerStatus::Busy;
                }
            }
            s.apply(adopted);
            let deadline = start + tick_period * s.tick as u32;
            let now = Instant::now();
            if now < deadline {
                thread::sleep(deadline - now);
            } else {
                stats.overruns += 1;
            }
        }
        drop(req_tx);
        (s.finish(), stats)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glider::GliderParams;
    use crate::mppi::MppiConfig;
    use crate::nmpc::{Planner, ScenarioConfig};
    use crate::rollout::GliderModel;
    use crate::synthesis::SynthesisConfig;
    use crate::vpm::VpmConfig;

    #[test]
    fn threaded_loop_completes() {
        let planner = Planner {
            model: GliderModel::new(GliderParams::default(), VpmConfig::default()),
            mppi: MppiConfig {
                batch_size: 8,
                iterations: 1,
                initial_iterations: 2,
                horizon: 25,
                ..Default::default()
            },
            synthesis: SynthesisConfig {
                samples: 12,
                ..Default::default()
            },
            projection_steps: 5,
        };
        let exp = Experiment::prepare(planner, ScenarioConfig::default(), 2).unwrap();
        let (rec, stats) = control_loop_threaded(&exp, Mode::Compensated, 3, Duration::from_millis(2));
        assert_eq!(rec.states.len(), rec.inputs.len() + 1);
        assert_eq!(rec.replanned.len(), rec.inputs.len());
        assert!(!stats.replan_latencies.is_empty());
        assert!(rec.replans.len() <= stats.replan_latencies.len());
    }
}
