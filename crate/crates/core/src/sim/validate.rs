use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{with_mission, Mission, MissionTask, Outcome, RunRecord, SimOptions};
use crate::error::{Error, Result};
use crate::plant::Dynamics;
use crate::rng;
use crate::scenario::{Scenario, COST_NAMES};
use crate::schedule::Schedule;

/// z-value of a two-sided 95% normal interval.
const Z95: f64 = 1.959_963_984_540_054;

/// Neumaier-compensated sum.
fn stable_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

fn mean_and_half_width(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = stable_sum(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = stable_sum(xs.iter().map(|x| (x - mean).powi(2))) / (n - 1.0);
    (mean, Z95 * (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFrequencies {
    pub collision: f64,
    pub target: f64,
    pub free: f64,
}

/// Empirical statistic next to its theoretical value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveCheck {
    pub name: String,
    pub probability: bool,
    pub theoretical: f64,
    pub empirical: f64,
    /// 95% confidence half-width (normal approximation).
    pub half_width: f64,
    pub deviation: f64,
    /// `deviation / |theoretical|`, when the theoretical value is nonzero.
    pub relative_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub runs: usize,
    pub seed: u64,
    pub outcomes: OutcomeFrequencies,
    pub objectives: Vec<ObjectiveCheck>,
}

impl ValidationReport {
    /// Probabilities must lie within `max(3σ, allowance)` of the theoretical
    /// value, σ being the binomial standard deviation at the theoretical
    /// probability; costs within `cost_rel` relative deviation.
    pub fn failures(&self, allowance: f64, cost_rel: f64) -> Vec<String> {
        let n = self.runs as f64;
        self.objectives
            .iter()
            .filter_map(|o| {
                let ok = if o.probability {
                    let p = o.theoretical.clamp(0.0, 1.0);
                    let sigma = (p * (1.0 - p) / n).sqrt();
                    o.deviation <= (3.0 * sigma).max(allowance)
                } else {
                    match o.relative_deviation {
                        Some(r) => r <= cost_rel,
                        None => o.deviation <= 1e-9,
                    }
                };
                (!ok).then(|| {
                    format!("{}: empirical {:.6} vs theoretical {:.6}", o.name, o.empirical, o.theoretical)
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidateOptions {
    pub runs: usize,
    pub seed: u64,
    pub sim: SimOptions,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self { runs: 1000, seed: 0, sim: SimOptions::default() }
    }
}

/// Seed of run `k` in a batch.
pub fn run_seed(seed: u64, k: usize) -> u64 {
    rng::derive_seed(seed, &[k as u64])
}

struct Batch<'a> {
    schedule: &'a Schedule,
    runs: usize,
    seed: u64,
    opts: SimOptions,
}

impl MissionTask for Batch<'_> {
    type Output = Vec<RunRecord>;
    fn run<const N: usize, D: Dynamics<N> + Clone + Sync>(self, m: &Mission<N, D>) -> Result<Vec<RunRecord>> {
        m.check_schedule(self.schedule)?;
        (0..self.runs).into_par_iter().map(|k| m.run(self.schedule, run_seed(self.seed, k), &self.opts)).collect()
    }
}

/// Runs `runs` independent missions; run `k` uses `run_seed(seed, k)`.
pub fn simulate_batch(
    scenario: &Scenario,
    schedule: &Schedule,
    runs: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<Vec<RunRecord>> {
    with_mission(scenario, Batch { schedule, runs, seed, opts: *opts })
}

/// Compares Monte Carlo statistics of the closed loop under `schedule` with
/// theoretical objective values (`ptarg`, `pcoll` or a cost name).
pub fn validate(
    scenario: &Scenario,
    schedule: &Schedule,
    objectives: &[String],
    theoretical: &[f64],
    opts: &ValidateOptions,
) -> Result<(ValidationReport, Vec<RunRecord>)> {
    if opts.runs < 100 {
        return Err(Error::InvalidInput("validation needs at least 100 runs".into()));
    }
    if objectives.len() != theoretical.len() {
        return Err(Error::InvalidInput("one theoretical value per objective is required".into()));
    }
    let records = simulate_batch(scenario, schedule, opts.runs, opts.seed, &opts.sim)?;
    Ok((summarize(&records, objectives, theoretical, opts.seed)?, records))
}

pub fn summarize(records: &[RunRecord], objectives: &[String], theoretical: &[f64], seed: u64) -> Result<ValidationReport> {
    let n = records.len();
    if n == 0 {
        return Err(Error::InvalidInput("no runs to summarize".into()));
    }
    let count = |o: Outcome| records.iter().filter(|r| r.outcome == o).count();
    let (nc, nt) = (count(Outcome::Collision), count(Outcome::Target));
    let nf = n - nc - nt;
    let outcomes = OutcomeFrequencies {
        collision: nc as f64 / n as f64,
        target: nt as f64 / n as f64,
        free: nf as f64 / n as f64,
    };
    let mut checks = Vec::with_capacity(objectives.len());
    for (name, &theo) in objectives.iter().zip(theoretical) {
        let (probability, samples): (bool, Vec<f64>) = match name.as_str() {
            "ptarg" => (true, records.iter().map(|r| f64::from(u8::from(r.outcome == Outcome::Target))).collect()),
            "pcoll" => (true, records.iter().map(|r| f64::from(u8::from(r.outcome == Outcome::Collision))).collect()),
            other => {
                let k = COST_NAMES
                    .iter()
                    .position(|c| *c == other)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown objective {other:?}")))?;
                (false, records.iter().map(|r| r.cost[k]).collect())
            }
        };
        let (empirical, half_width) = if probability {
            let p = stable_sum(samples.iter().copied()) / n as f64;
            (p, Z95 * (p * (1.0 - p) / n as f64).sqrt())
        } else {
            mean_and_half_width(&samples)
        };
        let deviation = (empirical - theo).abs();
        checks.push(ObjectiveCheck {
            name: name.clone(),
            probability,
            theoretical: theo,
            empirical,
            half_width,
            deviation,
            relative_deviation: (theo.abs() > 1e-12).then(|| deviation / theo.abs()),
        });
    }
    Ok(ValidationReport { runs: n, seed, outcomes, objectives: checks })
}
