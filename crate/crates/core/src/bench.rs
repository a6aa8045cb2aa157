//! Update-time and sketch-size experiments.
//!
//! Plain HLL and HLL behind the `π0` gate (PHLL) are compared against a stub
//! of an earlier private HLL variant (QLL) that hashes every item once per
//! register. The stub only reproduces the cost of an update and
//! the growth of its registers; it has no estimator.

use std::hint::black_box;
use std::time::Instant;

use serde::Serialize;

use crate::dp::{derive_params, passes_gate, Pipeline};
use crate::error::Result;
use crate::hashing::{HashRole, ItemHasher, Seed};
use crate::sketch::{SketchConfig, SketchState};
use crate::sketches::hll::DEFAULT_REGISTER_WIDTH;
use crate::sketches::Registers;
use crate::stats::mean_variance;

/// Relative error parameter used by the stub for `k` registers.
pub fn qll_gamma(k: usize) -> f64 {
    7.49 / (k as f64).sqrt()
}

/// Registers of the O(k)-per-update baseline.
#[derive(Clone, Debug)]
pub struct QllStub {
    registers: Vec<u8>,
    gamma: f64,
    /// `1/ln q` with `q = 1/(1+γ)`, negative.
    inv_ln_q: f64,
    hasher: ItemHasher,
}

impl QllStub {
    pub fn new(k: usize, gamma: f64, seed: &Seed) -> QllStub {
        assert!(gamma > 0.0, "gamma must be positive");
        QllStub {
            registers: vec![0; k],
            gamma,
            inv_ln_q: -1.0 / gamma.ln_1p(),
            hasher: ItemHasher::new(seed),
        }
    }

    pub fn with_default_gamma(k: usize, seed: &Seed) -> QllStub {
        QllStub::new(k, qll_gamma(k), seed)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn registers(&self) -> &[u8] {
        &self.registers
    }

    /// `P(G ≥ g) = q^{g−1}` for the value drawn from uniform `u ∈ (0, 1]`.
    #[inline]
    fn geometric(&self, u: f64) -> u8 {
        (1.0 + (u.ln() * self.inv_ln_q).floor()).min(u8::MAX as f64) as u8
    }

    /// One hash per register. Returns the number of hashes evaluated.
    pub fn update(&mut self, item: &[u8]) -> usize {
        for j in 0..self.registers.len() {
            let h = self.hasher.hash_indexed(item, j as u32, HashRole::SketchHash);
            let g = self.geometric(1.0 - h.unit());
            if g > self.registers[j] {
                self.registers[j] = g;
            }
        }
        self.registers.len()
    }

    /// Draws every register as the maximum of `n` geometric values directly.
    pub fn sample_after(&mut self, n: u64, seed: &Seed) {
        let hasher = ItemHasher::new(seed);
        let ln_q = 1.0 / self.inv_ln_q;
        for j in 0..self.registers.len() {
            let u = 1.0 - hasher.hash_indexed(b"qll-max", j as u32, HashRole::SketchHash).unit();
            let m = ((-(u.ln() / n as f64).exp_m1()).ln() / ln_q).ceil().max(1.0);
            self.registers[j] = m.min(u8::MAX as f64) as u8;
        }
    }

    pub fn max_register(&self) -> u8 {
        self.registers.iter().copied().max().unwrap_or(0)
    }
}

/// `E[max of n geometric values]` for the stub's distribution.
pub fn qll_expected_max(gamma: f64, n: u64) -> f64 {
    let q = 1.0 / (1.0 + gamma);
    let mut sum = 0.0;
    for g in 1..10_000 {
        let term = -(n as f64 * (-q.powi(g - 1)).ln_1p()).exp_m1();
        sum += term;
        if term < 1e-12 && g > 1 {
            break;
        }
    }
    sum
}

/// `k · ⌈log2(max + 1)⌉`: bits to store every register at the largest value.
pub fn storage_bits(k: usize, max_register: u8) -> u64 {
    k as u64 * (u64::BITS - (max_register as u64).leading_zeros()) as u64
}

/// `k · log2(max)`.
pub fn total_size_bits(k: usize, max_register: u8) -> f64 {
    k as f64 * (max_register.max(1) as f64).log2()
}

/// Benchmarked variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum BenchPipeline {
    #[serde(rename = "hll")]
    Hll,
    #[serde(rename = "phll")]
    Phll,
    #[serde(rename = "qll")]
    Qll,
}

impl BenchPipeline {
    pub const ALL: [BenchPipeline; 3] = [BenchPipeline::Hll, BenchPipeline::Phll, BenchPipeline::Qll];

    pub fn name(self) -> &'static str {
        match self {
            BenchPipeline::Hll => "hll",
            BenchPipeline::Phll => "phll",
            BenchPipeline::Qll => "qll",
        }
    }
}

/// Summary for one `(pipeline, k)`.
#[derive(Clone, Debug, Serialize)]
pub struct BenchResult {
    pub pipeline: BenchPipeline,
    pub k: usize,
    pub trials: usize,
    pub mean_update_ns: Option<f64>,
    pub stddev_update_ns: Option<f64>,
    /// `stddev/mean > 0.5`.
    pub unreliable: bool,
    /// Largest register over all trials.
    pub max_register: u8,
    /// `k · ⌈log2(max_register + 1)⌉`.
    pub total_sketch_size_bits: u64,
    /// Mean over trials of `k · log2(max)` of that trial.
    pub mean_size_bits: f64,
}

/// One CSV row: `pipeline, k, metric, value, trial`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub pipeline: &'static str,
    pub k: usize,
    pub metric: &'static str,
    pub value: f64,
    pub trial: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub results: Vec<BenchResult>,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn result(&self, pipeline: BenchPipeline, k: usize) -> Option<&BenchResult> {
        self.results.iter().find(|r| r.pipeline == pipeline && r.k == k)
    }
}

/// Parameters shared by both experiments.
#[derive(Clone, Debug)]
pub struct BenchSetup {
    pub k_values: Vec<usize>,
    pub trials: usize,
    pub epsilon: f64,
    pub seed: Seed,
}

impl BenchSetup {
    pub fn default_grid(trials: usize, seed: Seed) -> BenchSetup {
        BenchSetup {
            k_values: (7..=12).map(|e| 1usize << e).collect(),
            trials,
            epsilon: std::f64::consts::LN_2,
            seed,
        }
    }
}

struct Trial {
    nanos_per_update: f64,
    max_register: u8,
}

fn hll_max(state: &SketchState) -> u8 {
    match state.registers() {
        Registers::Hll(h) => h.max_register(),
        _ => unreachable!("bench sketches are HLL"),
    }
}

fn time_trial(pipeline: BenchPipeline, k: usize, pi0: f64, items: &[[u8; 8]], seed: Seed) -> Result<Trial> {
    let config = SketchConfig::hll(k);
    let (elapsed, max_register) = match pipeline {
        BenchPipeline::Hll => {
            let mut s = SketchState::new(config, seed)?;
            let start = Instant::now();
            for item in items {
                s.add(item);
            }
            black_box(&s);
            (start.elapsed(), hll_max(&s))
        }
        BenchPipeline::Phll => {
            let mut s = SketchState::new(config, seed)?;
            let gate = s.hasher().clone();
            let start = Instant::now();
            for item in items {
                if passes_gate(&gate, item, pi0) {
                    s.add(item);
                }
            }
            black_box(&s);
            (start.elapsed(), hll_max(&s))
        }
        BenchPipeline::Qll => {
            let mut s = QllStub::with_default_gamma(k, &seed);
            let start = Instant::now();
            for item in items {
                s.update(item);
            }
            black_box(&s);
            (start.elapsed(), s.max_register())
        }
    };
    let elapsed = elapsed.as_nanos() as f64;
    Ok(Trial {
        nanos_per_update: elapsed / items.len().max(1) as f64,
        max_register,
    })
}

fn summarize(pipeline: BenchPipeline, k: usize, trials: &[Trial], timed: bool) -> BenchResult {
    let times: Vec<f64> = trials.iter().map(|t| t.nanos_per_update).collect();
    let (mean, var) = mean_variance(&times);
    let sd = var.sqrt();
    let max_register = trials.iter().map(|t| t.max_register).max().unwrap_or(0);
    let sizes: Vec<f64> = trials.iter().map(|t| total_size_bits(k, t.max_register)).collect();
    BenchResult {
        pipeline,
        k,
        trials: trials.len(),
        mean_update_ns: timed.then_some(mean),
        stddev_update_ns: timed.then_some(sd),
        unreliable: timed && sd > 0.5 * mean,
        max_register,
        total_sketch_size_bits: storage_bits(k, max_register),
        mean_size_bits: mean_variance(&sizes).0,
    }
}

/// Wall-clock time per update when populating fresh sketches with `updates`
/// distinct items. Timed sections run on the calling thread only.
pub fn bench_update(setup: &BenchSetup, updates: usize) -> Result<BenchReport> {
    let pi0 = derive_params(setup.epsilon, &SketchConfig::hll(16))?.pi0;
    let mut results = Vec::new();
    let mut rows = Vec::new();
    let warm: Vec<[u8; 8]> = crate::audit::stream(1, 256).collect();
    for &pipeline in &BenchPipeline::ALL {
        for &k in &setup.k_values {
            time_trial(pipeline, k, pi0, &warm, setup.seed)?;
            let mut trials = Vec::with_capacity(setup.trials);
            for t in 0..setup.trials {
                let first = (t * updates) as u64 + 1;
                let items: Vec<[u8; 8]> = crate::audit::stream(first, first + updates as u64 - 1).collect();
                let trial = time_trial(pipeline, k, pi0, &items, setup.seed.derive(t as u64))?;
                rows.push(BenchRow {
                    pipeline: pipeline.name(),
                    k,
                    metric: "update_ns",
                    value: trial.nanos_per_update,
                    trial: t,
                });
                trials.push(trial);
            }
            let r = summarize(pipeline, k, &trials, true);
            if r.unreliable {
                log::warn!("{} k={} timing is noisy (stddev/mean > 0.5)", pipeline.name(), k);
            }
            results.push(r);
        }
    }
    Ok(BenchReport { results, rows })
}

/// Register growth at cardinality `n`. HLL and PHLL sketches are built from
/// real streams; stub registers are sampled from the distribution of the
/// maximum of `n` geometric values.
pub fn bench_space(setup: &BenchSetup, n: u64) -> Result<BenchReport> {
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for &pipeline in &BenchPipeline::ALL {
        for &k in &setup.k_values {
            let mut trials = Vec::with_capacity(setup.trials);
            for t in 0..setup.trials {
                let seed = setup.seed.derive(t as u64);
                let max_register = match pipeline {
                    BenchPipeline::Hll => {
                        hll_max(&crate::sketch::build(SketchConfig::hll(k), seed, crate::audit::stream(1, n))?)
                    }
                    BenchPipeline::Phll => {
                        let run = crate::dp::run_pipeline(
                            Pipeline::LargeSet,
                            crate::audit::stream(1, n),
                            Some(setup.epsilon),
                            SketchConfig::hll(k),
                            seed,
                        )?;
                        hll_max(&run.state)
                    }
                    BenchPipeline::Qll => {
                        let mut s = QllStub::with_default_gamma(k, &seed);
                        s.sample_after(n, &seed);
                        s.max_register()
                    }
                };
                for (metric, value) in [
                    ("max_register", max_register as f64),
                    ("size_bits", total_size_bits(k, max_register)),
                    ("storage_bits", storage_bits(k, max_register) as f64),
                ] {
                    rows.push(BenchRow {
                        pipeline: pipeline.name(),
                        k,
                        metric,
                        value,
                        trial: t,
                    });
                }
                trials.push(Trial {
                    nanos_per_update: 0.0,
                    max_register,
                });
            }
            results.push(summarize(pipeline, k, &trials, false));
        }
    }
    Ok(BenchReport { results, rows })
}

/// Stub-to-PHLL ratio of mean total size at each `k` of the report.
pub fn size_ratios(report: &BenchReport) -> Vec<(usize, f64)> {
    let mut ks: Vec<usize> = report.results.iter().map(|r| r.k).collect();
    ks.sort_unstable();
    ks.dedup();
    ks.into_iter()
        .filter_map(|k| {
            let q = report.result(BenchPipeline::Qll, k)?;
            let p = report.result(BenchPipeline::Phll, k)?;
            Some((k, q.mean_size_bits / p.mean_size_bits))
        })
        .collect()
}

/// Bits allocated by an HLL layout; identical with and without the gate.
pub fn hll_allocated_bits(k: usize) -> u64 {
    k as u64 * DEFAULT_REGISTER_WIDTH as u64
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (mx, _) = mean_variance(&xs);
    let (my, _) = mean_variance(&ys);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
