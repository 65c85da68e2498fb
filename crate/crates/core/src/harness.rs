//! Cost sweeps: calibrate the misclassification matrix to a series of prior
//! expected costs, build each strategy's policy, evaluate it exactly and
//! report savings relative to acquiring nothing.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use thiserror::Error;

use crate::cost::{calibrate, AcquisitionCostModel, CalibrationMode, CostError, CostLayout};
use crate::inference::{InferenceContext, InferenceError};
use crate::network::{Assignment, DiscreteNetwork, Variable};
use crate::policy::{evaluate, Planner, PolicyError, Strategy};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Ranges for randomly drawn costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticCostRanges {
    pub feature: (f64, f64),
    pub overhead: (f64, f64),
}

impl Default for SyntheticCostRanges {
    fn default() -> Self {
        SyntheticCostRanges {
            feature: (1.0, 100.0),
            overhead: (100.0, 200.0),
        }
    }
}

/// Random amounts over a fixed feature/group layout: base costs uniform on
/// `[1, 100]`, group overheads uniform on `[100, 200]`.
pub fn generate_synthetic_costs(layout: &CostLayout, seed: u64) -> AcquisitionCostModel {
    generate_synthetic_costs_in(layout, seed, SyntheticCostRanges::default())
}

pub fn generate_synthetic_costs_in(
    layout: &CostLayout,
    seed: u64,
    ranges: SyntheticCostRanges,
) -> AcquisitionCostModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = layout
        .names
        .iter()
        .map(|_| rng.random_range(ranges.feature.0..=ranges.feature.1))
        .collect();
    let overhead = layout
        .group_names
        .iter()
        .map(|_| rng.random_range(ranges.overhead.0..=ranges.overhead.1))
        .collect();
    AcquisitionCostModel::new(
        layout.names.clone(),
        base,
        layout.group_of.clone(),
        layout.group_names.clone(),
        overhead,
    )
    .expect("ranges are nonnegative")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomNetworkConfig {
    pub features: usize,
    /// Probability that a node receives a second parent, creating a collider.
    pub density: f64,
    /// Symmetric Dirichlet concentration for CPT rows.
    pub alpha: f64,
    pub arity: usize,
    /// When set, the class is a root with this prior.
    pub class_prior: Option<Vec<f64>>,
}

impl RandomNetworkConfig {
    pub fn new(features: usize, density: f64) -> Self {
        RandomNetworkConfig {
            features,
            density,
            alpha: 1.0,
            arity: 2,
            class_prior: None,
        }
    }
}

fn dirichlet_row(rng: &mut ChaCha8Rng, k: usize, alpha: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha is positive");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let z: f64 = draws.iter().sum();
        if z > 0.0 && z.is_finite() {
            return draws.into_iter().map(|d| d / z).collect();
        }
    }
}

/// Random DAG over `Y, X1..Xn`: a random tree oriented along a random
/// ordering, plus extra parents with probability `density` (at most two
/// parents per node). Variable ids: `Y` is 0, `Xi` is `i`.
pub fn generate_random_network(config: &RandomNetworkConfig, seed: u64) -> DiscreteNetwork {
    assert!(config.arity >= 2, "variables need at least two states");
    assert!(config.alpha > 0.0, "Dirichlet concentration must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.features + 1;
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    if config.class_prior.is_some() {
        let y = order.iter().position(|&v| v == 0).unwrap();
        order.remove(y);
        order.insert(0, 0);
    }
    let mut parents = vec![Vec::new(); n];
    for k in 1..n {
        let v = order[k];
        let first = order[rng.random_range(0..k)];
        parents[v].push(first);
        if k >= 2 && rng.random_bool(config.density.clamp(0.0, 1.0)) {
            let candidates: Vec<usize> = order[..k].iter().copied().filter(|&u| u != first).collect();
            parents[v].push(candidates[rng.random_range(0..candidates.len())]);
        }
        parents[v].sort_unstable();
    }
    let variables: Vec<Variable> = (0..n)
        .map(|i| Variable {
            id: i,
            name: if i == 0 { "Y".into() } else { format!("X{i}") },
            states: (0..config.arity).map(|s| format!("s{s}")).collect(),
        })
        .collect();
    let cpt = (0..n)
        .map(|v| {
            let rows = config.arity.pow(parents[v].len() as u32);
            match (&config.class_prior, v) {
                (Some(prior), 0) => vec![prior.clone()],
                _ => (0..rows).map(|_| dirichlet_row(&mut rng, config.arity, config.alpha)).collect(),
            }
        })
        .collect();
    DiscreteNetwork::new(variables, parents, cpt, 0).expect("generated network is valid")
}

/// One member of the bundled synthetic benchmark.
#[derive(Debug, Clone)]
pub struct SuiteInstance {
    pub name: String,
    pub network: DiscreteNetwork,
    pub layout: CostLayout,
}

/// Five six-feature networks with imbalanced class priors and two cost groups each.
pub fn synthetic_suite() -> Vec<SuiteInstance> {
    let priors = [[0.8, 0.2], [0.7, 0.3], [0.85, 0.15], [0.75, 0.25], [0.9, 0.1]];
    priors
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut cfg = RandomNetworkConfig::new(6, 0.35);
            cfg.class_prior = Some(p.to_vec());
            let network = generate_random_network(&cfg, 100 + i as u64);
            let layout = CostLayout::round_robin(&network, 2);
            SuiteInstance {
                name: format!("synthetic-{}", i + 1),
                network,
                layout,
            }
        })
        .collect()
}

/// Where feature costs come from.
#[derive(Debug, Clone)]
pub enum CostSource {
    /// A fixed model; rows report seed 0.
    Fixed(AcquisitionCostModel),
    /// Fresh random amounts over this layout for every seed.
    Synthetic(CostLayout),
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub targets: Vec<f64>,
    pub mode: CalibrationMode,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    /// Worker threads; 1 runs sequentially.
    pub jobs: usize,
}

impl SweepConfig {
    pub fn new(targets: Vec<f64>, mode: CalibrationMode) -> Self {
        SweepConfig {
            targets,
            mode,
            strategies: Strategy::COMPARED.to_vec(),
            seeds: vec![1, 2, 3],
            jobs: 1,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.strategies.is_empty() {
            return Err(HarnessError::Config("at least one strategy is required".into()));
        }
        if self.strategies.contains(&Strategy::Oracle) {
            return Err(HarnessError::Config("the oracle is not a sweep strategy".into()));
        }
        if self.targets.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(HarnessError::Config("targets must be nonnegative".into()));
        }
        if self.targets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HarnessError::Config("targets must be strictly ascending".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        Ok(())
    }
}

/// `LO:HI:STEP`, endpoints included.
pub fn parse_targets(text: &str) -> Result<Vec<f64>, HarnessError> {
    let bad = || HarnessError::Config(format!("expected LO:HI:STEP, got `{text}`"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [lo, hi, step] = parts[..] else {
        return Err(bad());
    };
    if !(lo >= 0.0 && hi >= lo && step > 0.0 && hi.is_finite()) {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| lo + k as f64 * step).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub etc: f64,
    /// `ETC(no acquisition) − ETC(strategy)`.
    pub savings: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub target_emc: f64,
    pub mode: CalibrationMode,
    pub seed: u64,
    pub outcomes: Vec<StrategyOutcome>,
}

impl SweepRow {
    pub fn outcome(&self, s: Strategy) -> Option<&StrategyOutcome> {
        self.outcomes.iter().find(|o| o.strategy == s)
    }
}

/// Run every (seed, target) cell. Rows are ordered by seed, then target.
pub fn run_sweep(
    net: &DiscreteNetwork,
    source: &CostSource,
    config: &SweepConfig,
) -> Result<Vec<SweepRow>, HarnessError> {
    config.validate()?;
    let planner = Planner::new(net)?;
    let prior = InferenceContext::new(net).posterior(net.class())?;
    let models: Vec<(u64, AcquisitionCostModel)> = match source {
        CostSource::Fixed(m) => vec![(0, m.clone())],
        CostSource::Synthetic(layout) => config
            .seeds
            .iter()
            .map(|&s| (s, generate_synthetic_costs(layout, s)))
            .collect(),
    };
    let cells: Vec<(usize, f64)> = (0..models.len())
        .flat_map(|m| config.targets.iter().map(move |&t| (m, t)))
        .collect();
    let run_cell = |&(m, target): &(usize, f64)| -> Result<SweepRow, HarnessError> {
        let (seed, costs) = &models[m];
        let matrix = calibrate(&prior, target, config.mode)?;
        let evidence = Assignment::new();
        let etc_of = |s: Strategy| -> Result<f64, HarnessError> {
            let p = planner.build(s, &evidence, costs, &matrix)?;
            Ok(evaluate(&p, net, costs, &matrix)?.etc)
        };
        let baseline = etc_of(Strategy::None)?;
        let outcomes = config
            .strategies
            .iter()
            .map(|&s| {
                let etc = if s == Strategy::None { baseline } else { etc_of(s)? };
                Ok(StrategyOutcome {
                    strategy: s,
                    etc,
                    savings: baseline - etc,
                })
            })
            .collect::<Result<_, HarnessError>>()?;
        log::debug!("seed {seed} target {target:.4} done");
        Ok(SweepRow {
            target_emc: target,
            mode: config.mode,
            seed: *seed,
            outcomes,
        })
    };
    if config.jobs <= 1 {
        cells.iter().map(run_cell).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    }
}

pub const SWEEP_HEADER: &str = "target_emc,mode,seed,strategy,etc,savings";
pub const SUMMARY_HEADER: &str = "interval_lo,interval_hi,strategy,mean_savings";

pub fn write_sweep_csv(rows: &[SweepRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        for o in &r.outcomes {
            writeln!(
                out,
                "{:.4},{},{},{},{:.4},{:.4}",
                r.target_emc, r.mode, r.seed, o.strategy, o.etc, o.savings
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub interval_lo: f64,
    pub interval_hi: f64,
    pub strategy: Strategy,
    pub mean_savings: f64,
}

/// Mean savings per strategy over `[0, w), [w, 2w), …`; the last interval
/// is closed so the largest target is included.
pub fn summarize(rows: &[SweepRow], width: f64) -> Vec<SummaryRow> {
    let Some(max) = rows.iter().map(|r| r.target_emc).reduce(f64::max) else {
        return Vec::new();
    };
    let intervals = ((max / width).ceil() as usize).max(1);
    let bucket = |t: f64| ((t / width).floor() as usize).min(intervals - 1);
    let mut strategies: Vec<Strategy> = Vec::new();
    for r in rows {
        for o in &r.outcomes {
            if !strategies.contains(&o.strategy) {
                strategies.push(o.strategy);
            }
        }
    }
    let mut out = Vec::new();
    for k in 0..intervals {
        for &s in &strategies {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| bucket(r.target_emc) == k)
                .filter_map(|r| r.outcome(s).map(|o| o.savings))
                .collect();
            if vals.is_empty() {
                continue;
            }
            out.push(SummaryRow {
                interval_lo: k as f64 * width,
                interval_hi: (k + 1) as f64 * width,
                strategy: s,
                mean_savings: vals.iter().sum::<f64>() / vals.len() as f64,
            });
        }
    }
    out
}

pub fn write_summary_csv(rows: &[SummaryRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{:.4},{:.4},{},{:.4}",
            r.interval_lo, r.interval_hi, r.strategy, r.mean_savings
        )?;
    }
    Ok(())
}
