//! Expected value of information and benefit of feature sets, plus the
//! bound-sharing sweep over a lattice.
//!
//! All EVI values come from one joint table `P(Y, S | e)`:
//! `EVI(S | e) = EMC(e) − Σ_s min_i Σ_j c_ij · P(y_j, s | e)`.
//! Cells with zero probability contribute nothing.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::cost::{emc, AcquisitionCostModel, AcquisitionHistory, CostError, MisclassificationMatrix};
use crate::inference::{marginal_from_superset, InferenceContext, InferenceError, Table};
use crate::lattice::Lattice;
use crate::network::{DiscreteNetwork, FeatureId, FeatureSet, VarId};

/// Bounds closer than this are treated as equal; EVI in `[−TOL, 0]` is 0.
pub const EVI_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValuationError {
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("feature set overlaps the evidence")]
    EvidenceOverlap,
}

fn clamp(v: f64) -> f64 {
    if (-EVI_TOLERANCE..0.0).contains(&v) {
        0.0
    } else {
        v
    }
}

/// EVI of the features in a table whose first variable is the class.
pub fn evi_from_joint(table: &Table, matrix: &MisclassificationMatrix) -> f64 {
    let k = table.cards()[0];
    let values = table.values();
    let rest = values.len() / k;
    let prior: Vec<f64> = (0..k)
        .map(|j| values[j * rest..(j + 1) * rest].iter().sum())
        .collect();
    let before = emc(&prior, matrix).0;
    let mut weights = vec![0.0; k];
    let mut after = 0.0;
    for r in 0..rest {
        for (j, w) in weights.iter_mut().enumerate() {
            *w = values[j * rest + r];
        }
        if weights.iter().all(|&w| w == 0.0) {
            continue;
        }
        after += emc(&weights, matrix).0;
    }
    clamp(before - after)
}

fn query_vars(net: &DiscreteNetwork, s: FeatureSet) -> Vec<VarId> {
    let mut q = vec![net.class()];
    q.extend(net.feature_vars(s));
    q
}

fn check_disjoint(ctx: &InferenceContext<'_>, s: FeatureSet) -> Result<(), ValuationError> {
    let net = ctx.network();
    if s.iter().any(|f| ctx.evidence().contains(net.feature_var(f))) {
        return Err(ValuationError::EvidenceOverlap);
    }
    Ok(())
}

/// `EVI(S | e)` where `e` is the context's evidence.
pub fn evi_set(
    ctx: &InferenceContext<'_>,
    s: FeatureSet,
    matrix: &MisclassificationMatrix,
) -> Result<f64, ValuationError> {
    check_disjoint(ctx, s)?;
    if s.is_empty() {
        return Ok(0.0);
    }
    let table = ctx.joint_marginal(&query_vars(ctx.network(), s))?;
    Ok(evi_from_joint(&table, matrix))
}

/// `EVI(S | e) − C(S | history)`.
pub fn benefit_set(
    ctx: &InferenceContext<'_>,
    s: FeatureSet,
    matrix: &MisclassificationMatrix,
    costs: &AcquisitionCostModel,
    history: &AcquisitionHistory,
) -> Result<f64, ValuationError> {
    let evi = evi_set(ctx, s, matrix)?;
    Ok(evi - costs.set_cost(s, history)?)
}

/// Single-feature benefit: `EMC(e) − Σ_x P(x | e)·EMC(e, x) − C(X | history)`.
pub fn benefit_single(
    ctx: &InferenceContext<'_>,
    f: FeatureId,
    matrix: &MisclassificationMatrix,
    costs: &AcquisitionCostModel,
    history: &AcquisitionHistory,
) -> Result<f64, ValuationError> {
    benefit_set(ctx, FeatureSet::singleton(f), matrix, costs, history)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EviBounds {
    pub lb: f64,
    pub ub: f64,
    pub exact: bool,
}

impl EviBounds {
    pub fn resolved(&self) -> bool {
        self.exact || self.ub - self.lb <= EVI_TOLERANCE
    }

    /// Best available point value.
    pub fn value(&self) -> f64 {
        self.lb
    }
}

#[derive(Debug, Clone)]
pub struct ValuationReport {
    /// Indexed like the lattice nodes.
    pub bounds: Vec<EviBounds>,
    pub exact_evaluations: usize,
    /// Lattice index of the Markov-blanket node, when present.
    pub blanket: Option<usize>,
}

impl ValuationReport {
    pub fn value(&self, i: usize) -> f64 {
        self.bounds[i].value()
    }

    pub fn values(&self) -> Vec<f64> {
        self.bounds.iter().map(EviBounds::value).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.bounds.iter().all(EviBounds::resolved)
    }
}

/// Pairs `(i, j)` of lattice nodes with `Y ⟂ (S_j ∖ S_i) | S_i ∪ E`, so that
/// `EVI(S_i) ≥ EVI(S_j)`. Pairs already implied by set inclusion are omitted.
pub fn augment_dominance_edges(lattice: &Lattice, net: &DiscreteNetwork) -> Vec<(usize, usize)> {
    let e = lattice.evidence();
    let mut out = Vec::new();
    for (i, &s1) in lattice.nodes().iter().enumerate() {
        let given = net.feature_vars(s1.union(e));
        let reach = net.reachable(&[net.class()], &given);
        let connected: FeatureSet = lattice
            .free_features()
            .difference(s1)
            .iter()
            .filter(|&f| reach[net.feature_var(f)])
            .collect();
        for (j, &s2) in lattice.nodes().iter().enumerate() {
            if i != j && !s2.is_subset(s1) && !s2.difference(s1).intersects(connected) {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    /// Add dominance edges before propagating bounds.
    pub dominance: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { dominance: true }
    }
}

/// Bound state over a lattice plus the per-node joint-table cache.
struct Sweep<'a, 'c, 'n> {
    lattice: &'a Lattice,
    ctx: &'c InferenceContext<'n>,
    matrix: &'a MisclassificationMatrix,
    bounds: Vec<EviBounds>,
    up: Vec<Vec<usize>>,
    down: Vec<Vec<usize>>,
    tables: HashMap<FeatureSet, Arc<Table>>,
    evaluations: usize,
    blanket: Option<usize>,
}

impl<'a, 'c, 'n> Sweep<'a, 'c, 'n> {
    fn new(
        lattice: &'a Lattice,
        ctx: &'c InferenceContext<'n>,
        matrix: &'a MisclassificationMatrix,
        options: SweepOptions,
    ) -> Result<Self, ValuationError> {
        let net = ctx.network();
        let n = lattice.len();
        let mut up: Vec<Vec<usize>> = (0..n).map(|i| lattice.parents(i).to_vec()).collect();
        let mut down: Vec<Vec<usize>> = (0..n).map(|i| lattice.children(i).to_vec()).collect();
        if options.dominance {
            for (a, b) in augment_dominance_edges(lattice, net) {
                down[a].push(b);
                up[b].push(a);
            }
        }
        let mut sweep = Sweep {
            lattice,
            ctx,
            matrix,
            bounds: vec![
                EviBounds {
                    lb: 0.0,
                    ub: f64::INFINITY,
                    exact: false,
                };
                n
            ],
            up,
            down,
            tables: HashMap::new(),
            evaluations: 0,
            blanket: None,
        };
        if let Some(empty) = lattice.index_of(FeatureSet::EMPTY) {
            sweep.evaluations += 1;
            sweep.set_exact(empty, 0.0);
        }
        // No set can beat the Markov blanket, so its value caps every node.
        let mb = net.class_markov_blanket().difference(lattice.evidence());
        sweep.blanket = lattice.index_of(mb);
        if let Some(b) = sweep.blanket {
            if !sweep.bounds[b].exact {
                let v = sweep.evaluate(b)?;
                sweep.set_exact(b, v);
            }
            let cap = sweep.bounds[b].ub;
            for bd in &mut sweep.bounds {
                bd.ub = bd.ub.min(cap).max(bd.lb);
            }
        }
        Ok(sweep)
    }

    fn evaluate(&mut self, i: usize) -> Result<f64, ValuationError> {
        let s = self.lattice.node(i);
        self.evaluations += 1;
        let net = self.ctx.network();
        // Prefer summing out of the smallest cached superset.
        let source = self
            .tables
            .iter()
            .filter(|(t, _)| s.is_proper_subset(**t))
            .min_by(|a, b| a.0.canonical_cmp(b.0))
            .map(|(t, table)| (*t, Arc::clone(table)));
        let table = match source {
            Some((t, table)) => {
                let mut cur = (*table).clone();
                for f in t.difference(s).iter() {
                    cur = marginal_from_superset(&cur, net.feature_var(f))?;
                }
                Arc::new(cur)
            }
            None => self.ctx.joint_marginal(&query_vars(net, s))?,
        };
        let v = evi_from_joint(&table, self.matrix);
        self.tables.insert(s, table);
        Ok(v)
    }

    fn set_exact(&mut self, i: usize, v: f64) {
        self.bounds[i] = EviBounds {
            lb: v,
            ub: v,
            exact: true,
        };
        self.propagate(i);
    }

    /// Push `lb` to every node known to dominate `i`, `ub` to every node `i` dominates.
    fn propagate(&mut self, i: usize) {
        let mut queue = VecDeque::from([i]);
        while let Some(v) = queue.pop_front() {
            let lb = self.bounds[v].lb;
            for k in 0..self.up[v].len() {
                let p = self.up[v][k];
                if !self.bounds[p].exact && self.bounds[p].lb < lb {
                    self.bounds[p].lb = lb.min(self.bounds[p].ub);
                    queue.push_back(p);
                }
            }
        }
        let mut queue = VecDeque::from([i]);
        while let Some(v) = queue.pop_front() {
            let ub = self.bounds[v].ub;
            for k in 0..self.down[v].len() {
                let c = self.down[v][k];
                if !self.bounds[c].exact && self.bounds[c].ub > ub {
                    self.bounds[c].ub = ub.max(self.bounds[c].lb);
                    queue.push_back(c);
                }
            }
        }
    }

    /// Middle node of the longest lattice path through unresolved active nodes.
    fn pick(&self, active: &[bool]) -> Option<usize> {
        let n = self.lattice.len();
        let open = |i: usize| active[i] && !self.bounds[i].resolved();
        let mut depth = vec![0usize; n];
        let mut next = vec![usize::MAX; n];
        // Canonical order lists subsets before supersets.
        for i in 0..n {
            if !open(i) {
                continue;
            }
            depth[i] = 1;
            for &c in self.lattice.children(i) {
                if open(c) && depth[c] + 1 > depth[i] {
                    depth[i] = depth[c] + 1;
                    next[i] = c;
                }
            }
        }
        let start = (0..n).filter(|&i| open(i)).max_by_key(|&i| (depth[i], std::cmp::Reverse(i)))?;
        let mut path = vec![start];
        while next[*path.last().unwrap()] != usize::MAX {
            path.push(next[*path.last().unwrap()]);
        }
        Some(path[path.len() / 2])
    }

    fn run(&mut self, active: &[bool]) -> Result<(), ValuationError> {
        while let Some(i) = self.pick(active) {
            let v = self.evaluate(i)?;
            self.set_exact(i, v);
        }
        Ok(())
    }

    fn report(self) -> ValuationReport {
        ValuationReport {
            bounds: self
                .bounds
                .into_iter()
                .map(|b| EviBounds {
                    lb: clamp(b.lb),
                    ub: clamp(b.ub),
                    exact: b.exact,
                })
                .collect(),
            exact_evaluations: self.evaluations,
            blanket: self.blanket,
        }
    }
}

/// Resolve the EVI of every lattice node, sharing work through bounds and
/// cached joint tables. The lattice must be built for the context's evidence
/// variables.
pub fn sweep_evi(
    lattice: &Lattice,
    ctx: &InferenceContext<'_>,
    matrix: &MisclassificationMatrix,
    options: SweepOptions,
) -> Result<ValuationReport, ValuationError> {
    let mut sweep = Sweep::new(lattice, ctx, matrix, options)?;
    sweep.run(&vec![true; lattice.len()])?;
    Ok(sweep.report())
}

/// Evaluate every node independently.
pub fn naive_evi(
    lattice: &Lattice,
    ctx: &InferenceContext<'_>,
    matrix: &MisclassificationMatrix,
) -> Result<ValuationReport, ValuationError> {
    let bounds = lattice
        .nodes()
        .iter()
        .map(|&s| {
            evi_set(ctx, s, matrix).map(|v| EviBounds {
                lb: v,
                ub: v,
                exact: true,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mb = ctx.network().class_markov_blanket().difference(lattice.evidence());
    Ok(ValuationReport {
        exact_evaluations: bounds.len(),
        bounds,
        blanket: lattice.index_of(mb),
    })
}

/// Argmax of benefit over a lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestSet {
    pub set: FeatureSet,
    pub benefit: f64,
    pub evi: f64,
}

fn argmax(
    candidates: impl Iterator<Item = (FeatureSet, f64)>,
    costs: &AcquisitionCostModel,
    history: &AcquisitionHistory,
) -> Result<BestSet, ValuationError> {
    let mut best = BestSet {
        set: FeatureSet::EMPTY,
        benefit: 0.0,
        evi: 0.0,
    };
    let mut first = true;
    // Candidates arrive in canonical order, so strict improvement keeps the
    // smaller (then lexicographically earlier) set on near-ties.
    for (s, evi) in candidates {
        let b = evi - costs.set_cost(s, history)?;
        if first || b > best.benefit + EVI_TOLERANCE {
            best = BestSet { set: s, benefit: b, evi };
            first = false;
        }
    }
    Ok(best)
}

/// Node maximizing `EVI − cost` over a fully swept lattice.
pub fn best_set(
    lattice: &Lattice,
    report: &ValuationReport,
    costs: &AcquisitionCostModel,
    history: &AcquisitionHistory,
) -> Result<BestSet, ValuationError> {
    argmax(
        lattice.nodes().iter().enumerate().map(|(i, &s)| (s, report.value(i))),
        costs,
        history,
    )
}

/// Same argmax as [`best_set`], evaluating only nodes whose bounds leave
/// them in contention. Returns the winner and the evaluation count.
pub fn best_set_bounded(
    lattice: &Lattice,
    ctx: &InferenceContext<'_>,
    matrix: &MisclassificationMatrix,
    costs: &AcquisitionCostModel,
    history: &AcquisitionHistory,
    options: SweepOptions,
) -> Result<(BestSet, usize), ValuationError> {
    let n = lattice.len();
    let price: Vec<f64> = lattice
        .nodes()
        .iter()
        .map(|&s| costs.set_cost(s, history))
        .collect::<Result<_, _>>()?;
    let mut sweep = Sweep::new(lattice, ctx, matrix, options)?;
    let mut active = vec![true; n];
    loop {
        let floor = (0..n)
            .map(|i| sweep.bounds[i].lb - price[i])
            .fold(f64::NEG_INFINITY, f64::max);
        for i in 0..n {
            // Anything within two tolerances of the floor may still tie.
            active[i] = sweep.bounds[i].ub - price[i] >= floor - 2.0 * EVI_TOLERANCE;
        }
        match sweep.pick(&active) {
            Some(i) => {
                let v = sweep.evaluate(i)?;
                sweep.set_exact(i, v);
            }
            None => break,
        }
    }
    let evaluations = sweep.evaluations;
    let report = sweep.report();
    let best = argmax(
        lattice
            .nodes()
            .iter()
            .enumerate()
            .filter(|&(i, _)| active[i])
            .map(|(i, &s)| (s, report.value(i))),
        costs,
        history,
    )?;
    Ok((best, evaluations))
}
