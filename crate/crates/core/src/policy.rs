//! Diagnostic policies: trees whose internal nodes acquire one feature and
//! branch on its value, and whose leaves commit to a class.
//!
//! Batch acquisitions are represented as chains of single-feature nodes.
//! Because acquisition cost is additive along a path (each group's overhead
//! is charged once), a chain costs exactly what the batch costs.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{ConstraintSet, LatticeError};
use crate::cost::{emc, AcquisitionCostModel, AcquisitionHistory, CostError, MisclassificationMatrix};
use crate::inference::{InferenceContext, InferenceError};
use crate::lattice::{build_with_constraints, Lattice};
use crate::network::{Assignment, DiscreteNetwork, FeatureId, FeatureSet};
use crate::valuation::{benefit_single, best_set_bounded, SweepOptions, ValuationError};

/// A step is taken only when its benefit exceeds this.
pub const POSITIVE_BENEFIT: f64 = 1e-9;

/// Default cap on unobserved features for the exhaustive oracle.
pub const ORACLE_MAX_FEATURES: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("the class variable cannot be part of the evidence")]
    ClassObserved,
    #[error("optimal search supports at most {limit} unobserved features, got {found}")]
    OracleLimit { limit: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    None,
    #[serde(rename = "mb")]
    MarkovBlanket,
    Greedy,
    Set,
    GreedyLa,
    Oracle,
}

impl Strategy {
    /// The strategies compared in sweeps.
    pub const COMPARED: [Strategy; 5] = [
        Strategy::None,
        Strategy::MarkovBlanket,
        Strategy::Greedy,
        Strategy::Set,
        Strategy::GreedyLa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::MarkovBlanket => "mb",
            Strategy::Greedy => "greedy",
            Strategy::Set => "set",
            Strategy::GreedyLa => "greedy-la",
            Strategy::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            Strategy::None,
            Strategy::MarkovBlanket,
            Strategy::Greedy,
            Strategy::Set,
            Strategy::GreedyLa,
            Strategy::Oracle,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("unknown strategy `{s}` (expected none, mb, greedy, set, greedy-la or oracle)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodeKind {
    Leaf { decision: usize, emc: f64 },
    /// One child per state of `feature`.
    Acquire { feature: FeatureId, children: Vec<PolicyNode> },
    /// Reached with probability zero.
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNode {
    pub history: AcquisitionHistory,
    pub probability: f64,
    #[serde(flatten)]
    pub kind: NodeKind,
}

impl PolicyNode {
    pub fn leaves(&self) -> Vec<&PolicyNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            match &n.kind {
                NodeKind::Acquire { children, .. } => stack.extend(children.iter().rev()),
                _ => out.push(n),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub strategy: Strategy,
    pub evidence: Assignment,
    pub root: PolicyNode,
}

impl Policy {
    /// Largest number of acquisitions on any path.
    pub fn depth(&self) -> usize {
        self.root.leaves().iter().map(|l| l.history.len()).max().unwrap_or(0)
    }

    pub fn acquires_anything(&self) -> bool {
        matches!(self.root.kind, NodeKind::Acquire { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeafEvaluation {
    pub history: AcquisitionHistory,
    pub probability: f64,
    pub decision: usize,
    pub fc: f64,
    pub emc: f64,
    pub tc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyEvaluation {
    pub leaves: Vec<LeafEvaluation>,
    pub etc: f64,
}

/// Exact expected total cost: `Σ_paths P(path)·(FC + EMC)`. Branch
/// probabilities are recomputed from the network, not read from the tree.
pub fn evaluate(
    policy: &Policy,
    net: &DiscreteNetwork,
    costs: &AcquisitionCostModel,
    matrix: &MisclassificationMatrix,
) -> Result<PolicyEvaluation, PolicyError> {
    let ctx = InferenceContext::with_evidence(net, &policy.evidence)?;
    let mut leaves = Vec::new();
    eval_node(&policy.root, &ctx, 1.0, costs, matrix, &mut leaves)?;
    let etc = leaves.iter().map(|l| l.probability * l.tc).sum();
    Ok(PolicyEvaluation { leaves, etc })
}

fn eval_node(
    node: &PolicyNode,
    ctx: &InferenceContext<'_>,
    p: f64,
    costs: &AcquisitionCostModel,
    matrix: &MisclassificationMatrix,
    out: &mut Vec<LeafEvaluation>,
) -> Result<(), PolicyError> {
    let net = ctx.network();
    match &node.kind {
        NodeKind::Unreachable => Ok(()),
        NodeKind::Leaf { decision, .. } => {
            let post = ctx.posterior(net.class())?;
            let fc = costs.path_feature_cost(&node.history);
            let e = matrix.expected_cost(&post, *decision);
            out.push(LeafEvaluation {
                history: node.history.clone(),
                probability: p,
                decision: *decision,
                fc,
                emc: e,
                tc: fc + e,
            });
            Ok(())
        }
        NodeKind::Acquire { feature, children } => {
            let v = net.feature_var(*feature);
            let dist = ctx.posterior(v)?;
            for (state, child) in children.iter().enumerate() {
                if dist[state] <= 0.0 {
                    continue;
                }
                match ctx.extend(&Assignment::from_pairs([(v, state)])) {
                    Ok(next) => eval_node(child, &next, p * dist[state], costs, matrix, out)?,
                    Err(InferenceError::ZeroProbabilityEvidence) => continue,
                    Err(e) => return Err(e.into()),
                }
            }
            Ok(())
        }
    }
}

/// Indented text rendering, one node per line.
pub fn render(
    policy: &Policy,
    net: &DiscreteNetwork,
    costs: &AcquisitionCostModel,
) -> String {
    let mut out = String::new();
    render_node(&policy.root, None, 0, net, costs, &mut out);
    out
}

fn render_node(
    node: &PolicyNode,
    branch: Option<String>,
    depth: usize,
    net: &DiscreteNetwork,
    costs: &AcquisitionCostModel,
    out: &mut String,
) {
    let indent = "  ".repeat(depth);
    let label = branch.map(|b| format!("{b}: ")).unwrap_or_default();
    let fc = costs.path_feature_cost(&node.history);
    match &node.kind {
        NodeKind::Unreachable => {
            out.push_str(&format!("{indent}{label}unreachable p=0.0000\n"));
        }
        NodeKind::Leaf { decision, emc } => {
            let y = net.variable(net.class());
            out.push_str(&format!(
                "{indent}{label}decide {}={} p={:.4} fc={:.4} emc={:.4} tc={:.4}\n",
                y.name,
                y.states[*decision],
                node.probability,
                fc,
                emc,
                fc + emc
            ));
        }
        NodeKind::Acquire { feature, children } => {
            let var = net.variable(net.feature_var(*feature));
            out.push_str(&format!(
                "{indent}{label}acquire {} p={:.4} fc={:.4}\n",
                var.name, node.probability, fc
            ));
            for (state, child) in children.iter().enumerate() {
                let b = format!("{}={}", var.name, var.states[state]);
                render_node(child, Some(b), depth + 1, net, costs, out);
            }
        }
    }
}

type Ctx<'n> = Arc<InferenceContext<'n>>;

/// Chooses the next features to acquire on a path.
type NextBatch<'a, 'n> =
    dyn FnMut(&Ctx<'n>, &AcquisitionHistory) -> Result<Vec<FeatureId>, PolicyError> + 'a;

/// Shared caches for building many policies over one network: compiled
/// constraints, one lattice per set of observed features and one inference
/// context per evidence assignment.
pub struct Planner<'n> {
    net: &'n DiscreteNetwork,
    constraints: ConstraintSet,
    lattices: Mutex<HashMap<FeatureSet, Arc<Lattice>>>,
    contexts: Mutex<HashMap<Assignment, Ctx<'n>>>,
    options: SweepOptions,
}

impl<'n> Planner<'n> {
    pub fn new(net: &'n DiscreteNetwork) -> Result<Self, PolicyError> {
        Ok(Planner {
            net,
            constraints: ConstraintSet::compile(net)?,
            lattices: Mutex::new(HashMap::new()),
            contexts: Mutex::new(HashMap::new()),
            options: SweepOptions::default(),
        })
    }

    pub fn network(&self) -> &'n DiscreteNetwork {
        self.net
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    /// Lattice over the features not in `observed`.
    pub fn lattice(&self, observed: FeatureSet) -> Arc<Lattice> {
        if let Some(l) = self.lattices.lock().unwrap().get(&observed) {
            return Arc::clone(l);
        }
        let l = Arc::new(build_with_constraints(self.net, &self.constraints, observed));
        self.lattices
            .lock()
            .unwrap()
            .entry(observed)
            .or_insert(l)
            .clone()
    }

    pub fn context(&self, evidence: &Assignment) -> Result<Ctx<'n>, PolicyError> {
        if evidence.vars().any(|v| v == self.net.class()) {
            return Err(PolicyError::ClassObserved);
        }
        if let Some(c) = self.contexts.lock().unwrap().get(evidence) {
            return Ok(Arc::clone(c));
        }
        let c = Arc::new(InferenceContext::with_evidence(self.net, evidence)?);
        Ok(self
            .contexts
            .lock()
            .unwrap()
            .entry(evidence.clone())
            .or_insert(c)
            .clone())
    }

    /// Context after additionally observing `feature = state`; `None` when
    /// that observation has probability zero.
    fn child(&self, parent: &Ctx<'n>, feature: FeatureId, state: usize) -> Result<Option<Ctx<'n>>, PolicyError> {
        let v = self.net.feature_var(feature);
        let key = parent.evidence().with(v, state);
        if let Some(c) = self.contexts.lock().unwrap().get(&key) {
            return Ok(Some(Arc::clone(c)));
        }
        match parent.extend(&Assignment::from_pairs([(v, state)])) {
            Ok(c) => {
                let c = Arc::new(c);
                Ok(Some(self.contexts.lock().unwrap().entry(key).or_insert(c).clone()))
            }
            Err(InferenceError::ZeroProbabilityEvidence) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn observed(&self, ctx: &InferenceContext<'_>) -> FeatureSet {
        self.net.features_of_vars(ctx.evidence().vars())
    }

    fn free(&self, ctx: &InferenceContext<'_>) -> FeatureSet {
        self.net.all_features().difference(self.observed(ctx))
    }

    fn leaf(&self, ctx: &InferenceContext<'_>, matrix: &MisclassificationMatrix) -> Result<NodeKind, PolicyError> {
        let (e, d) = emc(&ctx.posterior(self.net.class())?, matrix);
        Ok(NodeKind::Leaf { decision: d, emc: e })
    }

    /// Expand a tree. `pending` finishes the current batch; when it is empty
    /// `next` picks the next batch (empty means stop).
    fn grow(
        &self,
        ctx: &Ctx<'n>,
        history: AcquisitionHistory,
        probability: f64,
        pending: &[FeatureId],
        matrix: &MisclassificationMatrix,
        next: &mut NextBatch<'_, 'n>,
    ) -> Result<PolicyNode, PolicyError> {
        let batch;
        let pending = if pending.is_empty() {
            batch = next(ctx, &history)?;
            &batch[..]
        } else {
            pending
        };
        let Some((&f, rest)) = pending.split_first() else {
            return Ok(PolicyNode {
                kind: self.leaf(ctx, matrix)?,
                history,
                probability,
            });
        };
        let dist = ctx.posterior(self.net.feature_var(f))?;
        let mut children = Vec::with_capacity(dist.len());
        for (state, &p) in dist.iter().enumerate() {
            let h = history.then(f, state)?;
            let child = if p > 0.0 {
                self.child(ctx, f, state)?
            } else {
                None
            };
            children.push(match child {
                Some(c) => self.grow(&c, h, probability * p, rest, matrix, next)?,
                None => PolicyNode {
                    history: h,
                    probability: 0.0,
                    kind: NodeKind::Unreachable,
                },
            });
        }
        Ok(PolicyNode {
            history,
            probability,
            kind: NodeKind::Acquire { feature: f, children },
        })
    }

    /// Argmax single-feature benefit over `candidates`, lowest id on ties.
    fn best_single(
        &self,
        ctx: &InferenceContext<'_>,
        candidates: FeatureSet,
        matrix: &MisclassificationMatrix,
        costs: &AcquisitionCostModel,
        history: &AcquisitionHistory,
    ) -> Result<Option<(FeatureId, f64)>, PolicyError> {
        let mut best: Option<(FeatureId, f64)> = None;
        for f in candidates.iter() {
            let b = benefit_single(ctx, f, matrix, costs, history)?;
            if best.is_none_or(|(_, bb)| b > bb + POSITIVE_BENEFIT) {
                best = Some((f, b));
            }
        }
        Ok(best)
    }

    fn best_lattice_set(
        &self,
        ctx: &InferenceContext<'_>,
        matrix: &MisclassificationMatrix,
        costs: &AcquisitionCostModel,
        history: &AcquisitionHistory,
    ) -> Result<Option<FeatureSet>, PolicyError> {
        let lattice = self.lattice(self.observed(ctx));
        let (best, _) = best_set_bounded(&lattice, ctx, matrix, costs, history, self.options)?;
        Ok((best.benefit > POSITIVE_BENEFIT).then_some(best.set))
    }

    pub fn build(
        &self,
        strategy: Strategy,
        evidence: &Assignment,
        costs: &AcquisitionCostModel,
        matrix: &MisclassificationMatrix,
    ) -> Result<Policy, PolicyError> {
        let root = self.context(evidence)?;
        let h0 = AcquisitionHistory::new();
        let tree = match strategy {
            Strategy::None => self.grow(&root, h0, 1.0, &[], matrix, &mut |_, _| Ok(vec![]))?,
            Strategy::MarkovBlanket => {
                let mb: Vec<FeatureId> = self
                    .net
                    .class_markov_blanket()
                    .difference(self.observed(&root))
                    .iter()
                    .collect();
                self.grow(&root, h0, 1.0, &mb, matrix, &mut |_, _| Ok(vec![]))?
            }
            Strategy::Greedy => self.grow(&root, h0, 1.0, &[], matrix, &mut |ctx, h| {
                let pick = self.best_single(ctx, self.free(ctx), matrix, costs, h)?;
                Ok(pick
                    .filter(|&(_, b)| b > POSITIVE_BENEFIT)
                    .map(|(f, _)| f)
                    .into_iter()
                    .collect())
            })?,
            Strategy::Set => self.grow(&root, h0, 1.0, &[], matrix, &mut |ctx, h| {
                Ok(self
                    .best_lattice_set(ctx, matrix, costs, h)?
                    .map(|s| s.iter().collect())
                    .unwrap_or_default())
            })?,
            Strategy::GreedyLa => self.grow(&root, h0, 1.0, &[], matrix, &mut |ctx, h| {
                let Some(s) = self.best_lattice_set(ctx, matrix, costs, h)? else {
                    return Ok(vec![]);
                };
                // The single step may have negative benefit on its own.
                let (f, _) = self
                    .best_single(ctx, s, matrix, costs, h)?
                    .expect("a positive-benefit set is non-empty");
                Ok(vec![f])
            })?,
            Strategy::Oracle => return self.optimal(evidence, costs, matrix, ORACLE_MAX_FEATURES),
        };
        Ok(Policy {
            strategy,
            evidence: evidence.clone(),
            root: tree,
        })
    }

    /// Exhaustive minimum-ETC policy; on ties stopping wins, then the lowest feature id.
    pub fn optimal(
        &self,
        evidence: &Assignment,
        costs: &AcquisitionCostModel,
        matrix: &MisclassificationMatrix,
        max_features: usize,
    ) -> Result<Policy, PolicyError> {
        let root = self.context(evidence)?;
        let free = self.free(&root).len();
        if free > max_features {
            return Err(PolicyError::OracleLimit {
                limit: max_features,
                found: free,
            });
        }
        let mut memo: HashMap<Assignment, (f64, Option<FeatureId>)> = HashMap::new();
        self.solve(&root, &AcquisitionHistory::new(), costs, matrix, &mut memo)?;
        let tree = self.grow(&root, AcquisitionHistory::new(), 1.0, &[], matrix, &mut |ctx, _| {
            Ok(memo[ctx.evidence()].1.into_iter().collect())
        })?;
        Ok(Policy {
            strategy: Strategy::Oracle,
            evidence: evidence.clone(),
            root: tree,
        })
    }

    /// Minimum expected remaining cost from `ctx`.
    fn solve(
        &self,
        ctx: &Ctx<'n>,
        history: &AcquisitionHistory,
        costs: &AcquisitionCostModel,
        matrix: &MisclassificationMatrix,
        memo: &mut HashMap<Assignment, (f64, Option<FeatureId>)>,
    ) -> Result<f64, PolicyError> {
        if let Some(&(v, _)) = memo.get(ctx.evidence()) {
            return Ok(v);
        }
        let mut best = (emc(&ctx.posterior(self.net.class())?, matrix).0, None);
        for f in self.free(ctx).iter() {
            let mut total = costs.set_cost(FeatureSet::singleton(f), history)?;
            let dist = ctx.posterior(self.net.feature_var(f))?;
            for (state, &p) in dist.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                if let Some(c) = self.child(ctx, f, state)? {
                    total += p * self.solve(&c, &history.then(f, state)?, costs, matrix, memo)?;
                }
            }
            if total < best.0 - 1e-12 {
                best = (total, Some(f));
            }
        }
        memo.insert(ctx.evidence().clone(), best);
        Ok(best.0)
    }
}

/// One-shot build without a shared planner.
pub fn build_policy(
    net: &DiscreteNetwork,
    strategy: Strategy,
    evidence: &Assignment,
    costs: &AcquisitionCostModel,
    matrix: &MisclassificationMatrix,
) -> Result<Policy, PolicyError> {
    Planner::new(net)?.build(strategy, evidence, costs, matrix)
}

pub fn build_no_acquisition(net: &DiscreteNetwork, evidence: &Assignment, costs: &AcquisitionCostModel, matrix: &MisclassificationMatrix) -> Result<Policy, PolicyError> {
    build_policy(net, Strategy::None, evidence, costs, matrix)
}

pub fn build_markov_blanket(net: &DiscreteNetwork, evidence: &Assignment, costs: &AcquisitionCostModel, matrix: &MisclassificationMatrix) -> Result<Policy, PolicyError> {
    build_policy(net, Strategy::MarkovBlanket, evidence, costs, matrix)
}

pub fn build_greedy(net: &DiscreteNetwork, evidence: &Assignment, costs: &AcquisitionCostModel, matrix: &MisclassificationMatrix) -> Result<Policy, PolicyError> {
    build_policy(net, Strategy::Greedy, evidence, costs, matrix)
}

pub fn build_set_acquisition(net: &DiscreteNetwork, evidence: &Assignment, costs: &AcquisitionCostModel, matrix: &MisclassificationMatrix) -> Result<Policy, PolicyError> {
    build_policy(net, Strategy::Set, evidence, costs, matrix)
}

pub fn build_greedy_la(net: &DiscreteNetwork, evidence: &Assignment, costs: &AcquisitionCostModel, matrix: &MisclassificationMatrix) -> Result<Policy, PolicyError> {
    build_policy(net, Strategy::GreedyLa, evidence, costs, matrix)
}

pub fn optimal_policy_oracle(
    net: &DiscreteNetwork,
    evidence: &Assignment,
    costs: &AcquisitionCostModel,
    matrix: &MisclassificationMatrix,
    max_features: usize,
) -> Result<Policy, PolicyError> {
    Planner::new(net)?.optimal(evidence, costs, matrix, max_features)
}
