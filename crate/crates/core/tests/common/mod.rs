//! Reference implementations used by the integration and acceptance tests.
//! Everything here works from the full joint distribution, never from the
//! library's inference engine.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use voila::cost::{AcquisitionCostModel, CostLayout, MisclassificationMatrix};
use voila::harness::{generate_random_network, generate_synthetic_costs, RandomNetworkConfig};
use voila::network::{Assignment, DiscreteNetwork, VarId};
use voila::policy::{NodeKind, Policy, PolicyNode};

/// Every full assignment with its probability.
pub struct Joint {
    pub rows: Vec<(Vec<usize>, f64)>,
}

impl Joint {
    pub fn new(net: &DiscreteNetwork) -> Self {
        let n = net.len();
        let mut rows = Vec::new();
        let mut states = vec![0usize; n];
        loop {
            let mut p = 1.0;
            for v in 0..n {
                let mut row = 0;
                for &q in net.parents(v) {
                    row = row * net.arity(q) + states[q];
                }
                p *= net.cpt(v)[row][states[v]];
            }
            rows.push((states.clone(), p));
            let mut i = n;
            loop {
                if i == 0 {
                    return Joint { rows };
                }
                i -= 1;
                states[i] += 1;
                if states[i] < net.arity(i) {
                    break;
                }
                states[i] = 0;
            }
        }
    }

    pub fn prob(&self, pred: impl Fn(&[usize]) -> bool) -> f64 {
        self.rows.iter().filter(|(s, _)| pred(s)).map(|(_, p)| p).sum()
    }

    pub fn consistent(states: &[usize], e: &Assignment) -> bool {
        e.iter().all(|(v, s)| states[v] == s)
    }

    /// `P(target | e)`.
    pub fn posterior(&self, net: &DiscreteNetwork, target: VarId, e: &Assignment) -> Vec<f64> {
        let mut out = vec![0.0; net.arity(target)];
        for (s, p) in &self.rows {
            if Self::consistent(s, e) {
                out[s[target]] += p;
            }
        }
        let z: f64 = out.iter().sum();
        out.iter().map(|x| x / z).collect()
    }
}

/// `min_i Σ_j c_ij w_j`.
pub fn min_expected(m: &MisclassificationMatrix, w: &[f64]) -> f64 {
    (0..m.classes())
        .map(|i| (0..w.len()).map(|j| m.get(i, j) * w[j]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// `EMC(e) − Σ_s P(s | e)·EMC(e, s)` straight from the joint table.
pub fn oracle_evi(
    net: &DiscreteNetwork,
    joint: &Joint,
    e: &Assignment,
    s: &[VarId],
    m: &MisclassificationMatrix,
) -> f64 {
    let y = net.class();
    let k = net.arity(y);
    let pe = joint.prob(|st| Joint::consistent(st, e));
    let mut prior = vec![0.0; k];
    let mut cells: std::collections::BTreeMap<Vec<usize>, Vec<f64>> = Default::default();
    for (st, p) in &joint.rows {
        if !Joint::consistent(st, e) {
            continue;
        }
        prior[st[y]] += p / pe;
        let key: Vec<usize> = s.iter().map(|&v| st[v]).collect();
        cells.entry(key).or_insert_with(|| vec![0.0; k])[st[y]] += p / pe;
    }
    let before = min_expected(m, &prior);
    let after: f64 = cells.values().map(|w| min_expected(m, w)).sum();
    before - after
}

/// Feature cost of a path, recomputed from base costs and group overheads.
pub fn path_cost(costs: &AcquisitionCostModel, features: &[usize]) -> f64 {
    let mut paid = vec![false; costs.group_count()];
    let mut total = 0.0;
    for &f in features {
        total += costs.base_cost(f);
        if let Some(g) = costs.group_of(f) {
            if !paid[g] {
                paid[g] = true;
                total += costs.overhead(g);
            }
        }
    }
    total
}

/// Exact ETC by walking the tree against the joint table.
pub fn oracle_etc(
    net: &DiscreteNetwork,
    joint: &Joint,
    policy: &Policy,
    costs: &AcquisitionCostModel,
    m: &MisclassificationMatrix,
) -> f64 {
    let y = net.class();
    let pe = joint.prob(|st| Joint::consistent(st, &policy.evidence));
    joint
        .rows
        .iter()
        .filter(|(s, _)| Joint::consistent(s, &policy.evidence))
        .map(|(s, p)| {
            let (path, decision) = walk(net, &policy.root, s);
            p / pe * (path_cost(costs, &path) + m.get(decision, s[y]))
        })
        .sum()
}

fn walk(net: &DiscreteNetwork, mut node: &PolicyNode, s: &[usize]) -> (Vec<usize>, usize) {
    let mut path = Vec::new();
    loop {
        match &node.kind {
            NodeKind::Leaf { decision, .. } => return (path, *decision),
            NodeKind::Acquire { feature, children } => {
                path.push(*feature);
                node = &children[s[net.feature_var(*feature)]];
            }
            NodeKind::Unreachable => panic!("sampled a path marked unreachable"),
        }
    }
}

/// Monte-Carlo estimate of the ETC (no evidence): mean and standard error.
pub fn simulate_etc(
    net: &DiscreteNetwork,
    policy: &Policy,
    costs: &AcquisitionCostModel,
    m: &MisclassificationMatrix,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    assert!(policy.evidence.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = net.topological_order().to_vec();
    let mut st = vec![0usize; net.len()];
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..samples {
        for &v in &order {
            let mut row = 0;
            for &q in net.parents(v) {
                row = row * net.arity(q) + st[q];
            }
            let probs = &net.cpt(v)[row];
            let u: f64 = rng.random();
            let mut acc = 0.0;
            st[v] = probs.len() - 1;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    st[v] = i;
                    break;
                }
            }
        }
        let (path, decision) = walk(net, &policy.root, &st);
        let tc = path_cost(costs, &path) + m.get(decision, st[net.class()]);
        sum += tc;
        sq += tc * tc;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Minimum ETC over all policies, by exhaustive recursion on the joint table.
pub fn oracle_optimal_etc(
    net: &DiscreteNetwork,
    joint: &Joint,
    costs: &AcquisitionCostModel,
    m: &MisclassificationMatrix,
    e: &Assignment,
) -> f64 {
    fn rec(
        net: &DiscreteNetwork,
        joint: &Joint,
        costs: &AcquisitionCostModel,
        m: &MisclassificationMatrix,
        e: &Assignment,
        acquired: &mut Vec<usize>,
    ) -> f64 {
        let post = joint.posterior(net, net.class(), e);
        let mut best = min_expected(m, &post);
        for f in 0..net.feature_count() {
            let v = net.feature_var(f);
            if e.contains(v) {
                continue;
            }
            let before = path_cost(costs, acquired);
            acquired.push(f);
            let step = path_cost(costs, acquired) - before;
            let pe = joint.prob(|s| Joint::consistent(s, e));
            let mut total = step;
            for x in 0..net.arity(v) {
                let ex = e.with(v, x);
                let p = joint.prob(|s| Joint::consistent(s, &ex)) / pe;
                if p > 0.0 {
                    total += p * rec(net, joint, costs, m, &ex, acquired);
                }
            }
            acquired.pop();
            best = best.min(total);
        }
        best
    }
    rec(net, joint, costs, m, e, &mut Vec::new())
}

/// Random network with grouped costs, for property suites.
pub fn random_instance(features: usize, density: f64, seed: u64) -> (DiscreteNetwork, AcquisitionCostModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut cfg = RandomNetworkConfig::new(features, density);
    cfg.alpha = 0.8;
    let net = generate_random_network(&cfg, seed);
    let groups = rng.random_range(0..=2);
    let costs = generate_synthetic_costs(&CostLayout::round_robin(&net, groups), seed);
    (net, costs)
}
