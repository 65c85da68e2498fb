//! Exact inference by variable elimination over evidence-restricted factors.
//!
//! An [`InferenceContext`] owns the network's CPTs already restricted to its
//! evidence. Extending a context only re-restricts the factors that mention
//! the new variables, so `ctx.extend(a).extend(b)` holds exactly the same
//! factor values as a context built with `a ∪ b` in one go, and every query
//! answered through either is bit-identical. Marginal queries are memoized
//! per context.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::network::{Assignment, DiscreteNetwork, VarId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("evidence has zero probability")]
    ZeroProbabilityEvidence,
    #[error("variable {0} is already part of the evidence")]
    EvidenceOverlap(VarId),
    #[error("variable {0} is out of range")]
    UnknownVariable(VarId),
    #[error("state {state} is out of range for variable {var}")]
    StateOutOfRange { var: VarId, state: usize },
    #[error("variable {0} is not in the table's scope")]
    NotInScope(VarId),
    #[error("variable {0} appears twice in a query")]
    DuplicateQuery(VarId),
}

/// Dense table over a list of variables, row-major with the last variable
/// varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    vars: Vec<VarId>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Table {
    pub fn new(vars: Vec<VarId>, cards: Vec<usize>, values: Vec<f64>) -> Self {
        assert_eq!(vars.len(), cards.len());
        assert_eq!(values.len(), cards.iter().product::<usize>());
        Table { vars, cards, values }
    }

    pub fn scalar(value: f64) -> Self {
        Table {
            vars: Vec::new(),
            cards: Vec::new(),
            values: vec![value],
        }
    }

    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    fn position(&self, var: VarId) -> Option<usize> {
        self.vars.iter().position(|&v| v == var)
    }

    fn stride(&self, pos: usize) -> usize {
        self.cards[pos + 1..].iter().product()
    }

    /// Flat index of a full assignment to the table's variables, given in table order.
    pub fn index_of(&self, states: &[usize]) -> usize {
        states
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&s, &c)| acc * c + s)
    }

    /// Value at the cell selected by `assignment`, which must cover every table variable.
    pub fn get(&self, assignment: &Assignment) -> Option<f64> {
        let mut idx = 0;
        for (&v, &c) in self.vars.iter().zip(&self.cards) {
            idx = idx * c + assignment.get(v)?;
        }
        Some(self.values[idx])
    }

    /// Fix `var` to `state` and drop it from the scope.
    pub fn restrict(&self, var: VarId, state: usize) -> Table {
        let Some(pos) = self.position(var) else {
            return self.clone();
        };
        let card = self.cards[pos];
        let stride = self.stride(pos);
        let high = self.values.len() / (card * stride);
        let mut values = Vec::with_capacity(high * stride);
        for h in 0..high {
            let base = h * card * stride + state * stride;
            values.extend_from_slice(&self.values[base..base + stride]);
        }
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(pos);
        cards.remove(pos);
        Table { vars, cards, values }
    }

    /// Sum `var` out of the table.
    pub fn sum_out(&self, var: VarId) -> Result<Table, InferenceError> {
        let pos = self.position(var).ok_or(InferenceError::NotInScope(var))?;
        let card = self.cards[pos];
        let stride = self.stride(pos);
        let high = self.values.len() / (card * stride);
        let mut values = vec![0.0; high * stride];
        for h in 0..high {
            for m in 0..card {
                let src = h * card * stride + m * stride;
                let dst = h * stride;
                for l in 0..stride {
                    values[dst + l] += self.values[src + l];
                }
            }
        }
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(pos);
        cards.remove(pos);
        Ok(Table { vars, cards, values })
    }

    /// Pointwise product over the union scope (this table's variables first).
    pub fn product(&self, other: &Table) -> Table {
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        for (&v, &c) in other.vars.iter().zip(&other.cards) {
            if !vars.contains(&v) {
                vars.push(v);
                cards.push(c);
            }
        }
        let size: usize = cards.iter().product();
        // Stride of each union variable inside each operand (0 when absent).
        let strides_of = |t: &Table| -> Vec<usize> {
            vars.iter()
                .map(|&v| t.position(v).map_or(0, |p| t.stride(p)))
                .collect()
        };
        let sa = strides_of(self);
        let sb = strides_of(other);
        let mut values = Vec::with_capacity(size);
        let mut counter = vec![0usize; vars.len()];
        let (mut ia, mut ib) = (0usize, 0usize);
        for _ in 0..size {
            values.push(self.values[ia] * other.values[ib]);
            // Odometer increment from the last (fastest) variable.
            for k in (0..vars.len()).rev() {
                counter[k] += 1;
                ia += sa[k];
                ib += sb[k];
                if counter[k] < cards[k] {
                    break;
                }
                ia -= sa[k] * cards[k];
                ib -= sb[k] * cards[k];
                counter[k] = 0;
            }
        }
        Table { vars, cards, values }
    }

    /// Same table with variables permuted into `order` (a permutation of the scope).
    pub fn reorder(&self, order: &[VarId]) -> Result<Table, InferenceError> {
        if order == self.vars.as_slice() {
            return Ok(self.clone());
        }
        let mut src_strides = Vec::with_capacity(order.len());
        let mut cards = Vec::with_capacity(order.len());
        for &v in order {
            let p = self.position(v).ok_or(InferenceError::NotInScope(v))?;
            src_strides.push(self.stride(p));
            cards.push(self.cards[p]);
        }
        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut counter = vec![0usize; order.len()];
        let mut idx = 0usize;
        for _ in 0..size {
            values.push(self.values[idx]);
            for k in (0..order.len()).rev() {
                counter[k] += 1;
                idx += src_strides[k];
                if counter[k] < cards[k] {
                    break;
                }
                idx -= src_strides[k] * cards[k];
                counter[k] = 0;
            }
        }
        Ok(Table {
            vars: order.to_vec(),
            cards,
            values,
        })
    }

    fn normalized(mut self) -> Result<Table, InferenceError> {
        let z = self.sum();
        if z <= 0.0 || !z.is_finite() {
            return Err(InferenceError::ZeroProbabilityEvidence);
        }
        for v in &mut self.values {
            *v /= z;
        }
        Ok(self)
    }
}

/// Sum a single variable out of a cached joint table, e.g. obtain
/// `P(S | e)` from `P(S ∪ {X} | e)`.
pub fn marginal_from_superset(table: &Table, drop: VarId) -> Result<Table, InferenceError> {
    table.sum_out(drop)
}

/// A table plus a log-domain scale, so long products cannot underflow.
#[derive(Debug, Clone)]
struct Factor {
    table: Table,
    log_scale: f64,
}

const RESCALE_BELOW: f64 = 1e-200;

impl Factor {
    fn product(&self, other: &Factor) -> Factor {
        Factor {
            table: self.table.product(&other.table),
            log_scale: self.log_scale + other.log_scale,
        }
        .rescaled()
    }

    fn rescaled(mut self) -> Factor {
        let max = self.table.values.iter().fold(0.0f64, |m, &v| m.max(v));
        if max > 0.0 && max < RESCALE_BELOW {
            for v in &mut self.table.values {
                *v /= max;
            }
            self.log_scale += max.ln();
        }
        self
    }
}

fn cpt_factor(net: &DiscreteNetwork, v: VarId) -> Factor {
    let mut vars: Vec<VarId> = net.parents(v).to_vec();
    vars.push(v);
    let cards = vars.iter().map(|&u| net.arity(u)).collect();
    let values = net.cpt(v).iter().flatten().copied().collect();
    Factor {
        table: Table::new(vars, cards, values),
        log_scale: 0.0,
    }
}

/// Eliminate every variable outside `query` from `factors` with a greedy
/// min-size ordering, then multiply what remains.
fn eliminate(mut factors: Vec<Factor>, query: &[VarId]) -> Factor {
    loop {
        // Candidate variables: in some scope, not queried.
        let mut best: Option<(usize, VarId)> = None;
        let mut seen: Vec<VarId> = Vec::new();
        for f in &factors {
            for &v in &f.table.vars {
                if query.contains(&v) || seen.contains(&v) {
                    continue;
                }
                seen.push(v);
                let mut scope: Vec<(VarId, usize)> = Vec::new();
                for g in factors.iter().filter(|g| g.table.vars.contains(&v)) {
                    for (&u, &c) in g.table.vars.iter().zip(&g.table.cards) {
                        if !scope.iter().any(|&(w, _)| w == u) {
                            scope.push((u, c));
                        }
                    }
                }
                let weight = scope.iter().map(|&(_, c)| c).product::<usize>();
                if best.is_none_or(|(w, bv)| weight < w || (weight == w && v < bv)) {
                    best = Some((weight, v));
                }
            }
        }
        let Some((_, var)) = best else { break };
        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.table.vars.contains(&var));
        let mut prod = touching[0].clone();
        for f in &touching[1..] {
            prod = prod.product(f);
        }
        let summed = Factor {
            table: prod.table.sum_out(var).expect("variable is in scope"),
            log_scale: prod.log_scale,
        }
        .rescaled();
        factors = rest;
        factors.push(summed);
    }
    let mut acc = Factor {
        table: Table::scalar(1.0),
        log_scale: 0.0,
    };
    for f in &factors {
        acc = acc.product(f);
    }
    acc
}

/// Evidence plus the factor state needed to answer posterior queries under it.
pub struct InferenceContext<'n> {
    net: &'n DiscreteNetwork,
    evidence: Assignment,
    factors: Vec<Arc<Factor>>,
    log_evidence: f64,
    memo: Mutex<HashMap<Vec<VarId>, Arc<Table>>>,
}

impl std::fmt::Debug for InferenceContext<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InferenceContext")
            .field("evidence", &self.evidence)
            .field("log_evidence", &self.log_evidence)
            .finish()
    }
}

impl<'n> InferenceContext<'n> {
    /// Context with no evidence.
    pub fn new(net: &'n DiscreteNetwork) -> Self {
        let factors = (0..net.len()).map(|v| Arc::new(cpt_factor(net, v))).collect();
        InferenceContext {
            net,
            evidence: Assignment::new(),
            factors,
            log_evidence: 0.0,
            memo: Mutex::new(HashMap::new()),
        }
    }

    /// Context for `evidence`, built from scratch.
    pub fn with_evidence(
        net: &'n DiscreteNetwork,
        evidence: &Assignment,
    ) -> Result<Self, InferenceError> {
        Self::new(net).extend(evidence)
    }

    pub fn network(&self) -> &'n DiscreteNetwork {
        self.net
    }

    pub fn evidence(&self) -> &Assignment {
        &self.evidence
    }

    /// `ln P(evidence)`.
    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    /// A new context answering queries under `evidence ∪ extra`. `self` is untouched.
    pub fn extend(&self, extra: &Assignment) -> Result<InferenceContext<'n>, InferenceError> {
        for (v, s) in extra.iter() {
            if v >= self.net.len() {
                return Err(InferenceError::UnknownVariable(v));
            }
            if s >= self.net.arity(v) {
                return Err(InferenceError::StateOutOfRange { var: v, state: s });
            }
            if self.evidence.contains(v) {
                return Err(InferenceError::EvidenceOverlap(v));
            }
        }
        if extra.is_empty() {
            return Ok(InferenceContext {
                net: self.net,
                evidence: self.evidence.clone(),
                factors: self.factors.clone(),
                log_evidence: self.log_evidence,
                memo: Mutex::new(self.memo.lock().unwrap().clone()),
            });
        }
        let factors: Vec<Arc<Factor>> = self
            .factors
            .iter()
            .map(|f| {
                if f.table.vars.iter().any(|&v| extra.contains(v)) {
                    let mut table = f.table.clone();
                    for (v, s) in extra.iter() {
                        table = table.restrict(v, s);
                    }
                    Arc::new(Factor {
                        table,
                        log_scale: f.log_scale,
                    })
                } else {
                    Arc::clone(f)
                }
            })
            .collect();
        let evidence = self.evidence.union(extra);
        let relevant = self.relevant(&[], &evidence);
        let z = eliminate(Self::pick(&factors, &relevant), &[]);
        let p = z.table.values[0];
        if p <= 0.0 || !p.is_finite() {
            return Err(InferenceError::ZeroProbabilityEvidence);
        }
        Ok(InferenceContext {
            net: self.net,
            evidence,
            factors,
            log_evidence: p.ln() + z.log_scale,
            memo: Mutex::new(HashMap::new()),
        })
    }

    /// Ancestral closure of `query ∪ evidence`; everything else is barren.
    fn relevant(&self, query: &[VarId], evidence: &Assignment) -> Vec<bool> {
        let mut keep = vec![false; self.net.len()];
        let mut stack: Vec<VarId> = query.iter().copied().chain(evidence.vars()).collect();
        while let Some(v) = stack.pop() {
            if !keep[v] {
                keep[v] = true;
                stack.extend_from_slice(self.net.parents(v));
            }
        }
        keep
    }

    fn pick(factors: &[Arc<Factor>], keep: &[bool]) -> Vec<Factor> {
        factors
            .iter()
            .enumerate()
            .filter(|&(v, _)| keep[v])
            .map(|(_, f)| (**f).clone())
            .collect()
    }

    /// `P(query | evidence)` as a table over `query` in the given order.
    pub fn joint_marginal(&self, query: &[VarId]) -> Result<Arc<Table>, InferenceError> {
        for (i, &v) in query.iter().enumerate() {
            if v >= self.net.len() {
                return Err(InferenceError::UnknownVariable(v));
            }
            if self.evidence.contains(v) {
                return Err(InferenceError::EvidenceOverlap(v));
            }
            if query[..i].contains(&v) {
                return Err(InferenceError::DuplicateQuery(v));
            }
        }
        if let Some(hit) = self.memo.lock().unwrap().get(query) {
            return Ok(Arc::clone(hit));
        }
        let keep = self.relevant(query, &self.evidence);
        let out = eliminate(Self::pick(&self.factors, &keep), query);
        let table = Arc::new(out.table.reorder(query)?.normalized()?);
        self.memo
            .lock()
            .unwrap()
            .insert(query.to_vec(), Arc::clone(&table));
        Ok(table)
    }

    /// `P(target | evidence)`.
    pub fn posterior(&self, target: VarId) -> Result<Vec<f64>, InferenceError> {
        Ok(self.joint_marginal(&[target])?.values.clone())
    }

    /// `P(s | evidence)` for an assignment disjoint from the evidence.
    pub fn joint_probability(&self, s: &Assignment) -> Result<f64, InferenceError> {
        if s.is_empty() {
            return Ok(1.0);
        }
        for (v, st) in s.iter() {
            if v < self.net.len() && st >= self.net.arity(v) {
                return Err(InferenceError::StateOutOfRange { var: v, state: st });
            }
        }
        let vars: Vec<VarId> = s.vars().collect();
        let table = self.joint_marginal(&vars)?;
        Ok(table.get(s).expect("table covers the assignment"))
    }
}
