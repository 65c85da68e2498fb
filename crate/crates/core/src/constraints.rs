//! Dependency constraints: boolean conditions on which features are observed
//! under which a feature stays dependent on the class variable.
//!
//! For every undirected simple path between a feature and the class, the path
//! is active iff each non-collider on it is unobserved and each collider (or
//! one of its descendants) is observed. A feature's constraint is the
//! disjunction of those path conditions.

use std::collections::BinaryHeap;
use std::cmp::Reverse;

use thiserror::Error;

use crate::network::{DiscreteNetwork, FeatureId, FeatureSet, VarId};

/// Abort constraint compilation beyond this many enumerated paths.
pub const PATH_LIMIT: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("more than {PATH_LIMIT} class-to-feature paths; network is too densely connected")]
    PathLimitExceeded,
    #[error("brute-force enumeration supports at most {limit} free features, got {found}")]
    OracleLimit { limit: usize, found: usize },
}

/// One active-path condition: every feature in `forbidden` unobserved, and
/// at least one feature of every clause observed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Conjunct {
    pub forbidden: FeatureSet,
    pub clauses: Vec<FeatureSet>,
}

impl Conjunct {
    pub fn holds(&self, observed: FeatureSet) -> bool {
        !self.forbidden.intersects(observed) && self.clauses.iter().all(|c| c.intersects(observed))
    }

    /// Could this conjunct still hold if any subset of `optional` were
    /// observed in addition to `observed`?
    pub fn holds_with(&self, observed: FeatureSet, optional: FeatureSet) -> bool {
        let reach = observed.union(optional);
        !self.forbidden.intersects(observed) && self.clauses.iter().all(|c| c.intersects(reach))
    }

    /// Is `self` implied by `other` (true whenever `other` is)?
    fn weaker_than(&self, other: &Conjunct) -> bool {
        self.forbidden.is_subset(other.forbidden)
            && self
                .clauses
                .iter()
                .all(|c| other.clauses.iter().any(|o| o.is_subset(*c)))
    }

    fn normalize(mut self) -> Option<Conjunct> {
        self.clauses.sort_by(|a, b| a.canonical_cmp(b));
        self.clauses.dedup();
        // A clause that contains another clause is implied by it.
        let snapshot = self.clauses.clone();
        self.clauses
            .retain(|c| !snapshot.iter().any(|o| o != c && o.is_subset(*c)));
        // A clause made only of forbidden features can never hold.
        if self.clauses.iter().any(|c| c.is_subset(self.forbidden)) {
            return None;
        }
        Some(self)
    }
}

/// Disjunction of [`Conjunct`]s. The empty disjunction is `false`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DependencyConstraint {
    pub conjuncts: Vec<Conjunct>,
}

impl DependencyConstraint {
    pub fn evaluate(&self, observed: FeatureSet) -> bool {
        self.conjuncts.iter().any(|c| c.holds(observed))
    }

    pub fn satisfiable_with(&self, observed: FeatureSet, optional: FeatureSet) -> bool {
        self.conjuncts.iter().any(|c| c.holds_with(observed, optional))
    }

    /// True when some path to the class carries no conditions at all.
    pub fn is_tautology(&self) -> bool {
        self.conjuncts
            .iter()
            .any(|c| c.forbidden.is_empty() && c.clauses.is_empty())
    }

    pub fn is_contradiction(&self) -> bool {
        self.conjuncts.is_empty()
    }

    /// Features appearing as positivity literals.
    pub fn positive_literals(&self) -> FeatureSet {
        self.conjuncts
            .iter()
            .flat_map(|c| c.clauses.iter())
            .fold(FeatureSet::EMPTY, |a, &c| a.union(c))
    }

    fn simplify(conjuncts: Vec<Conjunct>) -> Self {
        let mut cs: Vec<Conjunct> = conjuncts.into_iter().filter_map(Conjunct::normalize).collect();
        cs.sort_by(|a, b| {
            a.forbidden
                .canonical_cmp(&b.forbidden)
                .then_with(|| a.clauses.len().cmp(&b.clauses.len()))
                .then_with(|| {
                    a.clauses
                        .iter()
                        .map(|c| c.bits())
                        .cmp(b.clauses.iter().map(|c| c.bits()))
                })
        });
        cs.dedup();
        let mut kept: Vec<Conjunct> = Vec::with_capacity(cs.len());
        for c in cs {
            if kept.iter().any(|k| k.weaker_than(&c)) {
                continue;
            }
            kept.retain(|k| !c.weaker_than(k));
            kept.push(c);
        }
        DependencyConstraint { conjuncts: kept }
    }

    /// Human-readable form, e.g. `¬X1 ∨ (X3|X5)`.
    pub fn describe(&self, net: &DiscreteNetwork) -> String {
        if self.conjuncts.is_empty() {
            return "false".into();
        }
        let parts: Vec<String> = self
            .conjuncts
            .iter()
            .map(|c| {
                let mut lits: Vec<String> = c
                    .forbidden
                    .iter()
                    .map(|f| format!("¬{}", net.feature_name(f)))
                    .collect();
                for cl in &c.clauses {
                    let names: Vec<&str> = cl.iter().map(|f| net.feature_name(f)).collect();
                    lits.push(if names.len() == 1 {
                        names[0].to_string()
                    } else {
                        format!("({})", names.join("|"))
                    });
                }
                if lits.is_empty() {
                    "true".into()
                } else {
                    lits.join(" ∧ ")
                }
            })
            .collect();
        parts.join(" ∨ ")
    }
}

/// Memoized constraints for every feature of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    per_feature: Vec<DependencyConstraint>,
    paths: usize,
}

struct PathWalk<'a> {
    net: &'a DiscreteNetwork,
    desc_clause: Vec<FeatureSet>,
    on_path: Vec<bool>,
    raw: Vec<Vec<Conjunct>>,
    paths: usize,
}

impl PathWalk<'_> {
    /// `v` is the current endpoint, reached from `prev` along an edge that
    /// points into `v` when `into_v` is set.
    fn visit(
        &mut self,
        v: VarId,
        into_v: bool,
        forbidden: FeatureSet,
        clauses: &mut Vec<FeatureSet>,
    ) -> Result<(), LatticeError> {
        if let Some(f) = self.net.feature_of(v) {
            self.paths += 1;
            if self.paths > PATH_LIMIT {
                return Err(LatticeError::PathLimitExceeded);
            }
            // The endpoint itself is not part of the conditioning set.
            let own = clauses.iter().map(|c| c.without(f)).collect();
            self.raw[f].push(Conjunct {
                forbidden,
                clauses: own,
            });
        }
        let is_start = v == self.net.class();
        let parents: Vec<VarId> = self.net.parents(v).to_vec();
        let children: Vec<VarId> = self.net.children(v).to_vec();
        for (w, w_into_v) in parents
            .into_iter()
            .map(|p| (p, true))
            .chain(children.into_iter().map(|c| (c, false)))
        {
            if self.on_path[w] {
                continue;
            }
            let mut next_forbidden = forbidden;
            let mut pushed = false;
            if !is_start {
                let f = self.net.feature_of(v).expect("interior nodes are features");
                if into_v && w_into_v {
                    clauses.push(self.desc_clause[f]);
                    pushed = true;
                } else {
                    next_forbidden.insert(f);
                }
            }
            self.on_path[w] = true;
            let r = self.visit(w, !w_into_v, next_forbidden, clauses);
            self.on_path[w] = false;
            if pushed {
                clauses.pop();
            }
            r?;
        }
        Ok(())
    }
}

impl ConstraintSet {
    /// Enumerate every simple class-to-feature path once and fold the path
    /// conditions into per-feature constraints.
    pub fn compile(net: &DiscreteNetwork) -> Result<Self, LatticeError> {
        let desc_clause = (0..net.feature_count())
            .map(|f| {
                let v = net.feature_var(f);
                net.descendants(v).expect("valid id").with(f)
            })
            .collect();
        let mut walk = PathWalk {
            net,
            desc_clause,
            on_path: vec![false; net.len()],
            raw: vec![Vec::new(); net.feature_count()],
            paths: 0,
        };
        let y = net.class();
        walk.on_path[y] = true;
        walk.visit(y, false, FeatureSet::EMPTY, &mut Vec::new())?;
        let paths = walk.paths;
        let per_feature = walk
            .raw
            .into_iter()
            .map(DependencyConstraint::simplify)
            .collect();
        Ok(ConstraintSet { per_feature, paths })
    }

    pub fn feature_count(&self) -> usize {
        self.per_feature.len()
    }

    pub fn get(&self, f: FeatureId) -> &DependencyConstraint {
        &self.per_feature[f]
    }

    /// Number of class-to-feature paths enumerated during compilation.
    pub fn paths_enumerated(&self) -> usize {
        self.paths
    }

    /// Constraint of a set: the conjunction of its members' constraints,
    /// evaluated with `s ∪ e` observed and everything else unobserved.
    pub fn is_irreducible(&self, s: FeatureSet, e: FeatureSet) -> bool {
        let observed = s.union(e);
        s.iter().all(|f| self.per_feature[f].evaluate(observed))
    }

    /// `s` is not irreducible, yet every member could still become dependent
    /// if some features of `remaining` were added. Forbidden literals are
    /// judged on `s ∪ e` alone; positivity clauses may also be met by
    /// `remaining`.
    pub fn is_potentially_irreducible(
        &self,
        s: FeatureSet,
        e: FeatureSet,
        remaining: FeatureSet,
    ) -> bool {
        if self.is_irreducible(s, e) {
            return false;
        }
        let observed = s.union(e);
        let optional = remaining.difference(observed);
        if optional.is_empty() {
            return false;
        }
        s.iter()
            .all(|f| self.per_feature[f].satisfiable_with(observed, optional))
    }
}

/// Single-feature entry point; compiles the whole network.
pub fn dependency_constraint(
    net: &DiscreteNetwork,
    f: FeatureId,
) -> Result<DependencyConstraint, LatticeError> {
    Ok(ConstraintSet::compile(net)?.per_feature.swap_remove(f))
}

/// Processing order for lattice construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    pub features: Vec<FeatureId>,
    /// Every positivity literal precedes the features whose constraints carry it.
    pub perfect: bool,
}

/// Order the features of `free` so that every positivity literal of a
/// feature's constraint comes first. Literals in `evidence` are already
/// satisfied and impose nothing. When the precedence relation is cyclic the
/// result is a best-effort order and `perfect` is false.
pub fn choose_ordering(constraints: &ConstraintSet, free: FeatureSet, evidence: FeatureSet) -> Ordering {
    let n = constraints.feature_count();
    let mut preds = vec![FeatureSet::EMPTY; n];
    for f in free.iter() {
        preds[f] = constraints
            .get(f)
            .positive_literals()
            .intersection(free)
            .difference(evidence)
            .without(f);
    }
    let mut placed = FeatureSet::EMPTY;
    let mut order = Vec::with_capacity(free.len());
    let mut perfect = true;
    let mut ready: BinaryHeap<Reverse<FeatureId>> = free
        .iter()
        .filter(|&f| preds[f].is_empty())
        .map(Reverse)
        .collect();
    while order.len() < free.len() {
        let next = match ready.pop() {
            Some(Reverse(f)) => f,
            None => {
                // Cyclic precedence: take the feature with the fewest unmet predecessors.
                perfect = false;
                free.difference(placed)
                    .iter()
                    .min_by_key(|&f| (preds[f].difference(placed).len(), f))
                    .expect("unplaced features remain")
            }
        };
        if placed.contains(next) {
            continue;
        }
        placed.insert(next);
        order.push(next);
        for g in free.difference(placed).iter() {
            if preds[g].contains(next) && preds[g].is_subset(placed) {
                ready.push(Reverse(g));
            }
        }
    }
    Ordering {
        features: order,
        perfect,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn fs(ids: &[FeatureId]) -> FeatureSet {
        ids.iter().copied().collect()
    }

    // Fig. 3 feature ids: X1=0, X2=1, X3=2, X4=3.

    #[test]
    fn fig3_constraints() {
        let net = fixtures::fig3_network();
        let cs = ConstraintSet::compile(&net).unwrap();
        assert!(cs.get(0).is_tautology());
        assert_eq!(cs.get(1).describe(&net), "¬X1");
        assert_eq!(cs.get(3).describe(&net), "X3");
        assert!(cs.get(2).is_tautology());
    }

    #[test]
    fn fig3_irreducibility() {
        let net = fixtures::fig3_network();
        let cs = ConstraintSet::compile(&net).unwrap();
        let none = FeatureSet::EMPTY;
        assert!(!cs.is_irreducible(fs(&[1, 3]), none));
        assert!(cs.is_irreducible(fs(&[2, 3]), none));
        assert!(cs.is_irreducible(none, none));
        let rest = fs(&[0, 2]);
        assert!(cs.is_potentially_irreducible(fs(&[1, 3]), none, rest));
        assert!(!cs.is_potentially_irreducible(fs(&[0, 1]), none, fs(&[2, 3])));
        assert!(!cs.is_potentially_irreducible(fs(&[2, 3]), none, fs(&[0, 1])));
    }

    #[test]
    fn evidence_satisfies_positivity() {
        let net = fixtures::fig3_network();
        let cs = ConstraintSet::compile(&net).unwrap();
        assert!(cs.is_irreducible(fs(&[3]), fs(&[2])));
        assert!(!cs.is_irreducible(fs(&[1]), fs(&[0])));
    }

    #[test]
    fn fig3_ordering_is_perfect() {
        let net = fixtures::fig3_network();
        let cs = ConstraintSet::compile(&net).unwrap();
        let o = choose_ordering(&cs, net.all_features(), FeatureSet::EMPTY);
        assert!(o.perfect);
        let pos = |f| o.features.iter().position(|&g| g == f).unwrap();
        assert!(pos(2) < pos(3));
    }

    #[test]
    fn naive_bayes_constraints_are_tautologies() {
        let net = fixtures::naive_bayes(4);
        let cs = ConstraintSet::compile(&net).unwrap();
        assert!((0..4).all(|f| cs.get(f).is_tautology()));
        let o = choose_ordering(&cs, net.all_features(), FeatureSet::EMPTY);
        assert!(o.perfect);
        assert_eq!(o.features.len(), 4);
    }

    #[test]
    fn two_collider_loop_has_no_perfect_ordering() {
        // Y→P→A←M→B←Q←Y: A and B each carry the other as a positivity literal.
        let text = r#"{"class":"Y","variables":[
          {"name":"Y","states":["0","1"],"cpt":[[0.5,0.5]]},
          {"name":"P","states":["0","1"],"parents":["Y"],"cpt":[[0.8,0.2],[0.3,0.7]]},
          {"name":"Q","states":["0","1"],"parents":["Y"],"cpt":[[0.8,0.2],[0.3,0.7]]},
          {"name":"M","states":["0","1"],"cpt":[[0.5,0.5]]},
          {"name":"A","states":["0","1"],"parents":["P","M"],"cpt":[[0.9,0.1],[0.5,0.5],[0.4,0.6],[0.1,0.9]]},
          {"name":"B","states":["0","1"],"parents":["Q","M"],"cpt":[[0.9,0.1],[0.5,0.5],[0.4,0.6],[0.1,0.9]]}]}"#;
        let net = DiscreteNetwork::from_json(text).unwrap();
        let cs = ConstraintSet::compile(&net).unwrap();
        let a = net.feature_of(net.var_by_name("A").unwrap()).unwrap();
        let b = net.feature_of(net.var_by_name("B").unwrap()).unwrap();
        assert!(cs.get(a).positive_literals().contains(b));
        assert!(cs.get(b).positive_literals().contains(a));
        let o = choose_ordering(&cs, net.all_features(), FeatureSet::EMPTY);
        assert!(!o.perfect);
        assert_eq!(o.features.len(), 5);
    }

    #[test]
    fn disconnected_feature_is_never_relevant() {
        let text = r#"{"class":"Y","variables":[
          {"name":"Y","states":["0","1"],"cpt":[[0.5,0.5]]},
          {"name":"Z","states":["0","1"],"cpt":[[0.5,0.5]]}]}"#;
        let net = DiscreteNetwork::from_json(text).unwrap();
        let c = dependency_constraint(&net, 0).unwrap();
        assert!(c.is_contradiction());
        assert_eq!(c.describe(&net), "false");
    }
}
