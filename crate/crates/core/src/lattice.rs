//! The value-of-information lattice: every irreducible subset of the
//! unobserved features, linked to its maximal proper irreducible subsets.

use std::collections::{HashMap, HashSet};

use crate::constraints::{choose_ordering, ConstraintSet, LatticeError};
use crate::network::{DiscreteNetwork, FeatureSet};

/// Brute-force enumeration refuses networks with more free features than this.
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Debug, Clone)]
pub struct Lattice {
    evidence: FeatureSet,
    free: FeatureSet,
    nodes: Vec<FeatureSet>,
    index: HashMap<FeatureSet, usize>,
    children: Vec<Vec<usize>>,
    parents: Vec<Vec<usize>>,
    ordering: Vec<usize>,
    perfect: bool,
    potential_stored: usize,
}

impl Lattice {
    pub fn evidence(&self) -> FeatureSet {
        self.evidence
    }

    /// Features not in the evidence.
    pub fn free_features(&self) -> FeatureSet {
        self.free
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in canonical order (size, then lexicographic); index 0 is `∅`.
    pub fn nodes(&self) -> &[FeatureSet] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> FeatureSet {
        self.nodes[i]
    }

    pub fn index_of(&self, s: FeatureSet) -> Option<usize> {
        self.index.get(&s).copied()
    }

    pub fn contains(&self, s: FeatureSet) -> bool {
        self.index.contains_key(&s)
    }

    /// Maximal proper irreducible subsets of node `i`.
    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// Minimal irreducible supersets of node `i`.
    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    /// Nodes without irreducible supersets.
    pub fn roots(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.parents[i].is_empty()).collect()
    }

    pub fn max_size(&self) -> usize {
        self.nodes.iter().map(|s| s.len()).max().unwrap_or(0)
    }

    /// Feature processing order used during construction.
    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    pub fn ordering_is_perfect(&self) -> bool {
        self.perfect
    }

    /// How many potentially irreducible sets were ever held during construction.
    pub fn potential_sets_stored(&self) -> usize {
        self.potential_stored
    }

    /// `1 − nodes / 2^free`.
    pub fn reduction(&self) -> f64 {
        1.0 - self.len() as f64 / 2f64.powi(self.free.len() as i32)
    }

    pub fn summary(&self) -> String {
        format!(
            "nodes: {}, max-size: {}, reduction: {:.2}%",
            self.len(),
            self.max_size(),
            100.0 * self.reduction()
        )
    }
}

/// Build the lattice for evidence variables `e` from scratch.
pub fn build_voila(net: &DiscreteNetwork, e: FeatureSet) -> Result<Lattice, LatticeError> {
    let constraints = ConstraintSet::compile(net)?;
    Ok(build_with_constraints(net, &constraints, e))
}

/// Build the lattice reusing previously compiled constraints.
pub fn build_with_constraints(
    net: &DiscreteNetwork,
    constraints: &ConstraintSet,
    e: FeatureSet,
) -> Lattice {
    let free = net.all_features().difference(e);
    let order = choose_ordering(constraints, free, e);
    let mut irreducible = vec![FeatureSet::EMPTY];
    let mut potential: Vec<FeatureSet> = Vec::new();
    let mut potential_stored = 0;
    let mut remaining = free;
    for &x in &order.features {
        remaining.remove(x);
        let mut new_is = Vec::new();
        let mut new_ps = Vec::new();
        for &s in irreducible.iter().chain(potential.iter()) {
            let t = s.with(x);
            if constraints.is_irreducible(t, e) {
                new_is.push(t);
            } else if constraints.is_potentially_irreducible(t, e, remaining) {
                new_ps.push(t);
            }
        }
        potential_stored += new_ps.len();
        irreducible.extend(new_is);
        potential.extend(new_ps);
        potential.retain(|&s| constraints.is_potentially_irreducible(s, e, remaining));
    }
    irreducible.sort_by(|a, b| a.canonical_cmp(b));
    let index: HashMap<FeatureSet, usize> =
        irreducible.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut children = vec![Vec::new(); irreducible.len()];
    let mut parents = vec![Vec::new(); irreducible.len()];
    for (i, &s) in irreducible.iter().enumerate() {
        let kids = maximal_subsets(s, &index);
        for &k in &kids {
            parents[k].push(i);
        }
        children[i] = kids;
    }
    Lattice {
        evidence: e,
        free,
        nodes: irreducible,
        index,
        children,
        parents,
        ordering: order.features,
        perfect: order.perfect,
        potential_stored,
    }
}

/// Descend from `s` one feature at a time; stop at the first node on each
/// branch, then keep only the maximal hits.
fn maximal_subsets(s: FeatureSet, index: &HashMap<FeatureSet, usize>) -> Vec<usize> {
    let mut seen = HashSet::new();
    let mut hits: Vec<FeatureSet> = Vec::new();
    let mut stack = vec![s];
    while let Some(cur) = stack.pop() {
        for f in cur.iter() {
            let sub = cur.without(f);
            if !seen.insert(sub) {
                continue;
            }
            if index.contains_key(&sub) {
                hits.push(sub);
            } else {
                stack.push(sub);
            }
        }
    }
    let mut out: Vec<usize> = hits
        .iter()
        .filter(|&&h| !hits.iter().any(|&o| h.is_proper_subset(o)))
        .map(|h| index[h])
        .collect();
    out.sort_unstable();
    out
}

/// Every subset `S` of the free features such that no member is d-separated
/// from the class given the rest of `S` plus `e`. Canonically sorted.
pub fn enumerate_irreducible_bruteforce(
    net: &DiscreteNetwork,
    e: FeatureSet,
) -> Result<Vec<FeatureSet>, LatticeError> {
    let free: Vec<usize> = net.all_features().difference(e).iter().collect();
    if free.len() > BRUTE_FORCE_LIMIT {
        return Err(LatticeError::OracleLimit {
            limit: BRUTE_FORCE_LIMIT,
            found: free.len(),
        });
    }
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << free.len()) {
        let s: FeatureSet = free
            .iter()
            .enumerate()
            .filter(|&(i, _)| mask >> i & 1 == 1)
            .map(|(_, &f)| f)
            .collect();
        let ok = s
            .iter()
            .all(|f| !net.class_separated_from(f, s.without(f).union(e)));
        if ok {
            out.push(s);
        }
    }
    out.sort_by(|a, b| a.canonical_cmp(b));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn fs(ids: &[usize]) -> FeatureSet {
        ids.iter().copied().collect()
    }

    #[test]
    fn fig3_has_nine_nodes() {
        let net = fixtures::fig3_network();
        let l = build_voila(&net, FeatureSet::EMPTY).unwrap();
        assert_eq!(l.len(), 9);
        assert_eq!(l.max_size(), 3);
        assert_eq!(l.summary(), "nodes: 9, max-size: 3, reduction: 43.75%");
        assert_eq!(l.potential_sets_stored(), 0);
        let expected = enumerate_irreducible_bruteforce(&net, FeatureSet::EMPTY).unwrap();
        assert_eq!(l.nodes(), &expected[..]);
        for s in [
            fs(&[]),
            fs(&[0]),
            fs(&[1]),
            fs(&[2]),
            fs(&[0, 2]),
            fs(&[1, 2]),
            fs(&[2, 3]),
            fs(&[0, 2, 3]),
            fs(&[1, 2, 3]),
        ] {
            assert!(l.contains(s), "{s:?}");
        }
    }

    #[test]
    fn fig3_edges_are_maximal_subsets() {
        let net = fixtures::fig3_network();
        let l = build_voila(&net, FeatureSet::EMPTY).unwrap();
        let kids = |s: FeatureSet| -> Vec<FeatureSet> {
            l.children(l.index_of(s).unwrap()).iter().map(|&i| l.node(i)).collect()
        };
        // {X3, X4} loses X4 only; {X4} alone is not irreducible.
        assert_eq!(kids(fs(&[2, 3])), vec![fs(&[2])]);
        assert_eq!(kids(fs(&[0, 2, 3])), vec![fs(&[0, 2]), fs(&[2, 3])]);
        assert_eq!(kids(fs(&[0])), vec![fs(&[])]);
        assert_eq!(l.roots(), vec![l.index_of(fs(&[0, 2, 3])).unwrap(), l.index_of(fs(&[1, 2, 3])).unwrap()]);
    }

    #[test]
    fn chain_and_naive_bayes_counts() {
        let chain = fixtures::chain(3);
        assert_eq!(build_voila(&chain, FeatureSet::EMPTY).unwrap().len(), 4);
        let nb = fixtures::naive_bayes(4);
        let l = build_voila(&nb, FeatureSet::EMPTY).unwrap();
        assert_eq!(l.len(), 16);
        assert!(l.reduction().abs() < 1e-12);
    }

    #[test]
    fn evidence_changes_the_lattice() {
        let net = fixtures::fig3_network();
        // With X3 observed, X4 alone becomes relevant.
        let l = build_voila(&net, fs(&[2])).unwrap();
        assert!(l.contains(fs(&[3])));
        assert!(!l.contains(fs(&[2])));
        let expected = enumerate_irreducible_bruteforce(&net, fs(&[2])).unwrap();
        assert_eq!(l.nodes(), &expected[..]);
    }

    #[test]
    fn brute_force_limit() {
        let nb = fixtures::naive_bayes(21);
        assert!(matches!(
            enumerate_irreducible_bruteforce(&nb, FeatureSet::EMPTY),
            Err(LatticeError::OracleLimit { limit: 20, found: 21 })
        ));
    }
}
