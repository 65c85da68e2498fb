//! Discrete Bayesian networks and the structural queries the lattice needs.
//!
//! Variables carry dense ids `0..n` in document order. The class variable is
//! one of them; every other variable is a *feature* and additionally carries a
//! dense feature id `0..n-1`, which is what [`FeatureSet`] bits index.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense variable index.
pub type VarId = usize;

/// Dense feature index (class variable excluded).
pub type FeatureId = usize;

/// Largest feature count a [`FeatureSet`] can represent.
pub const MAX_FEATURES: usize = 64;

/// Tolerance on CPT row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("malformed network document: {0}")]
    Parse(String),
    #[error("network has no class variable designation")]
    MissingClass,
    #[error("class variable `{0}` is not declared")]
    UnknownClass(String),
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("variable `{0}` must have at least two states")]
    TooFewStates(String),
    #[error("variable `{var}` repeats state label `{state}`")]
    DuplicateState { var: String, state: String },
    #[error("variable `{var}` lists unknown parent `{parent}`")]
    UnknownParent { var: String, parent: String },
    #[error("variable `{var}` lists parent `{parent}` more than once")]
    DuplicateParent { var: String, parent: String },
    #[error("variable `{0}` is of an unsupported kind `{1}`; only discrete variables are accepted")]
    UnsupportedKind(String, String),
    #[error("variable `{var}` has {found} CPT rows, expected {expected}")]
    RowCount { var: String, found: usize, expected: usize },
    #[error("variable `{var}` row {row} has {found} entries, expected {expected}")]
    RowWidth { var: String, row: usize, found: usize, expected: usize },
    #[error("variable `{var}` row {row} contains a value outside [0, 1]")]
    ProbabilityRange { var: String, row: usize },
    #[error("variable `{var}` row {row} sums to {sum}, not 1")]
    NotNormalized { var: String, row: usize, sum: f64 },
    #[error("parent graph contains a cycle through `{0}`")]
    Cycle(String),
    #[error("network has {0} features; at most {MAX_FEATURES} are supported")]
    TooManyFeatures(usize),
    #[error("variable id {0} is out of range")]
    UnknownVariable(VarId),
    #[error("variable `{0}` has no state `{1}`")]
    UnknownState(String, String),
    #[error("unknown variable name `{0}`")]
    UnknownVariableName(String),
    #[error("argument sets of a d-separation query overlap at variable {0}")]
    OverlappingSets(VarId),
}

/// A finite-state random variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub id: VarId,
    pub name: String,
    pub states: Vec<String>,
}

impl Variable {
    pub fn arity(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }
}

/// Observed states keyed by variable id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(BTreeMap<VarId, usize>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (VarId, usize)>) -> Self {
        Assignment(pairs.into_iter().collect())
    }

    /// Insert an observation; returns the previous state if the variable was already set.
    pub fn insert(&mut self, var: VarId, state: usize) -> Option<usize> {
        self.0.insert(var, state)
    }

    pub fn with(&self, var: VarId, state: usize) -> Self {
        let mut out = self.clone();
        out.0.insert(var, state);
        out
    }

    pub fn get(&self, var: VarId) -> Option<usize> {
        self.0.get(&var).copied()
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.0.contains_key(&var)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, usize)> + '_ {
        self.0.iter().map(|(&v, &s)| (v, s))
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.0.keys().copied()
    }

    /// First variable present in both assignments, if any.
    pub fn overlap(&self, other: &Assignment) -> Option<VarId> {
        self.0.keys().find(|v| other.0.contains_key(v)).copied()
    }

    pub fn union(&self, other: &Assignment) -> Assignment {
        let mut out = self.clone();
        out.0.extend(other.0.iter().map(|(&v, &s)| (v, s)));
        out
    }
}

/// Fixed-width bit vector over feature ids.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSet(u64);

impl FeatureSet {
    pub const EMPTY: FeatureSet = FeatureSet(0);

    pub fn from_bits(bits: u64) -> Self {
        FeatureSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    /// All features `0..count`.
    pub fn full(count: usize) -> Self {
        assert!(count <= MAX_FEATURES);
        if count == 64 {
            FeatureSet(u64::MAX)
        } else {
            FeatureSet((1u64 << count) - 1)
        }
    }

    pub fn singleton(f: FeatureId) -> Self {
        FeatureSet(1u64 << f)
    }

    pub fn contains(self, f: FeatureId) -> bool {
        f < MAX_FEATURES && self.0 & (1u64 << f) != 0
    }

    pub fn insert(&mut self, f: FeatureId) {
        self.0 |= 1u64 << f;
    }

    pub fn remove(&mut self, f: FeatureId) {
        self.0 &= !(1u64 << f);
    }

    pub fn with(self, f: FeatureId) -> Self {
        FeatureSet(self.0 | (1u64 << f))
    }

    pub fn without(self, f: FeatureId) -> Self {
        FeatureSet(self.0 & !(1u64 << f))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Self) -> Self {
        FeatureSet(self.0 | other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        FeatureSet(self.0 & other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        FeatureSet(self.0 & !other.0)
    }

    pub fn intersects(self, other: Self) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_proper_subset(self, other: Self) -> bool {
        self.is_subset(other) && self != other
    }

    /// Members in increasing id order.
    pub fn iter(self) -> FeatureIter {
        FeatureIter(self.0)
    }

    /// Canonical order: by size, then lexicographically on the sorted member lists.
    pub fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.iter().cmp(other.iter()))
    }
}

impl fmt::Debug for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<FeatureId> for FeatureSet {
    fn from_iter<I: IntoIterator<Item = FeatureId>>(iter: I) -> Self {
        let mut s = FeatureSet::EMPTY;
        for f in iter {
            s.insert(f);
        }
        s
    }
}

pub struct FeatureIter(u64);

impl Iterator for FeatureIter {
    type Item = FeatureId;

    fn next(&mut self) -> Option<FeatureId> {
        if self.0 == 0 {
            return None;
        }
        let f = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(f)
    }
}

/// DAG plus conditional probability tables over finite-state variables.
///
/// `cpt[v]` holds one row per joint parent configuration, row-major over
/// `parents[v]` in listed order (last parent varies fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteNetwork {
    variables: Vec<Variable>,
    parents: Vec<Vec<VarId>>,
    children: Vec<Vec<VarId>>,
    cpt: Vec<Vec<Vec<f64>>>,
    class: VarId,
    features: Vec<VarId>,
    feature_of: Vec<Option<FeatureId>>,
    topo: Vec<VarId>,
}

/// Serialized form of a variable in the network document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub states: Vec<String>,
    #[serde(default)]
    pub parents: Vec<String>,
    pub cpt: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
}

/// Serialized form of a whole network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkSpec {
    #[serde(default)]
    pub class: Option<String>,
    pub variables: Vec<VariableSpec>,
}

impl DiscreteNetwork {
    /// Parse and validate a JSON network document.
    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let spec: NetworkSpec =
            serde_json::from_str(text).map_err(|e| NetworkError::Parse(e.to_string()))?;
        Self::from_spec(&spec)
    }

    pub fn from_spec(spec: &NetworkSpec) -> Result<Self, NetworkError> {
        let class_name = spec.class.as_ref().ok_or(NetworkError::MissingClass)?;
        let mut by_name = HashMap::new();
        for (i, v) in spec.variables.iter().enumerate() {
            if by_name.insert(v.name.clone(), i).is_some() {
                return Err(NetworkError::DuplicateVariable(v.name.clone()));
            }
        }
        let class = *by_name
            .get(class_name)
            .ok_or_else(|| NetworkError::UnknownClass(class_name.clone()))?;

        let mut variables = Vec::with_capacity(spec.variables.len());
        let mut parents = Vec::with_capacity(spec.variables.len());
        for (id, v) in spec.variables.iter().enumerate() {
            if let Some(kind) = &v.kind {
                if kind != "discrete" {
                    return Err(NetworkError::UnsupportedKind(v.name.clone(), kind.clone()));
                }
            }
            if v.states.len() < 2 {
                return Err(NetworkError::TooFewStates(v.name.clone()));
            }
            for (i, s) in v.states.iter().enumerate() {
                if v.states[..i].contains(s) {
                    return Err(NetworkError::DuplicateState {
                        var: v.name.clone(),
                        state: s.clone(),
                    });
                }
            }
            let mut ps = Vec::with_capacity(v.parents.len());
            for p in &v.parents {
                let pid = *by_name.get(p).ok_or_else(|| NetworkError::UnknownParent {
                    var: v.name.clone(),
                    parent: p.clone(),
                })?;
                if ps.contains(&pid) {
                    return Err(NetworkError::DuplicateParent {
                        var: v.name.clone(),
                        parent: p.clone(),
                    });
                }
                ps.push(pid);
            }
            variables.push(Variable {
                id,
                name: v.name.clone(),
                states: v.states.clone(),
            });
            parents.push(ps);
        }
        let cpt = spec.variables.iter().map(|v| v.cpt.clone()).collect();
        Self::new(variables, parents, cpt, class)
    }

    /// Build from already-resolved parts, validating every invariant.
    pub fn new(
        variables: Vec<Variable>,
        parents: Vec<Vec<VarId>>,
        cpt: Vec<Vec<Vec<f64>>>,
        class: VarId,
    ) -> Result<Self, NetworkError> {
        let n = variables.len();
        if class >= n {
            return Err(NetworkError::UnknownVariable(class));
        }
        if n - 1 > MAX_FEATURES {
            return Err(NetworkError::TooManyFeatures(n - 1));
        }
        for (v, var) in variables.iter().enumerate() {
            let expected_rows: usize = parents[v].iter().map(|&p| variables[p].arity()).product();
            let rows = &cpt[v];
            if rows.len() != expected_rows {
                return Err(NetworkError::RowCount {
                    var: var.name.clone(),
                    found: rows.len(),
                    expected: expected_rows,
                });
            }
            for (r, row) in rows.iter().enumerate() {
                if row.len() != var.arity() {
                    return Err(NetworkError::RowWidth {
                        var: var.name.clone(),
                        row: r,
                        found: row.len(),
                        expected: var.arity(),
                    });
                }
                if row.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
                    return Err(NetworkError::ProbabilityRange {
                        var: var.name.clone(),
                        row: r,
                    });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(NetworkError::NotNormalized {
                        var: var.name.clone(),
                        row: r,
                        sum,
                    });
                }
            }
        }

        let mut children = vec![Vec::new(); n];
        for (v, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(v);
            }
        }

        // Kahn's algorithm; anything left over sits on a cycle.
        let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<VarId> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            topo.push(v);
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if topo.len() != n {
            let stuck = (0..n).find(|&v| indegree[v] > 0).unwrap();
            return Err(NetworkError::Cycle(variables[stuck].name.clone()));
        }

        let features: Vec<VarId> = (0..n).filter(|&v| v != class).collect();
        let mut feature_of = vec![None; n];
        for (f, &v) in features.iter().enumerate() {
            feature_of[v] = Some(f);
        }

        Ok(DiscreteNetwork {
            variables,
            parents,
            children,
            cpt,
            class,
            features,
            feature_of,
            topo,
        })
    }

    pub fn to_spec(&self) -> NetworkSpec {
        NetworkSpec {
            class: Some(self.variables[self.class].name.clone()),
            variables: self
                .variables
                .iter()
                .map(|v| VariableSpec {
                    name: v.name.clone(),
                    states: v.states.clone(),
                    parents: self.parents[v.id]
                        .iter()
                        .map(|&p| self.variables[p].name.clone())
                        .collect(),
                    cpt: self.cpt[v.id].clone(),
                    kind: None,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("network spec serializes")
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, v: VarId) -> &Variable {
        &self.variables[v]
    }

    pub fn arity(&self, v: VarId) -> usize {
        self.variables[v].arity()
    }

    pub fn parents(&self, v: VarId) -> &[VarId] {
        &self.parents[v]
    }

    pub fn children(&self, v: VarId) -> &[VarId] {
        &self.children[v]
    }

    pub fn cpt(&self, v: VarId) -> &[Vec<f64>] {
        &self.cpt[v]
    }

    /// Variables in a topological order of the parent graph.
    pub fn topological_order(&self) -> &[VarId] {
        &self.topo
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    pub fn class(&self) -> VarId {
        self.class
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn all_features(&self) -> FeatureSet {
        FeatureSet::full(self.features.len())
    }

    /// Variable id of feature `f`.
    pub fn feature_var(&self, f: FeatureId) -> VarId {
        self.features[f]
    }

    /// Feature id of variable `v`, `None` for the class variable.
    pub fn feature_of(&self, v: VarId) -> Option<FeatureId> {
        self.feature_of.get(v).copied().flatten()
    }

    pub fn feature_name(&self, f: FeatureId) -> &str {
        &self.variables[self.features[f]].name
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn feature_vars(&self, s: FeatureSet) -> Vec<VarId> {
        s.iter().map(|f| self.features[f]).collect()
    }

    /// Feature set of the given variables; the class variable is skipped.
    pub fn features_of_vars(&self, vars: impl IntoIterator<Item = VarId>) -> FeatureSet {
        vars.into_iter().filter_map(|v| self.feature_of(v)).collect()
    }

    /// Render a set as `{A, B}` using variable names.
    pub fn format_set(&self, s: FeatureSet) -> String {
        let names: Vec<&str> = s.iter().map(|f| self.feature_name(f)).collect();
        format!("{{{}}}", names.join(", "))
    }

    /// Parse `name=state,name=state` into an assignment.
    pub fn parse_assignment(&self, text: &str) -> Result<Assignment, NetworkError> {
        let mut out = Assignment::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, state) = part
                .split_once('=')
                .ok_or_else(|| NetworkError::Parse(format!("expected name=state, got `{part}`")))?;
            let (name, state) = (name.trim(), state.trim());
            let v = self
                .var_by_name(name)
                .ok_or_else(|| NetworkError::UnknownVariableName(name.to_string()))?;
            let s = self.variables[v]
                .state_index(state)
                .ok_or_else(|| NetworkError::UnknownState(name.to_string(), state.to_string()))?;
            out.insert(v, s);
        }
        Ok(out)
    }

    /// `P(v = state | parents as given by `full`)` where `full` covers all parents.
    pub fn conditional(&self, v: VarId, state: usize, full: &[usize]) -> f64 {
        let mut row = 0;
        for &p in &self.parents[v] {
            row = row * self.arity(p) + full[p];
        }
        self.cpt[v][row][state]
    }

    /// Does the network contain a directed edge `from -> to`?
    pub fn has_edge(&self, from: VarId, to: VarId) -> bool {
        self.parents[to].contains(&from)
    }

    fn check_var(&self, v: VarId) -> Result<(), NetworkError> {
        if v < self.len() {
            Ok(())
        } else {
            Err(NetworkError::UnknownVariable(v))
        }
    }

    /// Strict descendants of `v` as a boolean mask over variables.
    pub fn descendant_mask(&self, v: VarId) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<VarId> = self.children[v].clone();
        while let Some(u) = stack.pop() {
            if !seen[u] {
                seen[u] = true;
                stack.extend_from_slice(&self.children[u]);
            }
        }
        seen
    }

    /// Features reachable from `v` along directed edges, `v` itself excluded.
    pub fn descendants(&self, v: VarId) -> Result<FeatureSet, NetworkError> {
        self.check_var(v)?;
        let mask = self.descendant_mask(v);
        Ok(self.features_of_vars((0..self.len()).filter(|&u| mask[u])))
    }

    /// Parents, children, and the children's other parents of `target`, as
    /// features. When `target` is a feature the class variable is omitted.
    pub fn markov_blanket(&self, target: VarId) -> Result<FeatureSet, NetworkError> {
        self.check_var(target)?;
        let mut vars = Vec::new();
        vars.extend_from_slice(&self.parents[target]);
        for &c in &self.children[target] {
            vars.push(c);
            vars.extend(self.parents[c].iter().copied().filter(|&p| p != target));
        }
        Ok(self.features_of_vars(vars))
    }

    /// Markov blanket of the class variable.
    pub fn class_markov_blanket(&self) -> FeatureSet {
        self.markov_blanket(self.class).expect("class id is valid")
    }

    /// Variables reachable from `sources` along active trails given `given`
    /// (reachability formulation of d-separation). Observed nodes are never
    /// reported as reachable.
    pub fn reachable(&self, sources: &[VarId], given: &[VarId]) -> Vec<bool> {
        let n = self.len();
        let mut observed = vec![false; n];
        for &z in given {
            observed[z] = true;
        }
        // Ancestors of the observed set, observed nodes included.
        let mut anc = vec![false; n];
        let mut stack: Vec<VarId> = given.to_vec();
        while let Some(u) = stack.pop() {
            if !anc[u] {
                anc[u] = true;
                stack.extend_from_slice(&self.parents[u]);
            }
        }

        const UP: usize = 0; // arrived from a child
        const DOWN: usize = 1; // arrived from a parent
        let mut visited = vec![[false; 2]; n];
        let mut reach = vec![false; n];
        let mut queue: VecDeque<(VarId, usize)> = sources.iter().map(|&s| (s, UP)).collect();
        while let Some((v, dir)) = queue.pop_front() {
            if visited[v][dir] {
                continue;
            }
            visited[v][dir] = true;
            if !observed[v] {
                reach[v] = true;
            }
            if dir == UP && !observed[v] {
                for &p in &self.parents[v] {
                    queue.push_back((p, UP));
                }
                for &c in &self.children[v] {
                    queue.push_back((c, DOWN));
                }
            } else if dir == DOWN {
                if !observed[v] {
                    for &c in &self.children[v] {
                        queue.push_back((c, DOWN));
                    }
                }
                if anc[v] {
                    for &p in &self.parents[v] {
                        queue.push_back((p, UP));
                    }
                }
            }
        }
        reach
    }

    /// True iff every trail between `a` and `b` is blocked by `given`.
    pub fn d_separated(
        &self,
        a: &[VarId],
        b: &[VarId],
        given: &[VarId],
    ) -> Result<bool, NetworkError> {
        let n = self.len();
        let mut owner = vec![0u8; n];
        for (tag, set) in [(1u8, a), (2, b), (3, given)] {
            for &v in set {
                self.check_var(v)?;
                if owner[v] != 0 && owner[v] != tag {
                    return Err(NetworkError::OverlappingSets(v));
                }
                owner[v] = tag;
            }
        }
        let reach = self.reachable(a, given);
        Ok(!b.iter().any(|&v| reach[v]))
    }

    /// Is the class variable d-separated from feature `f` given features `given`
    /// (plus any extra observed variables)?
    pub fn class_separated_from(&self, f: FeatureId, given: FeatureSet) -> bool {
        let given_vars = self.feature_vars(given.without(f));
        let reach = self.reachable(&[self.class], &given_vars);
        !reach[self.features[f]]
    }
}
