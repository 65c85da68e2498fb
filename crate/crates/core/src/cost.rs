//! Acquisition costs with group overheads, misclassification matrices, and
//! prior-EMC calibration.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{DiscreteNetwork, FeatureId, FeatureSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("malformed cost document: {0}")]
    Parse(String),
    #[error("cost entry names unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature `{0}` has no cost entry")]
    MissingFeature(String),
    #[error("feature `{0}` has more than one cost entry")]
    DuplicateFeature(String),
    #[error("feature `{feature}` refers to unknown group `{group}`")]
    UnknownGroup { feature: String, group: String },
    #[error("group `{0}` is declared twice")]
    DuplicateGroup(String),
    #[error("cost of `{0}` is negative or not finite")]
    InvalidCost(String),
    #[error("feature {0} is already part of the acquisition history")]
    HistoryOverlap(FeatureId),
    #[error("misclassification matrix must be {expected}x{expected}")]
    MatrixShape { expected: usize },
    #[error("misclassification costs must be finite and nonnegative")]
    NegativeMisclassification,
    #[error("calibration target must be finite and nonnegative")]
    InvalidTarget,
    #[error("prior must be a normalized probability vector")]
    InvalidPrior,
    #[error("prior puts all mass on class {0}; calibration is impossible")]
    DegeneratePrior(usize),
    #[error("cost document specifies both `matrix` and `calibrate`")]
    ConflictingMisclassification,
}

/// Per-feature base costs with optional group overheads. The first feature
/// acquired from a group pays the group's overhead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionCostModel {
    names: Vec<String>,
    base: Vec<f64>,
    group_of: Vec<Option<usize>>,
    group_names: Vec<String>,
    overhead: Vec<f64>,
}

fn valid_money(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

impl AcquisitionCostModel {
    pub fn new(
        names: Vec<String>,
        base: Vec<f64>,
        group_of: Vec<Option<usize>>,
        group_names: Vec<String>,
        overhead: Vec<f64>,
    ) -> Result<Self, CostError> {
        assert_eq!(names.len(), base.len());
        assert_eq!(names.len(), group_of.len());
        assert_eq!(group_names.len(), overhead.len());
        for (n, &c) in names.iter().zip(&base) {
            if !valid_money(c) {
                return Err(CostError::InvalidCost(n.clone()));
            }
        }
        for (n, &c) in group_names.iter().zip(&overhead) {
            if !valid_money(c) {
                return Err(CostError::InvalidCost(n.clone()));
            }
        }
        for (n, g) in names.iter().zip(&group_of) {
            if let Some(g) = g {
                if *g >= group_names.len() {
                    return Err(CostError::UnknownGroup {
                        feature: n.clone(),
                        group: g.to_string(),
                    });
                }
            }
        }
        Ok(AcquisitionCostModel {
            names,
            base,
            group_of,
            group_names,
            overhead,
        })
    }

    /// Independent per-feature costs, no groups.
    pub fn independent(names: Vec<String>, base: Vec<f64>) -> Result<Self, CostError> {
        let n = names.len();
        Self::new(names, base, vec![None; n], Vec::new(), Vec::new())
    }

    /// Every feature costs nothing.
    pub fn free(net: &DiscreteNetwork) -> Self {
        let names = (0..net.feature_count())
            .map(|f| net.feature_name(f).to_string())
            .collect();
        Self::independent(names, vec![0.0; net.feature_count()]).expect("zero costs are valid")
    }

    pub fn feature_count(&self) -> usize {
        self.base.len()
    }

    pub fn base_cost(&self, f: FeatureId) -> f64 {
        self.base[f]
    }

    pub fn group_of(&self, f: FeatureId) -> Option<usize> {
        self.group_of[f]
    }

    pub fn group_count(&self) -> usize {
        self.overhead.len()
    }

    pub fn overhead(&self, g: usize) -> f64 {
        self.overhead[g]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    /// `C(S | acquired)`: base costs of `s` plus overheads of groups that `s`
    /// touches and `acquired` does not.
    pub fn cost_given(&self, s: FeatureSet, acquired: FeatureSet) -> f64 {
        let mut paid = vec![false; self.overhead.len()];
        for f in acquired.iter() {
            if let Some(g) = self.group_of[f] {
                paid[g] = true;
            }
        }
        let mut total = 0.0;
        for f in s.iter() {
            total += self.base[f];
            if let Some(g) = self.group_of[f] {
                if !paid[g] {
                    paid[g] = true;
                    total += self.overhead[g];
                }
            }
        }
        total
    }

    /// `C(S | history)`; `s` must not repeat an acquired feature.
    pub fn set_cost(&self, s: FeatureSet, history: &AcquisitionHistory) -> Result<f64, CostError> {
        let acquired = history.acquired();
        if let Some(f) = s.intersection(acquired).iter().next() {
            return Err(CostError::HistoryOverlap(f));
        }
        Ok(self.cost_given(s, acquired))
    }

    /// `FC(p_s) = Σ_j C(p_s[j] | p_s[1..j])`.
    pub fn path_feature_cost(&self, path: &AcquisitionHistory) -> f64 {
        let mut acquired = FeatureSet::EMPTY;
        let mut total = 0.0;
        for &(f, _) in path.steps() {
            total += self.cost_given(FeatureSet::singleton(f), acquired);
            acquired.insert(f);
        }
        total
    }

    /// Group membership and names, without the amounts.
    pub fn layout(&self) -> CostLayout {
        CostLayout {
            names: self.names.clone(),
            group_of: self.group_of.clone(),
            group_names: self.group_names.clone(),
        }
    }
}

/// Which features exist and which group each belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct CostLayout {
    pub names: Vec<String>,
    pub group_of: Vec<Option<usize>>,
    pub group_names: Vec<String>,
}

impl CostLayout {
    /// Feature `i` joins group `i % groups`; no groups when `groups == 0`.
    pub fn round_robin(net: &DiscreteNetwork, groups: usize) -> Self {
        let names = (0..net.feature_count())
            .map(|f| net.feature_name(f).to_string())
            .collect();
        let group_of = (0..net.feature_count())
            .map(|f| (groups > 0).then(|| f % groups))
            .collect();
        let group_names = (0..groups).map(|g| format!("G{}", g + 1)).collect();
        CostLayout {
            names,
            group_of,
            group_names,
        }
    }
}

/// Ordered `(feature, observed state)` prefix of a policy path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AcquisitionHistory {
    steps: Vec<(FeatureId, usize)>,
}

impl AcquisitionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_steps(steps: Vec<(FeatureId, usize)>) -> Result<Self, CostError> {
        let mut h = Self::new();
        for (f, s) in steps {
            h.push(f, s)?;
        }
        Ok(h)
    }

    pub fn push(&mut self, f: FeatureId, state: usize) -> Result<(), CostError> {
        if self.acquired().contains(f) {
            return Err(CostError::HistoryOverlap(f));
        }
        self.steps.push((f, state));
        Ok(())
    }

    pub fn then(&self, f: FeatureId, state: usize) -> Result<Self, CostError> {
        let mut out = self.clone();
        out.push(f, state)?;
        Ok(out)
    }

    pub fn steps(&self) -> &[(FeatureId, usize)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn acquired(&self) -> FeatureSet {
        self.steps.iter().map(|&(f, _)| f).collect()
    }

    /// Groups whose overhead has already been paid along this path.
    pub fn paid_groups(&self, model: &AcquisitionCostModel) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .steps
            .iter()
            .filter_map(|&(f, _)| model.group_of(f))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// `c[i][j]`: cost of predicting class `i` when the truth is class `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisclassificationMatrix {
    rows: Vec<Vec<f64>>,
}

impl MisclassificationMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, CostError> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(CostError::MatrixShape { expected: n.max(1) });
        }
        if rows.iter().flatten().any(|&c| !valid_money(c)) {
            return Err(CostError::NegativeMisclassification);
        }
        Ok(MisclassificationMatrix { rows })
    }

    /// Zero diagonal, constant `c` off the diagonal.
    pub fn symmetric(classes: usize, c: f64) -> Result<Self, CostError> {
        let rows = (0..classes)
            .map(|i| (0..classes).map(|j| if i == j { 0.0 } else { c }).collect())
            .collect();
        Self::new(rows)
    }

    pub fn classes(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, predicted: usize, actual: usize) -> f64 {
        self.rows[predicted][actual]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn scaled(&self, k: f64) -> Self {
        MisclassificationMatrix {
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|c| c * k).collect())
                .collect(),
        }
    }

    /// `Σ_j w_j · c[predicted][j]` for (possibly unnormalized) class weights.
    pub fn expected_cost(&self, weights: &[f64], predicted: usize) -> f64 {
        weights
            .iter()
            .zip(&self.rows[predicted])
            .map(|(w, c)| w * c)
            .sum()
    }
}

/// `(min_i Σ_j P(y_j)·c_ij, argmin)`, ties to the lowest class index.
///
/// Also valid for unnormalized weights, where it returns the scaled cost.
pub fn emc(dist: &[f64], m: &MisclassificationMatrix) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for i in 0..m.classes() {
        let c = m.expected_cost(dist, i);
        if c < best.0 {
            best = (c, i);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMode {
    #[serde(alias = "sym")]
    Symmetric,
    #[serde(alias = "asym")]
    Asymmetric,
}

impl CalibrationMode {
    pub fn short_name(self) -> &'static str {
        match self {
            CalibrationMode::Symmetric => "sym",
            CalibrationMode::Asymmetric => "asym",
        }
    }
}

impl fmt::Display for CalibrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for CalibrationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sym" | "symmetric" => Ok(CalibrationMode::Symmetric),
            "asym" | "asymmetric" => Ok(CalibrationMode::Asymmetric),
            other => Err(format!("unknown calibration mode `{other}`")),
        }
    }
}

/// Matrix whose prior expected misclassification cost equals `target`.
///
/// Symmetric: constant off-diagonal `target / (1 − max P)`. Asymmetric: row
/// `i` carries `target / (1 − P(y_i))` off the diagonal, so every prediction
/// has the same prior expected cost.
pub fn calibrate(
    prior: &[f64],
    target: f64,
    mode: CalibrationMode,
) -> Result<MisclassificationMatrix, CostError> {
    if !valid_money(target) {
        return Err(CostError::InvalidTarget);
    }
    if prior.len() < 2
        || prior.iter().any(|p| !p.is_finite() || *p < 0.0)
        || (prior.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(CostError::InvalidPrior);
    }
    let n = prior.len();
    match mode {
        CalibrationMode::Symmetric => {
            let (argmax, pmax) = prior
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, p)| if p > b.1 { (i, p) } else { b });
            if target == 0.0 {
                return MisclassificationMatrix::symmetric(n, 0.0);
            }
            if 1.0 - pmax <= 0.0 {
                return Err(CostError::DegeneratePrior(argmax));
            }
            MisclassificationMatrix::symmetric(n, target / (1.0 - pmax))
        }
        CalibrationMode::Asymmetric => {
            if let Some(i) = prior.iter().position(|&p| 1.0 - p <= 0.0) {
                return Err(CostError::DegeneratePrior(i));
            }
            let rows = (0..n)
                .map(|i| {
                    let c = target / (1.0 - prior[i]);
                    (0..n).map(|j| if i == j { 0.0 } else { c }).collect()
                })
                .collect();
            MisclassificationMatrix::new(rows)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureCostSpec {
    pub name: String,
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub overhead: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrateSpec {
    pub target: f64,
    pub mode: CalibrationMode,
}

/// Where the misclassification matrix comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MisclassificationSource {
    Matrix(MisclassificationMatrix),
    Calibrate(CalibrateSpec),
}

impl MisclassificationSource {
    pub fn resolve(&self, prior: &[f64]) -> Result<MisclassificationMatrix, CostError> {
        match self {
            MisclassificationSource::Matrix(m) => {
                if m.classes() != prior.len() {
                    return Err(CostError::MatrixShape {
                        expected: prior.len(),
                    });
                }
                Ok(m.clone())
            }
            MisclassificationSource::Calibrate(c) => calibrate(prior, c.target, c.mode),
        }
    }
}

/// Serialized cost document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostFile {
    pub features: Vec<FeatureCostSpec>,
    #[serde(default)]
    pub groups: Vec<GroupSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrateSpec>,
}

impl CostFile {
    pub fn from_json(text: &str) -> Result<Self, CostError> {
        serde_json::from_str(text).map_err(|e| CostError::Parse(e.to_string()))
    }

    /// Resolve names against `net`; every feature must be priced exactly once.
    pub fn acquisition_model(&self, net: &DiscreteNetwork) -> Result<AcquisitionCostModel, CostError> {
        let mut group_index = HashMap::new();
        for (i, g) in self.groups.iter().enumerate() {
            if group_index.insert(g.name.as_str(), i).is_some() {
                return Err(CostError::DuplicateGroup(g.name.clone()));
            }
        }
        let k = net.feature_count();
        let mut base = vec![None; k];
        let mut group_of = vec![None; k];
        for spec in &self.features {
            let f = net
                .var_by_name(&spec.name)
                .and_then(|v| net.feature_of(v))
                .ok_or_else(|| CostError::UnknownFeature(spec.name.clone()))?;
            if base[f].is_some() {
                return Err(CostError::DuplicateFeature(spec.name.clone()));
            }
            base[f] = Some(spec.cost);
            if let Some(g) = &spec.group {
                let gi = *group_index
                    .get(g.as_str())
                    .ok_or_else(|| CostError::UnknownGroup {
                        feature: spec.name.clone(),
                        group: g.clone(),
                    })?;
                group_of[f] = Some(gi);
            }
        }
        let base = base
            .into_iter()
            .enumerate()
            .map(|(f, c)| c.ok_or_else(|| CostError::MissingFeature(net.feature_name(f).to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        AcquisitionCostModel::new(
            (0..k).map(|f| net.feature_name(f).to_string()).collect(),
            base,
            group_of,
            self.groups.iter().map(|g| g.name.clone()).collect(),
            self.groups.iter().map(|g| g.overhead).collect(),
        )
    }

    pub fn misclassification(&self) -> Result<Option<MisclassificationSource>, CostError> {
        match (&self.matrix, &self.calibrate) {
            (Some(_), Some(_)) => Err(CostError::ConflictingMisclassification),
            (Some(rows), None) => Ok(Some(MisclassificationSource::Matrix(
                MisclassificationMatrix::new(rows.clone())?,
            ))),
            (None, Some(c)) => {
                if !valid_money(c.target) {
                    return Err(CostError::InvalidTarget);
                }
                Ok(Some(MisclassificationSource::Calibrate(*c)))
            }
            (None, None) => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn grouped() -> AcquisitionCostModel {
        AcquisitionCostModel::new(
            vec!["A".into(), "B".into(), "C".into()],
            vec![10.0, 20.0, 7.0],
            vec![Some(0), Some(0), None],
            vec!["lab".into()],
            vec![100.0],
        )
        .unwrap()
    }

    #[test]
    fn fig1_set_and_path_costs() {
        let net = fixtures::fig1_network();
        let model = fixtures::fig1_costs().acquisition_model(&net).unwrap();
        let both: FeatureSet = [0, 1].into_iter().collect();
        assert_eq!(model.set_cost(both, &AcquisitionHistory::new()).unwrap(), 15.0);
        assert_eq!(model.set_cost(FeatureSet::EMPTY, &AcquisitionHistory::new()).unwrap(), 0.0);
        let path = AcquisitionHistory::from_steps(vec![(0, 0), (1, 0)]).unwrap();
        assert_eq!(model.path_feature_cost(&path), 15.0);
        assert_eq!(model.path_feature_cost(&AcquisitionHistory::new()), 0.0);
    }

    #[test]
    fn group_overhead_is_paid_once() {
        let m = grouped();
        let ab: FeatureSet = [0, 1].into_iter().collect();
        assert_eq!(m.set_cost(ab, &AcquisitionHistory::new()).unwrap(), 130.0);
        let paid = AcquisitionHistory::from_steps(vec![(2, 0), (0, 1)]).unwrap();
        assert_eq!(m.set_cost(FeatureSet::singleton(1), &paid).unwrap(), 20.0);
        assert_eq!(paid.paid_groups(&m), vec![0]);
        assert_eq!(
            m.set_cost(FeatureSet::singleton(0), &paid),
            Err(CostError::HistoryOverlap(0))
        );
        for order in [vec![(0, 0), (1, 0)], vec![(1, 0), (0, 0)]] {
            let h = AcquisitionHistory::from_steps(order).unwrap();
            assert_eq!(m.path_feature_cost(&h), 130.0);
        }
    }

    #[test]
    fn emc_examples() {
        let m50 = MisclassificationMatrix::symmetric(2, 50.0).unwrap();
        let (c, k) = emc(&[0.352, 0.648], &m50);
        assert!((c - 17.6).abs() < 1e-12);
        assert_eq!(k, 1);
        let zero = MisclassificationMatrix::symmetric(2, 0.0).unwrap();
        assert_eq!(emc(&[0.3, 0.7], &zero), (0.0, 0));
        let table2 = MisclassificationMatrix::symmetric(2, 2.866).unwrap();
        assert!((emc(&[0.6510, 0.3490], &table2).0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn table2_calibration() {
        let prior = [0.6510, 0.3490];
        let sym = calibrate(&prior, 1.0, CalibrationMode::Symmetric).unwrap();
        assert!((sym.get(0, 1) - 2.866).abs() < 1e-3);
        assert!((sym.get(1, 0) - 2.866).abs() < 1e-3);
        assert_eq!(sym.get(0, 0), 0.0);
        let asym = calibrate(&prior, 1.0, CalibrationMode::Asymmetric).unwrap();
        assert!((asym.get(0, 1) - 2.866).abs() < 1e-3);
        assert!((asym.get(1, 0) - 1.536).abs() < 1e-3);
        for pred in 0..2 {
            assert!((asym.expected_cost(&prior, pred) - 1.0).abs() < 1e-9);
        }
        let half = calibrate(&[0.5, 0.5], 1.0, CalibrationMode::Symmetric).unwrap();
        assert!((half.get(0, 1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_prior_fails_in_asymmetric_mode() {
        assert_eq!(
            calibrate(&[1.0, 0.0], 1.0, CalibrationMode::Asymmetric),
            Err(CostError::DegeneratePrior(0))
        );
        assert!(calibrate(&[0.5, 0.5], -1.0, CalibrationMode::Symmetric).is_err());
    }

    #[test]
    fn cost_file_binding_errors() {
        let net = fixtures::fig1_network();
        let missing = CostFile::from_json(r#"{"features":[{"name":"X1","cost":1}]}"#).unwrap();
        assert_eq!(
            missing.acquisition_model(&net),
            Err(CostError::MissingFeature("X2".into()))
        );
        let unknown = CostFile::from_json(
            r#"{"features":[{"name":"X1","cost":1},{"name":"X2","cost":1,"group":"g"}]}"#,
        )
        .unwrap();
        assert!(matches!(
            unknown.acquisition_model(&net),
            Err(CostError::UnknownGroup { .. })
        ));
        let cls = CostFile::from_json(r#"{"features":[{"name":"Y","cost":1}]}"#).unwrap();
        assert_eq!(cls.acquisition_model(&net), Err(CostError::UnknownFeature("Y".into())));
    }

    #[test]
    fn fig3_cost_file_calibrates() {
        let net = fixtures::fig3_network();
        let file = fixtures::fig3_costs();
        let model = file.acquisition_model(&net).unwrap();
        assert_eq!(model.group_count(), 1);
        let src = file.misclassification().unwrap().unwrap();
        let m = src.resolve(&[0.4, 0.6]).unwrap();
        assert!((emc(&[0.4, 0.6], &m).0 - 60.0).abs() < 1e-9);
    }
}
