//! Small reference networks used by the examples, the CLI smoke tests and the
//! test suites.

use crate::cost::CostFile;
use crate::network::{DiscreteNetwork, VarId, Variable};

pub const FIG1_NETWORK_JSON: &str = include_str!("../data/fig1.json");
pub const FIG1_COSTS_JSON: &str = include_str!("../data/fig1_costs.json");
pub const FIG3_NETWORK_JSON: &str = include_str!("../data/fig3.json");
pub const FIG3_COSTS_JSON: &str = include_str!("../data/fig3_costs.json");

pub const FIG1_Y: VarId = 0;
pub const FIG1_X1: VarId = 1;
pub const FIG1_X2: VarId = 2;

/// Two binary features whose joint with the class matches the eight-row
/// example table (X1 → X2, both parents of Y).
pub fn fig1_network() -> DiscreteNetwork {
    DiscreteNetwork::from_json(FIG1_NETWORK_JSON).expect("bundled network is valid")
}

/// Costs 5 and 10, symmetric misclassification cost 50.
pub fn fig1_costs() -> CostFile {
    CostFile::from_json(FIG1_COSTS_JSON).expect("bundled costs are valid")
}

/// `Y → X1 → X2`, `Y → X3 ← X4`.
pub fn fig3_network() -> DiscreteNetwork {
    DiscreteNetwork::from_json(FIG3_NETWORK_JSON).expect("bundled network is valid")
}

pub fn fig3_costs() -> CostFile {
    CostFile::from_json(FIG3_COSTS_JSON).expect("bundled costs are valid")
}

fn binary(id: VarId, name: &str) -> Variable {
    Variable {
        id,
        name: name.to_string(),
        states: vec!["T".into(), "F".into()],
    }
}

/// Class `Y` (id 0) with `n` binary children `X1..Xn` and no other edges.
pub fn naive_bayes(n: usize) -> DiscreteNetwork {
    let mut vars = vec![binary(0, "Y")];
    let mut parents = vec![vec![]];
    let mut cpt = vec![vec![vec![0.45, 0.55]]];
    for i in 1..=n {
        vars.push(binary(i, &format!("X{i}")));
        parents.push(vec![0]);
        let a = 0.55 + 0.3 * (i as f64 / (n as f64 + 1.0));
        cpt.push(vec![vec![a, 1.0 - a], vec![1.0 - a, a]]);
    }
    DiscreteNetwork::new(vars, parents, cpt, 0).expect("naive Bayes is valid")
}

/// Chain `Y → X1 → … → Xn`.
pub fn chain(n: usize) -> DiscreteNetwork {
    let mut vars = vec![binary(0, "Y")];
    let mut parents = vec![vec![]];
    let mut cpt = vec![vec![vec![0.3, 0.7]]];
    for i in 1..=n {
        vars.push(binary(i, &format!("X{i}")));
        parents.push(vec![i - 1]);
        cpt.push(vec![vec![0.85, 0.15], vec![0.25, 0.75]]);
    }
    DiscreteNetwork::new(vars, parents, cpt, 0).expect("chain is valid")
}
