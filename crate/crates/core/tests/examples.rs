//! Worked examples on the bundled networks, checked through the public API.

use voila::constraints::dependency_constraint;
use voila::cost::{AcquisitionCostModel, AcquisitionHistory, MisclassificationMatrix};
use voila::fixtures::{self, FIG1_X1, FIG1_X2};
use voila::inference::InferenceContext;
use voila::lattice::{build_voila, enumerate_irreducible_bruteforce};
use voila::network::{Assignment, DiscreteNetwork, FeatureSet, Variable};
use voila::policy::{build_policy, evaluate, optimal_policy_oracle, NodeKind, Strategy};
use voila::valuation::{augment_dominance_edges, benefit_single, best_set, evi_set, sweep_evi, SweepOptions};

fn sym(c: f64) -> MisclassificationMatrix {
    MisclassificationMatrix::symmetric(2, c).unwrap()
}

fn fs(ids: &[usize]) -> FeatureSet {
    ids.iter().copied().collect()
}

fn binary(id: usize, name: &str) -> Variable {
    Variable { id, name: name.into(), states: vec!["T".into(), "F".into()] }
}

/// `Y` and `X1` with no edge between them.
fn isolated(prior: [f64; 2]) -> DiscreteNetwork {
    DiscreteNetwork::new(
        vec![binary(0, "Y"), binary(1, "X1")],
        vec![vec![], vec![]],
        vec![vec![prior.to_vec()], vec![vec![0.3, 0.7]]],
        0,
    )
    .unwrap()
}

#[test]
fn fig1_marginal_probabilities() {
    let net = fixtures::fig1_network();
    let ctx = InferenceContext::new(&net);
    let p = |pairs: &[(usize, usize)]| ctx.joint_probability(&Assignment::from_pairs(pairs.iter().copied())).unwrap();
    assert!((p(&[]) - 1.0).abs() < 1e-12);
    assert!((p(&[(FIG1_X1, 0)]) - 0.6).abs() < 1e-12);
    assert!((p(&[(FIG1_X1, 0), (FIG1_X2, 0)]) - 0.18).abs() < 1e-12);
    let once = ctx.extend(&Assignment::from_pairs([(FIG1_X1, 0), (FIG1_X2, 0)])).unwrap();
    let twice = ctx
        .extend(&Assignment::from_pairs([(FIG1_X1, 0)]))
        .unwrap()
        .extend(&Assignment::from_pairs([(FIG1_X2, 0)]))
        .unwrap();
    assert_eq!(once.posterior(0).unwrap(), twice.posterior(0).unwrap());
    assert_eq!(ctx.extend(&Assignment::new()).unwrap().posterior(0).unwrap(), ctx.posterior(0).unwrap());
}

#[test]
fn fig1_conditional_benefit_of_second_feature() {
    let net = fixtures::fig1_network();
    let costs = fixtures::fig1_costs().acquisition_model(&net).unwrap();
    let ctx = InferenceContext::with_evidence(&net, &Assignment::from_pairs([(FIG1_X1, 0)])).unwrap();
    let h = AcquisitionHistory::from_steps(vec![(0, 0)]).unwrap();
    let b = benefit_single(&ctx, 1, &sym(200.0), &costs, &h).unwrap();
    assert!((b - 18.0).abs() < 1e-9, "{b}");
}

#[test]
fn irrelevant_feature_costs_its_price() {
    let net = isolated([0.3, 0.7]);
    let costs = AcquisitionCostModel::independent(vec!["X1".into()], vec![7.0]).unwrap();
    let ctx = InferenceContext::new(&net);
    let b = benefit_single(&ctx, 0, &sym(100.0), &costs, &AcquisitionHistory::new()).unwrap();
    assert!((b + 7.0).abs() < 1e-12);
    assert!(net.class_markov_blanket().is_empty());
    let m = sym(100.0);
    let etc = |s| evaluate(&build_policy(&net, s, &Assignment::new(), &costs, &m).unwrap(), &net, &costs, &m).unwrap().etc;
    assert_eq!(etc(Strategy::MarkovBlanket), etc(Strategy::None));
}

#[test]
fn fig3_structure() {
    let net = fixtures::fig3_network();
    assert_eq!(net.len(), 5);
    assert_eq!(net.edge_count(), 4);
    assert_eq!(net.class_markov_blanket(), fs(&[0, 2, 3]));
    assert_eq!(dependency_constraint(&net, 1).unwrap().describe(&net), "¬X1");
    assert_eq!(dependency_constraint(&net, 3).unwrap().describe(&net), "X3");
    let l = build_voila(&net, FeatureSet::EMPTY).unwrap();
    let dom = augment_dominance_edges(&l, &net);
    let (x1, x2) = (l.index_of(fs(&[0])).unwrap(), l.index_of(fs(&[1])).unwrap());
    assert!(dom.contains(&(x1, x2)));
}

#[test]
fn small_lattices() {
    let single = fixtures::chain(1);
    assert_eq!(enumerate_irreducible_bruteforce(&single, FeatureSet::EMPTY).unwrap(), vec![fs(&[]), fs(&[0])]);
    assert_eq!(build_voila(&fixtures::chain(3), FeatureSet::EMPTY).unwrap().len(), 4);
    let nb = fixtures::naive_bayes(4);
    let l = build_voila(&nb, FeatureSet::EMPTY).unwrap();
    assert_eq!(l.len(), 16);
    let singles: Vec<usize> = (0..l.len()).filter(|&i| l.node(i).len() == 1).collect();
    assert!(augment_dominance_edges(&l, &nb)
        .iter()
        .all(|(a, b)| !(singles.contains(a) && singles.contains(b))));
}

#[test]
fn zero_costs_buy_the_markov_blanket() {
    let net = fixtures::fig3_network();
    let free = AcquisitionCostModel::free(&net);
    let ctx = InferenceContext::new(&net);
    let m = sym(100.0);
    let l = build_voila(&net, FeatureSet::EMPTY).unwrap();
    let r = sweep_evi(&l, &ctx, &m, SweepOptions::default()).unwrap();
    let mb = net.class_markov_blanket();
    let mb_evi = evi_set(&ctx, mb, &m).unwrap();
    assert!((0..l.len()).all(|k| r.value(k) <= mb_evi + 1e-12));
    // Here X4 changes no decision once X1 and X3 are known, so the tie goes to the smaller set.
    let best = best_set(&l, &r, &free, &AcquisitionHistory::new()).unwrap();
    assert!(best.set.is_subset(mb));
    assert!((best.evi - mb_evi).abs() < 1e-12);

    let none = Assignment::new();
    let etc = |p| evaluate(&p, &net, &free, &m).unwrap().etc;
    let set_policy = build_policy(&net, Strategy::Set, &none, &free, &m).unwrap();
    for leaf in set_policy.root.leaves() {
        assert!(leaf.history.acquired().is_subset(mb));
    }
    let full_info = etc(build_policy(&net, Strategy::MarkovBlanket, &none, &free, &m).unwrap());
    assert!((etc(set_policy) - full_info).abs() < 1e-9);
    assert!((etc(optimal_policy_oracle(&net, &none, &free, &m, 4).unwrap()) - full_info).abs() < 1e-9);
}

#[test]
fn no_acquisition_edge_cases() {
    let net = isolated([0.5, 0.5]);
    let costs = AcquisitionCostModel::free(&net);
    let p = build_policy(&net, Strategy::None, &Assignment::new(), &costs, &sym(10.0)).unwrap();
    assert!(matches!(p.root.kind, NodeKind::Leaf { decision: 0, .. }));
    let fig1 = fixtures::fig1_network();
    let costs = fixtures::fig1_costs().acquisition_model(&fig1).unwrap();
    for s in [Strategy::None, Strategy::GreedyLa] {
        let p = build_policy(&fig1, s, &Assignment::new(), &costs, &sym(0.0)).unwrap();
        assert_eq!(evaluate(&p, &fig1, &costs, &sym(0.0)).unwrap().etc, 0.0);
    }
    let p = build_policy(&fig1, Strategy::None, &Assignment::new(), &costs, &sym(50.0)).unwrap();
    assert!(matches!(p.root.kind, NodeKind::Leaf { decision: 1, .. }));
    assert!((evaluate(&p, &fig1, &costs, &sym(50.0)).unwrap().etc - 17.6).abs() < 1e-9);
}

#[test]
fn fig1_markov_blanket_policy() {
    let net = fixtures::fig1_network();
    let costs = fixtures::fig1_costs().acquisition_model(&net).unwrap();
    let m = sym(200.0);
    let p = build_policy(&net, Strategy::MarkovBlanket, &Assignment::new(), &costs, &m).unwrap();
    let ev = evaluate(&p, &net, &costs, &m).unwrap();
    assert!((ev.etc - 63.8).abs() < 1e-9);
    let emc: f64 = ev.leaves.iter().map(|l| l.probability * l.emc).sum();
    assert!((emc - 48.8).abs() < 1e-9);
}
