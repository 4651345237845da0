mod common;

use common::{exemplar_candidates, exemplar_differentiators, n, naive_moments, LEAP_WEIGHT};
use mirrornet::circuits::{self, edge_zscores, find_hubs, HubClass, HubThresholds};
use mirrornet::env::Action;
use mirrornet::neural::Network;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn planted_mirror_hub_drives_leap() {
    let net = common::planted_mirror_net(1);
    let hubs = find_hubs(
        &net,
        &exemplar_candidates(),
        &exemplar_differentiators(),
        &HubThresholds::default(),
    )
    .unwrap();
    assert_eq!(hubs.len(), 1, "{hubs:#?}");
    let h = &hubs[0];
    assert_eq!(h.hub, n(2, 0));
    assert_eq!(h.class, HubClass::MirrorDriven);
    assert_eq!(h.action_target, Some(Action::Leap));
    assert_eq!(h.candidate_share, 1.0);
    let top = &h.outgoing[0];
    assert_eq!(
        (top.to_layer, top.to_neuron, top.weight),
        (3, Action::Leap.index(), LEAP_WEIGHT)
    );
    assert!(h.incoming.iter().all(|e| e.to() == h.hub));
    assert!(h.outgoing.iter().all(|e| e.from() == h.hub));
    for w in h.incoming.windows(2).chain(h.outgoing.windows(2)) {
        assert!(w[0].zscore.abs() >= w[1].zscore.abs());
    }
}

#[test]
fn planted_mixed_hub() {
    let net = common::planted_mixed_net(2);
    let hubs = find_hubs(
        &net,
        &exemplar_candidates(),
        &exemplar_differentiators(),
        &HubThresholds::default(),
    )
    .unwrap();
    assert_eq!(hubs.len(), 1, "{hubs:#?}");
    assert_eq!(hubs[0].hub, n(2, 1));
    assert_eq!(hubs[0].class, HubClass::Mixed);
    assert!((hubs[0].candidate_share - 0.6).abs() < 1e-12);
}

#[test]
fn differentiator_only_hub() {
    let mut net = common::planted_mirror_net(3);
    for c in common::MIRROR_EXEMPLARS {
        net.layers_mut()[1].set_weight(0, c, -0.05);
    }
    for d in common::DIFFERENTIATOR_EXEMPLARS {
        net.layers_mut()[1].set_weight(5, d, 0.04);
    }
    let hubs = find_hubs(
        &net,
        &exemplar_candidates(),
        &exemplar_differentiators(),
        &HubThresholds::default(),
    )
    .unwrap();
    assert_eq!(hubs.len(), 1);
    assert_eq!(hubs[0].hub, n(2, 5));
    assert_eq!(hubs[0].class, HubClass::DifferentiatorDriven);
}

#[test]
fn negative_weights_yield_no_hubs() {
    let net = common::planted_negative_net(4);
    let hubs = find_hubs(
        &net,
        &exemplar_candidates(),
        &exemplar_differentiators(),
        &HubThresholds::default(),
    )
    .unwrap();
    assert!(hubs.is_empty());
}

#[test]
fn hub_errors() {
    let net = common::planted_mirror_net(1);
    let t = HubThresholds::default();
    assert!(find_hubs(&net, &[], &exemplar_differentiators(), &t).is_err());
    assert!(find_hubs(&net, &[n(1, 40)], &[], &t).is_err());
    assert!(edge_zscores(&net, 0, 2).is_err());
    assert!(edge_zscores(&net, 3, 4).is_err());
    assert!(edge_zscores(&Network::zeros(&[3, 2, 4]).unwrap(), 0, 1).is_err());
}

#[test]
fn zscores_are_standardized() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let net = Network::he_uniform(&[100, 17, 11, 4], &mut rng).unwrap();
    for l in 0..3 {
        let edges = edge_zscores(&net, l, l + 1).unwrap();
        let layer = &net.layers()[l];
        assert_eq!(edges.len(), layer.weights.len());
        let z: Vec<f64> = edges.iter().map(|e| e.zscore).collect();
        let m = naive_moments(&z);
        assert!(m.mean.abs() < 1e-9);
        assert!((m.population_variance.sqrt() - 1.0).abs() < 1e-9);
        let w = naive_moments(&layer.weights);
        for e in &edges {
            assert_eq!(e.weight, layer.weight(e.to_neuron, e.from_neuron));
            let want = (e.weight - w.mean) / w.population_variance.sqrt();
            assert!((e.zscore - want).abs() < 1e-10);
        }
    }
}

#[test]
fn graph_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let net = common::planted_mirror_net(1);
    let hubs = find_hubs(
        &net,
        &exemplar_candidates(),
        &exemplar_differentiators(),
        &HubThresholds::default(),
    )
    .unwrap();
    let (json, txt) = circuits::export_graph(&hubs, &dir.path().join("graph"), 0.0).unwrap();
    let back = circuits::read_graphs(&json).unwrap();
    assert_eq!(back.graphs, hubs);
    assert!(back
        .edges
        .iter()
        .any(|e| e.from() == n(2, 0) && e.to() == n(3, 2) && e.weight == LEAP_WEIGHT));
    let text = std::fs::read_to_string(txt).unwrap();
    assert!(text.contains("L2N0 [mirror-driven]"));
    assert!(text.contains("-> L3N2 w=9.6226"));
    assert!(text.contains("=> leap"));

    let (json2, _) = circuits::export_graph(&hubs, &dir.path().join("again"), 0.0).unwrap();
    assert_eq!(std::fs::read(&json).unwrap(), std::fs::read(json2).unwrap());

    let filtered = circuits::graph_file(&hubs, 1.0);
    assert!(filtered.graphs[0]
        .incoming
        .iter()
        .all(|e| e.zscore.abs() >= 1.0));
}

#[test]
fn empty_graph_list_exports_empty_arrays() {
    let dir = tempfile::tempdir().unwrap();
    let (json, txt) = circuits::export_graph(&[], &dir.path().join("g"), 1.0).unwrap();
    let g = circuits::read_graphs(&json).unwrap();
    assert!(g.nodes.is_empty() && g.edges.is_empty() && g.graphs.is_empty());
    assert_eq!(std::fs::read_to_string(txt).unwrap(), "");
}
