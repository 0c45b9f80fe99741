//! Cluster recovery on engineered corpora and on synthetic point clouds.

mod support;

use support::demo;
use support::populations::{blobs, recovery_run, two_populations};
use tutorviz_core::cluster::{em_cluster, kmeans, partition_corpus, xmeans, ClusterParams, Feature, Method};
use tutorviz_core::replay::generate_corpus;

#[test]
fn xmeans_recovers_two_populations() {
    let runs: Vec<(usize, f64)> = (0..100).map(recovery_run).collect();
    let good = runs.iter().filter(|(k, acc)| *k == 2 && *acc >= 0.95).count();
    assert!(good >= 95, "only {good} of 100 seeds found both populations: {runs:?}");
}

#[test]
fn careless_cluster_lives_in_the_relevant_zone() {
    let cfg = demo();
    let logs = generate_corpus(&cfg, &two_populations(60, 7)).unwrap();
    let (model, automata) = partition_corpus(&logs, &cfg, Method::Xmeans, Feature::ZoneEvents, &ClusterParams::default()).unwrap();
    assert_eq!(model.k, 2);
    let relevant = |a: &tutorviz_core::Automaton| a.states.keys().filter(|id| id.zone == tutorviz_core::Zone::RelevantErrors).count();
    let (careful, careless) = if relevant(&automata[0]) < relevant(&automata[1]) { (0, 1) } else { (1, 0) };
    assert_eq!(relevant(&automata[careful]), 0);
    assert!(relevant(&automata[careless]) >= 97);
    assert!(model.centroids[careless][2] > 90.0 && model.centroids[careful][2] == 0.0);
}

#[test]
fn xmeans_counts_blobs() {
    let mut three = 0;
    let mut one = 0;
    for seed in 0..100 {
        let pts = blobs(&[[0.0, 0.0], [10.0, 0.0], [30.0, 5.0]], 30, 1.0, seed);
        three += usize::from(xmeans(&pts, 1, 8, seed).unwrap().centroids.len() == 3);
        let pts = blobs(&[[3.0, 3.0]], 60, 1.0, seed);
        one += usize::from(xmeans(&pts, 1, 8, seed).unwrap().centroids.len() == 1);
    }
    assert!(three >= 95, "three blobs found on {three} of 100 seeds");
    assert_eq!(one, 100);
}

#[test]
fn xmeans_respects_forced_bounds() {
    let pts = blobs(&[[0.0, 0.0], [10.0, 0.0], [30.0, 5.0]], 20, 1.0, 1);
    assert_eq!(xmeans(&pts, 2, 2, 0).unwrap().centroids.len(), 2);
    assert_eq!(xmeans(&pts, 1, 8, 5).unwrap(), xmeans(&pts, 1, 8, 5).unwrap());
}

#[test]
fn kmeans_is_scale_invariant() {
    let pts = blobs(&[[0.0, 0.0], [6.0, 6.0]], 25, 1.0, 3);
    let scaled: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|x| x * 1000.0).collect()).collect();
    let a = kmeans(&pts, 2, 11).unwrap();
    let b = kmeans(&scaled, 2, 11).unwrap();
    assert_eq!(a.assignments, b.assignments);
    assert!((b.inertia / a.inertia - 1e6).abs() < 1e-3);
}

#[test]
fn em_log_likelihood_never_decreases() {
    let cfg = demo();
    for seed in 0..20u64 {
        let logs = generate_corpus(&cfg, &two_populations(20, seed)).unwrap();
        let points: Vec<Vec<f64>> =
            logs.iter().map(|l| tutorviz_core::cluster::feature_vector(l, &cfg, Feature::ZoneEvents).unwrap()).collect();
        for k in 1..=4 {
            let r = em_cluster(&points, k, seed).unwrap();
            for w in r.log_likelihood.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "seed {seed} k {k}: {} then {}", w[0], w[1]);
            }
        }
        let blob = blobs(&[[0.0, 0.0], [4.0, 1.0], [1.0, 5.0]], 20, 1.0, seed);
        let r = em_cluster(&blob, 3, seed).unwrap();
        assert!(r.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()));
    }
}
