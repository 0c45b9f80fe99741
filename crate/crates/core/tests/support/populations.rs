//! Engineered corpora with two known populations, and Gaussian blobs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tutorviz_core::cluster::{partition_corpus, ClusterParams, Feature, Method};
use tutorviz_core::replay::{generate_corpus, Profile};

use super::demo;

/// Both populations repeat actions and wander into other phases at the same
/// rate; careless students also skip the first real step, which taints the
/// rest of their session and moves it into the relevant-errors zone.
pub fn two_populations(n: usize, seed: u64) -> Vec<Profile> {
    let mut careful = Profile::new(n, 0.0, 0.05, seed * 2 + 1);
    careful.wander_probability = 0.03;
    let mut careless = careful.clone();
    careless.seed = seed * 2 + 2;
    careless.skip_overrides.insert("f1t1".into(), 1.0);
    vec![careful, careless]
}

/// Fraction of students whose cluster matches their population, under the
/// better of the two labelings.
pub fn accuracy(assign: &[(bool, usize)]) -> f64 {
    let direct = assign.iter().filter(|(careless, c)| (*c == 1) == *careless).count();
    let best = direct.max(assign.len() - direct);
    best as f64 / assign.len() as f64
}

/// Cluster count and accuracy of X-means on one generated corpus.
pub fn recovery_run(seed: u64) -> (usize, f64) {
    let cfg = demo();
    let n = 60;
    let logs = generate_corpus(&cfg, &two_populations(n, seed)).unwrap();
    let params = ClusterParams { seed, ..ClusterParams::default() };
    let (model, automata) = partition_corpus(&logs, &cfg, Method::Xmeans, Feature::ZoneEvents, &params).unwrap();
    assert_eq!(automata.iter().map(|a| a.n_students).sum::<usize>(), 2 * n);
    let assign: Vec<(bool, usize)> = model.assignments.iter().map(|(sid, &c)| (sid[1..].parse::<usize>().unwrap() > n, c)).collect();
    (model.k, accuracy(&assign))
}

pub fn blobs(centres: &[[f64; 2]], per: usize, sd: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sd).unwrap();
    centres
        .iter()
        .flat_map(|c| (0..per).map(|_| vec![c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)]).collect::<Vec<_>>())
        .collect()
}
