//! Per-student feature functions and the clusterers that partition students
//! before one automaton is built per cluster.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::automaton::{build_automaton, log_path, Automaton};
use crate::domain::{AssignmentConfig, EventKind, StudentLog, Zone};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feature {
    #[serde(rename = "errors")]
    ErrorCoeff,
    #[serde(rename = "errors-time")]
    ErrorTime,
    #[serde(rename = "zone-events")]
    ZoneEvents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    None,
    Xmeans,
    Em,
}

impl Feature {
    pub fn as_str(self) -> &'static str {
        match self {
            Feature::ErrorCoeff => "errors",
            Feature::ErrorTime => "errors-time",
            Feature::ZoneEvents => "zone-events",
        }
    }
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Xmeans => "xmeans",
            Method::Em => "em",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Feature {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Feature::ErrorCoeff, Feature::ErrorTime, Feature::ZoneEvents]
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::UnknownName { what: "feature", value: s.to_string() })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Method::None, Method::Xmeans, Method::Em]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownName { what: "method", value: s.to_string() })
    }
}

/// Weighted sum of a log's errors; each FAIL counts the weight of the blamed
/// action, or of the validated action when nothing is blamed.
pub fn feature_error_coeff(log: &StudentLog, config: &AssignmentConfig) -> f64 {
    let index = config.index();
    log.events
        .iter()
        .filter(|e| e.kind == EventKind::Fail)
        .map(|e| index.weight(e.blamed_action.as_deref().unwrap_or(&e.action_code)))
        .sum()
}

pub fn feature_error_time(log: &StudentLog, config: &AssignmentConfig) -> Result<(f64, f64)> {
    let seconds = log.duration_seconds();
    if seconds <= 0.0 {
        return Err(Error::NonPositiveDuration { student: log.student_id.clone(), seconds });
    }
    Ok((feature_error_coeff(log, config), seconds))
}

/// Events landing in the correct-flow, irrelevant and relevant zones.
pub fn feature_zone_events(log: &StudentLog, config: &AssignmentConfig) -> Result<[usize; 3]> {
    let mut counts = [0; 3];
    for step in log_path(log, config)? {
        counts[match step.state.zone {
            Zone::CorrectFlow => 0,
            Zone::IrrelevantErrors => 1,
            Zone::RelevantErrors => 2,
        }] += 1;
    }
    Ok(counts)
}

pub fn feature_vector(log: &StudentLog, config: &AssignmentConfig, feature: Feature) -> Result<Vec<f64>> {
    Ok(match feature {
        Feature::ErrorCoeff => vec![feature_error_coeff(log, config)],
        Feature::ErrorTime => {
            let (ec, t) = feature_error_time(log, config)?;
            vec![ec, t]
        }
        Feature::ZoneEvents => feature_zone_events(log, config)?.iter().map(|&c| c as f64).collect(),
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn check_points(points: &[Vec<f64>], k: usize) -> Result<usize> {
    let Some(first) = points.first() else {
        return Err(Error::InvalidParams("no points to cluster".into()));
    };
    let dim = first.len();
    if dim == 0 || points.iter().any(|p| p.len() != dim || p.iter().any(|x| !x.is_finite())) {
        return Err(Error::InvalidParams("points must be finite and share one non-zero dimension".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    if k > points.len() {
        return Err(Error::TooManyClusters { k, n: points.len() });
    }
    Ok(dim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    pub iterations: usize,
}

const KMEANS_MAX_ITER: usize = 100;
const KMEANS_TOL: f64 = 1e-6;

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.random_range(0..points.len())];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            // every remaining point coincides with a centre: take unused indices
            (0..points.len()).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// Lloyd iterations from the given centroids.
pub fn kmeans_from(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> Result<KMeansResult> {
    let dim = check_points(points, centroids.len())?;
    let k = centroids.len();
    let mut assignments = vec![0; points.len()];
    let mut iterations = 0;
    loop {
        iterations += 1;
        for (i, p) in points.iter().enumerate() {
            assignments[i] = nearest(p, &centroids).0;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &n), old)| if n == 0 { old.clone() } else { s.into_iter().map(|x| x / n as f64).collect() })
            .collect();
        // an empty cluster takes over the point farthest from its centre
        let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
        for j in empty {
            let far = points
                .iter()
                .enumerate()
                .filter(|(i, _)| counts[assignments[*i]] > 1)
                .max_by(|(i, p), (l, q)| sq_dist(p, &next[assignments[*i]]).total_cmp(&sq_dist(q, &next[assignments[*l]])).then(l.cmp(i)))
                .map(|(i, _)| i);
            if let Some(i) = far {
                counts[assignments[i]] -= 1;
                counts[j] = 1;
                assignments[i] = j;
                next[j] = points[i].clone();
            }
        }
        let shift = centroids.iter().zip(&next).map(|(a, b)| sq_dist(a, b).sqrt()).fold(0.0, f64::max);
        centroids = next;
        if shift < KMEANS_TOL || iterations >= KMEANS_MAX_ITER {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        assignments[i] = nearest(p, &centroids).0;
    }
    let inertia = points.iter().zip(&assignments).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
    Ok(KMeansResult { centroids, assignments, inertia, iterations })
}

/// k-means with k-means++ seeding; deterministic for a seed.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    check_points(points, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = plus_plus_seeds(points, k, &mut rng);
    kmeans_from(points, seeds)
}

/// Dimensions along which the points are not all equal.
fn varying_dims(points: &[Vec<f64>]) -> usize {
    let Some(first) = points.first() else { return 0 };
    (0..first.len()).filter(|&d| points.iter().any(|p| p[d] != first[d])).count()
}

/// Spherical-Gaussian BIC of a hard partition (Pelleg and Moore), with the
/// per-dimension variance pooled over all clusters. Dimensions that are
/// constant over `points` carry no likelihood and are not counted; discrete
/// features such as zone counts are often constant within a population.
pub fn bic(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    let r = points.len() as f64;
    let k = centroids.len() as f64;
    let m = varying_dims(points).max(1) as f64;
    let sse: f64 = points.iter().zip(assignments).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
    let dof = (m * (r - k)).max(1.0);
    let variance = (sse / dof).max(1e-12);
    let mut sizes = vec![0usize; centroids.len()];
    for &a in assignments {
        sizes[a] += 1;
    }
    let entropy: f64 = sizes.iter().filter(|&&n| n > 0).map(|&n| n as f64 * (n as f64 / r).ln()).sum();
    let ll = entropy - r * m / 2.0 * (2.0 * std::f64::consts::PI * variance).ln() - sse / (2.0 * variance);
    let params = (k - 1.0) + m * k + 1.0;
    ll - params / 2.0 * r.ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub bic: f64,
}

const XMEANS_RESTARTS: usize = 5;

/// Lowest-inertia k-means over a few seeded restarts, so that a split is not
/// judged on a poor local minimum.
fn best_kmeans(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Result<KMeansResult> {
    let mut best = kmeans(points, k, rng.random())?;
    for _ in 1..XMEANS_RESTARTS {
        let next = kmeans(points, k, rng.random())?;
        if next.inertia < best.inertia {
            best = next;
        }
    }
    Ok(best)
}

/// X-means: starting from `k_min`, try splitting every centre in two and keep
/// the splits that raise the local BIC, until none helps or `k_max` is hit.
pub fn xmeans(points: &[Vec<f64>], k_min: usize, k_max: usize, seed: u64) -> Result<XMeansResult> {
    if k_min == 0 || k_min > k_max {
        return Err(Error::InvalidParams(format!("need 1 <= k_min <= k_max, got {k_min}..{k_max}")));
    }
    check_points(points, k_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = best_kmeans(points, k_min, &mut rng)?;
    while current.centroids.len() < k_max {
        let mut proposals: Vec<(f64, usize, Vec<Vec<f64>>)> = Vec::new();
        for (j, centre) in current.centroids.iter().enumerate() {
            let members: Vec<Vec<f64>> = points.iter().zip(&current.assignments).filter(|(_, &a)| a == j).map(|(p, _)| p.clone()).collect();
            if members.len() < 4 {
                continue;
            }
            let parent = bic(&members, std::slice::from_ref(centre), &vec![0; members.len()]);
            let child = best_kmeans(&members, 2, &mut rng)?;
            let split = bic(&members, &child.centroids, &child.assignments);
            if split > parent {
                proposals.push((split - parent, j, child.centroids));
            }
        }
        if proposals.is_empty() {
            break;
        }
        proposals.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        proposals.truncate(k_max - current.centroids.len());
        let mut centroids = Vec::new();
        for (j, c) in current.centroids.iter().enumerate() {
            match proposals.iter().find(|p| p.1 == j) {
                Some((_, _, children)) => centroids.extend(children.iter().cloned()),
                None => centroids.push(c.clone()),
            }
        }
        current = kmeans_from(points, centroids)?;
    }
    let bic = bic(points, &current.centroids, &current.assignments);
    Ok(XMeansResult { centroids: current.centroids, assignments: current.assignments, bic })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmResult {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// responsibilities[i][j]: posterior of component j for point i.
    pub responsibilities: Vec<Vec<f64>>,
    /// Log-likelihood after each E-step.
    pub log_likelihood: Vec<f64>,
    /// True when some variance hit the floor.
    pub regularized: bool,
}

impl EmResult {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood.last().expect("at least one E-step")
    }
}

pub const VARIANCE_FLOOR: f64 = 1e-6;
const EM_MAX_ITER: usize = 200;
const EM_TOL: f64 = 1e-8;

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn log_gauss_diag(p: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    p.iter().zip(mean).zip(var).map(|((x, m), v)| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - m) * (x - m) / v)).sum()
}

/// Diagonal Gaussian mixture fitted by EM, initialised from k-means.
pub fn em_cluster(points: &[Vec<f64>], k: usize, seed: u64) -> Result<EmResult> {
    let dim = check_points(points, k)?;
    let n = points.len();
    let init = kmeans(points, k, seed)?;
    let mut regularized = false;
    let mut means = init.centroids.clone();
    let mut weights = vec![0.0f64; k];
    let mut variances = vec![vec![0.0; dim]; k];
    for (p, &a) in points.iter().zip(&init.assignments) {
        weights[a] += 1.0;
        for d in 0..dim {
            variances[a][d] += (p[d] - means[a][d]).powi(2);
        }
    }
    for j in 0..k {
        for v in variances[j].iter_mut() {
            *v /= weights[j].max(1.0);
            if *v < VARIANCE_FLOOR {
                *v = VARIANCE_FLOOR;
                regularized = true;
            }
        }
        weights[j] /= n as f64;
    }

    let mut history = Vec::new();
    let mut resp = vec![vec![0.0; k]; n];
    loop {
        let mut ll = 0.0;
        let mut logs = vec![0.0; k];
        for (i, p) in points.iter().enumerate() {
            for j in 0..k {
                logs[j] = if weights[j] > 0.0 { weights[j].ln() + log_gauss_diag(p, &means[j], &variances[j]) } else { f64::NEG_INFINITY };
            }
            let total = log_sum_exp(&logs);
            ll += total;
            for j in 0..k {
                resp[i][j] = (logs[j] - total).exp();
            }
        }
        let done = history.last().is_some_and(|&prev: &f64| ll - prev < EM_TOL) || history.len() + 1 >= EM_MAX_ITER;
        history.push(ll);
        if done {
            break;
        }
        for j in 0..k {
            let nj: f64 = resp.iter().map(|r| r[j]).sum();
            if nj <= f64::MIN_POSITIVE {
                weights[j] = 0.0;
                continue;
            }
            weights[j] = nj / n as f64;
            for d in 0..dim {
                means[j][d] = resp.iter().zip(points).map(|(r, p)| r[j] * p[d]).sum::<f64>() / nj;
            }
            for d in 0..dim {
                let v = resp.iter().zip(points).map(|(r, p)| r[j] * (p[d] - means[j][d]).powi(2)).sum::<f64>() / nj;
                variances[j][d] = if v < VARIANCE_FLOOR {
                    regularized = true;
                    VARIANCE_FLOOR
                } else {
                    v
                };
            }
        }
    }
    let assignments =
        resp.iter().map(|r| r.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0))).map_or(0, |(j, _)| j)).collect();
    Ok(EmResult { weights, means, variances, assignments, responsibilities: resp, log_likelihood: history, regularized })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub k_min: usize,
    pub k_max: usize,
    /// Component count for EM.
    pub k: usize,
    pub seed: u64,
    /// Standardise each feature dimension before clustering.
    #[serde(default)]
    pub normalize: bool,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams { k_min: 1, k_max: 8, k: 2, seed: 42, normalize: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub method: Method,
    pub feature: Feature,
    pub params: ClusterParams,
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
    /// Mean feature vector of each cluster, in feature units.
    pub centroids: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    /// BIC for X-means, final log-likelihood for EM.
    pub quality: Option<f64>,
    #[serde(default)]
    pub regularized: bool,
}

fn standardize(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len() as f64;
    let dim = points[0].len();
    let mut out = points.to_vec();
    for d in 0..dim {
        let mean = points.iter().map(|p| p[d]).sum::<f64>() / n;
        let sd = (points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for p in out.iter_mut() {
            p[d] = if sd > 0.0 { (p[d] - mean) / sd } else { 0.0 };
        }
    }
    out
}

/// Renumbers clusters by first member and drops empty ones.
fn canonical(raw: &[usize]) -> (Vec<usize>, usize) {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    let out = raw
        .iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Clusters the logs and builds one automaton per cluster. Logs are taken in
/// student-id order so the result does not depend on input order.
pub fn partition_corpus(
    logs: &[StudentLog],
    config: &AssignmentConfig,
    method: Method,
    feature: Feature,
    params: &ClusterParams,
) -> Result<(ClusterModel, Vec<Automaton>)> {
    if logs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut sorted: Vec<&StudentLog> = logs.iter().collect();
    sorted.sort_by(|a, b| a.student_id.cmp(&b.student_id));
    let features = sorted.iter().map(|l| feature_vector(l, config, feature)).collect::<Result<Vec<_>>>()?;
    let input = if params.normalize { standardize(&features) } else { features.clone() };

    let (raw, quality, regularized) = match method {
        Method::None => (vec![0; sorted.len()], None, false),
        Method::Xmeans => {
            let r = xmeans(&input, params.k_min, params.k_max.min(input.len()).max(params.k_min), params.seed)?;
            (r.assignments, Some(r.bic), false)
        }
        Method::Em => {
            let r = em_cluster(&input, params.k, params.seed)?;
            let ll = r.final_log_likelihood();
            (r.assignments, Some(ll), r.regularized)
        }
    };
    let (labels, k) = canonical(&raw);

    let mut members: Vec<Vec<StudentLog>> = vec![Vec::new(); k];
    let dim = features[0].len();
    let mut centroids = vec![vec![0.0; dim]; k];
    for ((log, f), &c) in sorted.iter().zip(&features).zip(&labels) {
        members[c].push((*log).clone());
        for (s, x) in centroids[c].iter_mut().zip(f) {
            *s += x;
        }
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    for (c, n) in centroids.iter_mut().zip(&sizes) {
        c.iter_mut().for_each(|x| *x /= *n as f64);
    }
    let mut automata = Vec::with_capacity(k);
    for (c, logs) in members.iter().enumerate() {
        let mut a = build_automaton(logs, config)?;
        a.cluster_id = Some(c);
        automata.push(a);
    }
    let assignments = sorted.iter().zip(&labels).map(|(l, &c)| (l.student_id.clone(), c)).collect();
    let model = ClusterModel { method, feature, params: params.clone(), k, assignments, centroids, sizes, quality, regularized };
    Ok((model, automata))
}
