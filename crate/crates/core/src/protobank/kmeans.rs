//! Lloyd's k-means with k-means++ seeding, squared Euclidean distance.

use std::collections::HashSet;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::{axpy, normalize, sq_dist};
use crate::rng::{rng_for, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub sse: f64,
    /// SSE after seeding, then after each Lloyd iteration.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

fn bits(p: &[f64]) -> Vec<u64> {
    // +0.0 folds -0.0 onto 0.0
    p.iter().map(|x| (x + 0.0).to_bits()).collect()
}

/// Distinct points in order of first appearance.
fn distinct(points: &[Vec<f64>]) -> Vec<&Vec<f64>> {
    let mut seen = HashSet::new();
    points.iter().filter(|p| seen.insert(bits(p))).collect()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign_all(points: &[Vec<f64>], centers: &[Vec<f64>]) -> Vec<usize> {
    points.iter().map(|p| nearest(p, centers).0).collect()
}

fn sse(points: &[Vec<f64>], centers: &[Vec<f64>], assignment: &[usize]) -> f64 {
    points.iter().zip(assignment).map(|(p, &a)| sq_dist(p, &centers[a])).sum()
}

/// Gives each empty cluster the point currently farthest from its own
/// center, taken from a cluster that has more than one member.
fn repair_empty(points: &[Vec<f64>], centers: &mut [Vec<f64>], assignment: &mut [usize]) {
    let k = centers.len();
    let mut sizes = vec![0usize; k];
    for &a in assignment.iter() {
        sizes[a] += 1;
    }
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let mut far: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let a = assignment[i];
            if sizes[a] < 2 {
                continue;
            }
            let d = sq_dist(p, &centers[a]);
            if far.is_none_or(|(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        let Some((i, _)) = far else { return };
        sizes[assignment[i]] -= 1;
        assignment[i] = empty;
        sizes[empty] = 1;
        centers[empty] = points[i].clone();
    }
}

fn plus_plus(points: &[Vec<f64>], k: usize, seed: u64, restart: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, tag::KMEANS, restart);
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let r = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if acc > r {
                break;
            }
        }
        let c = points[pick.expect("k <= distinct points guarantees positive mass")].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// Independent k-means++ seedings per call; the lowest-SSE run is kept.
pub const KMEANS_RESTARTS: u64 = 10;

/// Lloyd iterations from `KMEANS_RESTARTS` k-means++ seedings, keeping the
/// run with the lowest final SSE (earliest run on ties). Stops a run when
/// assignments no longer change or after `max_iters` iterations.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::Parameter("k-means on an empty point set".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Validation("points have differing lengths".into()));
    }
    if k == 0 {
        return Err(Error::Parameter("k must be positive".into()));
    }
    let n_distinct = distinct(points).len();
    if k > n_distinct {
        return Err(Error::Parameter(format!("k={k} exceeds {n_distinct} distinct points")));
    }
    let mut best: Option<KMeansResult> = None;
    for restart in 0..KMEANS_RESTARTS {
        let run = lloyd(points, plus_plus(points, k, seed, restart), max_iters);
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iters: usize) -> KMeansResult {
    let k = centers.len();
    let dim = points[0].len();
    let mut assignment = assign_all(points, &centers);
    repair_empty(points, &mut centers, &mut assignment);
    let mut history = vec![sse(points, &centers, &assignment)];
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            axpy(1.0, p, &mut sums[a]);
            counts[a] += 1;
        }
        for ((c, s), n) in centers.iter_mut().zip(sums).zip(counts) {
            *c = s.into_iter().map(|x| x / n as f64).collect();
        }
        let mut next = assign_all(points, &centers);
        repair_empty(points, &mut centers, &mut next);
        let stable = next == assignment;
        assignment = next;
        history.push(sse(points, &centers, &assignment));
        if stable {
            break;
        }
    }

    KMeansResult { sse: sse(points, &centers, &assignment), centers, assignment, sse_history: history, iterations }
}

const INIT_MAX_ITERS: usize = 100;

/// Example-prototype initialization for one class: k-means centers with
/// `k = n_e`, unit-normalized. With fewer distinct embeddings than `n_e`,
/// the distinct embeddings are repeated in order instead.
pub fn init_example_prototypes(class_embeddings: &[Vec<f64>], n_e: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if class_embeddings.is_empty() {
        return Err(Error::Parameter("no embeddings for example initialization".into()));
    }
    if n_e == 0 {
        return Ok(Vec::new());
    }
    let uniq = distinct(class_embeddings);
    let mut protos: Vec<Vec<f64>> = if uniq.len() < n_e {
        uniq.iter().cycle().take(n_e).map(|p| (*p).clone()).collect()
    } else {
        let km = kmeans(class_embeddings, n_e, seed, INIT_MAX_ITERS)?;
        let KMeansResult { mut centers, assignment, .. } = km;
        for (ci, c) in centers.iter_mut().enumerate() {
            if c.iter().all(|&x| x == 0.0) {
                // a center at the origin has no direction; use a member instead
                let member = assignment.iter().position(|&a| a == ci).unwrap_or(0);
                *c = class_embeddings[member].clone();
            }
        }
        centers
    };
    for p in &mut protos {
        if !normalize(p) {
            return Err(Error::Math("example prototype with zero norm".into()));
        }
    }
    Ok(protos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mean;
    use rand::SeedableRng;

    fn random_points(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn k1_center_is_mean() {
        let pts = random_points(1, 40, 3);
        let r = kmeans(&pts, 1, 0, 10).unwrap();
        let m = mean(&pts);
        for (a, b) in r.centers[0].iter().zip(&m) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn separated_pairs() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 0.0], vec![10.0, 1.0]];
        for seed in 0..20 {
            let r = kmeans(&pts, 2, seed, 50).unwrap();
            let mut cs = r.centers.clone();
            cs.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
            assert_eq!(cs, vec![vec![0.0, 0.5], vec![10.0, 0.5]]);
            assert_eq!(r.sse, 1.0);
        }
    }

    #[test]
    fn too_many_clusters_rejected() {
        let pts = vec![vec![1.0], vec![1.0], vec![2.0]];
        assert!(matches!(kmeans(&pts, 3, 0, 10), Err(Error::Parameter(_))));
        assert!(kmeans(&pts, 2, 0, 10).is_ok());
        assert!(matches!(kmeans(&[], 1, 0, 10), Err(Error::Parameter(_))));
    }

    #[test]
    fn sse_field_matches_recomputation_and_history_descends() {
        for seed in 0..100 {
            let pts = random_points(seed, 60, 4);
            let r = kmeans(&pts, 1 + (seed as usize % 6), seed, 100).unwrap();
            let re: f64 = pts.iter().zip(&r.assignment).map(|(p, &a)| sq_dist(p, &r.centers[a])).sum();
            assert_eq!(r.sse, re);
            for w in r.sse_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs(), "{:?}", r.sse_history);
            }
        }
    }

    /// Best SSE over many independently seeded Lloyd runs.
    fn multi_restart_oracle(pts: &[Vec<f64>], k: usize, restarts: u64) -> f64 {
        (0..restarts)
            .map(|s| {
                // plain Lloyd from k random distinct points, independent of k-means++
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000 + s);
                let mut idx: Vec<usize> = (0..pts.len()).collect();
                rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
                let mut centers: Vec<Vec<f64>> = idx[..k].iter().map(|&i| pts[i].clone()).collect();
                for _ in 0..200 {
                    let assign: Vec<usize> = pts
                        .iter()
                        .map(|p| {
                            (0..k).min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b]))).unwrap()
                        })
                        .collect();
                    for (c, center) in centers.iter_mut().enumerate() {
                        let members: Vec<Vec<f64>> =
                            pts.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| p.clone()).collect();
                        if !members.is_empty() {
                            *center = mean(&members);
                        }
                    }
                }
                pts.iter()
                    .map(|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn near_best_of_restarts() {
        let pts = random_points(42, 50, 2);
        let oracle = multi_restart_oracle(&pts, 3, 100);
        let r = kmeans(&pts, 3, 7, 100).unwrap();
        assert!(r.sse <= oracle * 1.05, "sse {} vs oracle {}", r.sse, oracle);
    }

    #[test]
    fn init_single_prototype_is_normalized_mean() {
        let pts = random_points(3, 20, 5);
        let protos = init_example_prototypes(&pts, 1, 0).unwrap();
        let mut m = mean(&pts);
        normalize(&mut m);
        for (a, b) in protos[0].iter().zip(&m) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn init_pads_when_too_few_distinct() {
        let a = vec![1.0, 0.0];
        let b = vec![0.0, 2.0];
        let pts = vec![a.clone(), b.clone(), a.clone()];
        let protos = init_example_prototypes(&pts, 5, 0).unwrap();
        let bn = vec![0.0, 1.0];
        assert_eq!(protos, vec![a.clone(), bn.clone(), a.clone(), bn, a]);
    }

    #[test]
    fn init_zero_prototypes() {
        assert!(init_example_prototypes(&random_points(0, 3, 2), 0, 0).unwrap().is_empty());
        assert!(init_example_prototypes(&[], 2, 0).is_err());
    }
}
