use rand::Rng;

use crate::alignment::AlignedSequence;
use crate::error::{Error, Result};
use crate::seed::substream;

pub const MAX_LLOYD_ITERATIONS: usize = 300;
/// Independent k-means++ seedings; the run with the lowest final
/// within-cluster sum of squares wins.
pub const RESTARTS: u64 = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lowest index.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.gen_range(0..points.len())];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.gen_range(0.0..total);
            let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap();
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            // every point coincides with a centroid; take an unused index
            let free: Vec<usize> = (0..points.len()).filter(|i| !chosen.contains(i)).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen.push(next);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// Lloyd's algorithm with k-means++ seeding, best of [`RESTARTS`] seedings.
/// Each run stops when assignments no longer change or after
/// [`MAX_LLOYD_ITERATIONS`]. Empty clusters keep their previous centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidArgument("points differ in dimension".into()));
    }
    let mut best: Option<KMeansResult> = None;
    for restart in 0..RESTARTS {
        let run = lloyd(points, k, &mut substream(seed, "kmeans", &[restart]));
        // strict comparison keeps the earliest restart on ties
        if best.as_ref().is_none_or(|b| run.wcss() < b.wcss()) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

impl KMeansResult {
    fn wcss(&self) -> f64 {
        self.objective.last().copied().unwrap_or(f64::INFINITY)
    }
}

fn lloyd(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> KMeansResult {
    let dim = points[0].len();
    let mut centroids = plus_plus_init(points, k, rng);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut objective = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let mut changed = false;
        let mut wcss = 0.0;
        for (p, a) in points.iter().zip(assignments.iter_mut()) {
            let (c, d) = nearest(p, &centroids);
            wcss += d;
            if c != *a {
                *a = c;
                changed = true;
            }
        }
        objective.push(wcss);
        if !changed {
            break;
        }
    }
    KMeansResult {
        assignments,
        centroids,
        objective,
        iterations,
    }
}

/// Mean one-hot token vector over the valid words of a video.
pub fn text_features(seq: &AlignedSequence, vocab_size: usize) -> Vec<f64> {
    let mut f = vec![0.0; vocab_size];
    let valid = seq.valid_records();
    for r in valid {
        if r.token_id < vocab_size {
            f[r.token_id] += 1.0;
        }
    }
    let n = valid.len().max(1) as f64;
    f.iter_mut().for_each(|x| *x /= n);
    f
}

/// Clusters videos into `k` domains by their text features.
pub fn kmeans_domains(
    corpus: &[&AlignedSequence],
    vocab_size: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let points: Vec<Vec<f64>> = corpus.iter().map(|s| text_features(s, vocab_size)).collect();
    if points.is_empty() {
        return Err(Error::InvalidArgument("cannot cluster an empty corpus".into()));
    }
    Ok(kmeans(&points, k, seed)?.assignments)
}

fn choose2(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("labelings differ in length".into()));
    }
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..kb)
        .map(|j| choose2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let total = choose2(n);
    let expected = if total > 0.0 { rows * cols / total } else { 0.0 };
    let max = 0.5 * (rows + cols);
    if max == expected {
        // both labelings are trivial (all one cluster or all singletons)
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_validation() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(kmeans(&pts, 0, 1).is_err());
        assert!(kmeans(&pts, 3, 1).is_err());
    }

    #[test]
    fn k_equal_to_size_gives_singletons() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 1.5, (i * i) as f64]).collect();
        let r = kmeans(&pts, 6, 4).unwrap();
        let mut a = r.assignments.clone();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn duplicates_share_a_cluster() {
        let pts = vec![
            vec![1.0, 1.0],
            vec![5.0, 5.0],
            vec![1.0, 1.0],
            vec![5.0, 5.1],
            vec![1.0, 1.0],
        ];
        for seed in 0..20 {
            let r = kmeans(&pts, 3, seed).unwrap();
            assert_eq!(r.assignments[0], r.assignments[2]);
            assert_eq!(r.assignments[0], r.assignments[4]);
        }
    }

    #[test]
    fn ari_known_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        // classic example: ARI of these labelings is 0.24242424...
        let a = [0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 1, 2, 2];
        let ari = adjusted_rand_index(&a, &b).unwrap();
        assert!((ari - 0.242_424_242_424_242_4).abs() < 1e-12, "{ari}");
    }
}
