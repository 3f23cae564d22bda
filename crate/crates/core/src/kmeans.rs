//! k-means++ seeding followed by Lloyd iterations, used to place inducing points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{GpError, Result};
use crate::kernel::Point;

/// Lloyd iterations stop after this many rounds if assignments keep changing.
pub const MAX_LLOYD_ITERATIONS: usize = 100;

#[inline]
fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Within-cluster sum of squares of `points` against their nearest center.
pub fn within_cluster_ss(points: &[Point], centers: &[Point]) -> f64 {
    points
        .iter()
        .map(|p| centers.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
        .sum()
}

fn nearest(p: &Point, centers: &[Point]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = dist2(p, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Seeds `k` centers with k-means++ and refines them with Lloyd iterations
/// until assignments stop changing. Deterministic for a given seed.
pub fn kmeanspp(points: &[Point], k: usize, seed: u64) -> Result<Vec<Point>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(GpError::OutOfRange(format!("k = {k} must lie in 1..={n}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![points[first]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &points[first])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` past the final sum.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // Only duplicates of existing centers remain.
            (0..n).find(|&i| !chosen[i]).unwrap()
        };
        chosen[next] = true;
        centers.push(points[next]);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &points[next]));
        }
    }

    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                let c = counts[j] as f64;
                centers[j] = [sums[j][0] / c, sums[j][1] / c];
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    Ok(centers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_points(n: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()
    }

    #[test]
    fn k_equals_n_returns_the_points() {
        let pts = random_points(40, 1);
        let mut c = kmeanspp(&pts, 40, 9).unwrap();
        let mut p = pts.clone();
        let key = |a: &Point, b: &Point| a.partial_cmp(b).unwrap();
        c.sort_by(key);
        p.sort_by(key);
        assert_eq!(c, p);
    }

    #[test]
    fn single_center_is_the_mean() {
        let pts = random_points(101, 2);
        let c = kmeanspp(&pts, 1, 0).unwrap();
        let mx = pts.iter().map(|p| p[0]).sum::<f64>() / 101.0;
        let my = pts.iter().map(|p| p[1]).sum::<f64>() / 101.0;
        assert!((c[0][0] - mx).abs() < 1e-14 && (c[0][1] - my).abs() < 1e-14);
    }

    #[test]
    fn beats_random_centers() {
        let pts = random_points(500, 3);
        let c = kmeanspp(&pts, 25, 7).unwrap();
        let wcss = within_cluster_ss(&pts, &c);
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for _ in 0..20 {
            let baseline: Vec<Point> = (0..25).map(|_| pts[rng.random_range(0..500)]).collect();
            assert!(wcss <= within_cluster_ss(&pts, &baseline));
        }
    }

    #[test]
    fn reproducible_and_validated() {
        let pts = random_points(200, 4);
        assert_eq!(kmeanspp(&pts, 12, 5).unwrap(), kmeanspp(&pts, 12, 5).unwrap());
        assert!(kmeanspp(&pts, 0, 5).is_err());
        assert!(kmeanspp(&pts, 201, 5).is_err());
        let dup = vec![[0.5, 0.5]; 6];
        assert_eq!(kmeanspp(&dup, 3, 1).unwrap().len(), 3);
    }
}
