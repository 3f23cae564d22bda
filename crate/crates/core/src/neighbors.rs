//! Spatial search helpers: bucketed nearest-neighbor and fixed-radius queries
//! over planar points, plus the exhaustive reference scans.

use std::cmp::Ordering;

use crate::kernel::Point;

const MAX_CELLS_PER_AXIS: usize = 2048;

#[inline]
fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

#[inline]
fn cmp_candidate(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// The `k` smallest `(squared distance, index)` pairs among `candidates`,
/// sorted by distance then index.
pub fn knn_exhaustive(
    points: &[Point],
    candidates: impl Iterator<Item = usize>,
    query: &Point,
    k: usize,
) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = candidates.map(|i| (dist2(&points[i], query), i)).collect();
    if k == 0 {
        return Vec::new();
    }
    if all.len() > k {
        all.select_nth_unstable_by(k - 1, cmp_candidate);
        all.truncate(k);
    }
    all.sort_unstable_by(cmp_candidate);
    all
}

/// Uniform bucket grid over a fixed point set. Points become searchable once
/// inserted, which supports the incremental queries of ordered conditioning.
pub struct GridIndex<'a> {
    points: &'a [Point],
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
    inserted: usize,
}

impl<'a> GridIndex<'a> {
    /// Empty grid over the bounding box of `points` with the requested cell size
    /// (enlarged if the grid would get too fine).
    pub fn new(points: &'a [Point], cell: f64) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if points.is_empty() {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let mut cell = if cell.is_finite() && cell > 0.0 { cell } else { span.max(1.0) };
        cell = cell.max(span / MAX_CELLS_PER_AXIS as f64).max(f64::MIN_POSITIVE);
        let nx = ((hi[0] - lo[0]) / cell).floor() as usize + 1;
        let ny = ((hi[1] - lo[1]) / cell).floor() as usize + 1;
        Self { points, origin: lo, cell, nx, ny, cells: vec![Vec::new(); nx * ny], inserted: 0 }
    }

    /// Grid holding every point, with a cell size targeting `per_cell` points per bucket.
    pub fn full(points: &'a [Point], per_cell: usize) -> Self {
        let cell = Self::cell_for_density(points, per_cell);
        let mut g = Self::new(points, cell);
        for i in 0..points.len() {
            g.insert(i);
        }
        g
    }

    pub fn cell_for_density(points: &[Point], per_cell: usize) -> f64 {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let area = ((hi[0] - lo[0]) * (hi[1] - lo[1])).max(1e-300);
        (area * per_cell.max(1) as f64 / points.len().max(1) as f64).sqrt()
    }

    #[inline]
    fn cell_of(&self, p: &Point) -> (isize, isize) {
        (
            ((p[0] - self.origin[0]) / self.cell).floor() as isize,
            ((p[1] - self.origin[1]) / self.cell).floor() as isize,
        )
    }

    pub fn insert(&mut self, idx: usize) {
        let (cx, cy) = self.cell_of(&self.points[idx]);
        let cx = cx.clamp(0, self.nx as isize - 1) as usize;
        let cy = cy.clamp(0, self.ny as isize - 1) as usize;
        self.cells[cy * self.nx + cx].push(idx);
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.inserted
    }

    pub fn is_empty(&self) -> bool {
        self.inserted == 0
    }

    fn visit_ring(&self, cx: isize, cy: isize, r: isize, mut f: impl FnMut(usize)) {
        let mut visit = |x: isize, y: isize| {
            if x >= 0 && y >= 0 && (x as usize) < self.nx && (y as usize) < self.ny {
                for &i in &self.cells[y as usize * self.nx + x as usize] {
                    f(i);
                }
            }
        };
        if r == 0 {
            visit(cx, cy);
            return;
        }
        for x in (cx - r)..=(cx + r) {
            visit(x, cy - r);
            visit(x, cy + r);
        }
        for y in (cy - r + 1)..=(cy + r - 1) {
            visit(cx - r, y);
            visit(cx + r, y);
        }
    }

    /// The `k` nearest inserted points, same ordering as [`knn_exhaustive`].
    pub fn knn(&self, query: &Point, k: usize) -> Vec<(f64, usize)> {
        let k = k.min(self.inserted);
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k == 0 {
            return best;
        }
        let (cx, cy) = self.cell_of(query);
        let max_r = (self.nx.max(self.ny) as isize) + cx.abs().max(cy.abs()) + 1;
        let mut r = 0isize;
        loop {
            self.visit_ring(cx, cy, r, |i| {
                let cand = (dist2(&self.points[i], query), i);
                if best.len() < k || cmp_candidate(&cand, &best[k - 1]) == Ordering::Less {
                    let pos = best.partition_point(|b| cmp_candidate(b, &cand) == Ordering::Less);
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            });
            if best.len() == k {
                let bound = r as f64 * self.cell;
                if best[k - 1].0 < bound * bound {
                    break;
                }
            }
            if r > max_r {
                break;
            }
            r += 1;
        }
        best
    }

    /// Inserted points strictly closer than `radius`, sorted by index.
    pub fn within(&self, query: &Point, radius: f64) -> Vec<usize> {
        let (cx, cy) = self.cell_of(query);
        let rings = (radius / self.cell).ceil() as isize;
        let r2 = radius * radius;
        let mut out = Vec::new();
        for r in 0..=rings {
            self.visit_ring(cx, cy, r, |i| {
                if dist2(&self.points[i], query) < r2 {
                    out.push(i);
                }
            });
        }
        out.sort_unstable();
        out
    }
}

/// For every point, the sorted indices of points strictly closer than
/// `radius` (itself included).
pub fn pairs_within(points: &[Point], radius: f64) -> Vec<Vec<usize>> {
    let grid = grid_for_radius(points, radius);
    points.iter().map(|p| grid.within(p, radius)).collect()
}

/// For every point of `a`, the sorted indices of points of `b` strictly
/// closer than `radius`.
pub fn cross_pairs_within(a: &[Point], b: &[Point], radius: f64) -> Vec<Vec<usize>> {
    let grid = grid_for_radius(b, radius);
    a.iter().map(|p| grid.within(p, radius)).collect()
}

fn grid_for_radius(points: &[Point], radius: f64) -> GridIndex<'_> {
    // A cell no smaller than the radius keeps each query to a 3x3 block;
    // tiny radii would otherwise allocate enormous grids.
    let density_cell = GridIndex::cell_for_density(points, 4);
    let mut g = GridIndex::new(points, radius.max(density_cell));
    for i in 0..points.len() {
        g.insert(i);
    }
    g
}
