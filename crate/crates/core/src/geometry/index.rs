//! Uniform bucket grid for exact nearest-neighbour queries.

use super::PointCloud;

/// Points bucketed into a regular grid. Queries visit rings of buckets until
/// no unvisited bucket can hold a closer point, so answers are identical to
/// a brute-force scan.
pub struct PointIndex<'a> {
    cloud: &'a PointCloud,
    lo: Vec<f64>,
    cell: f64,
    shape: Vec<usize>,
    start: Vec<usize>,
    items: Vec<usize>,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl<'a> PointIndex<'a> {
    pub fn new(cloud: &'a PointCloud) -> Self {
        let dim = cloud.dim;
        let n = cloud.len().max(1);
        let (lo, hi) = if cloud.is_empty() {
            (vec![0.0; dim], vec![1.0; dim])
        } else {
            cloud.bounds()
        };
        let extent: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| (h - l).max(1e-12)).collect();
        let vol: f64 = extent.iter().product();
        // about two points per bucket, grown until the grid stays O(n)
        let mut cell = (2.0 * vol / n as f64).powf(1.0 / dim as f64).max(1e-300);
        let shape_for = |cell: f64| -> Vec<usize> {
            extent.iter().map(|e| (e / cell).floor() as usize + 1).collect()
        };
        while shape_for(cell).iter().map(|&s| s as f64).product::<f64>() > (4 * n + 8) as f64 {
            cell *= 1.5;
        }
        let shape = shape_for(cell);
        let mut index = PointIndex {
            cloud,
            lo,
            cell,
            shape,
            start: Vec::new(),
            items: Vec::new(),
        };
        let total: usize = index.shape.iter().product();
        let mut counts = vec![0usize; total + 1];
        let ids: Vec<usize> = cloud.iter().map(|p| index.flat(&index.bucket(p))).collect();
        for &b in &ids {
            counts[b + 1] += 1;
        }
        for i in 0..total {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0; cloud.len()];
        for (i, &b) in ids.iter().enumerate() {
            items[fill[b]] = i;
            fill[b] += 1;
        }
        index.start = counts;
        index.items = items;
        index
    }

    fn bucket(&self, p: &[f64]) -> Vec<usize> {
        p.iter()
            .zip(&self.lo)
            .zip(&self.shape)
            .map(|((x, l), &s)| {
                let c = ((x - l) / self.cell).floor();
                if c < 0.0 {
                    0
                } else {
                    (c as usize).min(s - 1)
                }
            })
            .collect()
    }

    fn flat(&self, b: &[usize]) -> usize {
        let mut f = 0;
        for k in (0..b.len()).rev() {
            f = f * self.shape[k] + b[k];
        }
        f
    }

    /// Calls `visit` for every point in buckets at Chebyshev distance
    /// exactly `r` from `centre`. Returns false once the ring lies entirely
    /// outside the grid.
    fn ring(&self, centre: &[usize], r: usize, visit: &mut impl FnMut(usize)) -> bool {
        let dim = centre.len();
        let lo: Vec<i64> = centre.iter().map(|&c| c as i64 - r as i64).collect();
        let hi: Vec<i64> = centre.iter().map(|&c| c as i64 + r as i64).collect();
        let inside = (0..dim).any(|k| lo[k] >= 0 || hi[k] < self.shape[k] as i64);
        if !inside && r > 0 {
            return false;
        }
        let clo: Vec<i64> = lo.iter().map(|&v| v.max(0)).collect();
        let chi: Vec<i64> = (0..dim).map(|k| hi[k].min(self.shape[k] as i64 - 1)).collect();
        let mut cur = clo.clone();
        loop {
            let on_ring = (0..dim).any(|k| cur[k] == lo[k] || cur[k] == hi[k]);
            if on_ring || r == 0 {
                let b: Vec<usize> = cur.iter().map(|&v| v as usize).collect();
                let f = self.flat(&b);
                for &i in &self.items[self.start[f]..self.start[f + 1]] {
                    visit(i);
                }
            }
            let mut k = 0;
            loop {
                if k == dim {
                    return true;
                }
                cur[k] += 1;
                if cur[k] <= chi[k] {
                    break;
                }
                cur[k] = clo[k];
                k += 1;
            }
        }
    }

    /// Index and distance of the nearest point.
    pub fn nearest(&self, p: &[f64]) -> Option<(usize, f64)> {
        self.k_nearest(p, 1, None).pop()
    }

    /// The `k` nearest points sorted by distance, optionally skipping one
    /// index (the query point itself).
    pub fn k_nearest(&self, p: &[f64], k: usize, skip: Option<usize>) -> Vec<(usize, f64)> {
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k == 0 || self.cloud.is_empty() {
            return best;
        }
        let centre = self.bucket(p);
        let mut r = 0;
        loop {
            let more = self.ring(&centre, r, &mut |i| {
                if Some(i) == skip {
                    return;
                }
                let d = distance(p, self.cloud.point(i));
                if best.len() < k || d < best[best.len() - 1].1 {
                    let pos = best.partition_point(|&(j, e)| e < d || (e == d && j < i));
                    best.insert(pos, (i, d));
                    best.truncate(k);
                }
            });
            if !more {
                break;
            }
            if best.len() == k && best[k - 1].1 <= r as f64 * self.cell {
                break;
            }
            r += 1;
        }
        best
    }

    pub fn brute_force_nearest(&self, p: &[f64]) -> Option<(usize, f64)> {
        self.cloud
            .iter()
            .enumerate()
            .map(|(i, q)| (i, distance(p, q)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_brute_force(
            pts in prop::collection::vec(-1.0f64..1.0, 3..300),
            q in prop::array::uniform3(-3.0f64..3.0),
            k in 1usize..6,
        ) {
            let n = pts.len() / 3 * 3;
            let cloud = PointCloud::new(3, pts[..n].to_vec()).unwrap();
            let idx = PointIndex::new(&cloud);
            let (i, d) = idx.nearest(&q).unwrap();
            let (j, e) = idx.brute_force_nearest(&q).unwrap();
            prop_assert_eq!(d, e);
            prop_assert_eq!(i, j);
            let mut all: Vec<f64> = cloud.iter().map(|p| distance(&q, p)).collect();
            all.sort_by(f64::total_cmp);
            let got: Vec<f64> = idx.k_nearest(&q, k, None).iter().map(|x| x.1).collect();
            prop_assert_eq!(&got[..], &all[..k.min(all.len())]);
        }
    }

    #[test]
    fn skip_excludes_self_and_handles_duplicates() {
        let cloud = PointCloud::new(2, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let idx = PointIndex::new(&cloud);
        let r = idx.k_nearest(&[0.0, 0.0], 2, Some(0));
        assert_eq!(r, vec![(1, 0.0), (2, 1.0)]);
    }
}
