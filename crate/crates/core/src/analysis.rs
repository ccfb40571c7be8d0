//! LME time-series analysis: Pearson correlation between buses, the
//! combined correlation/mean-gap distance, Ward hierarchical clustering,
//! and temporal (hour-of-day / month) aggregation by region.

use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least 2 hours, got {0}")]
    TooFewHours(usize),
    #[error("k = {k} out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("region map covers {map} buses but series has {buses}")]
    UnmappedBuses { map: usize, buses: usize },
}

/// Rectangular hours x buses matrix of LME values with their hour stamps.
/// Filtered (high-shed) hours are dropped row-wise before construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LmeSeries {
    pub hours: Vec<usize>,
    /// `values[t][n]` = LME at bus n during `hours[t]`.
    pub values: Vec<Vec<f64>>,
}

impl LmeSeries {
    pub fn num_hours(&self) -> usize {
        self.values.len()
    }

    pub fn num_buses(&self) -> usize {
        self.values.first().map_or(0, |r| r.len())
    }

    fn column_means(&self) -> Vec<f64> {
        let t = self.num_hours() as f64;
        let mut means = vec![0.0; self.num_buses()];
        for row in &self.values {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= t;
        }
        means
    }
}

/// One agglomeration step; clusters are numbered 0..N for the leaves and
/// N+i for the cluster created by merge i.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    /// Leaves in the merged cluster.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// Cluster id in 0..k per bus; ids ordered by each cluster's lowest
    /// bus index.
    pub labels: Vec<usize>,
    pub linkage: Vec<Merge>,
}

/// Pairwise Pearson correlations. Zero-variance series correlate 0 with
/// everything (and themselves keep a unit diagonal).
pub fn correlation_matrix(series: &LmeSeries) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let t = series.num_hours();
    if t < 2 {
        return Err(AnalysisError::TooFewHours(t));
    }
    let n = series.num_buses();
    let means = series.column_means();
    let mut centered = vec![vec![0.0; t]; n];
    for (ti, row) in series.values.iter().enumerate() {
        for (ni, v) in row.iter().enumerate() {
            centered[ni][ti] = v - means[ni];
        }
    }
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut corr = vec![vec![0.0; n]; n];
    for i in 0..n {
        corr[i][i] = 1.0;
        for j in (i + 1)..n {
            let c = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            corr[i][j] = c;
            corr[j][i] = c;
        }
    }
    Ok(corr)
}

/// Combined distance: half correlation distance `1 - |corr|`, half the
/// absolute mean-LME gap rescaled by the largest gap. All entries in
/// [0, 1] with a zero diagonal.
pub fn lme_distance(series: &LmeSeries) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let corr = correlation_matrix(series)?;
    let n = series.num_buses();
    let means = series.column_means();
    let mut max_gap: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            max_gap = max_gap.max((means[i] - means[j]).abs());
        }
    }
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = if max_gap == 0.0 {
                0.0
            } else {
                (means[i] - means[j]).abs() / max_gap
            };
            let v = 0.5 * (1.0 - corr[i][j].abs()) + 0.5 * gap;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

/// Agglomerative Ward clustering over a precomputed distance matrix via
/// the Lance-Williams update, with deterministic lowest-index tie-breaks.
pub fn hierarchical_cluster(
    distance: &[Vec<f64>],
    k: usize,
) -> Result<ClusterResult, AnalysisError> {
    let n = distance.len();
    if k < 1 || k > n {
        return Err(AnalysisError::KOutOfRange { k, n });
    }
    // Active clusters keyed by linkage id; `members` tracked for label
    // extraction, `d` holds current inter-cluster distances.
    let mut active: Vec<usize> = (0..n).collect();
    let mut sizes: BTreeMap<usize, usize> = (0..n).map(|i| (i, 1)).collect();
    let mut members: BTreeMap<usize, Vec<usize>> = (0..n).map(|i| (i, vec![i])).collect();
    let mut d: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            d.insert((i, j), distance[i][j]);
        }
    }
    let key = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };

    let mut linkage = Vec::with_capacity(n.saturating_sub(1));
    let mut labels_at_k: Option<Vec<Vec<usize>>> = None;
    if k == n {
        labels_at_k = Some((0..n).map(|i| vec![i]).collect());
    }

    for step in 0..n.saturating_sub(1) {
        // Lowest-index pair among minimal distances.
        let mut best: Option<(f64, usize, usize)> = None;
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[(ai + 1)..] {
                let dist = d[&key(a, b)];
                if best.map_or(true, |(bd, _, _)| dist < bd) {
                    best = Some((dist, a, b));
                }
            }
        }
        let (dist, a, b) = best.unwrap();
        let new_id = n + step;
        let (na, nb) = (sizes[&a] as f64, sizes[&b] as f64);
        // Ward via Lance-Williams on squared distances, reported back in
        // distance units.
        for &c in &active {
            if c == a || c == b {
                continue;
            }
            let nc = sizes[&c] as f64;
            let dca = d[&key(c, a)];
            let dcb = d[&key(c, b)];
            let sq = ((na + nc) * dca * dca + (nb + nc) * dcb * dcb - nc * dist * dist)
                / (na + nb + nc);
            d.insert(key(c, new_id), sq.max(0.0).sqrt());
        }
        active.retain(|&x| x != a && x != b);
        active.push(new_id);
        sizes.insert(new_id, sizes[&a] + sizes[&b]);
        let mut merged = members.remove(&a).unwrap();
        merged.extend(members.remove(&b).unwrap());
        merged.sort_unstable();
        members.insert(new_id, merged);
        linkage.push(Merge {
            a,
            b,
            distance: dist,
            size: sizes[&new_id],
        });
        if active.len() == k {
            labels_at_k = Some(active.iter().map(|id| members[id].clone()).collect());
        }
    }

    let mut groups = labels_at_k.unwrap();
    groups.sort_by_key(|g| g[0]);
    let mut labels = vec![0usize; n];
    for (ci, group) in groups.iter().enumerate() {
        for &bus in group {
            labels[bus] = ci;
        }
    }
    Ok(ClusterResult { labels, linkage })
}

/// For each achievable cluster count k, the jump in merge distance when
/// going below k clusters: `d(merge to k-1) - d(merge to k)`. Large gaps
/// mark natural values of k. Returns (k, gap) sorted by gap descending,
/// ties toward smaller k.
pub fn merge_distance_gaps(linkage: &[Merge]) -> Vec<(usize, f64)> {
    let n = linkage.len() + 1;
    let mut gaps: Vec<(usize, f64)> = (2..n)
        .map(|k| {
            // Merge index n-1-k takes k+1 clusters to k.
            let to_k = linkage[n - 1 - k].distance;
            let below_k = linkage[n - k].distance;
            (k, below_k - to_k)
        })
        .collect();
    gaps.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    gaps
}

/// Rand index between two labelings: fraction of bus pairs on whose
/// co-membership the labelings agree. 1.0 means identical partitions.
pub fn rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut agree = 0usize;
    let mut total = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            total += 1;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    HourOfDay,
    Month,
}

/// Cumulative day-of-year boundaries of a 365-day non-leap calendar.
const MONTH_STARTS: [usize; 13] = [0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334, 365];

fn bucket_of(hour: usize, grouping: Grouping) -> usize {
    match grouping {
        Grouping::HourOfDay => hour % 24,
        Grouping::Month => {
            let day = (hour / 24) % 365;
            MONTH_STARTS.iter().position(|&s| s > day).unwrap() - 1
        }
    }
}

/// Mean value per (region, bucket) over all buses in the region and hours
/// in the bucket. Works for LME matrices and any other hours x buses
/// series (e.g. demand).
pub fn temporal_aggregates(
    series: &LmeSeries,
    grouping: Grouping,
    region_of_bus: &[String],
) -> Result<BTreeMap<(String, usize), f64>, AnalysisError> {
    if region_of_bus.len() != series.num_buses() {
        return Err(AnalysisError::UnmappedBuses {
            map: region_of_bus.len(),
            buses: series.num_buses(),
        });
    }
    let mut sums: BTreeMap<(String, usize), (f64, usize)> = BTreeMap::new();
    for (t, row) in series.values.iter().enumerate() {
        let bucket = bucket_of(series.hours[t], grouping);
        for (n, v) in row.iter().enumerate() {
            let e = sums
                .entry((region_of_bus[n].clone(), bucket))
                .or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    Ok(sums
        .into_iter()
        .map(|(k, (s, c))| (k, s / c as f64))
        .collect())
}
