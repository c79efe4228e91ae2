//! DTW distances between annual curves and two-group agglomerative clustering.

use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::CurveMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceVariant {
    /// Absolute local cost, distance is the accumulated cost.
    #[default]
    DtwBasic,
    /// Squared local cost, distance is the square root of the accumulated cost.
    Dtw2,
}

impl FromStr for DistanceVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dtw_basic" | "dtw-basic" | "basic" => Ok(Self::DtwBasic),
            "dtw2" | "l2" => Ok(Self::Dtw2),
            other => Err(Error::Config(format!("unknown distance {other:?}"))),
        }
    }
}

impl std::fmt::Display for DistanceVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::DtwBasic => "dtw_basic",
            Self::Dtw2 => "dtw2",
        })
    }
}

#[inline(always)]
fn fmin(x: f64, y: f64) -> f64 {
    // inputs are finite, so the NaN handling of f64::min is not needed
    if x < y {
        x
    } else {
        y
    }
}

fn dtw_accumulate(a: &[f64], b: &[f64], cost: impl Fn(f64) -> f64) -> f64 {
    let m = b.len();
    let mut prev = vec![0.0; m];
    let mut cur = vec![0.0; m];
    // first row: only horizontal moves
    let mut acc = 0.0;
    for (p, &y) in prev.iter_mut().zip(b) {
        acc += cost(a[0] - y);
        *p = acc;
    }
    for &x in &a[1..] {
        let mut left = prev[0] + cost(x - b[0]);
        cur[0] = left;
        for ((c, w), &y) in cur[1..].iter_mut().zip(prev.windows(2)).zip(&b[1..]) {
            left = fmin(fmin(w[0], w[1]), left) + cost(x - y);
            *c = left;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

/// Dynamic time warping with the symmetric step pattern (match, insertion,
/// deletion, all weight 1) and no window.
pub fn dtw_distance(a: &[f64], b: &[f64], variant: DistanceVariant) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("DTW needs non-empty series".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Contract("DTW needs finite values".into()));
    }
    let total = match variant {
        DistanceVariant::DtwBasic => dtw_accumulate(a, b, |d| d.abs()),
        DistanceVariant::Dtw2 => dtw_accumulate(a, b, |d| d * d),
    };
    Ok(match variant {
        DistanceVariant::DtwBasic => total,
        DistanceVariant::Dtw2 => total.sqrt(),
    })
}

/// Symmetric matrix of pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    d: DMatrix<f64>,
    variant: DistanceVariant,
}

impl DistanceMatrix {
    pub fn new(d: DMatrix<f64>, variant: DistanceVariant) -> Result<Self> {
        if !d.is_square() {
            return Err(Error::Contract("distance matrix must be square".into()));
        }
        for i in 0..d.nrows() {
            if d[(i, i)] != 0.0 {
                return Err(Error::Contract("distance matrix diagonal must be zero".into()));
            }
            for j in 0..i {
                if d[(i, j)] != d[(j, i)] || !(d[(i, j)] >= 0.0) {
                    return Err(Error::Contract(
                        "distance matrix must be symmetric and non-negative".into(),
                    ));
                }
            }
        }
        Ok(Self { d, variant })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn variant(&self) -> DistanceVariant {
        self.variant
    }

    pub fn len(&self) -> usize {
        self.d.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.d.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }
}

/// DTW distance between every pair of columns; each pair is computed once.
pub fn pairwise_distances(curves: &CurveMatrix, variant: DistanceVariant) -> Result<DistanceMatrix> {
    let m = curves.num_curves();
    if m < 2 {
        return Err(Error::Contract(format!("need at least 2 curves, got {m}")));
    }
    let cols: Vec<Vec<f64>> = (0..m).map(|j| curves.column(j)).collect();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let dists: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| dtw_distance(&cols[i], &cols[j], variant))
        .collect::<Result<_>>()?;
    let mut d = DMatrix::zeros(m, m);
    for (&(i, j), v) in pairs.iter().zip(dists) {
        d[(i, j)] = v;
        d[(j, i)] = v;
    }
    DistanceMatrix::new(d, variant)
}

/// Two-group partition of the curves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterAssignment {
    /// Cluster label per curve, 1 or 2. The cluster holding curve 0 is labelled 1.
    pub labels: Vec<u8>,
}

impl ClusterAssignment {
    pub fn members(&self, label: u8) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> (usize, usize) {
        let n1 = self.labels.iter().filter(|l| **l == 1).count();
        (n1, self.labels.len() - n1)
    }
}

fn average_linkage(d: &DistanceMatrix, a: &[usize], b: &[usize]) -> f64 {
    let mut s = 0.0;
    for &i in a {
        for &j in b {
            s += d.get(i, j);
        }
    }
    s / (a.len() * b.len()) as f64
}

/// Average-linkage agglomeration stopped at two clusters. Ties in the
/// minimum linkage go to the lexicographically smallest pair, where a cluster
/// is identified by its smallest member.
pub fn hierarchical_two_cluster(d: &DistanceMatrix) -> Result<ClusterAssignment> {
    let m = d.len();
    if m < 2 {
        return Err(Error::Contract(format!("need at least 2 curves, got {m}")));
    }
    // members kept sorted; clusters ordered by smallest member
    let mut clusters: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
    while clusters.len() > 2 {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let l = average_linkage(d, &clusters[a], &clusters[b]);
                if l < best.0 {
                    best = (l, a, b);
                }
            }
        }
        let (_, a, b) = best;
        let merged = clusters.remove(b);
        clusters[a].extend(merged);
        clusters[a].sort_unstable();
    }
    let mut labels = vec![2u8; m];
    for &i in &clusters[0] {
        labels[i] = 1;
    }
    Ok(ClusterAssignment { labels })
}

/// Default size threshold for a dominating cluster: `ceil(0.6 m)`.
pub fn default_dominating_threshold(m: usize) -> usize {
    (0.6 * m as f64 - 1e-9).ceil() as usize
}

/// Indices of the larger cluster when it holds at least `threshold` curves.
/// Equal sizes resolve to cluster 1.
pub fn select_dominating(assignment: &ClusterAssignment, threshold: usize) -> Result<Option<Vec<usize>>> {
    if threshold < 1 {
        return Err(Error::Contract("dominating threshold must be >= 1".into()));
    }
    let (n1, n2) = assignment.sizes();
    let (label, size) = if n1 >= n2 { (1, n1) } else { (2, n2) };
    Ok((size >= threshold).then(|| assignment.members(label)))
}
