use std::collections::BTreeMap;

use super::ArrayGeometry;

/// Lags closer than this fraction of `d0` are the same lag.
const DEDUP_TOL_D0: f64 = 1e-9;

/// One distinct lag of the difference coarray and the ordered sensor pairs
/// `(i, j)` with `p_i - p_j` equal to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Lag {
    pub value: f64,
    pub pairs: Vec<(usize, usize)>,
}

/// Difference coarray `{p_i - p_j}` with redundancy bookkeeping and the
/// contiguous segment on the `d0` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceCoarray {
    lags: Vec<Lag>,
    /// Integer grid index `m` (lag ≈ m·d0) → indices into `lags`.
    grid: BTreeMap<i64, Vec<usize>>,
    contiguous_half_length: usize,
    n_sensors: usize,
    d0: f64,
}

impl DifferenceCoarray {
    /// Default grid-membership tolerance, `10⁻³·d0`.
    pub fn default_tol_grid(d0: f64) -> f64 {
        1e-3 * d0
    }

    /// Distinct lags in ascending order.
    pub fn lags(&self) -> &[Lag] {
        &self.lags
    }

    pub fn lag_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.lags.iter().map(|l| l.value)
    }

    /// Integer indices `m` of lags that sit on the `d0` grid.
    pub fn grid_lags(&self) -> impl Iterator<Item = i64> + '_ {
        self.grid.keys().copied()
    }

    pub fn has_grid_lag(&self, m: i64) -> bool {
        self.grid.contains_key(&m)
    }

    /// Every sensor pair whose difference rounds to `m·d0`.
    pub fn pairs_at_grid(&self, m: i64) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.grid
            .get(&m)
            .into_iter()
            .flatten()
            .flat_map(move |&idx| self.lags[idx].pairs.iter().copied())
    }

    /// `M_c`: the largest `M` with `{-M, …, M} ⊆ grid_lags`.
    pub fn contiguous_half_length(&self) -> usize {
        self.contiguous_half_length
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    pub fn d0(&self) -> f64 {
        self.d0
    }
}

/// Computes all `N²` ordered differences, merges duplicates, and locates the
/// contiguous grid segment.
///
/// Positive differences are grouped first and the negative half is mirrored
/// from them, so the lag set and its pair lists are exactly symmetric.
pub fn difference_coarray(geom: &ArrayGeometry, tol_grid: f64) -> DifferenceCoarray {
    let d0 = geom.d0();
    let tol_dedup = DEDUP_TOL_D0 * d0;
    let p = geom.positions();
    let n = p.len();

    // zero-lag pairs are kept as adjacent (i, j), (j, i) so that averaging
    // them yields an exactly real value
    let mut zero: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    let mut positive: Vec<(f64, (usize, usize))> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = p[i] - p[j];
            if d.abs() <= tol_dedup {
                zero.push((i, j));
                zero.push((j, i));
            } else if d > 0.0 {
                positive.push((d, (i, j)));
            } else {
                positive.push((-d, (j, i)));
            }
        }
    }
    positive.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut groups: Vec<Lag> = Vec::new();
    let mut start = f64::NAN;
    for (d, pair) in positive {
        match groups.last_mut() {
            Some(g) if d - start <= tol_dedup => {
                g.pairs.push(pair);
                g.value += d;
            }
            _ => {
                start = d;
                groups.push(Lag {
                    value: d,
                    pairs: vec![pair],
                });
            }
        }
    }
    for g in groups.iter_mut() {
        g.value /= g.pairs.len() as f64;
    }

    let mut lags: Vec<Lag> = groups
        .iter()
        .rev()
        .map(|g| Lag {
            value: -g.value,
            pairs: g.pairs.iter().map(|&(i, j)| (j, i)).collect(),
        })
        .collect();
    lags.push(Lag {
        value: 0.0,
        pairs: zero,
    });
    lags.extend(groups);

    let mut grid: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (idx, lag) in lags.iter().enumerate() {
        let m = (lag.value / d0).round();
        if (lag.value - m * d0).abs() <= tol_grid {
            grid.entry(m as i64).or_default().push(idx);
        }
    }
    let mut mc = 0usize;
    while grid.contains_key(&(mc as i64 + 1)) {
        mc += 1;
    }

    DifferenceCoarray {
        lags,
        grid,
        contiguous_half_length: mc,
        n_sensors: n,
        d0,
    }
}

/// `2·M_c + 1`.
pub fn coarray_dof(coarray: &DifferenceCoarray) -> usize {
    2 * coarray.contiguous_half_length + 1
}
