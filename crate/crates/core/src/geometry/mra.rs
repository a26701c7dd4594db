use super::ArrayGeometry;
use crate::error::{invalid, Error, Result};

/// Restricted minimum-redundancy rulers (contiguous coarray up to the full
/// aperture), in units of `d0`, indexed by element count `N = 2..=10`.
///
/// Entries for `N <= 6` are reproduced by [`mra_exhaustive_search`] in the
/// test suite; larger entries are checked for full contiguity.
pub const MRA_TABLE: &[&[i64]] = &[
    &[0, 1],
    &[0, 1, 3],
    &[0, 1, 4, 6],
    &[0, 1, 2, 6, 9],
    &[0, 1, 2, 6, 10, 13],
    &[0, 1, 2, 3, 8, 13, 17],
    &[0, 1, 2, 11, 15, 18, 21, 23],
    &[0, 1, 2, 14, 18, 21, 24, 27, 29],
    &[0, 1, 3, 6, 13, 20, 27, 31, 35, 36],
];

const SEARCH_MAX_N: usize = 6;
const SEARCH_MAX_APERTURE: usize = 30;

/// Minimum-redundancy array from the built-in table, `2 <= N <= 10`.
pub fn make_mra(n: usize, d0: f64) -> Result<ArrayGeometry> {
    if !(d0 > 0.0) {
        return Err(invalid(format!("d0 must be positive, got {d0}")));
    }
    let entry = n
        .checked_sub(2)
        .and_then(|i| MRA_TABLE.get(i))
        .ok_or_else(|| Error::UnsupportedSize(format!("no MRA table entry for N={n} (table covers 2..=10)")))?;
    let aperture = *entry.last().expect("non-empty entry");
    ArrayGeometry::from_grid(entry, d0, aperture)
}

/// Contiguous DOF `2·M_c + 1` of an integer position set.
pub fn contiguous_dof_of_integers(units: &[i64]) -> usize {
    let (lo, hi) = match (units.iter().min(), units.iter().max()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return 0,
    };
    let span = (hi - lo) as usize;
    let mut seen = vec![false; span + 1];
    for &a in units {
        for &b in units {
            if a >= b {
                seen[(a - b) as usize] = true;
            }
        }
    }
    let mc = seen.iter().skip(1).take_while(|&&s| s).count();
    2 * mc + 1
}

/// Exhaustive search for the integer ruler with `N` marks and aperture at most
/// `max_aperture` that maximizes contiguous DOF.
///
/// Ties go to the smaller aperture, then to the lexicographically smaller
/// ruler. Every candidate starts at 0 and ends at its aperture, which covers
/// all rulers up to translation.
pub fn mra_exhaustive_search(n: usize, max_aperture: usize) -> Result<Vec<i64>> {
    if n > SEARCH_MAX_N || max_aperture > SEARCH_MAX_APERTURE {
        return Err(Error::ResourceLimit(format!(
            "exhaustive MRA search is limited to N <= {SEARCH_MAX_N} and aperture <= {SEARCH_MAX_APERTURE} \
             (got N={n}, aperture={max_aperture})"
        )));
    }
    if n < 2 {
        return Err(invalid(format!("N must be >= 2, got {n}")));
    }
    if max_aperture + 1 < n {
        return Err(invalid(format!("{n} distinct marks do not fit in aperture {max_aperture}")));
    }

    let mut best: Option<(usize, Vec<i64>)> = None;
    let inner = n - 2;
    for aperture in (n - 1)..=max_aperture {
        let a = aperture as i64;
        let mut combo: Vec<i64> = (1..=inner as i64).collect();
        loop {
            let mut ruler = Vec::with_capacity(n);
            ruler.push(0);
            ruler.extend_from_slice(&combo);
            ruler.push(a);
            let dof = contiguous_dof_of_integers(&ruler);
            if best.as_ref().is_none_or(|(b, _)| dof > *b) {
                best = Some((dof, ruler));
            }
            if !next_combination(&mut combo, a - 1) {
                break;
            }
        }
    }
    Ok(best.expect("at least one ruler").1)
}

/// Advances a strictly increasing combination drawn from `1..=max` in
/// lexicographic order.
fn next_combination(combo: &mut [i64], max: i64) -> bool {
    let k = combo.len();
    for i in (0..k).rev() {
        let limit = max - (k - 1 - i) as i64;
        if combo[i] < limit {
            combo[i] += 1;
            for j in (i + 1)..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
