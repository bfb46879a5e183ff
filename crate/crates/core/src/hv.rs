//! Pareto dominance, exact hypervolume and its R2-based approximation.
//!
//! Everything here assumes minimization. Hypervolumes are measured against a
//! reference point that every contributing point must strictly dominate.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::DirectionSet;

/// `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Returns the non-dominated subset, duplicates collapsed, in lexicographic
/// order.
pub fn nondominated_filter(points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let Some(first) = points.first() else {
        return Ok(Vec::new());
    };
    let m = first.len();
    for p in points {
        if p.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite objective vector {p:?}")));
        }
    }
    let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
    sorted.sort_by(|a, b| lexicographic(a, b));
    sorted.dedup();
    Ok(filter_sorted(sorted.into_iter().cloned().collect()))
}

// Input must be lexicographically sorted and duplicate-free. A dominator
// always sorts before what it dominates, so one forward pass against the kept
// set suffices.
fn filter_sorted(sorted: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let m = sorted.first().map_or(0, Vec::len);
    let mut kept: Vec<Vec<f64>> = Vec::new();
    if m == 2 {
        let mut best = f64::INFINITY;
        for p in sorted {
            if p[1] < best {
                best = p[1];
                kept.push(p);
            }
        }
        return kept;
    }
    for p in sorted {
        if !kept.iter().any(|q| dominates(q, &p)) {
            kept.push(p);
        }
    }
    kept
}

/// A point against which volumes are measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint(Vec<f64>);

impl ReferencePoint {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if r.is_empty() || r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid reference point {r:?}")));
        }
        Ok(ReferencePoint(r))
    }

    /// The point (value, ..., value) in m dimensions.
    pub fn uniform(m: usize, value: f64) -> Self {
        ReferencePoint(vec![value; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for ReferencePoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Exact hypervolume dominated by `points` and bounded by `r`.
pub fn exact_hv(points: &[Vec<f64>], r: &[f64]) -> Result<f64> {
    exact_hv_counted(points, r).map(|(hv, _)| hv)
}

/// Like [`exact_hv`], also returning how many points were dropped for not
/// strictly dominating `r`.
pub fn exact_hv_counted(points: &[Vec<f64>], r: &[f64]) -> Result<(f64, usize)> {
    let m = r.len();
    if let Some(p) = points.iter().find(|p| p.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: p.len(),
        });
    }
    let inside: Vec<Vec<f64>> = points
        .iter()
        .filter(|p| p.iter().zip(r).all(|(y, ri)| y < ri))
        .cloned()
        .collect();
    let dropped = points.len() - inside.len();
    if dropped > 0 {
        log::debug!("exact_hv: dropped {dropped} points outside the reference box");
    }
    if inside.is_empty() {
        return Ok((0.0, dropped));
    }
    let hv = match m {
        1 => r[0] - inside.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min),
        2 => hv2d(inside, r),
        _ => wfg(nondominated_filter(&inside)?, r),
    };
    Ok((hv, dropped))
}

/// Sweep by the first objective ascending. Dominated points are skipped by
/// the running minimum of the second objective.
fn hv2d(mut points: Vec<Vec<f64>>, r: &[f64]) -> f64 {
    points.sort_by(|a, b| lexicographic(a, b));
    let mut best = r[1];
    let mut hv = 0.0;
    for p in &points {
        if p[1] < best {
            hv += (r[0] - p[0]) * (best - p[1]);
            best = p[1];
        }
    }
    hv
}

fn box_volume(p: &[f64], r: &[f64]) -> f64 {
    p.iter().zip(r).map(|(y, ri)| ri - y).product()
}

/// WFG: the hypervolume is the sum of each point's volume exclusive of the
/// points after it. Ordering points by the last objective, worst first, makes
/// every limit set share that last coordinate, so each exclusive volume is a
/// prism over an (m-1)-dimensional hypervolume.
///
/// Input must be non-dominated and strictly inside the reference box.
fn wfg(mut points: Vec<Vec<f64>>, r: &[f64]) -> f64 {
    let m = r.len();
    match points.len() {
        0 => return 0.0,
        1 => return box_volume(&points[0], r),
        _ => {}
    }
    if m == 2 {
        return hv2d(points, r);
    }
    points.sort_by(|a, b| b[m - 1].total_cmp(&a[m - 1]).then_with(|| lexicographic(a, b)));
    let r_base = &r[..m - 1];
    let mut total = 0.0;
    for k in 0..points.len() {
        let p = &points[k];
        let height = r[m - 1] - p[m - 1];
        let base = &p[..m - 1];
        let limited: Vec<Vec<f64>> = points[k + 1..]
            .iter()
            .map(|q| q[..m - 1].iter().zip(base).map(|(a, b)| a.max(*b)).collect())
            .collect();
        let covered = if limited.is_empty() {
            0.0
        } else if m - 1 == 2 {
            hv2d(limited, r_base)
        } else {
            let mut sorted = limited;
            sorted.sort_by(|a, b| lexicographic(a, b));
            sorted.dedup();
            wfg(filter_sorted(sorted), r_base)
        };
        total += height * (box_volume(base, r_base) - covered);
    }
    total
}

/// Largest inner scalar min_i (r_i - y_i) / λ_i over the set, with the index
/// of the point attaining it and the coordinate attaining the inner minimum.
/// Ties resolve to the lowest point index and lowest coordinate.
fn best_projection(points: &[Vec<f64>], r: &[f64], dir: &[f64]) -> Option<(f64, usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    for (idx, y) in points.iter().enumerate() {
        let (s, coord) = y
            .iter()
            .zip(r)
            .zip(dir)
            .map(|((yi, ri), li)| (ri - yi) / li)
            .enumerate()
            .fold((f64::INFINITY, 0), |(bs, bi), (i, v)| if v < bs { (v, i) } else { (bs, bi) });
        if best.is_none_or(|(bs, _, _)| s > bs) {
            best = Some((s, idx, coord));
        }
    }
    best
}

/// R2-based approximation c_m Σ_λ [max_y min_i (r_i - y_i)/λ_i]^m.
///
/// The inner maximum ranges over the whole set, so dominated points need not
/// be filtered out. Inner scalars are floored at zero, so a set lying
/// entirely outside the reference box along some direction contributes
/// nothing for it. An empty set yields 0.
pub fn r2_hv_approx(points: &[Vec<f64>], r: &[f64], dirs: &DirectionSet) -> f64 {
    let m = r.len() as i32;
    let sum: f64 = dirs
        .directions()
        .iter()
        .filter_map(|dir| best_projection(points, r, dir))
        .map(|(s, _, _)| s.max(0.0).powi(m))
        .sum();
    dirs.c_m() * sum
}

/// Subgradient of [`r2_hv_approx`] with respect to every coordinate of every
/// point, returned as one row per point.
pub fn r2_hv_subgradient(points: &[Vec<f64>], r: &[f64], dirs: &DirectionSet) -> Vec<Vec<f64>> {
    r2_hv_value_and_subgradient(points, r, dirs).1
}

pub fn r2_hv_value_and_subgradient(
    points: &[Vec<f64>],
    r: &[f64],
    dirs: &DirectionSet,
) -> (f64, Vec<Vec<f64>>) {
    let m = r.len();
    let mut grad = vec![vec![0.0; m]; points.len()];
    let mut sum = 0.0;
    for dir in dirs.directions() {
        let Some((s, idx, coord)) = best_projection(points, r, dir) else {
            continue;
        };
        if s <= 0.0 {
            continue;
        }
        sum += s.powi(m as i32);
        grad[idx][coord] += dirs.c_m() * m as f64 * s.powi(m as i32 - 1) * (-1.0 / dir[coord]);
    }
    (dirs.c_m() * sum, grad)
}

/// log(hv_true + epsilon - hv_learned).
pub fn log_hv_difference(hv_true: f64, hv_learned: f64, epsilon_log: f64) -> Result<f64> {
    let arg = hv_true + epsilon_log - hv_learned;
    if !(arg > 0.0) {
        return Err(Error::NonPositiveLogArgument(arg));
    }
    Ok(arg.ln())
}

/// 0 while the learned volume is below the reference volume, 1e-6 otherwise.
pub fn default_epsilon_log(hv_true: f64, hv_learned: f64) -> f64 {
    if hv_learned < hv_true {
        0.0
    } else {
        1e-6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HvReport {
    pub hv_true: f64,
    pub hv_learned: f64,
    pub log_hv_difference: f64,
    pub epsilon_log: f64,
}

impl HvReport {
    pub fn new(hv_true: f64, hv_learned: f64) -> Result<Self> {
        let epsilon_log = default_epsilon_log(hv_true, hv_learned);
        Ok(HvReport {
            hv_true,
            hv_learned,
            log_hv_difference: log_hv_difference(hv_true, hv_learned, epsilon_log)?,
            epsilon_log,
        })
    }
}

/// Componentwise min-max scaling onto the unit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxNormalizer {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl MinMaxNormalizer {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        MinMaxNormalizer { lower, upper }
    }

    /// Width of each coordinate's range; degenerate ranges count as 1.
    pub fn scale(&self, i: usize) -> f64 {
        let w = self.upper[i] - self.lower[i];
        if w > 0.0 {
            w
        } else {
            1.0
        }
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(i, v)| (v - self.lower[i]) / self.scale(i))
            .collect()
    }

    pub fn apply_all(&self, ys: &[Vec<f64>]) -> Vec<Vec<f64>> {
        ys.iter().map(|y| self.apply(y)).collect()
    }
}
