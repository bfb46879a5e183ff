//! Latent distributions and direction sets.
//!
//! All samplers are deterministic functions of their seed (or of the state of
//! the generator handed to them). Batches are stored row-major, one sample
//! per row.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Replacement for exact-zero lattice components.
pub const DIRECTION_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentDistribution {
    Gaussian,
    Lhs,
    Dirichlet,
}

impl fmt::Display for LatentDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LatentDistribution::Gaussian => "gaussian",
            LatentDistribution::Lhs => "lhs",
            LatentDistribution::Dirichlet => "dirichlet",
        })
    }
}

impl FromStr for LatentDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(LatentDistribution::Gaussian),
            "lhs" => Ok(LatentDistribution::Lhs),
            "dirichlet" => Ok(LatentDistribution::Dirichlet),
            _ => Err(Error::InvalidArgument(format!(
                "unknown latent distribution '{s}' (expected gaussian, lhs or dirichlet)"
            ))),
        }
    }
}

/// N latent samples of a common dimension k.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    pub samples: Array2<f64>,
    pub distribution: LatentDistribution,
}

impl LatentBatch {
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }
}

/// A fully parameterized initial distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum LatentSpec {
    Gaussian { center: Vec<f64> },
    Lhs { lower: Vec<f64>, upper: Vec<f64> },
    Dirichlet { dim: usize, alpha: f64 },
}

impl LatentSpec {
    pub fn dim(&self) -> usize {
        match self {
            LatentSpec::Gaussian { center } => center.len(),
            LatentSpec::Lhs { lower, .. } => lower.len(),
            LatentSpec::Dirichlet { dim, .. } => *dim,
        }
    }

    pub fn distribution(&self) -> LatentDistribution {
        match self {
            LatentSpec::Gaussian { .. } => LatentDistribution::Gaussian,
            LatentSpec::Lhs { .. } => LatentDistribution::Lhs,
            LatentSpec::Dirichlet { .. } => LatentDistribution::Dirichlet,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<LatentBatch> {
        match self {
            LatentSpec::Gaussian { center } => gaussian_from(rng, center, n),
            LatentSpec::Lhs { lower, upper } => lhs_from(rng, lower, upper, n),
            LatentSpec::Dirichlet { dim, alpha } => dirichlet_from(rng, *dim, *alpha, n),
        }
    }
}

fn check_count(k: usize, n: usize) -> Result<()> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "sample count and dimension must be positive (n = {n}, k = {k})"
        )));
    }
    Ok(())
}

pub fn sample_gaussian(k: usize, center: &[f64], n: usize, seed: u64) -> Result<LatentBatch> {
    if center.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: center.len(),
        });
    }
    gaussian_from(&mut ChaCha8Rng::seed_from_u64(seed), center, n)
}

/// Identity-covariance Gaussian around `center`.
pub fn gaussian_from<R: Rng + ?Sized>(rng: &mut R, center: &[f64], n: usize) -> Result<LatentBatch> {
    let k = center.len();
    check_count(k, n)?;
    let mut samples = Array2::zeros((n, k));
    for mut row in samples.rows_mut() {
        for (slot, c) in row.iter_mut().zip(center) {
            let z: f64 = StandardNormal.sample(rng);
            *slot = c + z;
        }
    }
    Ok(LatentBatch {
        samples,
        distribution: LatentDistribution::Gaussian,
    })
}

pub fn sample_lhs(k: usize, lower: &[f64], upper: &[f64], n: usize, seed: u64) -> Result<LatentBatch> {
    if lower.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: lower.len(),
        });
    }
    lhs_from(&mut ChaCha8Rng::seed_from_u64(seed), lower, upper, n)
}

/// Latin hypercube over the box: each coordinate has exactly one sample per
/// equal-width stratum, strata assigned by an independent permutation.
pub fn lhs_from<R: Rng + ?Sized>(
    rng: &mut R,
    lower: &[f64],
    upper: &[f64],
    n: usize,
) -> Result<LatentBatch> {
    let k = lower.len();
    check_count(k, n)?;
    if upper.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: upper.len(),
        });
    }
    if let Some(j) = (0..k).find(|&j| !(lower[j] < upper[j])) {
        return Err(Error::InvalidArgument(format!(
            "LHS bound {j}: lower {} is not below upper {}",
            lower[j], upper[j]
        )));
    }
    let mut samples = Array2::zeros((n, k));
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..k {
        strata.shuffle(rng);
        let width = (upper[j] - lower[j]) / n as f64;
        for (i, &s) in strata.iter().enumerate() {
            let u: f64 = rng.random();
            samples[[i, j]] = lower[j] + (s as f64 + u) * width;
        }
    }
    Ok(LatentBatch {
        samples,
        distribution: LatentDistribution::Lhs,
    })
}

pub fn sample_dirichlet(m: usize, alpha: f64, n: usize, seed: u64) -> Result<LatentBatch> {
    dirichlet_from(&mut ChaCha8Rng::seed_from_u64(seed), m, alpha, n)
}

/// Symmetric Dirichlet via normalized Gamma(alpha, 1) draws.
pub fn dirichlet_from<R: Rng + ?Sized>(
    rng: &mut R,
    m: usize,
    alpha: f64,
    n: usize,
) -> Result<LatentBatch> {
    check_count(m, n)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Dirichlet concentration must be positive, got {alpha}"
        )));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut samples = Array2::zeros((n, m));
    for mut row in samples.rows_mut() {
        let mut total = 0.0;
        for slot in row.iter_mut() {
            *slot = gamma.sample(rng);
            total += *slot;
        }
        if total > 0.0 {
            row.mapv_inplace(|v| v / total);
        } else {
            // Every gamma draw underflowed; pick a vertex uniformly.
            let hit = rng.random_range(0..m);
            row.fill(0.0);
            row[hit] = 1.0;
        }
    }
    Ok(LatentBatch {
        samples,
        distribution: LatentDistribution::Dirichlet,
    })
}

/// Unit-norm, strictly positive direction vectors and their R2 constant.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    directions: Vec<Vec<f64>>,
    c_m: f64,
    divisions: Option<usize>,
}

impl DirectionSet {
    /// Builds a set from arbitrary non-negative directions. Zero components
    /// are floored to [`DIRECTION_FLOOR`] and every vector rescaled to unit
    /// L2 norm.
    pub fn from_directions(directions: Vec<Vec<f64>>) -> Result<Self> {
        let m = directions.first().map_or(0, Vec::len);
        if m < 1 {
            return Err(Error::InvalidArgument("empty direction set".into()));
        }
        let mut out = Vec::with_capacity(directions.len());
        for dir in directions {
            if dir.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: dir.len(),
                });
            }
            if dir.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "direction components must be finite and non-negative: {dir:?}"
                )));
            }
            out.push(unit_floored(dir));
        }
        let c_m = r2_constant(m, out.len());
        Ok(DirectionSet {
            directions: out,
            c_m,
            divisions: None,
        })
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn n_obj(&self) -> usize {
        self.directions[0].len()
    }

    pub fn c_m(&self) -> f64 {
        self.c_m
    }

    /// Lattice divisions H, when built by [`das_dennis`].
    pub fn divisions(&self) -> Option<usize> {
        self.divisions
    }
}

fn unit_floored(mut dir: Vec<f64>) -> Vec<f64> {
    for v in dir.iter_mut() {
        if *v == 0.0 {
            *v = DIRECTION_FLOOR;
        }
    }
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v /= norm);
    dir
}

/// Γ(m/2) for positive integer m.
fn gamma_half(m: usize) -> f64 {
    let (mut x, mut g) = if m % 2 == 0 { (1.0, 1.0) } else { (0.5, PI.sqrt()) };
    let target = m as f64 / 2.0;
    while x < target {
        g *= x;
        x += 1.0;
    }
    g
}

/// c_m = π^{m/2} / (m |Λ| 2^{m-1} Γ(m/2)).
pub fn r2_constant(m: usize, n_directions: usize) -> f64 {
    PI.powf(m as f64 / 2.0)
        / (m as f64 * n_directions as f64 * 2f64.powi(m as i32 - 1) * gamma_half(m))
}

/// Binomial coefficient C(n, k).
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Smallest H whose lattice holds at least 100 directions.
pub fn default_divisions(m: usize) -> usize {
    let mut h = 1;
    while binomial(h + m - 1, m - 1) < 100 {
        h += 1;
    }
    h
}

/// Das–Dennis simplex-lattice directions with H divisions.
pub fn das_dennis(m: usize, h: usize) -> Result<DirectionSet> {
    if m < 2 || h < 1 {
        return Err(Error::InvalidArgument(format!(
            "Das–Dennis needs m >= 2 and H >= 1 (m = {m}, H = {h})"
        )));
    }
    let mut weights = Vec::with_capacity(binomial(h + m - 1, m - 1));
    let mut current = vec![0usize; m];
    lattice(&mut current, 0, h, &mut weights);
    let directions: Vec<Vec<f64>> = weights
        .into_iter()
        .map(|w| unit_floored(w.into_iter().map(|c| c as f64 / h as f64).collect()))
        .collect();
    let c_m = r2_constant(m, directions.len());
    Ok(DirectionSet {
        directions,
        c_m,
        divisions: Some(h),
    })
}

fn lattice(current: &mut Vec<usize>, pos: usize, left: usize, out: &mut Vec<Vec<usize>>) {
    if pos == current.len() - 1 {
        current[pos] = left;
        out.push(current.clone());
        return;
    }
    for take in (0..=left).rev() {
        current[pos] = take;
        lattice(current, pos + 1, left - take, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_mean_and_determinism() {
        let a = sample_gaussian(2, &[0.0, 0.0], 10_000, 3).unwrap();
        let b = sample_gaussian(2, &[0.0, 0.0], 10_000, 3).unwrap();
        assert_eq!(a, b);
        for j in 0..2 {
            let mean = a.samples.column(j).mean().unwrap();
            assert!(mean.abs() < 0.05, "coordinate {j} mean {mean}");
        }
        let c = sample_gaussian(1, &[5.0], 3, 0).unwrap();
        assert_eq!(c.samples.dim(), (3, 1));
        assert!(c.samples.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn samplers_reject_empty() {
        assert!(sample_gaussian(1, &[0.0], 0, 0).is_err());
        assert!(sample_gaussian(0, &[], 4, 0).is_err());
        assert!(sample_lhs(1, &[0.0], &[1.0], 0, 0).is_err());
        assert!(sample_lhs(1, &[1.0], &[1.0], 3, 0).is_err());
        assert!(sample_dirichlet(3, 0.0, 3, 0).is_err());
        assert!(sample_dirichlet(3, -1.0, 3, 0).is_err());
    }

    fn one_per_stratum(batch: &LatentBatch, lower: &[f64], upper: &[f64]) -> bool {
        let n = batch.len();
        (0..batch.dim()).all(|j| {
            let mut seen = vec![false; n];
            for &v in batch.samples.column(j) {
                let s = (((v - lower[j]) / (upper[j] - lower[j])) * n as f64).floor() as usize;
                let s = s.min(n - 1);
                if seen[s] {
                    return false;
                }
                seen[s] = true;
            }
            seen.iter().all(|&b| b)
        })
    }

    #[test]
    fn lhs_hits_every_stratum() {
        let b = sample_lhs(1, &[0.0], &[1.0], 4, 9).unwrap();
        assert!(one_per_stratum(&b, &[0.0], &[1.0]));
        let lo = [0.0, -1.0, 10.0];
        let hi = [1.0, 1.0, 20.0];
        let b = sample_lhs(3, &lo, &hi, 32, 1).unwrap();
        assert!(one_per_stratum(&b, &lo, &hi));
        assert_eq!(b, sample_lhs(3, &lo, &hi, 32, 1).unwrap());
    }

    #[test]
    fn dirichlet_on_simplex() {
        let b = sample_dirichlet(3, 1.0, 5, 2).unwrap();
        assert_eq!(b.samples.dim(), (5, 3));
        for row in b.samples.rows() {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
        let b = sample_dirichlet(2, 1.0, 10_000, 4).unwrap();
        let mean = b.samples.column(0).mean().unwrap();
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
        // Tiny concentrations still land on the simplex.
        let b = sample_dirichlet(4, 1e-3, 50, 4).unwrap();
        for row in b.samples.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn das_dennis_two_objectives() {
        let set = das_dennis(2, 4).unwrap();
        assert_eq!(set.len(), 5);
        let expected = [(1.0, 0.0), (0.75, 0.25), (0.5, 0.5), (0.25, 0.75), (0.0, 1.0)];
        for (dir, (a, b)) in set.directions().iter().zip(expected) {
            let w = unit_floored(vec![a, b]);
            assert!((dir[0] - w[0]).abs() < 1e-15 && (dir[1] - w[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn das_dennis_counts_and_norms() {
        assert_eq!(das_dennis(3, 2).unwrap().len(), 6);
        for m in 2..=5 {
            for h in 1..=8 {
                let set = das_dennis(m, h).unwrap();
                assert_eq!(set.len(), binomial(h + m - 1, m - 1));
                for dir in set.directions() {
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                    assert!((norm - 1.0).abs() < 1e-12);
                    assert!(dir.iter().all(|&v| v > 0.0));
                }
            }
        }
        assert!(das_dennis(1, 3).is_err());
        assert!(das_dennis(3, 0).is_err());
    }

    #[test]
    fn r2_constant_values() {
        assert!((r2_constant(2, 1) - PI / 4.0).abs() < 1e-15);
        // m = 3: π^{3/2} / (3 · 4 · Γ(3/2)) with Γ(3/2) = √π / 2.
        assert!((r2_constant(3, 1) - PI / 6.0).abs() < 1e-15);
        assert!((gamma_half(5) - 0.75 * PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn default_lattice_sizes() {
        assert_eq!(default_divisions(2), 99);
        assert_eq!(default_divisions(3), 13);
        assert_eq!(das_dennis(3, 13).unwrap().len(), 105);
    }
}
