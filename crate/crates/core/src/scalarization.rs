//! Preference-based scalarizations used by the PSL baselines.
//!
//! Every function returns the scalar together with a subgradient with
//! respect to the objective vector. Ties in max/min resolve to the lowest
//! index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to preference components that appear in a denominator.
pub const PREFERENCE_FLOOR: f64 = 1e-6;

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Preference(Vec<f64>);

impl Preference {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let sum: f64 = p.iter().sum();
        if p.is_empty() || p.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "preference must be non-negative and sum to 1, got {p:?}"
            )));
        }
        Ok(Preference(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// The preference rescaled to unit L2 norm, zero entries floored first.
    pub fn direction(&self) -> Vec<f64> {
        let floored: Vec<f64> = self.0.iter().map(|v| v.max(PREFERENCE_FLOOR)).collect();
        let norm = floored.iter().map(|v| v * v).sum::<f64>().sqrt();
        floored.into_iter().map(|v| v / norm).collect()
    }
}

/// Running componentwise minimum of observed objectives, shifted by epsilon
/// when used as the Tchebycheff utopia point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealPoint {
    pub z: Vec<f64>,
    pub epsilon: f64,
}

impl IdealPoint {
    pub const DEFAULT_EPSILON: f64 = 0.1;

    pub fn new(z: Vec<f64>, epsilon: f64) -> Self {
        IdealPoint { z, epsilon }
    }

    /// Seeds z with the componentwise minimum of a batch.
    pub fn from_batch(ys: &[Vec<f64>], epsilon: f64) -> Self {
        let m = ys.first().map_or(0, Vec::len);
        let mut ideal = IdealPoint::new(vec![f64::INFINITY; m], epsilon);
        ideal.update(ys);
        ideal
    }

    pub fn update(&mut self, ys: &[Vec<f64>]) {
        for y in ys {
            for (z, v) in self.z.iter_mut().zip(y) {
                if *v < *z {
                    *z = *v;
                }
            }
        }
    }

    fn shifted(&self, i: usize) -> f64 {
        self.z[i] - self.epsilon
    }
}

/// A scalar and its subgradient with respect to f.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalarized {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) })
}

fn argmin(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) })
}

/// Σ p_i f_i.
pub fn weighted_sum(f: &[f64], p: &[f64]) -> Scalarized {
    Scalarized {
        value: f.iter().zip(p).map(|(a, b)| a * b).sum(),
        grad: p.to_vec(),
    }
}

/// max_i p_i (f_i - (z_i - ε)).
pub fn tchebycheff(f: &[f64], p: &[f64], ideal: &IdealPoint) -> Scalarized {
    let (i, value) = argmax((0..f.len()).map(|i| p[i] * (f[i] - ideal.shifted(i))));
    let mut grad = vec![0.0; f.len()];
    grad[i] = p[i];
    Scalarized { value, grad }
}

/// max_i (f_i - (z_i - ε)) / p_i, with p_i floored at 1e-6.
pub fn modified_tchebycheff(f: &[f64], p: &[f64], ideal: &IdealPoint) -> Scalarized {
    let w = |i: usize| p[i].max(PREFERENCE_FLOOR);
    let (i, value) = argmax((0..f.len()).map(|i| (f[i] - ideal.shifted(i)) / w(i)));
    let mut grad = vec![0.0; f.len()];
    grad[i] = 1.0 / w(i);
    Scalarized { value, grad }
}

/// Σ p_i f_i - γ cos(p, f). The cosine term is dropped when f = 0.
pub fn cosmos(f: &[f64], p: &[f64], gamma: f64) -> Scalarized {
    let mut out = weighted_sum(f, p);
    let f_norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    if f_norm == 0.0 || p_norm == 0.0 || gamma == 0.0 {
        return out;
    }
    let dot: f64 = f.iter().zip(p).map(|(a, b)| a * b).sum();
    let cos = dot / (f_norm * p_norm);
    out.value -= gamma * cos;
    for (g, (fi, pi)) in out.grad.iter_mut().zip(f.iter().zip(p)) {
        let dcos = pi / (p_norm * f_norm) - dot * fi / (p_norm * f_norm.powi(3));
        *g -= gamma * dcos;
    }
    out
}

/// The projected distance s = min_i (r_i - f_i) / λ_i used by PSL-HV.
#[derive(Debug, Clone, PartialEq)]
pub struct HvScalar {
    pub s: f64,
    /// ∂s/∂f.
    pub grad: Vec<f64>,
    /// Set when f does not strictly dominate r.
    pub outside: bool,
}

impl HvScalar {
    /// Minimization form: loss −s with gradient −∂s/∂f.
    pub fn loss(&self) -> Scalarized {
        Scalarized {
            value: -self.s,
            grad: self.grad.iter().map(|g| -g).collect(),
        }
    }
}

/// Direction entries below 1e-6 are floored to 1e-6.
pub fn hv_scalarization(f: &[f64], direction: &[f64], r: &[f64]) -> HvScalar {
    let lam = |i: usize| direction[i].max(PREFERENCE_FLOOR);
    let (i, s) = argmin((0..f.len()).map(|i| (r[i] - f[i]) / lam(i)));
    let mut grad = vec![0.0; f.len()];
    grad[i] = -1.0 / lam(i);
    let outside = f.iter().zip(r).any(|(fi, ri)| fi >= ri);
    if outside {
        log::trace!("hv_scalarization: {f:?} does not dominate {r:?}");
    }
    HvScalar { s, grad, outside }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn zero_ideal(m: usize) -> IdealPoint {
        IdealPoint::new(vec![0.0; m], 0.0)
    }

    #[test]
    fn weighted_sum_cases() {
        let s = weighted_sum(&[2.0, 4.0], &[0.5, 0.5]);
        assert_eq!(s.value, 3.0);
        assert_eq!(s.grad, vec![0.5, 0.5]);
        assert_eq!(weighted_sum(&[7.0, 4.0], &[1.0, 0.0]).value, 7.0);
        assert_eq!(weighted_sum(&[0.0, 0.0], &[0.3, 0.7]).value, 0.0);
    }

    #[test]
    fn tchebycheff_cases() {
        let s = tchebycheff(&[2.0, 4.0], &[0.5, 0.5], &zero_ideal(2));
        assert_eq!((s.value, s.grad), (2.0, vec![0.0, 0.5]));
        let ideal = IdealPoint::new(vec![1.0, -1.0], 0.1);
        let s = tchebycheff(&[0.9, -1.1], &[0.2, 0.8], &ideal);
        assert!(s.value.abs() < 1e-15);
        let s = tchebycheff(&[1.0, 1.0], &[0.5, 0.5], &zero_ideal(2));
        assert_eq!((s.value, s.grad), (0.5, vec![0.5, 0.0]));
    }

    #[test]
    fn modified_tchebycheff_cases() {
        let s = modified_tchebycheff(&[2.0, 4.0], &[0.5, 0.5], &zero_ideal(2));
        assert_eq!((s.value, s.grad), (8.0, vec![0.0, 2.0]));
        let f = [0.3, 0.9, 0.4];
        let s = modified_tchebycheff(&f, &[1.0 / 3.0; 3], &zero_ideal(3));
        assert!((s.value - 3.0 * 0.9).abs() < 1e-12);
        let ideal = IdealPoint::new(vec![0.5, 0.5], 0.1);
        let s = modified_tchebycheff(&[0.4, 0.4], &[0.5, 0.5], &ideal);
        assert!(s.value.abs() < 1e-15);
    }

    #[test]
    fn cosmos_cases() {
        let p = [0.25, 0.75];
        let f = [0.5, 1.5];
        let s = cosmos(&f, &p, 1.0);
        assert!((s.value - (weighted_sum(&f, &p).value - 1.0)).abs() < 1e-12);
        let s0 = cosmos(&f, &p, 0.0);
        assert_eq!(s0, weighted_sum(&f, &p));
        let z = cosmos(&[0.0, 0.0], &p, 1.0);
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn hv_scalar_cases() {
        let h = hv_scalarization(&[0.0, 0.0], &[FRAC_1_SQRT_2, FRAC_1_SQRT_2], &[1.0, 1.0]);
        assert!((h.s - 2f64.sqrt()).abs() < 1e-12);
        assert!(!h.outside);
        let h = hv_scalarization(&[0.5, 0.0], &[1.0, 0.0], &[1.0, 1.0]);
        assert_eq!(h.s, 0.5);
        assert_eq!(h.grad, vec![-1.0, 0.0]);
        let h = hv_scalarization(&[1.5, 0.0], &[0.6, 0.8], &[1.0, 1.0]);
        assert!(h.outside && h.s < 0.0);
        assert_eq!(h.loss().value, -h.s);
    }

    #[test]
    fn ideal_point_is_running_min() {
        let mut ideal = IdealPoint::from_batch(&[vec![3.0, 1.0], vec![2.0, 5.0]], 0.1);
        assert_eq!(ideal.z, vec![2.0, 1.0]);
        ideal.update(&[vec![4.0, 0.5]]);
        assert_eq!(ideal.z, vec![2.0, 0.5]);
    }

    #[test]
    fn preference_validation() {
        assert!(Preference::new(vec![0.5, 0.5]).is_ok());
        assert!(Preference::new(vec![0.5, 0.6]).is_err());
        assert!(Preference::new(vec![-0.5, 1.5]).is_err());
        let d = Preference::new(vec![1.0, 0.0]).unwrap().direction();
        assert!((d.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
