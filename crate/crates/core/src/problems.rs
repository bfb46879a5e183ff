//! Multi-objective test problems and reference Pareto fronts.
//!
//! Every problem is minimized. Built-in problems carry hand-derived
//! Jacobians; user-registered problems fall back to central differences.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hv::nondominated_filter;

pub type ObjectiveVector = Vec<f64>;

/// Objective callback for user-registered problems.
pub type ObjectiveFn = Arc<dyn Fn(&[f64]) -> ObjectiveVector + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemId {
    Zdt3,
    Dtlz5,
    Dtlz7,
    FourBarTruss,
    DiscBrake,
}

impl ProblemId {
    pub const ALL: [ProblemId; 5] = [
        ProblemId::Zdt3,
        ProblemId::Dtlz5,
        ProblemId::Dtlz7,
        ProblemId::FourBarTruss,
        ProblemId::DiscBrake,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemId::Zdt3 => "zdt3",
            ProblemId::Dtlz5 => "dtlz5",
            ProblemId::Dtlz7 => "dtlz7",
            ProblemId::FourBarTruss => "four-bar-truss",
            ProblemId::DiscBrake => "disc-brake",
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zdt3" => Ok(ProblemId::Zdt3),
            "dtlz5" => Ok(ProblemId::Dtlz5),
            "dtlz7" => Ok(ProblemId::Dtlz7),
            "four-bar-truss" | "re21" => Ok(ProblemId::FourBarTruss),
            "disc-brake" | "re33" => Ok(ProblemId::DiscBrake),
            _ => Err(Error::InvalidArgument(format!(
                "unknown problem '{s}'; valid problems: {}",
                ProblemId::ALL.map(ProblemId::name).join(", ")
            ))),
        }
    }
}

#[derive(Clone)]
enum Kind {
    Builtin(ProblemId),
    Custom { name: String, objectives: ObjectiveFn },
}

/// An m-objective, d-variable box-constrained problem.
#[derive(Clone)]
pub struct Problem {
    kind: Kind,
    n_obj: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name())
            .field("n_obj", &self.n_obj)
            .field("n_var", &self.n_var())
            .finish()
    }
}

// Four Bar Truss constants.
const TRUSS_F: f64 = 10.0;
const TRUSS_SIGMA: f64 = 10.0;
const TRUSS_E: f64 = 2.0e5;
const TRUSS_L: f64 = 200.0;

// Below this the Disc Brake area term is treated as a signed epsilon.
const BRAKE_AREA_FLOOR: f64 = 1e-9;

impl Problem {
    pub fn new(id: ProblemId) -> Self {
        let (n_obj, lower, upper) = match id {
            ProblemId::Zdt3 => (2, vec![0.0; 30], vec![1.0; 30]),
            ProblemId::Dtlz5 => (3, vec![0.0; 12], vec![1.0; 12]),
            ProblemId::Dtlz7 => (3, vec![0.0; 22], vec![1.0; 22]),
            ProblemId::FourBarTruss => {
                let a = TRUSS_F / TRUSS_SIGMA;
                (2, vec![a, SQRT_2 * a, SQRT_2 * a, a], vec![3.0 * a; 4])
            }
            ProblemId::DiscBrake => (
                3,
                vec![55.0, 75.0, 1000.0, 11.0],
                vec![80.0, 110.0, 3000.0, 20.0],
            ),
        };
        Problem {
            kind: Kind::Builtin(id),
            n_obj,
            lower,
            upper,
        }
    }

    /// Registers a problem given only by its objective callback. Its Jacobian
    /// is estimated by central differences.
    pub fn custom(
        name: impl Into<String>,
        n_obj: usize,
        lower: Vec<f64>,
        upper: Vec<f64>,
        objectives: ObjectiveFn,
    ) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if n_obj < 1 || lower.is_empty() {
            return Err(Error::InvalidArgument(
                "a problem needs at least one objective and one variable".into(),
            ));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] < upper[i])) {
            return Err(Error::InvalidArgument(format!(
                "bound {i}: lower {} is not below upper {}",
                lower[i], upper[i]
            )));
        }
        Ok(Problem {
            kind: Kind::Custom {
                name: name.into(),
                objectives,
            },
            n_obj,
            lower,
            upper,
        })
    }

    pub fn id(&self) -> Option<ProblemId> {
        match self.kind {
            Kind::Builtin(id) => Some(id),
            Kind::Custom { .. } => None,
        }
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            Kind::Builtin(id) => id.name(),
            Kind::Custom { name, .. } => name,
        }
    }

    pub fn n_obj(&self) -> usize {
        self.n_obj
    }

    pub fn n_var(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Midpoint of the decision box.
    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn check_bounds(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_var() {
            return Err(Error::DimensionMismatch {
                expected: self.n_var(),
                found: x.len(),
            });
        }
        for (i, &xi) in x.iter().enumerate() {
            if !(xi >= self.lower[i] && xi <= self.upper[i]) {
                return Err(Error::OutOfBounds {
                    index: i,
                    value: xi,
                    lower: self.lower[i],
                    upper: self.upper[i],
                });
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<ObjectiveVector> {
        self.check_bounds(x)?;
        Ok(self.evaluate_unchecked(x))
    }

    fn evaluate_unchecked(&self, x: &[f64]) -> ObjectiveVector {
        match &self.kind {
            Kind::Builtin(ProblemId::Zdt3) => zdt3(x),
            Kind::Builtin(ProblemId::Dtlz5) => dtlz5(x, self.n_obj),
            Kind::Builtin(ProblemId::Dtlz7) => dtlz7(x, self.n_obj),
            Kind::Builtin(ProblemId::FourBarTruss) => four_bar_truss(x),
            Kind::Builtin(ProblemId::DiscBrake) => disc_brake(x),
            Kind::Custom { objectives, .. } => objectives(x),
        }
    }

    /// Returns the m×d matrix of partial derivatives ∂f_i/∂x_j.
    pub fn jacobian(&self, x: &[f64]) -> Result<Array2<f64>> {
        self.check_bounds(x)?;
        Ok(match &self.kind {
            Kind::Builtin(ProblemId::Zdt3) => zdt3_jacobian(x),
            Kind::Builtin(ProblemId::Dtlz5) => dtlz5_jacobian(x, self.n_obj),
            Kind::Builtin(ProblemId::Dtlz7) => dtlz7_jacobian(x, self.n_obj),
            Kind::Builtin(ProblemId::FourBarTruss) => four_bar_truss_jacobian(x),
            Kind::Builtin(ProblemId::DiscBrake) => disc_brake_jacobian(x),
            Kind::Custom { .. } => self.finite_difference_jacobian_unchecked(x),
        })
    }

    /// Central differences with step `1e-6 * (ub - lb)`, one-sided at a bound.
    pub fn finite_difference_jacobian(&self, x: &[f64]) -> Result<Array2<f64>> {
        self.check_bounds(x)?;
        Ok(self.finite_difference_jacobian_unchecked(x))
    }

    fn finite_difference_jacobian_unchecked(&self, x: &[f64]) -> Array2<f64> {
        let mut jac = Array2::zeros((self.n_obj, self.n_var()));
        let mut probe = x.to_vec();
        for j in 0..self.n_var() {
            let h = 1e-6 * (self.upper[j] - self.lower[j]);
            let hi = (x[j] + h).min(self.upper[j]);
            let lo = (x[j] - h).max(self.lower[j]);
            probe[j] = hi;
            let f_hi = self.evaluate_unchecked(&probe);
            probe[j] = lo;
            let f_lo = self.evaluate_unchecked(&probe);
            probe[j] = x[j];
            for i in 0..self.n_obj {
                jac[[i, j]] = (f_hi[i] - f_lo[i]) / (hi - lo);
            }
        }
        jac
    }

    /// The analytic front at the density used for evaluation: 10001 samples
    /// along ZDT3 and DTLZ5, a 201 × 201 grid for DTLZ7.
    pub fn reference_front(&self) -> Option<ParetoFrontData> {
        match self.id()? {
            ProblemId::Dtlz7 => self.analytic_front(201),
            _ => self.analytic_front(10_001),
        }
    }

    /// Densely sampled closed-form Pareto front, where one is known.
    ///
    /// `resolution` is the number of samples per free front coordinate.
    pub fn analytic_front(&self, resolution: usize) -> Option<ParetoFrontData> {
        let id = self.id()?;
        let resolution = resolution.max(2);
        let grid = |i: usize| i as f64 / (resolution - 1) as f64;
        let raw: Vec<ObjectiveVector> = match id {
            ProblemId::Zdt3 => (0..resolution)
                .map(|i| {
                    let f1 = grid(i);
                    vec![f1, 1.0 - f1.sqrt() - f1 * (10.0 * PI * f1).sin()]
                })
                .collect(),
            ProblemId::Dtlz5 => (0..resolution)
                .map(|i| {
                    let t1 = grid(i) * FRAC_PI_2;
                    let t2 = PI / 4.0;
                    vec![t1.cos() * t2.cos(), t1.cos() * t2.sin(), t1.sin()]
                })
                .collect(),
            ProblemId::Dtlz7 => {
                let mut pts = Vec::with_capacity(resolution * resolution);
                for i in 0..resolution {
                    for j in 0..resolution {
                        let (a, b) = (grid(i), grid(j));
                        let h = 3.0
                            - a / 2.0 * (1.0 + (3.0 * PI * a).sin())
                            - b / 2.0 * (1.0 + (3.0 * PI * b).sin());
                        pts.push(vec![a, b, 2.0 * h]);
                    }
                }
                pts
            }
            ProblemId::FourBarTruss | ProblemId::DiscBrake => return None,
        };
        let mut points = nondominated_filter(&raw).ok()?;
        sort_lexicographic(&mut points);
        Some(ParetoFrontData {
            points,
            source: FrontSource::Analytic,
        })
    }
}

fn zdt3(x: &[f64]) -> ObjectiveVector {
    let n = x.len();
    let f1 = x[0];
    let g = 1.0 + 9.0 / (n - 1) as f64 * x[1..].iter().sum::<f64>();
    let f2 = g - (f1 * g).sqrt() - f1 * (10.0 * PI * f1).sin();
    vec![f1, f2]
}

// f2 = g - sqrt(f1 g) - f1 sin(10 pi f1). At f1 = 0 the sqrt term has an
// unbounded one-sided derivative; the subgradient used there is 0.
fn zdt3_jacobian(x: &[f64]) -> Array2<f64> {
    let n = x.len();
    let f1 = x[0];
    let g = 1.0 + 9.0 / (n - 1) as f64 * x[1..].iter().sum::<f64>();
    let mut jac = Array2::zeros((2, n));
    jac[[0, 0]] = 1.0;
    let w = 10.0 * PI;
    let sqrt_term = if f1 > 0.0 { 0.5 * (g / f1).sqrt() } else { 0.0 };
    jac[[1, 0]] = -sqrt_term - (w * f1).sin() - w * f1 * (w * f1).cos();
    let dg = 9.0 / (n - 1) as f64;
    let df2_dg = 1.0 - 0.5 * (f1 / g).sqrt();
    for j in 1..n {
        jac[[1, j]] = df2_dg * dg;
    }
    jac
}

/// DTLZ5 angles in units of pi/2, plus g.
fn dtlz5_angles(x: &[f64], m: usize) -> (Vec<f64>, f64) {
    let g: f64 = x[m - 1..].iter().map(|v| (v - 0.5).powi(2)).sum();
    let mut theta = Vec::with_capacity(m - 1);
    theta.push(x[0]);
    for &xi in &x[1..m - 1] {
        theta.push((1.0 + 2.0 * g * xi) / (2.0 * (1.0 + g)));
    }
    (theta, g)
}

fn dtlz_spherical(theta: &[f64], g: f64, m: usize) -> ObjectiveVector {
    (0..m)
        .map(|i| {
            let mut f = 1.0 + g;
            for t in &theta[..m - 1 - i] {
                f *= (t * FRAC_PI_2).cos();
            }
            if i > 0 {
                f *= (theta[m - 1 - i] * FRAC_PI_2).sin();
            }
            f
        })
        .collect()
}

fn dtlz5(x: &[f64], m: usize) -> ObjectiveVector {
    let (theta, g) = dtlz5_angles(x, m);
    dtlz_spherical(&theta, g, m)
}

fn dtlz5_jacobian(x: &[f64], m: usize) -> Array2<f64> {
    let d = x.len();
    let (theta, g) = dtlz5_angles(x, m);
    let f = dtlz_spherical(&theta, g, m);

    // Derivatives of each theta_k (in units of pi/2) w.r.t. x_j and g.
    // theta_0 = x_0; theta_k = (1 + 2 g x_k) / (2 (1 + g)) for k >= 1.
    let dtheta_dg: Vec<f64> = (0..m - 1)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                (2.0 * x[k] - 1.0) / (2.0 * (1.0 + g).powi(2))
            }
        })
        .collect();
    let dtheta_dxk: Vec<f64> = (0..m - 1)
        .map(|k| if k == 0 { 1.0 } else { g / (1.0 + g) })
        .collect();

    // df_i/dtheta_k (theta in pi/2 units). f_i is (1 + g) times a product of
    // one trigonometric factor per angle it touches: cos for k < m-1-i, and
    // sin for k = m-1-i when i > 0.
    let mut df_dtheta = vec![vec![0.0; m - 1]; m];
    for (i, row) in df_dtheta.iter_mut().enumerate() {
        let n_cos = m - 1 - i;
        let touches = |k: usize| k < n_cos || (i > 0 && k == n_cos);
        let factor = |k: usize| {
            let ang = theta[k] * FRAC_PI_2;
            if k < n_cos {
                ang.cos()
            } else {
                ang.sin()
            }
        };
        let dfactor = |k: usize| {
            let ang = theta[k] * FRAC_PI_2;
            if k < n_cos {
                -ang.sin() * FRAC_PI_2
            } else {
                ang.cos() * FRAC_PI_2
            }
        };
        for (k, slot) in row.iter_mut().enumerate() {
            if !touches(k) {
                continue;
            }
            *slot = (0..m - 1)
                .filter(|&t| touches(t))
                .map(|t| if t == k { dfactor(t) } else { factor(t) })
                .product::<f64>()
                * (1.0 + g);
        }
    }

    let mut jac = Array2::zeros((m, d));
    for i in 0..m {
        // Position variables.
        for k in 0..m - 1 {
            jac[[i, k]] = df_dtheta[i][k] * dtheta_dxk[k];
        }
        // Distance variables act through g: directly via (1 + g) and through theta.
        let df_dg_direct = f[i] / (1.0 + g);
        let df_dg_theta: f64 = (0..m - 1).map(|k| df_dtheta[i][k] * dtheta_dg[k]).sum();
        let df_dg = df_dg_direct + df_dg_theta;
        for j in m - 1..d {
            jac[[i, j]] = df_dg * 2.0 * (x[j] - 0.5);
        }
    }
    jac
}

fn dtlz7(x: &[f64], m: usize) -> ObjectiveVector {
    let k = x.len() - m + 1;
    let g = 1.0 + 9.0 / k as f64 * x[m - 1..].iter().sum::<f64>();
    let mut f: Vec<f64> = x[..m - 1].to_vec();
    let h = m as f64
        - f.iter()
            .map(|fi| fi / (1.0 + g) * (1.0 + (3.0 * PI * fi).sin()))
            .sum::<f64>();
    f.push((1.0 + g) * h);
    f
}

// f_m = (1 + g) m - sum_i f_i (1 + sin(3 pi f_i)).
fn dtlz7_jacobian(x: &[f64], m: usize) -> Array2<f64> {
    let d = x.len();
    let k = d - m + 1;
    let mut jac = Array2::zeros((m, d));
    let w = 3.0 * PI;
    for i in 0..m - 1 {
        jac[[i, i]] = 1.0;
        let xi = x[i];
        jac[[m - 1, i]] = -(1.0 + (w * xi).sin() + w * xi * (w * xi).cos());
    }
    for j in m - 1..d {
        jac[[m - 1, j]] = 9.0 / k as f64 * m as f64;
    }
    jac
}

fn four_bar_truss(x: &[f64]) -> ObjectiveVector {
    let f1 = TRUSS_L * (2.0 * x[0] + SQRT_2 * x[1] + x[2].sqrt() + x[3]);
    let f2 = TRUSS_F * TRUSS_L / TRUSS_E
        * (2.0 / x[0] + 2.0 * SQRT_2 / x[1] - 2.0 * SQRT_2 / x[2] + 2.0 / x[3]);
    vec![f1, f2]
}

fn four_bar_truss_jacobian(x: &[f64]) -> Array2<f64> {
    let c = TRUSS_F * TRUSS_L / TRUSS_E;
    let mut jac = Array2::zeros((2, 4));
    jac[[0, 0]] = 2.0 * TRUSS_L;
    jac[[0, 1]] = SQRT_2 * TRUSS_L;
    jac[[0, 2]] = TRUSS_L * 0.5 / x[2].sqrt();
    jac[[0, 3]] = TRUSS_L;
    jac[[1, 0]] = -c * 2.0 / (x[0] * x[0]);
    jac[[1, 1]] = -c * 2.0 * SQRT_2 / (x[1] * x[1]);
    jac[[1, 2]] = c * 2.0 * SQRT_2 / (x[2] * x[2]);
    jac[[1, 3]] = -c * 2.0 / (x[3] * x[3]);
    jac
}

/// Signed area term x2² - x1², kept away from zero.
fn brake_area(x1: f64, x2: f64) -> f64 {
    let a = x2 * x2 - x1 * x1;
    if a.abs() < BRAKE_AREA_FLOOR {
        BRAKE_AREA_FLOOR.copysign(a)
    } else {
        a
    }
}

/// Disc Brake constraint functions c_k; c_k <= 0 is feasible.
fn brake_constraints(x: &[f64]) -> [f64; 4] {
    let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
    let a = brake_area(x1, x2);
    let b = x2.powi(3) - x1.powi(3);
    [
        20.0 - (x2 - x1),
        x3 / (3.14 * a) - 0.4,
        2.22e-3 * x3 * b / (a * a) - 1.0,
        900.0 - 2.66e-2 * x3 * x4 * b / a,
    ]
}

fn disc_brake(x: &[f64]) -> ObjectiveVector {
    let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
    let f1 = 4.9e-5 * (x2 * x2 - x1 * x1) * (x4 - 1.0);
    // (x2² - x1²) / (x2³ - x1³) reduced so x1 == x2 stays finite.
    let f2 = 9.82e6 * (x1 + x2) / (x3 * x4 * (x1 * x1 + x1 * x2 + x2 * x2));
    let f3 = brake_constraints(x).iter().map(|c| c.max(0.0)).sum();
    vec![f1, f2, f3]
}

fn disc_brake_jacobian(x: &[f64]) -> Array2<f64> {
    let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
    let mut jac = Array2::zeros((3, 4));

    jac[[0, 0]] = 4.9e-5 * (-2.0 * x1) * (x4 - 1.0);
    jac[[0, 1]] = 4.9e-5 * (2.0 * x2) * (x4 - 1.0);
    jac[[0, 3]] = 4.9e-5 * (x2 * x2 - x1 * x1);

    let q = x1 * x1 + x1 * x2 + x2 * x2;
    let p = x1 + x2;
    let k = 9.82e6 / (x3 * x4);
    jac[[1, 0]] = k * (q - p * (2.0 * x1 + x2)) / (q * q);
    jac[[1, 1]] = k * (q - p * (x1 + 2.0 * x2)) / (q * q);
    let f2 = k * p / q;
    jac[[1, 2]] = -f2 / x3;
    jac[[1, 3]] = -f2 / x4;

    // Violation sum; inactive or exactly-active constraints contribute 0.
    let c = brake_constraints(x);
    let a = brake_area(x1, x2);
    let b = x2.powi(3) - x1.powi(3);
    let da = [-2.0 * x1, 2.0 * x2];
    let db = [-3.0 * x1 * x1, 3.0 * x2 * x2];
    let mut grads = [[0.0; 4]; 4];
    grads[0] = [1.0, -1.0, 0.0, 0.0];
    for v in 0..2 {
        grads[1][v] = -x3 / (3.14 * a * a) * da[v];
        grads[2][v] = 2.22e-3 * x3 * (db[v] / (a * a) - 2.0 * b * da[v] / (a * a * a));
        grads[3][v] = -2.66e-2 * x3 * x4 * (db[v] / a - b * da[v] / (a * a));
    }
    grads[1][2] = 1.0 / (3.14 * a);
    grads[2][2] = 2.22e-3 * b / (a * a);
    grads[3][2] = -2.66e-2 * x4 * b / a;
    grads[3][3] = -2.66e-2 * x3 * b / a;
    for (ck, gk) in c.iter().zip(&grads) {
        if *ck > 0.0 {
            for v in 0..4 {
                jac[[2, v]] += gk[v];
            }
        }
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontSource {
    Analytic,
    File,
}

/// A mutually non-dominated set of objective vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFrontData {
    pub points: Vec<ObjectiveVector>,
    pub source: FrontSource,
}

impl ParetoFrontData {
    pub fn n_obj(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Componentwise minimum and maximum over the front.
    pub fn extremes(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.n_obj();
        let mut lo = vec![f64::INFINITY; m];
        let mut hi = vec![f64::NEG_INFINITY; m];
        for p in &self.points {
            for i in 0..m {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        (lo, hi)
    }
}

fn sort_lexicographic(points: &mut [ObjectiveVector]) {
    points.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
}

/// Reads a reference front: one point per row, values separated by
/// whitespace and/or commas, `#` starts a comment line.
pub fn load_reference_front(path: impl AsRef<Path>) -> Result<ParetoFrontData> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_reference_front(&text, path)
}

pub fn parse_reference_front(text: &str, origin: &Path) -> Result<ParetoFrontData> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(origin),
        line,
        message,
    };
    let mut raw: Vec<ObjectiveVector> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|tok| !tok.is_empty())
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line_no, format!("'{tok}' is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = raw.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    line_no,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        raw.push(row);
    }
    if raw.is_empty() {
        return Err(Error::EmptyFront(PathBuf::from(origin)));
    }
    let mut points = nondominated_filter(&raw)?;
    sort_lexicographic(&mut points);
    Ok(ParetoFrontData {
        points,
        source: FrontSource::File,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn zdt3_at_origin() {
        let p = Problem::new(ProblemId::Zdt3);
        let f = p.evaluate(&vec![0.0; 30]).unwrap();
        assert!(close(f[0], 0.0) && close(f[1], 1.0), "{f:?}");
    }

    #[test]
    fn dtlz7_at_origin() {
        let p = Problem::new(ProblemId::Dtlz7);
        let f = p.evaluate(&vec![0.0; 22]).unwrap();
        assert_eq!(f.len(), 3);
        assert!(close(f[0], 0.0) && close(f[1], 0.0) && close(f[2], 6.0), "{f:?}");
    }

    #[test]
    fn dtlz5_at_center() {
        let p = Problem::new(ProblemId::Dtlz5);
        let f = p.evaluate(&vec![0.5; 12]).unwrap();
        assert!(close(f[0], 0.5) && close(f[1], 0.5), "{f:?}");
        assert!(close(f[2], SQRT_2 / 2.0), "{f:?}");
    }

    #[test]
    fn out_of_bounds_names_index() {
        let p = Problem::new(ProblemId::Zdt3);
        let mut x = vec![0.5; 30];
        x[7] = 1.5;
        match p.evaluate(&x) {
            Err(Error::OutOfBounds { index, .. }) => assert_eq!(index, 7),
            other => panic!("expected out-of-bounds, got {other:?}"),
        }
        assert!(matches!(
            p.evaluate(&[0.5; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zdt3_first_row_is_unit() {
        let p = Problem::new(ProblemId::Zdt3);
        let mut x = vec![0.0; 30];
        x[0] = 0.5;
        let jac = p.jacobian(&x).unwrap();
        assert_eq!(jac[[0, 0]], 1.0);
        assert!((1..30).all(|j| jac[[0, j]] == 0.0));
    }

    #[test]
    fn dtlz5_last_objective_ignores_tail_at_center() {
        let p = Problem::new(ProblemId::Dtlz5);
        let x = vec![0.5; 12];
        let jac = p.jacobian(&x).unwrap();
        let fd = p.finite_difference_jacobian(&x).unwrap();
        for j in 1..12 {
            assert_eq!(jac[[2, j]], 0.0);
            assert!(fd[[2, j]].abs() < 1e-8);
        }
    }

    fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let diff: f64 = (a - b).iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = a
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(b.iter().map(|v| v * v).sum::<f64>().sqrt());
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for id in ProblemId::ALL {
            let p = Problem::new(id);
            let mut checked = 0;
            while checked < 100 {
                // Interior points, 1% away from every bound.
                let x: Vec<f64> = (0..p.n_var())
                    .map(|j| {
                        let t = rng.random_range(0.01..0.99);
                        p.lower()[j] + t * (p.upper()[j] - p.lower()[j])
                    })
                    .collect();
                if id == ProblemId::DiscBrake {
                    // Skip points within a relative margin of a constraint kink.
                    let c = brake_constraints(&x);
                    if c.iter().any(|ck| ck.abs() < 1e-3 * (1.0 + ck.abs()))
                        || (x[1] - x[0]).abs() < 1.0
                    {
                        continue;
                    }
                }
                let jac = p.jacobian(&x).unwrap();
                let fd = p.finite_difference_jacobian(&x).unwrap();
                let err = rel_err(&jac, &fd);
                assert!(err <= 1e-4, "{id}: relative error {err} at {x:?}");
                checked += 1;
            }
        }
    }

    #[test]
    fn disc_brake_stays_finite_on_equal_radii() {
        let p = Problem::new(ProblemId::DiscBrake);
        let f = p.evaluate(&[78.0, 78.0, 2000.0, 15.0]).unwrap();
        assert!(f.iter().all(|v| v.is_finite()), "{f:?}");
    }

    #[test]
    fn custom_problem_uses_finite_differences() {
        let f: ObjectiveFn = Arc::new(|x: &[f64]| vec![x[0] * x[0], (x[0] - 1.0).powi(2) + x[1]]);
        let p = Problem::custom("toy", 2, vec![-1.0, 0.0], vec![2.0, 1.0], f).unwrap();
        let jac = p.jacobian(&[0.5, 0.5]).unwrap();
        assert!((jac[[0, 0]] - 1.0).abs() < 1e-6);
        assert!((jac[[1, 0]] + 1.0).abs() < 1e-6);
        assert!((jac[[1, 1]] - 1.0).abs() < 1e-6);
        // One-sided at the boundary.
        let jac = p.jacobian(&[2.0, 0.0]).unwrap();
        assert!((jac[[0, 0]] - 4.0).abs() < 1e-4);
    }

    #[test]
    fn zdt3_front_samples_are_mutually_nondominated() {
        let front = Problem::new(ProblemId::Zdt3).analytic_front(2000).unwrap();
        assert!(front.points.len() > 100);
        for a in &front.points {
            for b in &front.points {
                assert!(!crate::hv::dominates(a, b));
            }
        }
    }

    #[test]
    fn front_file_keeps_mutually_nondominated_rows() {
        let f = parse_reference_front("1 2\n2 1\n", Path::new("t")).unwrap();
        assert_eq!(f.points.len(), 2);
        let f = parse_reference_front("# header\n2,2\n1, 1\n", Path::new("t")).unwrap();
        assert_eq!(f.points, vec![vec![1.0, 1.0]]);
        assert_eq!(f.source, FrontSource::File);
    }

    #[test]
    fn front_file_errors() {
        match parse_reference_front("1 2 x\n", Path::new("t")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        match parse_reference_front("1 2\n1 2 3\n", Path::new("t")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_reference_front("# nothing\n\n", Path::new("t")),
            Err(Error::EmptyFront(_))
        ));
    }

    #[test]
    fn front_rows_sorted() {
        let f = parse_reference_front("3 0\n0 3\n1 1\n", Path::new("t")).unwrap();
        assert_eq!(f.points, vec![vec![0.0, 3.0], vec![1.0, 1.0], vec![3.0, 0.0]]);
    }

    #[test]
    fn problem_names_parse() {
        for id in ProblemId::ALL {
            assert_eq!(id.name().parse::<ProblemId>().unwrap(), id);
        }
        let err = "nope".parse::<ProblemId>().unwrap_err().to_string();
        assert!(err.contains("zdt3") && err.contains("disc-brake"));
    }
}
