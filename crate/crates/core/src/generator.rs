//! Drivers `g(t, ω, y, z)` and node-indexed input processes.
//!
//! A driver is evaluated on the interval `(t_k, t_{k+1}]` at the step-`k`
//! node, so it is adapted by construction. Every driver carries Lipschitz
//! constants `(L_y, L_z)`; [`probe_lipschitz`] falsifies wrong declarations.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::AdaptedProcess;
use crate::seed::RandomSeed;
use crate::tree::ScenarioTree;

/// Number of random probes used by [`probe_lipschitz`].
pub const LIPSCHITZ_PROBES: usize = 64;

/// Absolute slack of the Lipschitz probe.
pub const LIPSCHITZ_SLACK: f64 = 1e-9;

/// A process given by a formula in `(t, W_t, revealed labels)` or a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    Constant {
        value: f64,
    },
    /// `constant + time·t + brownian·W_t + Σ_r reveal[r][label_r]`.
    Linear {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        time: f64,
        #[serde(default)]
        brownian: Vec<f64>,
        #[serde(default)]
        reveal: Vec<Vec<f64>>,
    },
    /// `scale·exp(sigma·W¹_t + drift·t)`.
    Exp {
        #[serde(default = "one")]
        scale: f64,
        sigma: f64,
        #[serde(default)]
        drift: f64,
    },
    /// `scale·(W¹_t − strike)⁺` for a call, `scale·(strike − W¹_t)⁺` for a put.
    Payoff {
        strike: f64,
        #[serde(default = "yes")]
        call: bool,
        #[serde(default = "one")]
        scale: f64,
    },
    /// One value per node id.
    Table {
        values: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl ProcessSpec {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn materialize(&self, tree: &ScenarioTree) -> Result<AdaptedProcess> {
        match self {
            Self::Constant { value } => Ok(AdaptedProcess::constant(tree, *value)),
            Self::Linear {
                constant,
                time,
                brownian,
                reveal,
            } => {
                if brownian.len() > tree.dim() {
                    return Err(Error::Config(format!(
                        "linear process has {} Brownian loadings for d = {}",
                        brownian.len(),
                        tree.dim()
                    )));
                }
                if reveal.len() > tree.reveals().len() {
                    return Err(Error::Config(format!(
                        "linear process has {} reveal tables but the tree has {} reveals",
                        reveal.len(),
                        tree.reveals().len()
                    )));
                }
                for (r, table) in reveal.iter().enumerate() {
                    if table.len() != tree.reveals()[r].alphabet.len() {
                        return Err(Error::Config(format!(
                            "reveal table {r} has {} entries, alphabet has {}",
                            table.len(),
                            tree.reveals()[r].alphabet.len()
                        )));
                    }
                }
                Ok(AdaptedProcess::from_fn(tree, |n| {
                    let w = tree.w(n);
                    let mut v = constant + time * tree.time_of(n);
                    v += brownian.iter().zip(w).map(|(b, x)| b * x).sum::<f64>();
                    if !reveal.is_empty() {
                        for (r, label) in tree.revealed_labels(n).into_iter().enumerate().take(reveal.len()) {
                            if let Some(l) = label {
                                v += reveal[r][l];
                            }
                        }
                    }
                    v
                }))
            }
            Self::Exp { scale, sigma, drift } => Ok(AdaptedProcess::from_fn(tree, |n| {
                scale * (sigma * tree.w(n)[0] + drift * tree.time_of(n)).exp()
            })),
            Self::Payoff { strike, call, scale } => Ok(AdaptedProcess::from_fn(tree, |n| {
                let w = tree.w(n)[0];
                scale * if *call { (w - strike).max(0.0) } else { (strike - w).max(0.0) }
            })),
            Self::Table { values } => AdaptedProcess::from_values(tree, values.clone()),
        }
    }
}

/// A driver with declared Lipschitz constants.
pub trait Generator: Send + Sync + fmt::Debug {
    /// `g` on the interval following the step-`k` node `node`.
    fn eval(&self, node: usize, y: f64, z: &[f64]) -> f64;

    /// Declared `(L_y, L_z)`.
    fn lipschitz(&self) -> (f64, f64);

    /// `g(·, 0, 0)` at `node`.
    fn g0(&self, node: usize) -> f64 {
        self.eval(node, 0.0, &[0.0; 16])
    }

    /// True when `g` does not depend on `(y, z)`.
    fn is_constant_in_yz(&self) -> bool {
        false
    }
}

/// `g = g0 + λ y + η·z` with adapted coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGenerator {
    pub g0: AdaptedProcess,
    pub lambda: AdaptedProcess,
    /// Flattened `node × d` loadings.
    pub eta: Vec<f64>,
    pub dim: usize,
}

impl AffineGenerator {
    pub fn new(tree: &ScenarioTree, g0: AdaptedProcess, lambda: AdaptedProcess, eta: Vec<f64>) -> Result<Self> {
        if g0.len() != tree.node_count() || lambda.len() != tree.node_count() {
            return Err(Error::TreeMismatch);
        }
        if eta.len() != tree.node_count() * tree.dim() {
            return Err(Error::LengthMismatch {
                expected: tree.node_count() * tree.dim(),
                found: eta.len(),
            });
        }
        Ok(Self {
            g0,
            lambda,
            eta,
            dim: tree.dim(),
        })
    }

    /// Constant coefficients.
    pub fn constant(tree: &ScenarioTree, g0: f64, lambda: f64, eta: &[f64]) -> Result<Self> {
        if eta.len() != tree.dim() {
            return Err(Error::LengthMismatch {
                expected: tree.dim(),
                found: eta.len(),
            });
        }
        let flat = (0..tree.node_count()).flat_map(|_| eta.iter().copied()).collect();
        Self::new(
            tree,
            AdaptedProcess::constant(tree, g0),
            AdaptedProcess::constant(tree, lambda),
            flat,
        )
    }

    pub fn eta_at(&self, node: usize) -> &[f64] {
        &self.eta[node * self.dim..(node + 1) * self.dim]
    }
}

impl Generator for AffineGenerator {
    fn eval(&self, node: usize, y: f64, z: &[f64]) -> f64 {
        self.g0[node] + self.lambda[node] * y + self.eta_at(node).iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
    }

    fn lipschitz(&self) -> (f64, f64) {
        let ly = self.lambda.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let lz = (0..self.g0.len())
            .map(|n| self.eta_at(n).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0f64, f64::max);
        (ly, lz)
    }

    fn is_constant_in_yz(&self) -> bool {
        self.lambda.values().iter().all(|v| *v == 0.0) && self.eta.iter().all(|v| *v == 0.0)
    }
}

/// `g = g0 + P(clamp(y, ±r)) + Q(clamp(u·z, ±r))`, optionally clipped to `±clip`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyClippedGenerator {
    pub g0: AdaptedProcess,
    pub y_coeffs: Vec<f64>,
    pub z_coeffs: Vec<f64>,
    pub direction: Vec<f64>,
    pub radius: f64,
    pub clip: Option<f64>,
    pub declared: (f64, f64),
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// `Σ_j j|a_j| r^{j−1}`, a bound for `|P'|` on `[−r, r]`.
fn poly_slope_bound(coeffs: &[f64], r: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, a)| j as f64 * a.abs() * r.powi(j as i32 - 1))
        .sum()
}

impl PolyClippedGenerator {
    pub fn slope_bounds(&self) -> (f64, f64) {
        let u = self.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        (
            poly_slope_bound(&self.y_coeffs, self.radius),
            poly_slope_bound(&self.z_coeffs, self.radius) * u,
        )
    }
}

impl Generator for PolyClippedGenerator {
    fn eval(&self, node: usize, y: f64, z: &[f64]) -> f64 {
        let r = self.radius;
        let s: f64 = self.direction.iter().zip(z).map(|(a, b)| a * b).sum();
        let g = self.g0[node] + poly(&self.y_coeffs, y.clamp(-r, r)) + poly(&self.z_coeffs, s.clamp(-r, r));
        match self.clip {
            Some(c) => g.clamp(-c, c),
            None => g,
        }
    }

    fn lipschitz(&self) -> (f64, f64) {
        self.declared
    }
}

/// `g = g0 + f(y) + η·z + w‖z‖` with `f` piecewise linear through the
/// knots and flat outside them.
#[derive(Debug, Clone, PartialEq)]
pub struct TableGenerator {
    pub g0: AdaptedProcess,
    pub y_knots: Vec<f64>,
    pub y_values: Vec<f64>,
    pub eta: Vec<f64>,
    pub z_norm_weight: f64,
}

impl TableGenerator {
    fn interp(&self, y: f64) -> f64 {
        let k = &self.y_knots;
        let v = &self.y_values;
        if y <= k[0] {
            return v[0];
        }
        if y >= k[k.len() - 1] {
            return v[v.len() - 1];
        }
        let i = k.partition_point(|x| *x <= y) - 1;
        let w = (y - k[i]) / (k[i + 1] - k[i]);
        v[i] + w * (v[i + 1] - v[i])
    }
}

impl Generator for TableGenerator {
    fn eval(&self, node: usize, y: f64, z: &[f64]) -> f64 {
        let lin: f64 = self.eta.iter().zip(z).map(|(a, b)| a * b).sum();
        let norm = z.iter().take(self.eta.len()).map(|v| v * v).sum::<f64>().sqrt();
        self.g0[node] + self.interp(y) + lin + self.z_norm_weight * norm
    }

    fn lipschitz(&self) -> (f64, f64) {
        let ly = self
            .y_knots
            .windows(2)
            .zip(self.y_values.windows(2))
            .map(|(k, v)| ((v[1] - v[0]) / (k[1] - k[0])).abs())
            .fold(0.0, f64::max);
        let lz = self.eta.iter().map(|v| v * v).sum::<f64>().sqrt() + self.z_norm_weight.abs();
        (ly, lz)
    }
}

/// A driver not depending on `(y, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenGenerator {
    pub values: Vec<f64>,
}

impl Generator for FrozenGenerator {
    fn eval(&self, node: usize, _y: f64, _z: &[f64]) -> f64 {
        self.values[node]
    }

    fn lipschitz(&self) -> (f64, f64) {
        (0.0, 0.0)
    }

    fn is_constant_in_yz(&self) -> bool {
        true
    }
}

/// `(−n) ∨ g ∧ n`; clipping is 1-Lipschitz so the constants carry over.
#[derive(Debug, Clone)]
pub struct ClippedGenerator {
    pub inner: Arc<dyn Generator>,
    pub level: f64,
}

impl Generator for ClippedGenerator {
    fn eval(&self, node: usize, y: f64, z: &[f64]) -> f64 {
        self.inner.eval(node, y, z).clamp(-self.level, self.level)
    }

    fn lipschitz(&self) -> (f64, f64) {
        self.inner.lipschitz()
    }

    fn is_constant_in_yz(&self) -> bool {
        self.inner.is_constant_in_yz()
    }
}

/// A driver given by a closure.
pub struct FnGenerator<F> {
    f: F,
    lipschitz: (f64, f64),
}

impl<F> FnGenerator<F>
where
    F: Fn(usize, f64, &[f64]) -> f64 + Send + Sync,
{
    pub fn new(lipschitz: (f64, f64), f: F) -> Self {
        Self { f, lipschitz }
    }
}

impl<F> fmt::Debug for FnGenerator<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnGenerator").field("lipschitz", &self.lipschitz).finish()
    }
}

impl<F> Generator for FnGenerator<F>
where
    F: Fn(usize, f64, &[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, node: usize, y: f64, z: &[f64]) -> f64 {
        (self.f)(node, y, z)
    }

    fn lipschitz(&self) -> (f64, f64) {
        self.lipschitz
    }
}

/// Configuration form of the supported drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Affine {
        g0: ProcessSpec,
        #[serde(default = "zero_spec")]
        lambda: ProcessSpec,
        #[serde(default)]
        eta: Vec<ProcessSpec>,
    },
    PolyClipped {
        g0: ProcessSpec,
        #[serde(default)]
        y_coeffs: Vec<f64>,
        #[serde(default)]
        z_coeffs: Vec<f64>,
        #[serde(default)]
        direction: Option<Vec<f64>>,
        radius: f64,
        #[serde(default)]
        clip: Option<f64>,
        #[serde(default)]
        l_y: Option<f64>,
        #[serde(default)]
        l_z: Option<f64>,
    },
    Table {
        g0: ProcessSpec,
        y_knots: Vec<f64>,
        y_values: Vec<f64>,
        #[serde(default)]
        eta: Vec<f64>,
        #[serde(default)]
        z_norm_weight: f64,
    },
}

fn zero_spec() -> ProcessSpec {
    ProcessSpec::constant(0.0)
}

impl GeneratorSpec {
    pub fn zero() -> Self {
        Self::Affine {
            g0: zero_spec(),
            lambda: zero_spec(),
            eta: Vec::new(),
        }
    }

    pub fn build(&self, tree: &ScenarioTree) -> Result<Arc<dyn Generator>> {
        let d = tree.dim();
        Ok(match self {
            Self::Affine { g0, lambda, eta } => {
                if eta.len() > d {
                    return Err(Error::Config(format!("affine driver has {} eta entries for d = {d}", eta.len())));
                }
                let coords: Vec<AdaptedProcess> = eta.iter().map(|e| e.materialize(tree)).collect::<Result<_>>()?;
                let mut flat = vec![0.0; tree.node_count() * d];
                for (i, c) in coords.iter().enumerate() {
                    for n in 0..tree.node_count() {
                        flat[n * d + i] = c[n];
                    }
                }
                Arc::new(AffineGenerator::new(tree, g0.materialize(tree)?, lambda.materialize(tree)?, flat)?)
            }
            Self::PolyClipped {
                g0,
                y_coeffs,
                z_coeffs,
                direction,
                radius,
                clip,
                l_y,
                l_z,
            } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::Config(format!("poly_clipped radius must be positive, got {radius}")));
                }
                let mut direction = direction.clone().unwrap_or_else(|| {
                    let mut e = vec![0.0; d];
                    e[0] = 1.0;
                    e
                });
                if direction.len() > d {
                    return Err(Error::Config(format!("direction has {} entries for d = {d}", direction.len())));
                }
                direction.resize(d, 0.0);
                let mut g = PolyClippedGenerator {
                    g0: g0.materialize(tree)?,
                    y_coeffs: y_coeffs.clone(),
                    z_coeffs: z_coeffs.clone(),
                    direction,
                    radius: *radius,
                    clip: *clip,
                    declared: (0.0, 0.0),
                };
                let (by, bz) = g.slope_bounds();
                g.declared = (l_y.unwrap_or(by), l_z.unwrap_or(bz));
                Arc::new(g)
            }
            Self::Table {
                g0,
                y_knots,
                y_values,
                eta,
                z_norm_weight,
            } => {
                if y_knots.is_empty() || y_knots.len() != y_values.len() {
                    return Err(Error::Config("table driver needs matching non-empty knots and values".into()));
                }
                if y_knots.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::Config("table driver knots must be strictly increasing".into()));
                }
                if eta.len() > d {
                    return Err(Error::Config(format!("table driver has {} eta entries for d = {d}", eta.len())));
                }
                Arc::new(TableGenerator {
                    g0: g0.materialize(tree)?,
                    y_knots: y_knots.clone(),
                    y_values: y_values.clone(),
                    eta: eta.clone(),
                    z_norm_weight: *z_norm_weight,
                })
            }
        })
    }
}

/// Random probes of the declared Lipschitz bound, mixing wide and local
/// perturbations.
pub fn probe_lipschitz(tree: &ScenarioTree, g: &dyn Generator, seed: RandomSeed) -> Result<()> {
    let mut rng = seed.rng();
    let inner = tree.level(tree.n_steps()).start;
    let d = tree.dim();
    let (ly, lz) = g.lipschitz();
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
        let scale = 10f64.powf(rng.random_range(-2.0..3.0));
        rng.random_range(-1.0..1.0) * scale
    };
    for probe in 0..LIPSCHITZ_PROBES {
        let node = rng.random_range(0..inner);
        let y = draw(&mut rng);
        let z: Vec<f64> = (0..d).map(|_| draw(&mut rng)).collect();
        let (y2, z2): (f64, Vec<f64>) = if probe % 2 == 0 {
            (draw(&mut rng), (0..d).map(|_| draw(&mut rng)).collect())
        } else {
            let h = 10f64.powf(rng.random_range(-6.0..-1.0));
            (
                y + h * rng.random_range(-1.0..1.0),
                z.iter().map(|v| v + h * rng.random_range(-1.0..1.0)).collect(),
            )
        };
        let gap = (g.eval(node, y, &z) - g.eval(node, y2, &z2)).abs();
        let dz = z.iter().zip(&z2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let bound = ly * (y - y2).abs() + lz * dz;
        if gap > bound + LIPSCHITZ_SLACK {
            return Err(Error::Lipschitz { node, gap, bound });
        }
    }
    Ok(())
}
