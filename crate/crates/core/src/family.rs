//! Seeded random instance families.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bsde::BsdeInstance;
use crate::error::{Error, Result};
use crate::generator::{probe_lipschitz, Generator};
use crate::process::AdaptedProcess;
use crate::seed::RandomSeed;
use crate::tree::{ScenarioTree, TreeConfig};

/// Terminal conditions of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalFamily {
    /// Independent uniform values on `[−scale, scale]` per leaf.
    Table { scale: f64 },
    /// `a + b·W¹_T + c·(W¹_T − k)⁺ + reveal shift`, coefficients uniform in `±scale`.
    Smooth { scale: f64 },
    /// `exp(σ W¹_T)` with `σ` drawn in `[sigma/2, sigma]`.
    Lognormal { sigma: f64 },
    /// The same leaf value everywhere, drawn in `±scale`.
    Deterministic { scale: f64 },
}

/// Obstacles of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleFamily {
    None,
    /// Independent uniform values on `[shift − scale, shift + scale]` per node.
    Table { scale: f64, shift: f64 },
    /// `a + b t + c W¹_t + reveal shift`, coefficients uniform in `±scale`, plus `shift`.
    Linear { scale: f64, shift: f64 },
    /// A deterministic function of time, `a + b t` with `a, b` uniform in `±scale`.
    Deterministic { scale: f64 },
}

/// Drivers of a family: see [`RandomGenerator`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverFamily {
    pub l_y: f64,
    pub l_z: f64,
    #[serde(default = "one")]
    pub g0_scale: f64,
    /// Zero `y` and `z` dependence.
    #[serde(default)]
    pub frozen: bool,
}

fn one() -> f64 {
    1.0
}

impl Default for DriverFamily {
    fn default() -> Self {
        Self {
            l_y: 1.0,
            l_z: 1.0,
            g0_scale: 1.0,
            frozen: false,
        }
    }
}

/// A reproducible family of instances sharing one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFamily {
    pub tree: TreeConfig,
    #[serde(default)]
    pub driver: DriverFamily,
    pub terminal: TerminalFamily,
    #[serde(default = "no_obstacle")]
    pub obstacle: ObstacleFamily,
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

fn no_obstacle() -> ObstacleFamily {
    ObstacleFamily::None
}

/// `g = g0 + l_y(a sin y + (1−|a|) b y) + l_z(c tanh(w·z) + (1−|c|) s ‖z‖)`
/// with `‖w‖ = 1` and `|a|, |b|, |c|, |s| <= 1`, so `(l_y, l_z)` are valid
/// Lipschitz constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomGenerator {
    pub g0: Vec<f64>,
    pub l_y: f64,
    pub l_z: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub s: f64,
    pub w: Vec<f64>,
}

impl Generator for RandomGenerator {
    fn eval(&self, node: usize, y: f64, z: &[f64]) -> f64 {
        let wz: f64 = self.w.iter().zip(z).map(|(a, b)| a * b).sum();
        let nz = z.iter().take(self.w.len()).map(|v| v * v).sum::<f64>().sqrt();
        self.g0[node]
            + self.l_y * (self.a * y.sin() + (1.0 - self.a.abs()) * self.b * y)
            + self.l_z * (self.c * wz.tanh() + (1.0 - self.c.abs()) * self.s * nz)
    }

    fn lipschitz(&self) -> (f64, f64) {
        (self.l_y, self.l_z)
    }

    fn g0(&self, node: usize) -> f64 {
        self.g0[node]
    }

    fn is_constant_in_yz(&self) -> bool {
        self.l_y == 0.0 && self.l_z == 0.0
    }
}

/// One member of a family.
#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub index: usize,
    pub fingerprint: String,
    pub instance: BsdeInstance,
}

fn unit(rng: &mut impl Rng) -> f64 {
    rng.random_range(-1.0..=1.0)
}

fn reveal_shift(tree: &ScenarioTree, node: usize, table: &[Vec<f64>]) -> f64 {
    tree.revealed_labels(node)
        .iter()
        .zip(table)
        .map(|(l, t)| l.map_or(0.0, |l| t[l]))
        .sum()
}

fn reveal_table(tree: &ScenarioTree, rng: &mut impl Rng, scale: f64) -> Vec<Vec<f64>> {
    tree.reveals()
        .iter()
        .map(|r| r.alphabet.iter().map(|_| scale * unit(rng)).collect())
        .collect()
}

/// SHA-256 over the instance data, first 16 hex digits.
pub fn fingerprint(instance: &BsdeInstance) -> String {
    let tree = instance.tree.as_ref();
    let inner = tree.level(tree.n_steps()).start;
    let mut h = Sha256::new();
    h.update((tree.node_count() as u64).to_le_bytes());
    h.update(tree.dt().to_le_bytes());
    for v in &instance.xi {
        h.update(v.to_le_bytes());
    }
    if let Some(s) = &instance.obstacle {
        for v in s.values() {
            h.update(v.to_le_bytes());
        }
    }
    let g = instance.generator.as_ref();
    let (ly, lz) = g.lipschitz();
    h.update(ly.to_le_bytes());
    h.update(lz.to_le_bytes());
    let probe = [0.37, -0.81, 0.5, 0.25];
    for n in 0..inner {
        h.update(g.g0(n).to_le_bytes());
        h.update(g.eval(n, 0.7, &probe[..tree.dim().min(4)]).to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

impl InstanceFamily {
    pub fn build_tree(&self) -> Result<Arc<ScenarioTree>> {
        Ok(Arc::new(self.tree.build()?))
    }

    fn validate(&self) -> Result<()> {
        let d = &self.driver;
        if !(d.l_y >= 0.0 && d.l_z >= 0.0 && d.g0_scale >= 0.0) {
            return Err(Error::Config("driver constants must be non-negative".into()));
        }
        if self.tree.d > 4 {
            return Err(Error::Config("families support d <= 4".into()));
        }
        Ok(())
    }

    /// The `index`-th member on a prebuilt tree.
    pub fn member(&self, tree: &Arc<ScenarioTree>, index: usize) -> Result<FamilyMember> {
        self.validate()?;
        let seed = RandomSeed::new(self.seed).fork(index as u64);
        let mut rng = seed.rng();
        let t = tree.as_ref();
        let d = t.dim();

        let dv = &self.driver;
        let g0_w = dv.g0_scale * unit(&mut rng);
        let g0_t = dv.g0_scale * unit(&mut rng);
        let g0_c = dv.g0_scale * unit(&mut rng);
        let g0: Vec<f64> = (0..t.node_count())
            .map(|n| g0_c + g0_t * t.time_of(n) + g0_w * t.w(n)[0].tanh())
            .collect();
        let mut w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = w.iter().map(|v: &f64| v * v).sum::<f64>().sqrt().max(1e-300);
        w.iter_mut().for_each(|v| *v /= norm);
        let (l_y, l_z) = if dv.frozen { (0.0, 0.0) } else { (dv.l_y, dv.l_z) };
        let generator = RandomGenerator {
            g0,
            l_y,
            l_z,
            a: unit(&mut rng),
            b: unit(&mut rng),
            c: unit(&mut rng),
            s: unit(&mut rng),
            w,
        };
        probe_lipschitz(t, &generator, seed.fork(1))?;

        let leaves = t.leaves();
        let xi: Vec<f64> = match &self.terminal {
            TerminalFamily::Table { scale } => leaves.map(|_| scale * unit(&mut rng)).collect(),
            TerminalFamily::Smooth { scale } => {
                let (a, b, c, k) = (unit(&mut rng), unit(&mut rng), unit(&mut rng), unit(&mut rng));
                let shifts = reveal_table(t, &mut rng, 0.5);
                leaves
                    .map(|l| {
                        let x = t.w(l)[0];
                        scale * (a + b * x + c * (x - k).max(0.0) + reveal_shift(t, l, &shifts))
                    })
                    .collect()
            }
            TerminalFamily::Lognormal { sigma } => {
                let s = sigma * rng.random_range(0.5..=1.0);
                leaves.map(|l| (s * t.w(l)[0]).exp()).collect()
            }
            TerminalFamily::Deterministic { scale } => {
                let v = scale * unit(&mut rng);
                leaves.map(|_| v).collect()
            }
        };

        let obstacle = match &self.obstacle {
            ObstacleFamily::None => None,
            ObstacleFamily::Table { scale, shift } => {
                Some(AdaptedProcess::from_fn(t, |_| shift + scale * unit(&mut rng)))
            }
            ObstacleFamily::Linear { scale, shift } => {
                let (a, b, c) = (unit(&mut rng), unit(&mut rng), unit(&mut rng));
                let shifts = reveal_table(t, &mut rng, *scale);
                Some(AdaptedProcess::from_fn(t, |n| {
                    shift + scale * (a + b * t.time_of(n) + c * t.w(n)[0]) + reveal_shift(t, n, &shifts)
                }))
            }
            ObstacleFamily::Deterministic { scale } => {
                let (a, b) = (unit(&mut rng), unit(&mut rng));
                Some(AdaptedProcess::from_fn(t, |n| scale * (a + b * t.time_of(n))))
            }
        };

        let mut instance = BsdeInstance::new(tree.clone(), xi, Arc::new(generator))?;
        if let Some(s) = obstacle {
            instance = instance.with_obstacle(s)?;
        }
        Ok(FamilyMember {
            index,
            fingerprint: fingerprint(&instance),
            instance,
        })
    }

    /// All members, in index order.
    pub fn members(&self) -> Result<Vec<FamilyMember>> {
        let tree = self.build_tree()?;
        (0..self.count).map(|i| self.member(&tree, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family() -> InstanceFamily {
        InstanceFamily {
            tree: TreeConfig::new(1.0, 4, 2).with_reveal(0.5, &["u", "d"], &[0.3, 0.7]),
            driver: DriverFamily::default(),
            terminal: TerminalFamily::Smooth { scale: 1.0 },
            obstacle: ObstacleFamily::Linear { scale: 0.5, shift: 0.0 },
            count: 5,
            seed: 9,
        }
    }

    #[test]
    fn members_are_reproducible_and_distinct() {
        let a = family().members().unwrap();
        let b = family().members().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.fingerprint, y.fingerprint);
            assert_eq!(x.instance.xi, y.instance.xi);
        }
        assert_ne!(a[0].fingerprint, a[1].fingerprint);
    }

    #[test]
    fn obstacle_is_compatible_with_terminal_value() {
        for m in family().members().unwrap() {
            let s = m.instance.obstacle.as_ref().unwrap();
            let tree = &m.instance.tree;
            for l in tree.leaves() {
                assert!(s[l] <= m.instance.xi_at(l));
            }
        }
    }

    #[test]
    fn family_parses_from_json() {
        let f: InstanceFamily = serde_json::from_str(
            r#"{"tree":{"horizon":1,"n_steps":3},"terminal":{"kind":"table","scale":2},"count":2}"#,
        )
        .unwrap();
        assert_eq!(f.members().unwrap().len(), 2);
        assert!(serde_json::from_str::<InstanceFamily>(r#"{"tree":{"horizon":1,"n_steps":3},"terminal":{"kind":"table","scale":2},"count":2,"bogus":1}"#).is_err());
    }
}
