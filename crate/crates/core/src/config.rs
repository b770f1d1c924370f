//! JSON experiment configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cocycle::{Cocycle, CocycleSpec, DensityOptions, MixingOptions, ProbeSuite, QrOptions};
use crate::dynamics::{CircleParams, DriverState, DrivingSystem, MapFamily, TrigPoly, TrigTerm};
use crate::error::{Error, Result};
use crate::spectral::SpaceLadder;
use crate::transfer::Quadrature;

/// Largest accepted configuration bandwidth.
pub const MAX_CONFIG_BANDWIDTH: usize = 512;
/// Largest accepted bandwidth of two-dimensional configurations.
pub const MAX_CONFIG_BANDWIDTH_2D: usize = 48;
/// Largest accepted iteration budget.
pub const MAX_ITERATIONS: usize = 100_000;
/// Largest accepted fiber count.
pub const MAX_FIBERS: usize = 100_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    #[default]
    Sin,
    Cos,
}

/// Trigonometric term, either `[frequency, eps_power, amplitude,
/// fiber_multiplier]` or an object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TermConfig {
    Quadruple([f64; 4]),
    Object {
        frequency: u32,
        #[serde(default)]
        eps_power: u32,
        amplitude: f64,
        #[serde(default)]
        fiber_multiplier: f64,
        #[serde(default)]
        shape: Shape,
        #[serde(default)]
        phase: f64,
    },
}

impl TermConfig {
    fn build(&self) -> Result<TrigTerm> {
        match *self {
            TermConfig::Quadruple([f, p, a, mu]) => {
                let int = |v: f64, what: &str| -> Result<u32> {
                    if v.fract() != 0.0 || !(0.0..=1e6).contains(&v) {
                        return Err(Error::Config(format!("{what} {v} must be a non-negative integer")));
                    }
                    Ok(v as u32)
                };
                Ok(TrigTerm::sin(int(f, "frequency")?, int(p, "eps power")?, a).with_fiber_multiplier(mu))
            }
            TermConfig::Object {
                frequency,
                eps_power,
                amplitude,
                fiber_multiplier,
                shape,
                phase,
            } => {
                let t = match shape {
                    Shape::Sin => TrigTerm::sin(frequency, eps_power, amplitude),
                    Shape::Cos => TrigTerm::cos(frequency, eps_power, amplitude),
                };
                Ok(TrigTerm {
                    phase: t.phase + phase,
                    ..t.with_fiber_multiplier(fiber_multiplier)
                })
            }
        }
    }
}

fn poly(terms: &[TermConfig]) -> Result<TrigPoly> {
    let terms = terms.iter().map(TermConfig::build).collect::<Result<Vec<_>>>()?;
    if terms.iter().any(|t| {
        t.frequency > 4096
            || t.eps_power > 16
            || !t.amplitude.is_finite()
            || !t.fiber_multiplier.is_finite()
            || !t.phase.is_finite()
    }) {
        return Err(Error::Config("trigonometric term out of range".into()));
    }
    Ok(TrigPoly::new(terms))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Circle,
    U1,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub kind: FamilyKind,
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default)]
    pub terms: Vec<TermConfig>,
    #[serde(default)]
    pub conjugacy: Option<Vec<TermConfig>>,
    #[serde(default)]
    pub tau: Option<Vec<TermConfig>>,
    #[serde(default = "default_order")]
    pub order: u32,
    #[serde(default = "default_smoothness")]
    pub smoothness: u32,
    #[serde(default = "default_eps_max")]
    pub eps_max: f64,
}

fn default_degree() -> u32 {
    2
}
fn default_order() -> u32 {
    3
}
fn default_smoothness() -> u32 {
    4
}
fn default_eps_max() -> f64 {
    1.0
}

impl FamilyConfig {
    pub fn build(&self) -> Result<MapFamily> {
        let tau = self.tau.as_deref().map(poly).transpose()?;
        match self.kind {
            FamilyKind::Identity => {
                if !self.terms.is_empty() || self.conjugacy.is_some() {
                    return Err(Error::Config("the identity family takes no terms".into()));
                }
                return MapFamily::identity(tau);
            }
            FamilyKind::Circle if tau.is_some() => {
                return Err(Error::Config("tau is only valid for u1 families".into()));
            }
            FamilyKind::U1 if tau.is_none() => {
                return Err(Error::Config("u1 families need tau".into()));
            }
            _ => {}
        }
        let mut params = CircleParams::new(self.degree, poly(&self.terms)?)
            .order(self.order)
            .eps_max(self.eps_max);
        params.smoothness = self.smoothness;
        if let Some(q) = &self.conjugacy {
            params = params.conjugacy(poly(q)?);
        }
        match tau {
            None => MapFamily::circle(params),
            Some(tau) => MapFamily::u1(params, tau),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DriverConfig {
    Rotation {
        alpha: f64,
        #[serde(default)]
        initial: f64,
    },
    Bernoulli {
        seed: u64,
        #[serde(default = "default_symbols")]
        symbols: u32,
        #[serde(default)]
        initial: i64,
    },
    Periodic {
        labels: Vec<f64>,
        #[serde(default)]
        initial: i64,
    },
    #[default]
    Deterministic,
}

fn default_symbols() -> u32 {
    2
}

impl DriverConfig {
    pub fn build(&self) -> Result<(DrivingSystem, DriverState)> {
        Ok(match self {
            DriverConfig::Rotation { alpha, initial } => {
                if !initial.is_finite() {
                    return Err(Error::Config("non-finite initial phase".into()));
                }
                let d = DrivingSystem::rotation(*alpha)?;
                let w = d.state(*initial);
                (d, w)
            }
            DriverConfig::Bernoulli { seed, symbols, initial } => {
                (DrivingSystem::bernoulli(*seed, *symbols)?, DriverState(*initial as u64))
            }
            DriverConfig::Periodic { labels, initial } => {
                (DrivingSystem::periodic(labels.clone())?, DriverState(*initial as u64))
            }
            DriverConfig::Deterministic => (DrivingSystem::deterministic(), DriverState(0)),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SobolevConfig {
    #[serde(default)]
    pub base: u32,
    #[serde(default = "default_depth")]
    pub depth: u32,
}

fn default_depth() -> u32 {
    3
}

impl Default for SobolevConfig {
    fn default() -> Self {
        Self { base: 0, depth: 3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Cauchy tolerance of the pullback iteration.
    pub tol: f64,
    pub n_max: usize,
    /// Neumann truncation; chosen from the mixing rate when absent.
    pub n_trunc: Option<usize>,
    pub mixing_n_max: usize,
    pub ly_cap: f64,
    pub mixing_threshold: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            n_max: 200,
            n_trunc: None,
            mixing_n_max: 25,
            ly_cap: 10.0,
            mixing_threshold: 0.99,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: FamilyConfig,
    #[serde(default)]
    pub driver: DriverConfig,
    pub bandwidth: usize,
    #[serde(default)]
    pub sobolev: SobolevConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Parameter at which densities and diagnostics are computed.
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "default_eps_grid")]
    pub eps_grid: Vec<f64>,
    #[serde(default = "default_fibers")]
    pub fibers: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Uniform grid size of the density sample dumps.
    #[serde(default = "default_sample_grid")]
    pub sample_grid: usize,
    /// Step of the finite-difference check written by `response`.
    #[serde(default)]
    pub fd_eps: Option<f64>,
}

fn default_eps_grid() -> Vec<f64> {
    (3..=9).map(|p| 2f64.powi(-p)).collect()
}
fn default_fibers() -> usize {
    64
}
fn default_sample_grid() -> usize {
    256
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        let two_d = self.family.tau.is_some();
        let cap = if two_d {
            MAX_CONFIG_BANDWIDTH_2D
        } else {
            MAX_CONFIG_BANDWIDTH
        };
        let checks: [(bool, String); 10] = [
            (
                (1..=cap).contains(&self.bandwidth),
                format!("bandwidth {} outside 1..={cap}", self.bandwidth),
            ),
            (t.tol > 0.0 && t.tol.is_finite(), "tol must be positive".into()),
            (
                (1..=MAX_ITERATIONS).contains(&t.n_max) && (1..=MAX_ITERATIONS).contains(&t.mixing_n_max),
                "iteration budgets must lie in 1..=100000".into(),
            ),
            (
                t.n_trunc.is_none_or(|n| n <= MAX_ITERATIONS),
                "n_trunc too large".into(),
            ),
            (t.ly_cap > 0.0 && t.ly_cap.is_finite(), "ly_cap must be positive".into()),
            (
                t.mixing_threshold > 0.0 && t.mixing_threshold <= 1.0,
                "mixing_threshold must lie in (0, 1]".into(),
            ),
            (
                self.eps_grid.iter().all(|e| e.is_finite() && *e > 0.0),
                "eps_grid entries must be positive".into(),
            ),
            (
                (1..=MAX_FIBERS).contains(&self.fibers),
                "fibers must lie in 1..=100000".into(),
            ),
            (
                self.sample_grid > 2 * self.bandwidth && self.sample_grid <= 1 << 16,
                "sample_grid must exceed 2 * bandwidth and be at most 65536".into(),
            ),
            (
                self.fd_eps.is_none_or(|e| e > 0.0 && e.is_finite())
                    && self.sobolev.depth >= 1
                    && self.sobolev.base <= 16,
                "fd_eps must be positive, depth at least 1 and base at most 16".into(),
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg));
            }
        }
        Ok(())
    }

    pub fn ladder(&self) -> Result<SpaceLadder> {
        SpaceLadder::new(self.sobolev.base, self.sobolev.depth)
    }

    /// Cocycle and base point described by the configuration.
    pub fn cocycle(&self) -> Result<(Cocycle, DriverState)> {
        let family = self.family.build()?;
        let (driver, origin) = self.driver.build()?;
        let spec = CocycleSpec::new(family, driver, self.eps, self.bandwidth, self.ladder()?)?
            .with_quadrature(Quadrature::default());
        Ok((Cocycle::new(spec), origin))
    }

    pub fn density_options(&self) -> DensityOptions {
        DensityOptions {
            tol: self.tolerances.tol,
            n_max: self.tolerances.n_max,
            start: None,
        }
    }

    pub fn mixing_options(&self, origin: DriverState) -> MixingOptions {
        MixingOptions {
            n_max: self.tolerances.mixing_n_max,
            fibers: self.fibers,
            threshold: self.tolerances.mixing_threshold,
            start: origin,
        }
    }

    pub fn qr_options(&self, origin: DriverState) -> QrOptions {
        QrOptions {
            mixing: self.mixing_options(origin),
            eps_grid: self.eps_grid.clone(),
            ly_cap: self.tolerances.ly_cap,
        }
    }

    pub fn probes(&self, cocycle: &Cocycle) -> ProbeSuite {
        let spec = cocycle.spec();
        ProbeSuite::standard(spec.dim(), spec.bandwidth, spec.ladder.regularity(1), self.seed)
    }
}
