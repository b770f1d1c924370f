//! Operator cocycles `A_eps(omega)` over a driving system, their equivariant
//! densities, and empirical checks of the quasi-compactness conditions.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DriverState, DrivingSystem, MapFamily};
use crate::error::{Error, Result};
use crate::fit::{linear_fit, LinearFit};
use crate::rng::{stream_rng, streams};
use crate::spectral::{Dim, SpaceLadder, SpectralField, C64};
use crate::transfer::{self, Quadrature, TransferMatrix};

/// Values of a norm series below this are treated as exact zeros by the
/// rate fits.
pub const FIT_FLOOR: f64 = 1e-12;
/// A one-step drop below this ratio ends the fitted prefix (truncation collapse).
pub const COLLAPSE_RATIO: f64 = 1e-3;

/// Relative margin required for `alpha < M`.
pub const LY_MARGIN: f64 = 1e-6;

/// Everything needed to build the cocycle `A_eps(omega)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CocycleSpec {
    pub family: MapFamily,
    pub driver: DrivingSystem,
    pub eps: f64,
    pub bandwidth: usize,
    pub ladder: SpaceLadder,
    pub quadrature: Quadrature,
}

impl CocycleSpec {
    pub fn new(
        family: MapFamily,
        driver: DrivingSystem,
        eps: f64,
        bandwidth: usize,
        ladder: SpaceLadder,
    ) -> Result<Self> {
        family.check_eps(eps)?;
        if bandwidth == 0 {
            return Err(Error::InvalidArgument("bandwidth must be positive".into()));
        }
        if ladder.depth > family.order() {
            return Err(Error::InvalidArgument(format!(
                "ladder depth {} exceeds the family order {}",
                ladder.depth,
                family.order()
            )));
        }
        Ok(Self {
            family,
            driver,
            eps,
            bandwidth,
            ladder,
            quadrature: Quadrature::default(),
        })
    }

    pub fn with_quadrature(mut self, quadrature: Quadrature) -> Self {
        self.quadrature = quadrature;
        self
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        self.family.check_eps(eps)?;
        Ok(Self { eps, ..self.clone() })
    }

    pub fn dim(&self) -> Dim {
        self.family.dim()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct MatrixKey {
    theta: u64,
    eps: u64,
    order: u32,
}

/// A cocycle with a shared cache of fiber matrices. Safe to use from
/// concurrent workers; cached values are immutable.
#[derive(Debug)]
pub struct Cocycle {
    spec: CocycleSpec,
    cache: RwLock<HashMap<MatrixKey, Arc<TransferMatrix>>>,
}

impl Clone for Cocycle {
    fn clone(&self) -> Self {
        Self::new(self.spec.clone())
    }
}

impl Cocycle {
    pub fn new(spec: CocycleSpec) -> Self {
        Self {
            spec,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn spec(&self) -> &CocycleSpec {
        &self.spec
    }

    pub fn driver(&self) -> &DrivingSystem {
        &self.spec.driver
    }

    /// Fiber label selecting the map at `omega`; constant for families that
    /// ignore the fiber.
    pub fn label(&self, omega: DriverState) -> f64 {
        if self.spec.family.is_fiber_dependent() {
            self.spec.driver.label(omega)
        } else {
            0.0
        }
    }

    /// `(1/j!) d^j/d eps^j L_{T_{eps, omega}}`; `order = 0` is the transfer
    /// operator itself.
    pub fn operator(&self, eps: f64, omega: DriverState, order: u32) -> Result<Arc<TransferMatrix>> {
        let theta = self.label(omega);
        let key = MatrixKey {
            theta: theta.to_bits(),
            eps: eps.to_bits(),
            order,
        };
        if let Some(m) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(m));
        }
        let s = &self.spec;
        let m = match order {
            0 => transfer::assemble(&s.family, eps, theta, s.bandwidth, &s.quadrature)?,
            j => transfer::derivative_at(&s.family, eps, theta, s.bandwidth, &s.quadrature, j)?,
        };
        let m = Arc::new(m);
        self.cache
            .write()
            .expect("cache lock")
            .entry(key)
            .or_insert_with(|| Arc::clone(&m));
        Ok(m)
    }

    /// `A_eps(omega)` at the spec's parameter.
    pub fn fiber_matrix(&self, omega: DriverState) -> Result<Arc<TransferMatrix>> {
        self.operator(self.spec.eps, omega, 0)
    }

    /// `A^{(n)}(omega) = A(sigma^{n-1} omega) ... A(omega)`.
    pub fn cocycle_matrix(&self, omega: DriverState, n: usize) -> Result<TransferMatrix> {
        if n == 0 {
            return Err(Error::InvalidArgument("cocycle length must be positive".into()));
        }
        let mut acc = (*self.fiber_matrix(omega)?).clone();
        for j in 1..n {
            let next = self.fiber_matrix(self.spec.driver.advance(omega, j as i64))?;
            acc = next.compose(&acc)?;
        }
        Ok(acc)
    }

    /// `A^{(n)}(omega) f` without forming the product matrix.
    pub fn push(&self, omega: DriverState, n: usize, f: &SpectralField) -> Result<SpectralField> {
        let mut v = f.clone();
        for j in 0..n {
            v = self.fiber_matrix(self.spec.driver.advance(omega, j as i64))?.apply(&v);
        }
        Ok(v)
    }
}

/// Stopping policy for the pullback iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOptions {
    pub tol: f64,
    pub n_max: usize,
    /// Starting density of mass 1; the constant 1 when absent.
    pub start: Option<SpectralField>,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            n_max: 200,
            start: None,
        }
    }
}

/// Pullback limit on one fiber.
#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    pub field: SpectralField,
    pub iterations: usize,
    /// Final `||v_n - v_{n-1}||_{E_1}`.
    pub increment: f64,
    /// Largest `|mass - 1|` before renormalization over all steps.
    pub mass_drift: f64,
    /// Ratio of the last two increments, when both are resolvable.
    pub contraction: Option<f64>,
}

/// `v(omega) = lim A^{(n)}(sigma^{-n} omega) v_start`, renormalized to mass 1.
pub fn equivariant_density(cocycle: &Cocycle, omega: DriverState, opts: &DensityOptions) -> Result<Density> {
    equivariant_density_at(cocycle, cocycle.spec().eps, omega, opts)
}

/// [`equivariant_density`] for the cocycle `A_eps` at an explicit parameter.
pub fn equivariant_density_at(
    cocycle: &Cocycle,
    eps: f64,
    omega: DriverState,
    opts: &DensityOptions,
) -> Result<Density> {
    cocycle.spec().family.check_eps(eps)?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("density tolerance must be positive".into()));
    }
    let spec = cocycle.spec();
    let start = match &opts.start {
        Some(f) => {
            if (f.mass() - C64::new(1.0, 0.0)).norm() > 1e-12 {
                return Err(Error::InvalidArgument("start density must have mass 1".into()));
            }
            f.resized(spec.bandwidth)
        }
        None => SpectralField::constant(spec.dim(), spec.bandwidth, 1.0),
    };
    let level = spec.ladder.regularity(1);
    let mut prev = start.clone();
    let mut prev_inc = f64::NAN;
    let mut drift = 0.0f64;
    let mut inc = f64::INFINITY;
    for n in 1..=opts.n_max {
        let mut v = start.clone();
        for j in (1..=n as i64).rev() {
            v = cocycle.operator(eps, spec.driver.advance(omega, -j), 0)?.apply(&v);
            let mass = v.mass();
            drift = drift.max((mass - C64::new(1.0, 0.0)).norm());
            v = v.scaled(mass.inv());
        }
        inc = v.sub(&prev).sobolev_norm(level);
        if inc < opts.tol {
            let contraction = (prev_inc.is_finite() && prev_inc > 0.0 && inc > 0.0).then(|| inc / prev_inc);
            return Ok(Density {
                field: v,
                iterations: n,
                increment: inc,
                mass_drift: drift,
                contraction,
            });
        }
        prev_inc = inc;
        prev = v;
    }
    Err(Error::NonMixing {
        iterations: opts.n_max,
        increment: inc,
        eps: Some(eps),
    })
}

/// `||A(omega) v(omega) - v(sigma omega)||_{E_1}`.
pub fn equivariance_residual(cocycle: &Cocycle, omega: DriverState, opts: &DensityOptions) -> Result<f64> {
    let here = equivariant_density(cocycle, omega, opts)?;
    let next = equivariant_density(cocycle, cocycle.driver().forward(omega), opts)?;
    let pushed = cocycle.fiber_matrix(omega)?.apply(&here.field);
    Ok(pushed
        .sub(&next.field)
        .sobolev_norm(cocycle.spec().ladder.regularity(1)))
}

/// A named zero-mass test field.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub name: String,
    pub field: SpectralField,
}

/// Test fields for the norm estimators.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSuite {
    pub probes: Vec<Probe>,
}

/// Largest frequency of the pure-mode probes.
pub const PROBE_MODE_RADIUS: i64 = 4;
/// Number of random probes.
pub const PROBE_RANDOM_COUNT: usize = 8;

impl ProbeSuite {
    /// Pure modes with `max |k_i| <= 4` (clipped to the bandwidth) and eight
    /// random real zero-mass fields of unit `H^regularity` norm with
    /// coefficients decaying like `1/(1+|k|^2)`.
    pub fn standard(dim: Dim, bandwidth: usize, regularity: u32, seed: u64) -> Self {
        let r = PROBE_MODE_RADIUS.min(bandwidth as i64);
        let mut probes = Vec::new();
        let second: Vec<i64> = match dim {
            Dim::One => vec![0],
            Dim::Two => (-r..=r).collect(),
        };
        for k1 in -r..=r {
            for &k2 in &second {
                if k1 == 0 && k2 == 0 {
                    continue;
                }
                probes.push(Probe {
                    name: match dim {
                        Dim::One => format!("mode({k1})"),
                        Dim::Two => format!("mode({k1},{k2})"),
                    },
                    field: SpectralField::mode(dim, bandwidth, [k1, k2]),
                });
            }
        }
        probes.extend(Self::random(dim, bandwidth, regularity, seed, PROBE_RANDOM_COUNT).probes);
        Self { probes }
    }

    /// Random real zero-mass fields only.
    pub fn random(dim: Dim, bandwidth: usize, regularity: u32, seed: u64, count: usize) -> Self {
        let mut rng = stream_rng(seed, streams::PROBES);
        let probes = (0..count)
            .map(|i| {
                let mut f = SpectralField::zeros(dim, bandwidth);
                let freqs: Vec<_> = f.frequencies().collect();
                for k in freqs {
                    // One representative per conjugate pair.
                    if k[0] < 0 || (k[0] == 0 && k[1] <= 0) {
                        continue;
                    }
                    let decay = 1.0 / (1.0 + (k[0] * k[0] + k[1] * k[1]) as f64);
                    let c = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * decay;
                    f.set(k, c);
                    f.set([-k[0], -k[1]], c.conj());
                }
                let norm = f.sobolev_norm(regularity);
                Probe {
                    name: format!("random{i}"),
                    field: f.scaled(C64::new(1.0 / norm, 0.0)),
                }
            })
            .collect();
        Self { probes }
    }

    pub fn from_fields(fields: Vec<SpectralField>) -> Result<Self> {
        let probes = fields
            .into_iter()
            .enumerate()
            .map(|(i, field)| {
                if field.mass().norm() > 1e-14 {
                    return Err(Error::InvalidArgument(format!("probe {i} has nonzero mass")));
                }
                Ok(Probe {
                    name: format!("probe{i}"),
                    field,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { probes })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Mixing,
    NonMixing,
}

/// One entry of a norm trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub n: usize,
    pub fiber: usize,
    pub probe: String,
    pub norm: f64,
}

/// Name of the trace series holding restricted operator norms.
pub const OPERATOR_PROBE: &str = "operator";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelBound {
    pub level: u32,
    pub regularity: u32,
    pub max_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthFit {
    /// `M` in `||A^{(n)}||_{E_0} <= C M^n`.
    pub m: f64,
    pub c: f64,
    pub fit: Option<LinearFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LasotaYorkeFit {
    pub alpha: f64,
    /// `max_n (s_n / C)^{1/n}`.
    pub alpha_literal: f64,
    /// `exp` of the fitted slope of `log s_n`, when at least two excess
    /// values are positive.
    pub alpha_regression: Option<f64>,
    pub cap: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemainderRow {
    pub eps: f64,
    pub norm: f64,
}

/// `log norm` against `log eps`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemainderFit {
    pub j_in: u32,
    pub j_out: u32,
    pub rows: Vec<RemainderRow>,
    pub fit: Option<LinearFit>,
}

impl RemainderFit {
    pub fn exponent(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,norm\n");
        for r in &self.rows {
            out.push_str(&format!("{},{}\n", r.eps, r.norm));
        }
        out
    }
}

/// Fitted constants of the mixing and quasi-compactness conditions. Every
/// esssup over fibers is a max over the sampled fibers, i.e. a lower bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub verdict: Verdict,
    pub threshold: f64,
    pub rho: f64,
    pub rho_band: [f64; 2],
    pub rho_fit: Option<LinearFit>,
    /// `max_n s_n / rho^n`.
    pub mixing_constant: f64,
    pub fibers: usize,
    pub n_max: usize,
    pub eps: f64,
    pub growth: Option<GrowthFit>,
    pub lasota_yorke: Option<LasotaYorkeFit>,
    pub qr1: Vec<LevelBound>,
    pub qr4: Option<RemainderFit>,
    pub qr5: Option<RemainderFit>,
    #[serde(skip)]
    pub traces: Vec<TraceRow>,
}

impl DiagnosticsReport {
    pub fn traces_csv(&self) -> String {
        let mut out = String::from("n,fiber,probe,norm\n");
        for t in &self.traces {
            out.push_str(&format!("{},{},{},{}\n", t.n, t.fiber, t.probe, t.norm));
        }
        out
    }

    pub fn is_mixing(&self) -> bool {
        self.verdict == Verdict::Mixing
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixingOptions {
    pub n_max: usize,
    pub fibers: usize,
    pub threshold: f64,
    pub start: DriverState,
}

impl Default for MixingOptions {
    fn default() -> Self {
        Self {
            n_max: 25,
            fibers: 64,
            threshold: 0.99,
            start: DriverState(0),
        }
    }
}

fn sample_fibers(cocycle: &Cocycle, opts: &MixingOptions) -> Vec<DriverState> {
    let count = if cocycle.spec().family.is_fiber_dependent() {
        opts.fibers.max(1)
    } else {
        1
    };
    cocycle.driver().orbit(opts.start, 0, count)
}

/// Per-fiber running products `P_n = A^{(n)}(omega)`, `n = 1..=n_max`,
/// handed to `visit` in order.
fn walk_products(
    cocycle: &Cocycle,
    omega: DriverState,
    n_max: usize,
    mut visit: impl FnMut(usize, &TransferMatrix) -> Result<()>,
) -> Result<()> {
    let mut acc = (*cocycle.fiber_matrix(omega)?).clone();
    visit(1, &acc)?;
    for n in 2..=n_max {
        let next = cocycle.fiber_matrix(cocycle.driver().advance(omega, n as i64 - 1))?;
        acc = next.compose(&acc)?;
        visit(n, &acc)?;
    }
    Ok(())
}

/// Fit of `log s_n = a + n log r` over the prefix of `series` above
/// [`FIT_FLOOR`] and before the first step ratio under [`COLLAPSE_RATIO`].
/// Returns `(r, band, fit)`.
fn geometric_fit(series: &[f64]) -> (f64, [f64; 2], Option<LinearFit>) {
    let mut prefix: Vec<(f64, f64)> = Vec::new();
    for (i, &s) in series.iter().enumerate() {
        if s < FIT_FLOOR || (i > 0 && s < COLLAPSE_RATIO * series[i - 1]) {
            break;
        }
        prefix.push(((i + 1) as f64, s.ln()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = prefix.iter().cloned().unzip();
    match linear_fit(&xs, &ys) {
        Some(fit) => {
            let r = fit.slope.exp();
            let band = [
                (fit.slope - 2.0 * fit.slope_stderr).exp(),
                (fit.slope + 2.0 * fit.slope_stderr).exp(),
            ];
            (r, band, Some(fit))
        }
        None => {
            let r = prefix.first().map_or(0.0, |p| p.1.exp());
            (r, [r, r], None)
        }
    }
}

/// Series `s_n` of [`mixing_rate`] plus traces.
fn mixing_series(
    cocycle: &Cocycle,
    probes: &ProbeSuite,
    opts: &MixingOptions,
) -> Result<(Vec<f64>, Vec<TraceRow>, usize)> {
    let spec = cocycle.spec();
    let level = 1;
    let reg = spec.ladder.regularity(level);
    let fibers = sample_fibers(cocycle, opts);
    let per_fiber: Vec<(Vec<f64>, Vec<TraceRow>)> = fibers
        .par_iter()
        .enumerate()
        .map(|(fi, &omega)| {
            let mut series = vec![0.0; opts.n_max];
            let mut rows = Vec::new();
            walk_products(cocycle, omega, opts.n_max, |n, p| {
                let op = p.operator_norm(&spec.ladder, level, level, true);
                let mut best = op;
                rows.push(TraceRow {
                    n,
                    fiber: fi,
                    probe: OPERATOR_PROBE.into(),
                    norm: op,
                });
                for probe in &probes.probes {
                    let ratio = p.apply(&probe.field).sobolev_norm(reg) / probe.field.sobolev_norm(reg);
                    best = best.max(ratio);
                    rows.push(TraceRow {
                        n,
                        fiber: fi,
                        probe: probe.name.clone(),
                        norm: ratio,
                    });
                }
                series[n - 1] = best;
                Ok(())
            })?;
            Ok((series, rows))
        })
        .collect::<Result<_>>()?;
    let mut series = vec![0.0f64; opts.n_max];
    let mut traces = Vec::new();
    for (s, rows) in per_fiber {
        for (a, b) in series.iter_mut().zip(&s) {
            *a = a.max(*b);
        }
        traces.extend(rows);
    }
    Ok((series, traces, fibers.len()))
}

/// Fitted decay rate of `A^{(n)}` on `ker xi` in `E_1`, from the probe
/// ratios and the restricted operator norms.
pub fn mixing_rate(cocycle: &Cocycle, probes: &ProbeSuite, opts: &MixingOptions) -> Result<DiagnosticsReport> {
    if opts.n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be positive".into()));
    }
    if probes.probes.iter().any(|p| p.field.mass().norm() > 1e-14) {
        return Err(Error::InvalidArgument("probes must have zero mass".into()));
    }
    let (series, traces, fibers) = mixing_series(cocycle, probes, opts)?;
    let (rho, rho_band, rho_fit) = geometric_fit(&series);
    let mixing_constant = series
        .iter()
        .enumerate()
        .filter(|(_, s)| **s >= FIT_FLOOR)
        .map(|(i, s)| if rho > 0.0 { s / rho.powi(i as i32 + 1) } else { *s })
        .fold(0.0, f64::max);
    Ok(DiagnosticsReport {
        verdict: if rho < opts.threshold {
            Verdict::Mixing
        } else {
            Verdict::NonMixing
        },
        threshold: opts.threshold,
        rho,
        rho_band,
        rho_fit,
        mixing_constant,
        fibers,
        n_max: opts.n_max,
        eps: cocycle.spec().eps,
        growth: None,
        lasota_yorke: None,
        qr1: Vec::new(),
        qr4: None,
        qr5: None,
        traces,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct QrOptions {
    pub mixing: MixingOptions,
    /// Parameters for the uniform bounds and the remainder fits.
    pub eps_grid: Vec<f64>,
    /// Cap on the Lasota-Yorke constant `C`.
    pub ly_cap: f64,
}

impl Default for QrOptions {
    fn default() -> Self {
        Self {
            mixing: MixingOptions::default(),
            eps_grid: (3..=9).map(|p| 2f64.powi(-p)).collect(),
            ly_cap: 10.0,
        }
    }
}

/// Uniform bounds, growth, the Lasota-Yorke fit and the derivative
/// remainders, together with the mixing rate.
pub fn verify_qr(cocycle: &Cocycle, probes: &ProbeSuite, opts: &QrOptions) -> Result<DiagnosticsReport> {
    let mut report = mixing_rate(cocycle, probes, &opts.mixing)?;
    let spec = cocycle.spec();
    let ladder = spec.ladder;
    let fibers = sample_fibers(cocycle, &opts.mixing);
    let eps_max = spec.family.eps_max();
    let mut grid: Vec<f64> = opts.eps_grid.iter().cloned().filter(|e| e.abs() <= eps_max).collect();
    grid.push(spec.eps);

    // Uniform bounds per ladder level over the parameter grid.
    let levels: Vec<u32> = (0..=ladder.depth).collect();
    let per_point: Vec<Vec<f64>> = grid
        .par_iter()
        .flat_map_iter(|&eps| fibers.iter().map(move |&w| (eps, w)))
        .map(|(eps, w)| {
            let m = cocycle.operator(eps, w, 0)?;
            Ok(levels.iter().map(|&l| m.operator_norm(&ladder, l, l, false)).collect())
        })
        .collect::<Result<_>>()?;
    report.qr1 = levels
        .iter()
        .enumerate()
        .map(|(i, &level)| LevelBound {
            level,
            regularity: ladder.regularity(level),
            max_norm: per_point.iter().map(|v| v[i]).fold(0.0, f64::max),
        })
        .collect();

    // Growth in E_0 and Lasota-Yorke excess between E_1 and E_0.
    let n_max = opts.mixing.n_max;
    let r0 = ladder.regularity(0);
    let r1 = ladder.regularity(1);
    let per_fiber: Vec<(Vec<f64>, Vec<Vec<(f64, f64, f64)>>)> = fibers
        .par_iter()
        .map(|&omega| {
            let mut growth = vec![0.0; n_max];
            let mut probe_norms = vec![Vec::new(); n_max];
            walk_products(cocycle, omega, n_max, |n, p| {
                growth[n - 1] = p.operator_norm(&ladder, 0, 0, false);
                probe_norms[n - 1] = probes
                    .probes
                    .iter()
                    .map(|pr| {
                        (
                            p.apply(&pr.field).sobolev_norm(r1),
                            pr.field.sobolev_norm(r1),
                            pr.field.sobolev_norm(r0),
                        )
                    })
                    .collect();
                Ok(())
            })?;
            Ok((growth, probe_norms))
        })
        .collect::<Result<_>>()?;
    let mut growth = vec![0.0f64; n_max];
    for (g, _) in &per_fiber {
        for (a, b) in growth.iter_mut().zip(g) {
            *a = a.max(*b);
        }
    }
    let (m, _, growth_fit) = geometric_fit(&growth);
    let m = if m > 0.0 {
        m
    } else {
        growth.first().cloned().unwrap_or(0.0)
    };
    let c_growth = growth
        .iter()
        .enumerate()
        .map(|(i, s)| s / m.powi(i as i32 + 1))
        .fold(0.0, f64::max);
    report.growth = Some(GrowthFit {
        m,
        c: c_growth,
        fit: growth_fit,
    });

    let cap = opts.ly_cap;
    let mut excess = vec![0.0f64; n_max];
    for (_, norms) in &per_fiber {
        for (n, row) in norms.iter().enumerate() {
            let mn = m.powi(n as i32 + 1);
            for &(image1, f1, f0) in row {
                let e = ((image1 - cap * mn * f0).max(0.0)) / f1;
                excess[n] = excess[n].max(e);
            }
        }
    }
    let alpha_literal = excess
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > 0.0)
        .map(|(n, s)| (s / cap).powf(1.0 / (n + 1) as f64))
        .fold(0.0, f64::max);
    let (xs, ys): (Vec<f64>, Vec<f64>) = excess
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > 0.0)
        .map(|(n, s)| ((n + 1) as f64, s.ln()))
        .unzip();
    let alpha_regression = linear_fit(&xs, &ys).map(|f| f.slope.exp());
    let alpha = alpha_literal.max(alpha_regression.unwrap_or(0.0));
    let holds = alpha < m * (1.0 - LY_MARGIN);
    report.lasota_yorke = Some(LasotaYorkeFit {
        alpha,
        alpha_literal,
        alpha_regression,
        cap,
        holds,
    });

    // Remainders of the parameter expansion at eps = 0.
    let positive: Vec<f64> = {
        let mut v: Vec<f64> = opts
            .eps_grid
            .iter()
            .cloned()
            .filter(|e| *e > 0.0 && *e <= eps_max)
            .collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v.dedup();
        v
    };
    let depth = ladder.depth;
    report.qr4 = Some(remainder_fit(cocycle, &fibers, &positive, depth, depth - 1, false)?);
    report.qr5 = if depth >= 2 && spec.family.order() >= 1 {
        Some(remainder_fit(cocycle, &fibers, &positive, 2, 0, true)?)
    } else {
        None
    };

    if !holds && report.verdict == Verdict::Mixing {
        report.verdict = Verdict::NonMixing;
    }
    Ok(report)
}

/// `max_omega ||L_eps - L_0 (- eps Q_1)||_{L(E_{j_in}, E_{j_out})}` per eps.
fn remainder_fit(
    cocycle: &Cocycle,
    fibers: &[DriverState],
    grid: &[f64],
    j_in: u32,
    j_out: u32,
    subtract_q1: bool,
) -> Result<RemainderFit> {
    let ladder = cocycle.spec().ladder;
    let rows: Vec<RemainderRow> = grid
        .par_iter()
        .map(|&eps| {
            let mut worst = 0.0f64;
            for &w in fibers {
                let l0 = cocycle.operator(0.0, w, 0)?;
                let le = cocycle.operator(eps, w, 0)?;
                let mut diff = le.combine(C64::new(1.0, 0.0), &l0, C64::new(-1.0, 0.0))?;
                if subtract_q1 {
                    let q1 = cocycle.operator(0.0, w, 1)?;
                    diff = diff.combine(C64::new(1.0, 0.0), &q1, C64::new(-eps, 0.0))?;
                }
                worst = worst.max(diff.operator_norm(&ladder, j_in, j_out, false));
            }
            Ok(RemainderRow { eps, norm: worst })
        })
        .collect::<Result<_>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.norm > FIT_FLOOR)
        .map(|r| (r.eps.ln(), r.norm.ln()))
        .unzip();
    Ok(RemainderFit {
        j_in,
        j_out,
        rows,
        fit: linear_fit(&xs, &ys),
    })
}
