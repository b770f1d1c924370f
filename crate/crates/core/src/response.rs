//! Quenched response terms `v^(1)`, `v^(2)` of the equivariant density as
//! truncated backward Neumann sums, a finite-difference oracle, and the
//! Taylor-remainder sweep.
//!
//! Differentiating `v_eps(sigma omega) = A_eps(omega) v_eps(omega)` gives,
//! with `F_j = sigma^{-j} omega`,
//!
//! * `v1(omega) = sum_n A0^{(n)}(F_n) Q1(F_{n+1}) v0(F_{n+1})`
//! * `v2(omega) = sum_n A0^{(n)}(F_n) [Q1 v1 + Q2 v0](F_{n+1})`.

use rayon::prelude::*;
use serde::Serialize;

use crate::cocycle::{equivariant_density_at, Cocycle, DensityOptions, DiagnosticsReport};
use crate::dynamics::DriverState;
use crate::error::{Error, Result};
use crate::fit::{linear_fit, LinearFit};
use crate::spectral::{SpectralField, C64};

/// Largest Neumann truncation chosen automatically.
pub const MAX_AUTO_TRUNCATION: usize = 200;
/// Target of the automatic truncation rule `rho^n / (1 - rho) < target`.
pub const TRUNCATION_TARGET: f64 = 1e-12;
/// Mixing rates at or above this are rejected.
pub const RATE_LIMIT: f64 = 0.99;

/// Smallest `n` with `rho^n / (1 - rho) < 1e-12`, capped at 200.
pub fn default_truncation(rho: f64) -> usize {
    if rho <= 0.0 {
        return 1;
    }
    (1..=MAX_AUTO_TRUNCATION)
        .find(|&n| rho.powi(n as i32) / (1.0 - rho) < TRUNCATION_TARGET)
        .unwrap_or(MAX_AUTO_TRUNCATION)
}

/// Mixing data a response computation relies on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MixingSummary {
    pub rho: f64,
    /// `C` in `||A^{(n)}|_{ker xi}|| <= C rho^n`.
    pub constant: f64,
}

impl From<&DiagnosticsReport> for MixingSummary {
    fn from(r: &DiagnosticsReport) -> Self {
        Self {
            rho: r.rho,
            constant: r.mixing_constant.max(1.0),
        }
    }
}

/// `v0`, `v1` and optionally `v2` on one fiber.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResponseExpansion {
    pub fiber: DriverState,
    pub label: f64,
    #[serde(skip)]
    pub v0: SpectralField,
    #[serde(skip)]
    pub v1: SpectralField,
    #[serde(skip)]
    pub v2: Option<SpectralField>,
    pub n_trunc: usize,
    pub rho: f64,
    /// `C rho^{n+1} / (1 - rho) max ||Q1 v0||_{E_1}`.
    pub tail_v1: f64,
    /// Tails of the `Q2 v0` and `Q1 v1` summands of `v2`.
    pub tail_v2: Option<[f64; 2]>,
    pub mass_v0: f64,
    pub mass_v1: f64,
    pub mass_v2: Option<f64>,
}

/// Neumann-sum solver for the response terms at `eps = 0`.
#[derive(Debug)]
pub struct ResponseSolver<'a> {
    cocycle: &'a Cocycle,
    mixing: MixingSummary,
    density: DensityOptions,
    n_trunc: usize,
}

impl<'a> ResponseSolver<'a> {
    /// Errors with [`Error::RateTooSlow`] when `rho >= 0.99`.
    pub fn new(
        cocycle: &'a Cocycle,
        mixing: MixingSummary,
        density: DensityOptions,
        n_trunc: Option<usize>,
    ) -> Result<Self> {
        if !(mixing.rho < RATE_LIMIT) {
            return Err(Error::RateTooSlow {
                rate: mixing.rho,
                threshold: RATE_LIMIT,
            });
        }
        let n_trunc = n_trunc.unwrap_or_else(|| default_truncation(mixing.rho));
        Ok(Self {
            cocycle,
            mixing,
            density,
            n_trunc,
        })
    }

    pub fn n_trunc(&self) -> usize {
        self.n_trunc
    }

    pub fn with_truncation(&self, n_trunc: usize) -> Self {
        Self {
            n_trunc,
            density: self.density.clone(),
            ..*self
        }
    }

    pub fn cocycle(&self) -> &Cocycle {
        self.cocycle
    }

    pub fn density_options(&self) -> &DensityOptions {
        &self.density
    }

    fn tail_factor(&self) -> f64 {
        let rho = self.mixing.rho;
        self.mixing.constant * rho.powi(self.n_trunc as i32 + 1) / (1.0 - rho)
    }

    /// `v0` on `F_0..=F_depth`, by pullback at `F_depth` and forward transport.
    fn backward_densities(&self, omega: DriverState, depth: usize) -> Result<Vec<SpectralField>> {
        let driver = self.cocycle.driver();
        let mut out = vec![SpectralField::zeros(self.cocycle.spec().dim(), self.cocycle.spec().bandwidth); depth + 1];
        let far = driver.advance(omega, -(depth as i64));
        out[depth] = equivariant_density_at(self.cocycle, 0.0, far, &self.density)?.field;
        for j in (0..depth).rev() {
            let next = self
                .cocycle
                .operator(0.0, driver.advance(omega, -(j as i64) - 1), 0)?
                .apply(&out[j + 1]);
            out[j] = next.scaled(next.mass().inv());
        }
        Ok(out)
    }

    /// Backward recursion `u_j = A0(F_{j+1}) u_{j+1} + s_{j+1}`, `u_depth = 0`,
    /// returning all `u_j`.
    fn neumann(&self, omega: DriverState, sources: &[SpectralField], depth: usize) -> Result<Vec<SpectralField>> {
        let driver = self.cocycle.driver();
        let spec = self.cocycle.spec();
        let mut u = vec![SpectralField::zeros(spec.dim(), spec.bandwidth); depth + 1];
        for j in (0..depth).rev() {
            let a0 = self.cocycle.operator(0.0, driver.advance(omega, -(j as i64) - 1), 0)?;
            let mut next = a0.apply(&u[j + 1]);
            next.axpy(C64::new(1.0, 0.0), &sources[j + 1]);
            u[j] = next;
        }
        Ok(u)
    }

    /// Full expansion on one fiber; `v2` requires family order at least 2.
    pub fn expansion(&self, omega: DriverState, second_order: bool) -> Result<ResponseExpansion> {
        let spec = self.cocycle.spec();
        if second_order && spec.family.order() < 2 {
            return Err(Error::Order {
                requested: 2,
                available: spec.family.order() as usize,
            });
        }
        let driver = self.cocycle.driver();
        let n = self.n_trunc;
        let sum_depth = n + 1;
        let depth = if second_order { 2 * n + 2 } else { sum_depth };
        let level = spec.ladder.regularity(1);
        let v0 = self.backward_densities(omega, depth)?;
        let fiber = |j: usize| driver.advance(omega, -(j as i64));

        let q1v0: Vec<SpectralField> = (0..=depth)
            .map(|j| Ok(self.cocycle.operator(0.0, fiber(j), 1)?.apply(&v0[j])))
            .collect::<Result<_>>()?;
        let tail = self.tail_factor();
        let q1_max = q1v0[1..=sum_depth]
            .iter()
            .map(|f| f.sobolev_norm(level))
            .fold(0.0, f64::max);
        let u_report = self.neumann(omega, &q1v0, sum_depth)?;
        let v1 = u_report[0].clone();

        let (v2, tail_v2) = if second_order {
            let u = self.neumann(omega, &q1v0, depth)?;
            let mut q2_max = 0.0f64;
            let mut q1u_max = 0.0f64;
            let mut sources = Vec::with_capacity(depth + 1);
            for j in 0..=depth {
                let q2 = self.cocycle.operator(0.0, fiber(j), 2)?.apply(&v0[j]);
                let q1u = self.cocycle.operator(0.0, fiber(j), 1)?.apply(&u[j]);
                if (1..=sum_depth).contains(&j) {
                    q2_max = q2_max.max(q2.sobolev_norm(level));
                    q1u_max = q1u_max.max(q1u.sobolev_norm(level));
                }
                sources.push(q2.add(&q1u));
            }
            let w = self.neumann(omega, &sources, sum_depth)?;
            (Some(w[0].clone()), Some([tail * q2_max, tail * q1u_max]))
        } else {
            (None, None)
        };

        Ok(ResponseExpansion {
            fiber: omega,
            label: self.cocycle.label(omega),
            mass_v0: v0[0].mass().norm(),
            mass_v1: v1.mass().norm(),
            mass_v2: v2.as_ref().map(|f| f.mass().norm()),
            v0: v0[0].clone(),
            v1,
            v2,
            n_trunc: n,
            rho: self.mixing.rho,
            tail_v1: tail * q1_max,
            tail_v2,
        })
    }

    pub fn linear_response(&self, omega: DriverState) -> Result<SpectralField> {
        Ok(self.expansion(omega, false)?.v1)
    }

    pub fn quadratic_response(&self, omega: DriverState) -> Result<SpectralField> {
        Ok(self.expansion(omega, true)?.v2.expect("second-order expansion"))
    }
}

/// Central-difference estimate of a response term.
#[derive(Clone, Debug, PartialEq)]
pub struct FdEstimate {
    pub field: SpectralField,
    /// Richardson estimate `(4/3) ||D_eps - D_{eps/2}||_{E_1}` of the `O(eps^2)` error.
    pub discretization_error: f64,
    /// Propagated density tolerance, `tol/eps` or `2 tol/eps^2`.
    pub solver_error: f64,
}

impl FdEstimate {
    pub fn error_bound(&self) -> f64 {
        self.discretization_error + self.solver_error
    }
}

/// `(v_eps - v_{-eps}) / 2eps` for order 1 and
/// `(v_eps - 2 v_0 + v_{-eps}) / (2 eps^2)` for order 2.
pub fn fd_oracle(
    cocycle: &Cocycle,
    omega: DriverState,
    eps: f64,
    order: u32,
    density: &DensityOptions,
) -> Result<FdEstimate> {
    if !(1..=2).contains(&order) {
        return Err(Error::InvalidArgument(format!(
            "finite differences of order {order} are not provided"
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    if density.tol > eps.powi(order as i32 + 1) {
        return Err(Error::InvalidArgument(format!(
            "density tolerance {} exceeds eps^{} = {}",
            density.tol,
            order + 1,
            eps.powi(order as i32 + 1)
        )));
    }
    let v = |e: f64| equivariant_density_at(cocycle, e, omega, density).map(|d| d.field);
    let stencil = |h: f64| -> Result<SpectralField> {
        let plus = v(h)?;
        let minus = v(-h)?;
        Ok(match order {
            1 => plus.sub(&minus).scaled(C64::new(0.5 / h, 0.0)),
            _ => {
                let mut s = plus.add(&minus);
                s.axpy(C64::new(-2.0, 0.0), &v(0.0)?);
                s.scaled(C64::new(0.5 / (h * h), 0.0))
            }
        })
    };
    let coarse = stencil(eps)?;
    let fine = stencil(eps / 2.0)?;
    let level = cocycle.spec().ladder.regularity(1);
    Ok(FdEstimate {
        discretization_error: 4.0 / 3.0 * coarse.sub(&fine).sobolev_norm(level),
        solver_error: match order {
            1 => density.tol / eps,
            _ => 2.0 * density.tol / (eps * eps),
        },
        field: coarse,
    })
}

/// Remainders of one Taylor order over the sweep grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderFit {
    pub order: u32,
    pub remainders: Vec<f64>,
    /// Points with `eps >= tol^{1/order}` entering the fit.
    pub fitted_points: usize,
    pub fit: Option<LinearFit>,
    /// All remainders at or below ten solver tolerances.
    pub saturated: bool,
}

impl OrderFit {
    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }
}

/// Remainders `||v_eps - sum_{k<j} eps^k v^(k)||_{E_0}` and their log-log
/// slopes on one fiber.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub fiber: DriverState,
    pub label: f64,
    pub eps_grid: Vec<f64>,
    pub tol: f64,
    pub orders: Vec<OrderFit>,
    /// `(0, log(1/alpha) / log(M/alpha))` when the Lasota-Yorke fit holds.
    pub eta_interval: Option<[f64; 2]>,
}

impl ConvergenceReport {
    pub fn order(&self, j: u32) -> Option<&OrderFit> {
        self.orders.iter().find(|o| o.order == j)
    }

    /// Rows `epsilon,order,remainder_norm`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,order,remainder_norm\n");
        for o in &self.orders {
            for (e, r) in self.eps_grid.iter().zip(&o.remainders) {
                out.push_str(&format!("{e},{},{r}\n", o.order));
            }
        }
        out
    }
}

/// Admissible remainder exponents from the Lasota-Yorke constants.
pub fn eta_interval(diagnostics: &DiagnosticsReport) -> Option<[f64; 2]> {
    let ly = diagnostics.lasota_yorke.as_ref()?;
    let m = diagnostics.growth.as_ref()?.m;
    if !ly.holds {
        return None;
    }
    if ly.alpha <= 0.0 {
        return Some([0.0, 1.0]);
    }
    Some([0.0, (1.0 / ly.alpha).ln() / (m / ly.alpha).ln()])
}

/// Taylor remainders of the exact densities `v_eps` against the expansion.
/// Grid points are processed independently; the first failing point aborts
/// with its parameter in the error.
pub fn epsilon_sweep(
    solver: &ResponseSolver<'_>,
    omega: DriverState,
    eps_grid: &[f64],
    diagnostics: Option<&DiagnosticsReport>,
) -> Result<ConvergenceReport> {
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument(
            "sweep grid must be non-empty and positive".into(),
        ));
    }
    let cocycle = solver.cocycle();
    let second = cocycle.spec().family.order() >= 2;
    let exp = solver.expansion(omega, second)?;
    let tol = solver.density_options().tol;
    let densities: Vec<SpectralField> = eps_grid
        .par_iter()
        .map(|&e| equivariant_density_at(cocycle, e, omega, solver.density_options()).map(|d| d.field))
        .collect::<Result<_>>()?;
    let r0 = cocycle.spec().ladder.regularity(0);
    let max_order = if second { 3 } else { 2 };
    let orders = (1..=max_order)
        .map(|j| {
            let remainders: Vec<f64> = eps_grid
                .iter()
                .zip(&densities)
                .map(|(&e, v)| {
                    let mut r = v.sub(&exp.v0);
                    if j >= 2 {
                        r.axpy(C64::new(-e, 0.0), &exp.v1);
                    }
                    if j >= 3 {
                        r.axpy(C64::new(-e * e, 0.0), exp.v2.as_ref().expect("second order"));
                    }
                    r.sobolev_norm(r0)
                })
                .collect();
            let floor = tol.powf(1.0 / j as f64);
            let saturated = remainders.iter().all(|r| *r <= 10.0 * tol);
            let (xs, ys): (Vec<f64>, Vec<f64>) = eps_grid
                .iter()
                .zip(&remainders)
                .filter(|(e, r)| **e >= floor && **r > 0.0)
                .map(|(e, r)| (e.ln(), r.ln()))
                .unzip();
            OrderFit {
                order: j,
                fitted_points: xs.len(),
                fit: if saturated { None } else { linear_fit(&xs, &ys) },
                remainders,
                saturated,
            }
        })
        .collect();
    Ok(ConvergenceReport {
        fiber: omega,
        label: exp.label,
        eps_grid: eps_grid.to_vec(),
        tol,
        orders,
        eta_interval: diagnostics.and_then(eta_interval),
    })
}
