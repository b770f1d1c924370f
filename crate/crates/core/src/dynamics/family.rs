use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest perturbation order supported by the derivative operators.
pub const MAX_ORDER: u32 = 3;

const CHECK_X: usize = 1024;
const CHECK_EPS: usize = 33;
const CHECK_FIBERS: usize = 64;

/// `amplitude * eps^eps_power * sin(2 pi frequency x + 2 pi fiber_multiplier theta + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub frequency: u32,
    pub eps_power: u32,
    pub amplitude: f64,
    pub fiber_multiplier: f64,
    pub phase: f64,
}

impl TrigTerm {
    pub fn sin(frequency: u32, eps_power: u32, amplitude: f64) -> Self {
        Self {
            frequency,
            eps_power,
            amplitude,
            fiber_multiplier: 0.0,
            phase: 0.0,
        }
    }

    pub fn cos(frequency: u32, eps_power: u32, amplitude: f64) -> Self {
        Self {
            phase: FRAC_PI_2,
            ..Self::sin(frequency, eps_power, amplitude)
        }
    }

    pub fn with_fiber_multiplier(mut self, mu: f64) -> Self {
        self.fiber_multiplier = mu;
        self
    }

    /// `d^j/d eps^j d^i/dx^i` of the term.
    pub fn partial(&self, eps_order: u32, x_order: u32, eps: f64, theta: f64, x: f64) -> f64 {
        if eps_order > self.eps_power {
            return 0.0;
        }
        let falling: f64 = (0..eps_order).map(|i| (self.eps_power - i) as f64).product();
        let eps_factor = falling * eps.powi((self.eps_power - eps_order) as i32);
        if eps_factor == 0.0 {
            return 0.0;
        }
        let omega = 2.0 * PI * self.frequency as f64;
        let arg = omega * x + 2.0 * PI * self.fiber_multiplier * theta + self.phase + x_order as f64 * FRAC_PI_2;
        self.amplitude * eps_factor * omega.powi(x_order as i32) * arg.sin()
    }
}

/// Finite sum of [`TrigTerm`]s.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    pub terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn new(terms: Vec<TrigTerm>) -> Self {
        Self { terms }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude == 0.0)
    }

    pub fn eval(&self, eps: f64, theta: f64, x: f64) -> f64 {
        self.partial(0, 0, eps, theta, x)
    }

    pub fn partial(&self, eps_order: u32, x_order: u32, eps: f64, theta: f64, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.partial(eps_order, x_order, eps, theta, x))
            .sum()
    }

    pub fn bandwidth(&self) -> usize {
        self.terms.iter().map(|t| t.frequency as usize).max().unwrap_or(0)
    }

    pub fn eps_degree(&self) -> u32 {
        self.terms.iter().map(|t| t.eps_power).max().unwrap_or(0)
    }

    pub fn is_fiber_dependent(&self) -> bool {
        self.terms.iter().any(|t| t.fiber_multiplier != 0.0)
    }

    pub fn depends_on_eps(&self) -> bool {
        self.terms.iter().any(|t| t.eps_power > 0 && t.amplitude != 0.0)
    }

    /// Upper bound of `sup |.|` over `|eps| <= eps_max`.
    pub fn sup_bound(&self, eps_max: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.amplitude.abs() * eps_max.powi(t.eps_power as i32))
            .sum()
    }

    /// `d^j/d eps^j` at `eps = 0` on the fiber `theta`, as an
    /// eps-independent polynomial with the fiber phase folded in.
    pub fn eps_derivative_at_zero(&self, order: u32, theta: f64) -> TrigPoly {
        let factorial: f64 = (1..=order).map(f64::from).product();
        TrigPoly::new(
            self.terms
                .iter()
                .filter(|t| t.eps_power == order)
                .map(|t| TrigTerm {
                    frequency: t.frequency,
                    eps_power: 0,
                    amplitude: t.amplitude * factorial,
                    fiber_multiplier: 0.0,
                    phase: t.phase + 2.0 * PI * t.fiber_multiplier * theta,
                })
                .collect(),
        )
    }

    pub fn describe(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        self.terms
            .iter()
            .map(|t| {
                format!(
                    "{}*eps^{}*sin(2pi*{}x+2pi*{}w+{})",
                    t.amplitude, t.eps_power, t.frequency, t.fiber_multiplier, t.phase
                )
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

/// Construction parameters for [`CircleFamily`].
#[derive(Clone, Debug, PartialEq)]
pub struct CircleParams {
    /// Topological degree `k >= 2` of the lift `x -> kx + p(eps, omega, x)`.
    pub degree: u32,
    pub periodic: TrigPoly,
    /// Optional smooth conjugacy `h(x) = x + q(x)`; the family is then
    /// `h o E o h^-1`.
    pub conjugacy: Option<TrigPoly>,
    /// Perturbation order `N`.
    pub order: u32,
    /// Smoothness `r`.
    pub smoothness: u32,
    /// Parameter range `|eps| <= eps_max` on which the family is defined.
    pub eps_max: f64,
}

impl CircleParams {
    pub fn new(degree: u32, periodic: TrigPoly) -> Self {
        Self {
            degree,
            periodic,
            conjugacy: None,
            order: MAX_ORDER,
            smoothness: 4,
            eps_max: 1.0,
        }
    }

    pub fn eps_max(mut self, eps_max: f64) -> Self {
        self.eps_max = eps_max;
        self
    }

    pub fn order(mut self, order: u32) -> Self {
        self.order = order;
        self
    }

    pub fn conjugacy(mut self, q: TrigPoly) -> Self {
        self.conjugacy = Some(q);
        self
    }
}

/// Random expanding circle maps `T_{eps,omega}(x) = kx + p(eps, omega, x) mod 1`,
/// optionally conjugated by a fixed diffeomorphism.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleFamily {
    degree: u32,
    periodic: TrigPoly,
    conjugacy: Option<TrigPoly>,
    order: u32,
    smoothness: u32,
    eps_max: f64,
}

impl CircleFamily {
    pub fn new(params: CircleParams) -> Result<Self> {
        let CircleParams {
            degree,
            periodic,
            conjugacy,
            order,
            smoothness,
            eps_max,
        } = params;
        if degree < 2 {
            return Err(Error::InvalidArgument(format!("degree {degree} must be at least 2")));
        }
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::InvalidArgument(format!(
                "perturbation order {order} outside 1..={MAX_ORDER}"
            )));
        }
        if periodic.eps_degree() > order {
            return Err(Error::InvalidArgument(format!(
                "eps-polynomial degree {} exceeds the perturbation order {order}",
                periodic.eps_degree()
            )));
        }
        if !(eps_max > 0.0 && eps_max <= 1.0) {
            return Err(Error::InvalidArgument(format!("eps_max {eps_max} outside (0, 1]")));
        }
        let all_finite = periodic
            .terms
            .iter()
            .chain(conjugacy.iter().flat_map(|q| q.terms.iter()))
            .all(|t| t.amplitude.is_finite() && t.fiber_multiplier.is_finite() && t.phase.is_finite());
        if !all_finite {
            return Err(Error::InvalidArgument("non-finite trigonometric coefficient".into()));
        }
        if let Some(q) = &conjugacy {
            if q.depends_on_eps() || q.is_fiber_dependent() {
                return Err(Error::InvalidArgument(
                    "the conjugacy must not depend on eps or on the fiber".into(),
                ));
            }
        }
        let family = Self {
            degree,
            periodic,
            conjugacy,
            order,
            smoothness,
            eps_max,
        };
        family.check_expanding()?;
        Ok(family)
    }

    /// The identity map of the circle. It is not expanding and bypasses
    /// the construction check; it serves as a non-mixing reference system.
    pub fn identity() -> Self {
        Self {
            degree: 1,
            periodic: TrigPoly::zero(),
            conjugacy: None,
            order: MAX_ORDER,
            smoothness: 4,
            eps_max: 1.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.degree == 1 && self.periodic.is_zero() && self.conjugacy.is_none()
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn periodic(&self) -> &TrigPoly {
        &self.periodic
    }

    pub fn conjugacy(&self) -> Option<&TrigPoly> {
        self.conjugacy.as_ref()
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn smoothness(&self) -> u32 {
        self.smoothness
    }

    pub fn eps_max(&self) -> f64 {
        self.eps_max
    }

    pub fn is_fiber_dependent(&self) -> bool {
        self.periodic.is_fiber_dependent()
    }

    /// Lift `kx + p(eps, theta, x)` before conjugation.
    pub fn lift(&self, eps: f64, theta: f64, x: f64) -> f64 {
        self.degree as f64 * x + self.periodic.eval(eps, theta, x)
    }

    pub fn lift_derivative(&self, eps: f64, theta: f64, x: f64) -> f64 {
        self.degree as f64 + self.periodic.partial(0, 1, eps, theta, x)
    }

    /// `h(u) = u + q(u)`.
    pub fn conj(&self, u: f64) -> f64 {
        u + self.conjugacy.as_ref().map_or(0.0, |q| q.eval(0.0, 0.0, u))
    }

    /// `h^(i)(u)` for `i >= 1`.
    pub fn conj_derivative(&self, order: u32, u: f64) -> f64 {
        let q = self
            .conjugacy
            .as_ref()
            .map_or(0.0, |q| q.partial(0, order, 0.0, 0.0, u));
        if order == 1 {
            1.0 + q
        } else {
            q
        }
    }

    /// `h^-1(x)` by bisection; `h` is increasing.
    pub fn conj_inverse(&self, x: f64) -> f64 {
        let Some(q) = &self.conjugacy else {
            return x;
        };
        let spread = q.sup_bound(0.0) + 1e-12;
        let (mut lo, mut hi) = (x - spread, x + spread);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.conj(mid) < x {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-16 {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// The actual map on the circle, unreduced: `h(E(h^-1 x))`.
    pub fn image(&self, eps: f64, theta: f64, x: f64) -> f64 {
        let u = self.conj_inverse(x);
        self.conj(self.lift(eps, theta, u))
    }

    /// `T'(x)` of the (possibly conjugated) map.
    pub fn map_derivative(&self, eps: f64, theta: f64, x: f64) -> f64 {
        let u = self.conj_inverse(x);
        let e = self.lift(eps, theta, u);
        self.conj_derivative(1, e) * self.lift_derivative(eps, theta, u) / self.conj_derivative(1, u)
    }

    fn check_expanding(&self) -> Result<()> {
        if let Some(q) = &self.conjugacy {
            let min_h = grid_min(|u| 1.0 + q.partial(0, 1, 0.0, 0.0, u));
            if min_h <= 0.0 {
                return Err(Error::NotExpanding(format!(
                    "conjugacy is not a diffeomorphism (min h' = {min_h})"
                )));
            }
        }
        let fibers = if self.is_fiber_dependent() { CHECK_FIBERS } else { 1 };
        for f in 0..fibers {
            let theta = f as f64 / fibers as f64;
            for e in 0..CHECK_EPS {
                let eps = self.eps_max * (2.0 * e as f64 / (CHECK_EPS - 1) as f64 - 1.0);
                // On the u-grid: T'(h(u)) = h'(E u) E'(u) / h'(u).
                let min = grid_min(|u| {
                    let e_u = self.lift(eps, theta, u);
                    self.conj_derivative(1, e_u) * self.lift_derivative(eps, theta, u) / self.conj_derivative(1, u)
                });
                let at_zero = e == (CHECK_EPS - 1) / 2;
                if at_zero && min <= 1.0 {
                    return Err(Error::NotExpanding(format!(
                        "min T' = {min} <= 1 at eps = 0 on fiber {theta}"
                    )));
                }
                if min <= 0.0 {
                    return Err(Error::NotExpanding(format!(
                        "T' vanishes (min {min}) at eps = {eps} on fiber {theta}; reduce eps_max"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Minimum of `T'_eps` on the check grid for one fiber.
    pub fn min_derivative(&self, eps: f64, theta: f64) -> f64 {
        grid_min(|u| {
            let e_u = self.lift(eps, theta, u);
            self.conj_derivative(1, e_u) * self.lift_derivative(eps, theta, u) / self.conj_derivative(1, u)
        })
    }

    pub fn describe(&self) -> String {
        if self.is_identity() {
            return "identity".into();
        }
        let mut s = format!("circle(degree={}, p={}", self.degree, self.periodic.describe());
        if let Some(q) = &self.conjugacy {
            s.push_str(&format!(", conjugacy={}", q.describe()));
        }
        s.push(')');
        s
    }
}

fn grid_min(f: impl Fn(f64) -> f64) -> f64 {
    (0..CHECK_X)
        .map(|i| f(i as f64 / CHECK_X as f64))
        .fold(f64::INFINITY, f64::min)
}

/// Skew products `(x, s) -> (E(x), s + tau(x)/2pi) mod 1` over a circle family.
#[derive(Clone, Debug, PartialEq)]
pub struct U1Family {
    base: CircleFamily,
    tau: TrigPoly,
}

impl U1Family {
    pub fn new(base: CircleFamily, tau: TrigPoly) -> Result<Self> {
        if tau.eps_degree() > base.order() {
            return Err(Error::InvalidArgument(format!(
                "tau has eps-degree {} above the family order {}",
                tau.eps_degree(),
                base.order()
            )));
        }
        if !tau.terms.iter().all(|t| t.amplitude.is_finite() && t.phase.is_finite()) {
            return Err(Error::InvalidArgument("non-finite tau coefficient".into()));
        }
        Ok(Self { base, tau })
    }

    pub fn base(&self) -> &CircleFamily {
        &self.base
    }

    pub fn tau(&self) -> &TrigPoly {
        &self.tau
    }
}

/// A coordinate of `d^j/d eps^j T` at `eps = 0`:
/// `linear[0] x + linear[1] s + periodic(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateFunction {
    pub linear: [f64; 2],
    pub periodic: TrigPoly,
}

/// Parametric random map `eps -> T_{eps, omega}`.
#[derive(Clone, Debug, PartialEq)]
pub enum MapFamily {
    CircleExpanding(CircleFamily),
    U1Extension(U1Family),
}

impl MapFamily {
    pub fn circle(params: CircleParams) -> Result<Self> {
        CircleFamily::new(params).map(Self::CircleExpanding)
    }

    pub fn u1(base: CircleParams, tau: TrigPoly) -> Result<Self> {
        U1Family::new(CircleFamily::new(base)?, tau).map(Self::U1Extension)
    }

    /// Identity on the circle, or on the torus when `tau` is given.
    pub fn identity(tau: Option<TrigPoly>) -> Result<Self> {
        match tau {
            None => Ok(Self::CircleExpanding(CircleFamily::identity())),
            Some(tau) => U1Family::new(CircleFamily::identity(), tau).map(Self::U1Extension),
        }
    }

    pub fn dim(&self) -> crate::spectral::Dim {
        match self {
            Self::CircleExpanding(_) => crate::spectral::Dim::One,
            Self::U1Extension(_) => crate::spectral::Dim::Two,
        }
    }

    pub fn base(&self) -> &CircleFamily {
        match self {
            Self::CircleExpanding(c) => c,
            Self::U1Extension(u) => u.base(),
        }
    }

    pub fn tau(&self) -> Option<&TrigPoly> {
        match self {
            Self::CircleExpanding(_) => None,
            Self::U1Extension(u) => Some(u.tau()),
        }
    }

    pub fn order(&self) -> u32 {
        self.base().order()
    }

    pub fn eps_max(&self) -> f64 {
        self.base().eps_max()
    }

    pub fn is_fiber_dependent(&self) -> bool {
        self.base().is_fiber_dependent() || self.tau().is_some_and(TrigPoly::is_fiber_dependent)
    }

    /// Whether `d/d eps T` vanishes identically.
    pub fn is_unperturbed(&self) -> bool {
        !self.base().periodic().depends_on_eps() && !self.tau().is_some_and(TrigPoly::depends_on_eps)
    }

    pub fn check_eps(&self, eps: f64) -> Result<()> {
        if !eps.is_finite() || eps.abs() > self.eps_max() {
            return Err(Error::InvalidArgument(format!(
                "eps = {eps} outside the family range |eps| <= {}",
                self.eps_max()
            )));
        }
        Ok(())
    }

    /// `T_{eps, theta}(point)`, reduced mod 1 per coordinate.
    pub fn eval_map(&self, eps: f64, theta: f64, point: [f64; 2]) -> Result<[f64; 2]> {
        self.check_eps(eps)?;
        let base = self.base();
        let x = base.image(eps, theta, point[0]).rem_euclid(1.0);
        let s = match self.tau() {
            None => 0.0,
            Some(tau) => (point[1] + tau.eval(eps, theta, point[0]) / (2.0 * PI)).rem_euclid(1.0),
        };
        Ok([x, s])
    }

    /// `d^j/d eps^j T` at `eps = 0` on the fiber `theta`, per coordinate.
    pub fn eps_derivative(&self, order: u32, theta: f64) -> Result<Vec<CoordinateFunction>> {
        if order > self.order() {
            return Err(Error::Order {
                requested: order as usize,
                available: self.order() as usize,
            });
        }
        let base = self.base();
        if base.conjugacy().is_some() {
            return Err(Error::InvalidArgument(
                "eps-derivatives of conjugated families are not trigonometric polynomials".into(),
            ));
        }
        let x_linear = if order == 0 { base.degree() as f64 } else { 0.0 };
        let mut out = vec![CoordinateFunction {
            linear: [x_linear, 0.0],
            periodic: base.periodic().eps_derivative_at_zero(order, theta),
        }];
        if let Some(tau) = self.tau() {
            let mut periodic = tau.eps_derivative_at_zero(order, theta);
            for t in &mut periodic.terms {
                t.amplitude /= 2.0 * PI;
            }
            out.push(CoordinateFunction {
                linear: [0.0, if order == 0 { 1.0 } else { 0.0 }],
                periodic,
            });
        }
        Ok(out)
    }

    /// Jacobian determinant `E'(x)` (triangular with unit s-diagonal for U(1)).
    pub fn jacobian(&self, eps: f64, theta: f64, x: f64) -> f64 {
        self.base().map_derivative(eps, theta, x)
    }

    pub fn describe(&self) -> String {
        match self {
            Self::CircleExpanding(c) => c.describe(),
            Self::U1Extension(u) => format!("u1(base={}, tau={})", u.base.describe(), u.tau.describe()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doubling() -> MapFamily {
        MapFamily::circle(CircleParams::new(2, TrigPoly::zero())).unwrap()
    }

    fn sin4() -> MapFamily {
        MapFamily::circle(CircleParams::new(2, TrigPoly::new(vec![TrigTerm::sin(2, 1, 1.0)])).eps_max(0.15)).unwrap()
    }

    #[test]
    fn eval_examples() {
        let [x, _] = doubling().eval_map(0.0, 0.0, [0.3, 0.0]).unwrap();
        assert!((x - 0.6).abs() < 1e-15);

        let f = sin4();
        for x in [0.1, 0.37, 0.8] {
            let [y, _] = f.eval_map(0.0, 0.0, [x, 0.0]).unwrap();
            assert!((y - (2.0 * x).rem_euclid(1.0)).abs() < 1e-15);
        }

        let alpha = 0.7;
        let u1 = MapFamily::u1(
            CircleParams::new(2, TrigPoly::zero()),
            TrigPoly::new(vec![TrigTerm::cos(0, 0, alpha)]),
        )
        .unwrap();
        let [x, s] = u1.eval_map(0.0, 0.0, [0.25, 0.5]).unwrap();
        assert!((x - 0.5).abs() < 1e-15);
        assert!((s - (0.5 + alpha / (2.0 * PI)).rem_euclid(1.0)).abs() < 1e-15);
    }

    #[test]
    fn eps_derivative_examples() {
        let f = sin4();
        let d1 = f.eps_derivative(1, 0.0).unwrap();
        for x in [0.05, 0.3, 0.71] {
            assert!((d1[0].periodic.eval(0.0, 0.0, x) - (4.0 * PI * x).sin()).abs() < 1e-14);
        }
        assert_eq!(d1[0].linear, [0.0, 0.0]);
        let d2 = f.eps_derivative(2, 0.0).unwrap();
        assert!(d2[0].periodic.is_zero() || d2[0].periodic.terms.is_empty());

        let quad = MapFamily::circle(CircleParams::new(2, TrigPoly::new(vec![TrigTerm::cos(1, 2, 1.0)])).eps_max(0.5))
            .unwrap();
        let d2 = quad.eps_derivative(2, 0.0).unwrap();
        for x in [0.05, 0.3, 0.71] {
            let expect = 2.0 * (2.0 * PI * x).cos();
            assert!((d2[0].periodic.eval(0.0, 0.0, x) - expect).abs() < 1e-14);
        }

        let d0 = f.eps_derivative(0, 0.0).unwrap();
        assert_eq!(d0[0].linear, [2.0, 0.0]);

        let low = MapFamily::circle(CircleParams::new(2, TrigPoly::zero()).order(1)).unwrap();
        assert!(matches!(low.eps_derivative(2, 0.0), Err(Error::Order { .. })));
    }

    #[test]
    fn mixed_partials_commute() {
        let p = TrigPoly::new(vec![
            TrigTerm::sin(2, 1, 0.3).with_fiber_multiplier(1.0),
            TrigTerm::cos(1, 2, 0.2),
        ]);
        for &(eps, theta, x) in &[(0.1, 0.2, 0.3), (-0.05, 0.7, 0.9)] {
            let a = p.partial(1, 1, eps, theta, x);
            // central difference in eps of the x-derivative
            let h = 1e-6;
            let fd = (p.partial(0, 1, eps + h, theta, x) - p.partial(0, 1, eps - h, theta, x)) / (2.0 * h);
            assert!((a - fd).abs() < 1e-7);
        }
    }

    #[test]
    fn expansion_is_checked() {
        let weak = CircleParams::new(2, TrigPoly::new(vec![TrigTerm::sin(1, 0, 0.2)]));
        assert!(matches!(MapFamily::circle(weak), Err(Error::NotExpanding(_))));
        // sin(4 pi x) with eps up to 1 folds the circle.
        let folded = CircleParams::new(2, TrigPoly::new(vec![TrigTerm::sin(2, 1, 1.0)]));
        assert!(matches!(MapFamily::circle(folded), Err(Error::NotExpanding(_))));
        assert!(CircleFamily::new(CircleParams::new(1, TrigPoly::zero())).is_err());
    }

    #[test]
    fn degree_and_jacobian() {
        let f = MapFamily::circle(
            CircleParams::new(
                3,
                TrigPoly::new(vec![TrigTerm::sin(1, 1, 0.2).with_fiber_multiplier(1.0)]),
            )
            .eps_max(0.5),
        )
        .unwrap();
        let base = f.base();
        for &eps in &[-0.5, 0.0, 0.3] {
            // The lift gains exactly the degree over one period.
            let jump = base.lift(eps, 0.4, 1.0) - base.lift(eps, 0.4, 0.0);
            assert!((jump - 3.0).abs() < 1e-12);
            assert!(base.min_derivative(eps, 0.4) > 1.0);
        }
    }

    #[test]
    fn conjugacy_round_trip() {
        let fam = MapFamily::circle(
            CircleParams::new(2, TrigPoly::zero()).conjugacy(TrigPoly::new(vec![TrigTerm::sin(1, 0, 0.05)])),
        )
        .unwrap();
        let base = fam.base();
        for x in [0.0, 0.2, 0.5, 0.93] {
            let u = base.conj_inverse(x);
            assert!((base.conj(u) - x).abs() < 1e-14);
            // T(h(u)) = h(2u)
            let [y, _] = fam.eval_map(0.0, 0.0, [base.conj(0.3 * x), 0.0]).unwrap();
            let want = base.conj(0.6 * x);
            let gap = (y - want).rem_euclid(1.0);
            assert!(gap.min(1.0 - gap) < 1e-12, "{x}: {y} vs {want}");
        }
        assert!(fam.eps_derivative(1, 0.0).is_err());
    }
}
