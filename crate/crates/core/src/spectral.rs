//! Truncated Fourier fields on the one- and two-dimensional torus.
//!
//! A [`SpectralField`] stores the coefficients `c_k` of
//! `f(x) = sum_k c_k exp(2 pi i k.x)` densely over the frequency box
//! `|k_i| <= K`. Sobolev norms use the multi-index weight
//! `w_m(k) = sum_{|a| <= m} prod_i (2 pi k_i)^(2 a_i)`, so that
//! `||f||_{H^m}^2 = sum_k w_m(k) |c_k|^2` exactly.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Frequency vector. The second component is always zero on the circle.
pub type Freq = [i64; 2];

/// Largest bandwidth accepted when reading fields from text.
pub const MAX_PARSE_BANDWIDTH_1D: usize = 1 << 14;
pub const MAX_PARSE_BANDWIDTH_2D: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dim {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Dim {
    pub fn rank(self) -> usize {
        match self {
            Dim::One => 1,
            Dim::Two => 2,
        }
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Unnormalized in-place DFT. `inverse` uses the `exp(+2 pi i jk/G)` kernel.
pub(crate) fn fft_inplace(buf: &mut [C64], inverse: bool) {
    plan(buf.len(), inverse).process(buf);
}

fn fft2_inplace(buf: &mut [C64], side: usize, inverse: bool) {
    let fft = plan(side, inverse);
    for row in buf.chunks_mut(side) {
        fft.process(row);
    }
    let mut col = vec![C64::new(0.0, 0.0); side];
    for j in 0..side {
        for i in 0..side {
            col[i] = buf[i * side + j];
        }
        fft.process(&mut col);
        for i in 0..side {
            buf[i * side + j] = col[i];
        }
    }
}

fn wrap(k: i64, g: usize) -> usize {
    k.rem_euclid(g as i64) as usize
}

/// Multi-index Sobolev weight `w_m(k)`.
pub fn sobolev_weight(k: Freq, m: u32) -> f64 {
    let x = (2.0 * PI * k[0] as f64).powi(2);
    let y = (2.0 * PI * k[1] as f64).powi(2);
    let mut total = 0.0;
    let mut xa = 1.0;
    for a in 0..=m {
        let mut yb = 1.0;
        for _ in 0..=(m - a) {
            total += xa * yb;
            yb *= y;
        }
        xa *= x;
    }
    total
}

/// Number of multi-indices `a` with `|a| <= m` in the given dimension.
pub fn multi_index_count(dim: Dim, m: u32) -> usize {
    let m = m as usize;
    match dim {
        Dim::One => m + 1,
        Dim::Two => (m + 1) * (m + 2) / 2,
    }
}

/// The ladder `E_j = H^{m+j}`, `j = 0..=depth`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceLadder {
    pub base: u32,
    pub depth: u32,
}

impl SpaceLadder {
    pub fn new(base: u32, depth: u32) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArgument("ladder depth must be positive".into()));
        }
        Ok(Self { base, depth })
    }

    /// Sobolev regularity of `E_j`.
    pub fn regularity(&self, level: u32) -> u32 {
        self.base + level
    }

    pub fn norm(&self, f: &SpectralField, level: u32) -> f64 {
        f.sobolev_norm(self.regularity(level))
    }
}

/// Samples on the uniform grid `x_j = j/G` (per axis, row-major `x` then `s`).
#[derive(Clone, Debug, PartialEq)]
pub struct GridSamples {
    pub dim: Dim,
    pub size: usize,
    pub values: Vec<C64>,
}

impl GridSamples {
    pub fn from_fn(dim: Dim, size: usize, mut f: impl FnMut(f64, f64) -> C64) -> Self {
        let h = 1.0 / size as f64;
        let values = match dim {
            Dim::One => (0..size).map(|j| f(j as f64 * h, 0.0)).collect(),
            Dim::Two => (0..size * size)
                .map(|idx| f((idx / size) as f64 * h, (idx % size) as f64 * h))
                .collect(),
        };
        Self { dim, size, values }
    }

    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }

    pub fn min_real(&self) -> f64 {
        self.values.iter().map(|v| v.re).fold(f64::INFINITY, f64::min)
    }

    /// CSV dump `x[,s],value` of the real parts.
    pub fn to_csv(&self) -> String {
        let h = 1.0 / self.size as f64;
        let mut out = String::new();
        match self.dim {
            Dim::One => {
                out.push_str("x,value\n");
                for (j, v) in self.values.iter().enumerate() {
                    let _ = writeln!(out, "{},{}", j as f64 * h, v.re);
                }
            }
            Dim::Two => {
                out.push_str("x,s,value\n");
                for (idx, v) in self.values.iter().enumerate() {
                    let (i, j) = (idx / self.size, idx % self.size);
                    let _ = writeln!(out, "{},{},{}", i as f64 * h, j as f64 * h, v.re);
                }
            }
        }
        out
    }
}

/// Truncated Fourier series with dense coefficient storage over `|k_i| <= K`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    dim: Dim,
    bandwidth: usize,
    coeffs: Vec<C64>,
}

impl SpectralField {
    pub fn zeros(dim: Dim, bandwidth: usize) -> Self {
        let side = 2 * bandwidth + 1;
        let len = match dim {
            Dim::One => side,
            Dim::Two => side * side,
        };
        Self {
            dim,
            bandwidth,
            coeffs: vec![C64::new(0.0, 0.0); len],
        }
    }

    pub fn constant(dim: Dim, bandwidth: usize, value: f64) -> Self {
        let mut f = Self::zeros(dim, bandwidth);
        f.set([0, 0], C64::new(value, 0.0));
        f
    }

    /// Pure mode `e_k`.
    pub fn mode(dim: Dim, bandwidth: usize, k: Freq) -> Self {
        let mut f = Self::zeros(dim, bandwidth);
        f.set(k, C64::new(1.0, 0.0));
        f
    }

    pub fn from_fn(dim: Dim, bandwidth: usize, mut coeff: impl FnMut(Freq) -> C64) -> Self {
        let mut f = Self::zeros(dim, bandwidth);
        for idx in 0..f.coeffs.len() {
            let k = f.freq_at(idx);
            f.coeffs[idx] = coeff(k);
        }
        f
    }

    pub fn from_coeffs(dim: Dim, bandwidth: usize, coeffs: Vec<C64>) -> Result<Self> {
        let expected = Self::zeros(dim, bandwidth).coeffs.len();
        if coeffs.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "expected {expected} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(Self { dim, bandwidth, coeffs })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Number of frequencies per axis, `2K+1`.
    pub fn side(&self) -> usize {
        2 * self.bandwidth + 1
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C64> {
        self.coeffs
    }

    pub fn freq_at(&self, idx: usize) -> Freq {
        let k = self.bandwidth as i64;
        match self.dim {
            Dim::One => [idx as i64 - k, 0],
            Dim::Two => {
                let side = self.side();
                [(idx / side) as i64 - k, (idx % side) as i64 - k]
            }
        }
    }

    pub fn index_of(&self, k: Freq) -> Option<usize> {
        let kk = self.bandwidth as i64;
        let inside = |v: i64| v.abs() <= kk;
        match self.dim {
            Dim::One => (k[1] == 0 && inside(k[0])).then(|| (k[0] + kk) as usize),
            Dim::Two => {
                (inside(k[0]) && inside(k[1])).then(|| (k[0] + kk) as usize * self.side() + (k[1] + kk) as usize)
            }
        }
    }

    /// Coefficient of `e_k`, zero outside the box.
    pub fn coeff(&self, k: Freq) -> C64 {
        self.index_of(k).map(|i| self.coeffs[i]).unwrap_or(C64::new(0.0, 0.0))
    }

    /// Sets a coefficient; frequencies outside the box are ignored.
    pub fn set(&mut self, k: Freq, value: C64) {
        if let Some(i) = self.index_of(k) {
            self.coeffs[i] = value;
        }
    }

    pub fn frequencies(&self) -> impl Iterator<Item = Freq> + '_ {
        (0..self.coeffs.len()).map(move |i| self.freq_at(i))
    }

    /// The mass functional `f -> integral of f`, i.e. `c_0`.
    pub fn mass(&self) -> C64 {
        self.coeff([0, 0])
    }

    pub fn sobolev_norm(&self, m: u32) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| sobolev_weight(self.freq_at(i), m) * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm(0)
    }

    /// `max_k |c_{-k} - conj(c_k)|`; zero for real-valued fields.
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.coeffs.len())
            .map(|i| {
                let k = self.freq_at(i);
                (self.coeff([-k[0], -k[1]]) - self.coeffs[i].conj()).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol
    }

    /// Copy into a box of a different bandwidth (truncating or zero-padding).
    pub fn resized(&self, bandwidth: usize) -> Self {
        let mut out = Self::zeros(self.dim, bandwidth);
        for (i, c) in self.coeffs.iter().enumerate() {
            out.set(self.freq_at(i), *c);
        }
        out
    }

    pub fn scaled(&self, a: C64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= a);
        out
    }

    /// `self += a * other` on the common box.
    pub fn axpy(&mut self, a: C64, other: &SpectralField) {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        if self.bandwidth == other.bandwidth {
            for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
                *c += a * o;
            }
        } else {
            for (i, o) in other.coeffs.iter().enumerate() {
                if let Some(j) = self.index_of(other.freq_at(i)) {
                    self.coeffs[j] += a * o;
                }
            }
        }
    }

    pub fn sub(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), other);
        out
    }

    pub fn add(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(C64::new(1.0, 0.0), other);
        out
    }

    /// Partial derivative along axis `0` (x) or `1` (s).
    pub fn derivative(&self, axis: usize) -> Self {
        let mut out = self.clone();
        for i in 0..out.coeffs.len() {
            let k = self.freq_at(i)[axis] as f64;
            out.coeffs[i] *= C64::new(0.0, 2.0 * PI * k);
        }
        out
    }

    /// Partial derivative `d^alpha`.
    pub fn derivative_multi(&self, alpha: [u32; 2]) -> Self {
        let mut out = self.clone();
        for i in 0..out.coeffs.len() {
            let k = self.freq_at(i);
            let mut factor = C64::new(1.0, 0.0);
            for (axis, &order) in alpha.iter().enumerate() {
                factor *= C64::new(0.0, 2.0 * PI * k[axis] as f64).powu(order);
            }
            out.coeffs[i] *= factor;
        }
        out
    }

    /// Values at the grid points `j/G` per axis.
    pub fn synthesize(&self, grid: usize) -> Result<GridSamples> {
        if grid < self.side() {
            return Err(Error::AliasingBudgetExceeded {
                grid,
                bandwidth: self.bandwidth,
                detail: format!("synthesis needs at least {} points", self.side()),
            });
        }
        let len = match self.dim {
            Dim::One => grid,
            Dim::Two => grid * grid,
        };
        let mut buf = vec![C64::new(0.0, 0.0); len];
        for (i, c) in self.coeffs.iter().enumerate() {
            let k = self.freq_at(i);
            let pos = match self.dim {
                Dim::One => wrap(k[0], grid),
                Dim::Two => wrap(k[0], grid) * grid + wrap(k[1], grid),
            };
            buf[pos] = *c;
        }
        match self.dim {
            Dim::One => fft_inplace(&mut buf, true),
            Dim::Two => fft2_inplace(&mut buf, grid, true),
        }
        Ok(GridSamples {
            dim: self.dim,
            size: grid,
            values: buf,
        })
    }

    /// Forward transform of grid samples, truncated to bandwidth `K`.
    pub fn analyze(samples: &GridSamples, bandwidth: usize) -> Result<Self> {
        let grid = samples.size;
        if grid < 2 * bandwidth + 1 {
            return Err(Error::AliasingBudgetExceeded {
                grid,
                bandwidth,
                detail: "analysis needs G >= 2K+1".into(),
            });
        }
        let mut buf = samples.values.clone();
        let norm = match samples.dim {
            Dim::One => {
                fft_inplace(&mut buf, false);
                grid as f64
            }
            Dim::Two => {
                fft2_inplace(&mut buf, grid, false);
                (grid * grid) as f64
            }
        };
        let mut out = Self::zeros(samples.dim, bandwidth);
        for i in 0..out.coeffs.len() {
            let k = out.freq_at(i);
            let pos = match samples.dim {
                Dim::One => wrap(k[0], grid),
                Dim::Two => wrap(k[0], grid) * grid + wrap(k[1], grid),
            };
            out.coeffs[i] = buf[pos] / norm;
        }
        Ok(out)
    }

    /// Pointwise product computed on a grid large enough that no aliasing
    /// enters, truncated afterwards to `bandwidth`.
    pub fn product(&self, other: &SpectralField, bandwidth: usize) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::InvalidArgument("dimension mismatch in product".into()));
        }
        let grid = 2 * (self.bandwidth + other.bandwidth) + 1;
        let a = self.synthesize(grid)?;
        let b = other.synthesize(grid)?;
        let values = a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect();
        let prod = GridSamples {
            dim: self.dim,
            size: grid,
            values,
        };
        Self::analyze(&prod, bandwidth)
    }

    /// `C^m` norm estimated as `max_{|a| <= m} sup |d^a f|` on a 4x
    /// oversampled grid.
    pub fn cm_norm(&self, m: u32) -> Result<f64> {
        let grid = 4 * self.side();
        let mut best = 0.0f64;
        for order in 0..=m {
            let alphas: Vec<[u32; 2]> = match self.dim {
                Dim::One => vec![[order, 0]],
                Dim::Two => (0..=order).map(|a| [a, order - a]).collect(),
            };
            for alpha in alphas {
                let samples = self.derivative_multi(alpha).synthesize(grid)?;
                let sup = samples.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
                best = best.max(sup);
            }
        }
        Ok(best)
    }

    /// CSV dump `k_1[,k_2],re,im`. Coefficients with modulus at or below
    /// `drop_below` are omitted; pass a negative value to keep all of them.
    pub fn to_csv(&self, drop_below: f64) -> String {
        let mut out = String::new();
        match self.dim {
            Dim::One => out.push_str("k1,re,im\n"),
            Dim::Two => out.push_str("k1,k2,re,im\n"),
        }
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.norm() <= drop_below {
                continue;
            }
            let k = self.freq_at(i);
            match self.dim {
                Dim::One => {
                    let _ = writeln!(out, "{},{},{}", k[0], c.re, c.im);
                }
                Dim::Two => {
                    let _ = writeln!(out, "{},{},{},{}", k[0], k[1], c.re, c.im);
                }
            }
        }
        out
    }

    /// Parse the CSV dump. Missing frequencies are zero; the bandwidth is
    /// taken from the argument or inferred from the largest frequency
    /// present.
    pub fn from_csv(text: &str, bandwidth: Option<usize>) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty field dump"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let dim = match cols.as_slice() {
            ["k1", "re", "im"] => Dim::One,
            ["k1", "k2", "re", "im"] => Dim::Two,
            _ => return Err(Error::parse(1, format!("unexpected header {header:?}"))),
        };
        let width = dim.rank() + 2;
        let mut entries: Vec<(Freq, C64)> = Vec::new();
        for (lineno, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != width {
                return Err(Error::parse(lineno + 1, format!("expected {width} columns")));
            }
            let int = |s: &str| {
                s.parse::<i64>()
                    .map_err(|e| Error::parse(lineno + 1, format!("bad frequency {s:?}: {e}")))
            };
            let float = |s: &str| {
                let v = s
                    .parse::<f64>()
                    .map_err(|e| Error::parse(lineno + 1, format!("bad number {s:?}: {e}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::parse(lineno + 1, "non-finite coefficient"))
                }
            };
            let k = match dim {
                Dim::One => [int(fields[0])?, 0],
                Dim::Two => [int(fields[0])?, int(fields[1])?],
            };
            let re = float(fields[width - 2])?;
            let im = float(fields[width - 1])?;
            entries.push((k, C64::new(re, im)));
        }
        let limit = match dim {
            Dim::One => MAX_PARSE_BANDWIDTH_1D,
            Dim::Two => MAX_PARSE_BANDWIDTH_2D,
        } as u64;
        let mut needed = 0u64;
        for (k, _) in &entries {
            let a = k[0].unsigned_abs().max(k[1].unsigned_abs());
            if a > limit {
                return Err(Error::parse(0, format!("frequency {a} exceeds limit {limit}")));
            }
            needed = needed.max(a);
        }
        let bandwidth = match bandwidth {
            Some(b) if (b as u64) < needed => {
                return Err(Error::parse(0, format!("frequency {needed} outside bandwidth {b}")))
            }
            Some(b) if b as u64 > limit => return Err(Error::parse(0, format!("bandwidth {b} exceeds limit {limit}"))),
            Some(b) => b,
            None => needed as usize,
        };
        let mut out = Self::zeros(dim, bandwidth);
        for (k, c) in entries {
            out.set(k, c);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn cos1(k: usize) -> SpectralField {
        let mut f = SpectralField::zeros(Dim::One, k);
        f.set([1, 0], c(0.5, 0.0));
        f.set([-1, 0], c(0.5, 0.0));
        f
    }

    #[test]
    fn sobolev_norm_examples() {
        let one = SpectralField::constant(Dim::One, 4, 1.0);
        for m in 0..5 {
            assert!((one.sobolev_norm(m) - 1.0).abs() < 1e-15);
        }
        let e1 = SpectralField::mode(Dim::One, 4, [1, 0]);
        let expect = (1.0 + 4.0 * PI * PI).sqrt();
        assert!((e1.sobolev_norm(1) - expect).abs() < 1e-12);

        // |c_{+-1}|^2 = 1/4 each, so the squared norm is w_2(1)/2.
        let w2 = 1.0 + 4.0 * PI * PI + 16.0 * PI.powi(4);
        assert!((cos1(4).sobolev_norm(2) - (w2 / 2.0).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn weight_matches_direct_multi_index_sum() {
        for k in [[0i64, 0], [1, 0], [2, -3], [-1, 1]] {
            for m in 0..4u32 {
                let mut direct = 0.0;
                for a in 0..=m {
                    for b in 0..=(m - a) {
                        direct +=
                            (2.0 * PI * k[0] as f64).powi(2 * a as i32) * (2.0 * PI * k[1] as f64).powi(2 * b as i32);
                    }
                }
                let w = sobolev_weight(k, m);
                assert!((w - direct).abs() <= 1e-12 * direct);
            }
        }
        // On the circle the s-part must not contribute.
        assert_eq!(
            sobolev_weight([3, 0], 2),
            1.0 + 36.0 * PI * PI + (36.0 * PI * PI).powi(2)
        );
    }

    #[test]
    fn mass_examples() {
        assert_eq!(SpectralField::constant(Dim::One, 3, 1.0).mass(), c(1.0, 0.0));
        assert_eq!(cos1(3).mass(), c(0.0, 0.0));
        let mut f = SpectralField::constant(Dim::One, 3, 1.0);
        f.set([2, 0], c(0.15, 0.0));
        f.set([-2, 0], c(0.15, 0.0));
        assert_eq!(f.mass(), c(1.0, 0.0));
    }

    #[test]
    fn synthesize_examples() {
        let one = SpectralField::constant(Dim::One, 2, 1.0);
        let s = one.synthesize(8).unwrap();
        assert!(s.values.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));

        let s = cos1(1).synthesize(4).unwrap();
        let expect = [1.0, 0.0, -1.0, 0.0];
        for (v, e) in s.values.iter().zip(expect) {
            assert!((v - c(e, 0.0)).norm() < 1e-15);
        }

        assert!(matches!(
            cos1(4).synthesize(8),
            Err(Error::AliasingBudgetExceeded { .. })
        ));
    }

    #[test]
    fn analyze_examples() {
        let s = GridSamples::from_fn(Dim::One, 8, |x, _| c((2.0 * PI * x).sin(), 0.0));
        let f = SpectralField::analyze(&s, 2).unwrap();
        assert!((f.coeff([1, 0]) - c(0.0, -0.5)).norm() < 1e-15);
        assert!((f.coeff([-1, 0]) - c(0.0, 0.5)).norm() < 1e-15);
        for k in [0, 2, -2] {
            assert!(f.coeff([k, 0]).norm() < 1e-15);
        }

        let s = GridSamples::from_fn(Dim::One, 8, |_, _| c(5.0, 0.0));
        let f = SpectralField::analyze(&s, 2).unwrap();
        assert!((f.mass() - c(5.0, 0.0)).norm() < 1e-14);

        let s = GridSamples::from_fn(Dim::Two, 8, |x, y| c((2.0 * PI * x).cos() * (2.0 * PI * y).cos(), 0.0));
        let f = SpectralField::analyze(&s, 2).unwrap();
        for i in 0..f.coeffs().len() {
            let k = f.freq_at(i);
            let expect = if k[0].abs() == 1 && k[1].abs() == 1 { 0.25 } else { 0.0 };
            assert!((f.coeffs()[i] - c(expect, 0.0)).norm() < 1e-15, "{k:?}");
        }
    }

    #[test]
    fn derivative_and_product_basics() {
        // d/dx cos(2 pi x) = -2 pi sin(2 pi x)
        let d = cos1(3).derivative(0);
        assert!((d.coeff([1, 0]) - c(0.0, PI)).norm() < 1e-14);
        // cos^2 = 1/2 + cos(4 pi x)/2
        let sq = cos1(2).product(&cos1(2), 4).unwrap();
        assert!((sq.mass() - c(0.5, 0.0)).norm() < 1e-15);
        assert!((sq.coeff([2, 0]) - c(0.25, 0.0)).norm() < 1e-15);
        assert!(sq.coeff([1, 0]).norm() < 1e-15);
    }

    #[test]
    fn cm_norm_of_cosine() {
        // sup|cos| = 1, sup|d cos| = 2 pi.
        let n = cos1(2).cm_norm(1).unwrap();
        assert!((n - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let f = SpectralField::from_fn(Dim::Two, 2, |k| c(k[0] as f64, 0.5 * k[1] as f64));
        let back = SpectralField::from_csv(&f.to_csv(-1.0), Some(2)).unwrap();
        assert_eq!(back, f);
        let sparse = SpectralField::constant(Dim::One, 8, 1.0).to_csv(1e-14);
        assert_eq!(sparse, "k1,re,im\n0,1,0\n");
        assert!(SpectralField::from_csv("k1,re,im\n9,1,0\n", Some(4)).is_err());
        assert!(SpectralField::from_csv("k1,re\n", None).is_err());
        assert!(SpectralField::from_csv("k1,re,im\n1,NaN,0\n", None).is_err());
        assert!(SpectralField::from_csv("k1,re,im\n99999999999,1,0\n", None).is_err());
    }

    fn arb_field(dim: Dim, k: usize) -> impl Strategy<Value = SpectralField> {
        let len = match dim {
            Dim::One => 2 * k + 1,
            Dim::Two => (2 * k + 1) * (2 * k + 1),
        };
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len).prop_map(move |v| {
            SpectralField::from_coeffs(dim, k, v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn norm_grading(f in arb_field(Dim::Two, 3), m in 0u32..4) {
            prop_assert!(f.sobolev_norm(m) <= f.sobolev_norm(m + 1));
        }

        #[test]
        fn parseval(f in arb_field(Dim::One, 6), extra in 0usize..20) {
            let s = f.synthesize(13 + extra).unwrap();
            let l2 = f.l2_norm().powi(2);
            prop_assert!((s.mean_square() - l2).abs() <= 1e-12 * l2.max(1.0));
        }

        #[test]
        fn round_trip(f in arb_field(Dim::One, 16)) {
            let back = SpectralField::analyze(&f.synthesize(64).unwrap(), 16).unwrap();
            let err = back.sub(&f).l2_norm();
            prop_assert!(err < 1e-12);
        }

        #[test]
        fn round_trip_2d(f in arb_field(Dim::Two, 3)) {
            let back = SpectralField::analyze(&f.synthesize(9).unwrap(), 3).unwrap();
            prop_assert!(back.sub(&f).l2_norm() < 1e-12);
        }

        #[test]
        fn derivative_bound(f in arb_field(Dim::Two, 3), m in 0u32..3, axis in 0usize..2) {
            let lhs = f.derivative(axis).sobolev_norm(m);
            prop_assert!(lhs <= f.sobolev_norm(m + 1) * (1.0 + 1e-12));
        }

        #[test]
        fn product_bound(u in arb_field(Dim::One, 3), f in arb_field(Dim::One, 4), m in 0u32..3) {
            let uf = u.product(&f, 7).unwrap();
            let denom = u.cm_norm(m).unwrap() * f.sobolev_norm(m);
            prop_assume!(denom > 1e-9);
            let ratio = uf.sobolev_norm(m) / denom;
            // Leibniz: C = 2^m sqrt(#multi-indices); the grid sup slightly
            // underestimates the true sup, hence the 5% slack.
            let bound = 2f64.powi(m as i32) * (multi_index_count(Dim::One, m) as f64).sqrt();
            prop_assert!(ratio <= 1.05 * bound, "ratio {} bound {}", ratio, bound);
        }
    }
}
