//! Galerkin matrices of Perron-Frobenius operators and their
//! eps-derivatives on the truncated Fourier basis.
//!
//! Entries come from the duality `<L_T e_n, e_m> = \int e_n(x) e_{-m}(T x) dx`,
//! evaluated by the trapezoid rule on an oversampled uniform grid. The
//! derivative operators `Q_j = (1/j!) d^j/d eps^j L` are obtained by
//! differentiating the integrand in `eps`, so they need no inverse branches:
//! with `phi = -2 pi m T_eps(x) - k_s tau_eps(x)`,
//!
//! * `Q_1[m,n] = \int e_n  i phi'  e^{i phi}`
//! * `Q_2[m,n] = \int e_n  (i phi'' - phi'^2)/2  e^{i phi}`.
//!
//! Integrating by parts recovers the transfer-operator form, e.g.
//! `Q_1 f = -L_0(((X / T') f)')` on the circle with `X = d_eps T`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::MapFamily;
use crate::error::{Error, Result};
use crate::spectral::{fft_inplace, plan, sobolev_weight, Dim, Freq, SpaceLadder, SpectralField, C64};

/// Largest bandwidth accepted when reading matrix dumps.
pub const MAX_DUMP_BANDWIDTH_1D: usize = 512;
pub const MAX_DUMP_BANDWIDTH_2D: usize = 32;

/// Quadrature policy for matrix assembly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    /// Smallest admissible grid.
    pub min_grid: usize,
    /// Grid points per unit of integrand bandwidth.
    pub oversample: usize,
    /// Re-assemble on the doubled grid and compare.
    pub verify: bool,
    /// Relative tolerance of the doubling check.
    pub tolerance: f64,
    /// Assemble U(1) extensions through the full two-dimensional quadrature
    /// instead of the sector decomposition.
    pub direct_2d: bool,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            min_grid: 256,
            oversample: 8,
            verify: true,
            tolerance: 1e-12,
            direct_2d: false,
        }
    }
}

impl Quadrature {
    /// Grid size used for `family` at bandwidth `K`.
    pub fn grid_for(&self, family: &MapFamily, bandwidth: usize) -> usize {
        let base = family.base();
        let deg = base.degree() as usize;
        let mut spread = base.periodic().bandwidth() + family.tau().map_or(0, |t| t.bandwidth());
        if let Some(q) = base.conjugacy() {
            spread += (deg + 1) * q.bandwidth();
        }
        (self.oversample * (bandwidth * deg + spread))
            .max(self.min_grid)
            .next_power_of_two()
    }
}

/// Block structure of a [`TransferMatrix`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One `(2K+1) x (2K+1)` block on the circle.
    Circle,
    /// `2K+1` blocks, one per s-frequency, acting on x-frequencies.
    Sectors,
    /// One dense block over the full two-dimensional frequency box.
    Dense2d,
}

/// Matrix `M[m,n] = <A e_n, e_m>` of an operator on the truncated basis.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix {
    dim: Dim,
    bandwidth: usize,
    layout: Layout,
    blocks: Vec<DMatrix<C64>>,
    lowering: u32,
    description: String,
}

struct Nodes {
    x: Vec<f64>,
    weight: Vec<f64>,
    image: Vec<f64>,
    image_d1: Vec<f64>,
    image_d2: Vec<f64>,
    tau: Vec<f64>,
    tau_d1: Vec<f64>,
    tau_d2: Vec<f64>,
    uniform: bool,
}

impl Nodes {
    fn build(family: &MapFamily, eps: f64, theta: f64, grid: usize) -> Self {
        let base = family.base();
        let p = base.periodic();
        let conjugated = base.conjugacy().is_some();
        let mut nodes = Nodes {
            x: Vec::with_capacity(grid),
            weight: Vec::with_capacity(grid),
            image: Vec::with_capacity(grid),
            image_d1: Vec::with_capacity(grid),
            image_d2: Vec::with_capacity(grid),
            tau: Vec::new(),
            tau_d1: Vec::new(),
            tau_d2: Vec::new(),
            uniform: !conjugated,
        };
        let h = 1.0 / grid as f64;
        for g in 0..grid {
            let u = g as f64 * h;
            let e = base.lift(eps, theta, u);
            let pe = p.partial(1, 0, eps, theta, u);
            let pee = p.partial(2, 0, eps, theta, u);
            if conjugated {
                // x = h(u), T(x) = h(E(u)), dx = h'(u) du.
                let h1 = base.conj_derivative(1, e);
                let h2 = base.conj_derivative(2, e);
                nodes.x.push(base.conj(u));
                nodes.weight.push(base.conj_derivative(1, u) * h);
                nodes.image.push(base.conj(e));
                nodes.image_d1.push(h1 * pe);
                nodes.image_d2.push(h2 * pe * pe + h1 * pee);
            } else {
                nodes.x.push(u);
                nodes.weight.push(h);
                nodes.image.push(e);
                nodes.image_d1.push(pe);
                nodes.image_d2.push(pee);
            }
        }
        if let Some(tau) = family.tau() {
            for g in 0..grid {
                let x = nodes.x[g];
                nodes.tau.push(tau.eval(eps, theta, x));
                nodes.tau_d1.push(tau.partial(1, 0, eps, theta, x));
                nodes.tau_d2.push(tau.partial(2, 0, eps, theta, x));
            }
        } else {
            nodes.tau = vec![0.0; grid];
            nodes.tau_d1 = vec![0.0; grid];
            nodes.tau_d2 = vec![0.0; grid];
        }
        nodes
    }

    fn len(&self) -> usize {
        self.x.len()
    }

    /// Integrand factor multiplying `e_n(x_g)` in row `m` of sector `ks`.
    fn factor(&self, g: usize, m: i64, ks: i64, order: u32) -> C64 {
        let two_pi = 2.0 * PI;
        let (mf, kf) = (m as f64, ks as f64);
        let phase = -two_pi * mf * self.image[g] - kf * self.tau[g];
        let base = C64::from_polar(self.weight[g], phase);
        match order {
            0 => base,
            1 => {
                let a1 = -two_pi * mf * self.image_d1[g] - kf * self.tau_d1[g];
                base * C64::new(0.0, a1)
            }
            _ => {
                let a1 = -two_pi * mf * self.image_d1[g] - kf * self.tau_d1[g];
                let a2 = -two_pi * mf * self.image_d2[g] - kf * self.tau_d2[g];
                base * C64::new(-0.5 * a1 * a1, 0.5 * a2)
            }
        }
    }

    fn block(&self, bandwidth: usize, ks: i64, order: u32) -> DMatrix<C64> {
        let side = 2 * bandwidth + 1;
        let k = bandwidth as i64;
        let grid = self.len();
        let mut out = DMatrix::<C64>::zeros(side, side);
        if self.uniform {
            let fft = plan(grid, true);
            let mut buf = vec![C64::new(0.0, 0.0); grid];
            for (row, m) in (-k..=k).enumerate() {
                for (g, b) in buf.iter_mut().enumerate() {
                    *b = self.factor(g, m, ks, order);
                }
                fft.process(&mut buf);
                for (col, n) in (-k..=k).enumerate() {
                    out[(row, col)] = buf[n.rem_euclid(grid as i64) as usize];
                }
            }
        } else {
            let rows = DMatrix::<C64>::from_fn(side, grid, |r, g| self.factor(g, r as i64 - k, ks, order));
            let waves = DMatrix::<C64>::from_fn(grid, side, |g, c| {
                C64::from_polar(1.0, 2.0 * PI * (c as i64 - k) as f64 * self.x[g])
            });
            out = rows * waves;
        }
        out
    }
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn assemble_blocks(
    family: &MapFamily,
    eps: f64,
    theta: f64,
    bandwidth: usize,
    quad: &Quadrature,
    order: u32,
) -> Result<(Layout, Vec<DMatrix<C64>>)> {
    let build = |grid: usize| -> Result<(Layout, Vec<DMatrix<C64>>)> {
        match family {
            MapFamily::CircleExpanding(_) => {
                let nodes = Nodes::build(family, eps, theta, grid);
                Ok((Layout::Circle, vec![nodes.block(bandwidth, 0, order)]))
            }
            MapFamily::U1Extension(_) if quad.direct_2d => Ok((
                Layout::Dense2d,
                vec![direct_2d(family, eps, theta, bandwidth, grid, order)?],
            )),
            MapFamily::U1Extension(_) => {
                let nodes = Nodes::build(family, eps, theta, grid);
                let k = bandwidth as i64;
                Ok((
                    Layout::Sectors,
                    (-k..=k).map(|ks| nodes.block(bandwidth, ks, order)).collect(),
                ))
            }
        }
    };
    let grid = quad.grid_for(family, bandwidth);
    let coarse = build(grid)?;
    if !quad.verify {
        return Ok(coarse);
    }
    let fine = build(2 * grid)?;
    let scale = fine.1.iter().map(max_abs).fold(1.0, f64::max);
    let moved = coarse
        .1
        .iter()
        .zip(&fine.1)
        .map(|(a, b)| max_abs(&(a - b)))
        .fold(0.0, f64::max);
    if moved > quad.tolerance * scale {
        return Err(Error::AliasingBudgetExceeded {
            grid,
            bandwidth,
            detail: format!("entries moved by {moved:e} when the grid doubled"),
        });
    }
    Ok(fine)
}

/// Full two-dimensional trapezoid quadrature of
/// `\int\int e_n(x) e_{n_s}(s) conj(e_m(E x) e_{m_s}(s + tau(x)/2pi)) dx ds`.
fn direct_2d(
    family: &MapFamily,
    eps: f64,
    theta: f64,
    bandwidth: usize,
    grid: usize,
    order: u32,
) -> Result<DMatrix<C64>> {
    if family.base().conjugacy().is_some() {
        return Err(Error::InvalidArgument(
            "the direct 2-d assembly supports unconjugated bases only".into(),
        ));
    }
    let nodes = Nodes::build(family, eps, theta, grid);
    let side = 2 * bandwidth + 1;
    let k = bandwidth as i64;
    let gs = (2 * side).next_power_of_two();
    let fft_s = plan(gs, true);
    let mut out = DMatrix::<C64>::zeros(side * side, side * side);
    let mut buf = vec![C64::new(0.0, 0.0); grid * gs];
    let mut col = vec![C64::new(0.0, 0.0); grid];
    let two_pi = 2.0 * PI;
    for m in -k..=k {
        for ms in -k..=k {
            for g in 0..grid {
                for h in 0..gs {
                    let s = h as f64 / gs as f64;
                    // The s-part of the phase is written out explicitly here;
                    // the x-part reuses the node factor with k_s = 0.
                    let x_part = nodes.factor(g, m, 0, 0) / nodes.weight[g];
                    let s_image = s + nodes.tau[g] / two_pi;
                    let s_part = C64::from_polar(1.0, -two_pi * ms as f64 * s_image);
                    let a1 = -two_pi * (m as f64 * nodes.image_d1[g] + ms as f64 * nodes.tau_d1[g] / two_pi);
                    let a2 = -two_pi * (m as f64 * nodes.image_d2[g] + ms as f64 * nodes.tau_d2[g] / two_pi);
                    let jet = match order {
                        0 => C64::new(1.0, 0.0),
                        1 => C64::new(0.0, a1),
                        _ => C64::new(-0.5 * a1 * a1, 0.5 * a2),
                    };
                    buf[g * gs + h] = nodes.weight[g] / gs as f64 * x_part * s_part * jet;
                }
            }
            for row in buf.chunks_mut(gs) {
                fft_s.process(row);
            }
            for h in 0..gs {
                for g in 0..grid {
                    col[g] = buf[g * gs + h];
                }
                fft_inplace(&mut col, true);
                for g in 0..grid {
                    buf[g * gs + h] = col[g];
                }
            }
            let r = (m + k) as usize * side + (ms + k) as usize;
            for n in -k..=k {
                for ns in -k..=k {
                    let c = (n + k) as usize * side + (ns + k) as usize;
                    let gi = n.rem_euclid(grid as i64) as usize;
                    let hi = ns.rem_euclid(gs as i64) as usize;
                    out[(r, c)] = buf[gi * gs + hi];
                }
            }
        }
    }
    Ok(out)
}

/// Matrix of `L_{T_{eps,theta}}`. U(1) extensions use the sector layout
/// unless `quad.direct_2d` is set.
pub fn assemble(
    family: &MapFamily,
    eps: f64,
    theta: f64,
    bandwidth: usize,
    quad: &Quadrature,
) -> Result<TransferMatrix> {
    family.check_eps(eps)?;
    let (layout, blocks) = assemble_blocks(family, eps, theta, bandwidth, quad, 0)?;
    Ok(TransferMatrix {
        dim: family.dim(),
        bandwidth,
        layout,
        blocks,
        lowering: 0,
        description: format!("L[{}; eps={eps}, fiber={theta}]", family.describe()),
    })
}

/// Sector-block assembly of a U(1) extension.
pub fn assemble_u1(
    family: &MapFamily,
    eps: f64,
    theta: f64,
    bandwidth: usize,
    quad: &Quadrature,
) -> Result<TransferMatrix> {
    if !matches!(family, MapFamily::U1Extension(_)) {
        return Err(Error::InvalidArgument("assemble_u1 needs a U(1) extension".into()));
    }
    assemble(
        family,
        eps,
        theta,
        bandwidth,
        &Quadrature {
            direct_2d: false,
            ..*quad
        },
    )
}

/// Direct two-dimensional assembly of a U(1) extension, kept as an oracle
/// for the sector decomposition.
pub fn assemble_u1_direct(
    family: &MapFamily,
    eps: f64,
    theta: f64,
    bandwidth: usize,
    quad: &Quadrature,
) -> Result<TransferMatrix> {
    if !matches!(family, MapFamily::U1Extension(_)) {
        return Err(Error::InvalidArgument(
            "assemble_u1_direct needs a U(1) extension".into(),
        ));
    }
    assemble(
        family,
        eps,
        theta,
        bandwidth,
        &Quadrature {
            direct_2d: true,
            ..*quad
        },
    )
}

fn derivative_matrix(
    family: &MapFamily,
    eps: f64,
    theta: f64,
    bandwidth: usize,
    quad: &Quadrature,
    order: u32,
) -> Result<TransferMatrix> {
    if family.order() < order {
        return Err(Error::Order {
            requested: order as usize,
            available: family.order() as usize,
        });
    }
    family.check_eps(eps)?;
    let (layout, blocks) = assemble_blocks(family, eps, theta, bandwidth, quad, order)?;
    Ok(TransferMatrix {
        dim: family.dim(),
        bandwidth,
        layout,
        blocks,
        lowering: order,
        description: format!("Q{order}[{}; eps={eps}, fiber={theta}]", family.describe()),
    })
}

/// `Q_1 = d/d eps L` at `eps = 0`; maps `E_i` to `E_{i-1}`.
pub fn q1_matrix(family: &MapFamily, theta: f64, bandwidth: usize, quad: &Quadrature) -> Result<TransferMatrix> {
    derivative_matrix(family, 0.0, theta, bandwidth, quad, 1)
}

/// `Q_2 = (1/2) d^2/d eps^2 L` at `eps = 0`; maps `E_i` to `E_{i-2}`.
pub fn q2_matrix(family: &MapFamily, theta: f64, bandwidth: usize, quad: &Quadrature) -> Result<TransferMatrix> {
    derivative_matrix(family, 0.0, theta, bandwidth, quad, 2)
}

/// `(1/j!) d^j/d eps^j L` at an arbitrary base parameter.
pub fn derivative_at(
    family: &MapFamily,
    eps: f64,
    theta: f64,
    bandwidth: usize,
    quad: &Quadrature,
    order: u32,
) -> Result<TransferMatrix> {
    derivative_matrix(family, eps, theta, bandwidth, quad, order)
}

/// Circle transfer matrix of an arbitrary smooth map given by its unreduced
/// lift on `[0, 1)`, integrated on a `grid`-point rule.
pub fn assemble_lift(bandwidth: usize, grid: usize, lift: impl Fn(f64) -> f64) -> Result<TransferMatrix> {
    if grid < 2 * bandwidth + 1 {
        return Err(Error::AliasingBudgetExceeded {
            grid,
            bandwidth,
            detail: "grid smaller than the basis".into(),
        });
    }
    let h = 1.0 / grid as f64;
    let nodes = Nodes {
        x: (0..grid).map(|g| g as f64 * h).collect(),
        weight: vec![h; grid],
        image: (0..grid).map(|g| lift(g as f64 * h)).collect(),
        image_d1: vec![0.0; grid],
        image_d2: vec![0.0; grid],
        tau: vec![0.0; grid],
        tau_d1: vec![0.0; grid],
        tau_d2: vec![0.0; grid],
        uniform: true,
    };
    Ok(TransferMatrix {
        dim: Dim::One,
        bandwidth,
        layout: Layout::Circle,
        blocks: vec![nodes.block(bandwidth, 0, 0)],
        lowering: 0,
        description: "L[lift]".into(),
    })
}

/// Serialized metadata next to a matrix CSV dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub dim: usize,
    pub bandwidth: usize,
    pub layout: Layout,
    pub j_in: u32,
    pub j_out: u32,
    pub map: String,
}

impl TransferMatrix {
    pub fn identity(dim: Dim, bandwidth: usize) -> Self {
        let side = 2 * bandwidth + 1;
        let (layout, blocks) = match dim {
            Dim::One => (Layout::Circle, vec![DMatrix::identity(side, side)]),
            Dim::Two => (Layout::Sectors, vec![DMatrix::identity(side, side); side]),
        };
        Self {
            dim,
            bandwidth,
            layout,
            blocks,
            lowering: 0,
            description: "identity".into(),
        }
    }

    /// Circle matrix from an explicit dense block.
    pub fn from_circle_block(block: DMatrix<C64>, lowering: u32) -> Result<Self> {
        if block.nrows() != block.ncols() || block.nrows().is_multiple_of(2) {
            return Err(Error::InvalidArgument("circle block must be square of odd size".into()));
        }
        Ok(Self {
            dim: Dim::One,
            bandwidth: block.nrows() / 2,
            layout: Layout::Circle,
            blocks: vec![block],
            lowering,
            description: "explicit".into(),
        })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn blocks(&self) -> &[DMatrix<C64>] {
        &self.blocks
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// Number of ladder levels the operator descends.
    pub fn lowering(&self) -> u32 {
        self.lowering
    }

    /// `(j_in, j_out)` of the smallest ladder pair the operator maps between.
    pub fn ladder_indices(&self) -> (u32, u32) {
        (self.lowering, 0)
    }

    fn side(&self) -> usize {
        2 * self.bandwidth + 1
    }

    fn block_freq(&self, block: usize, idx: usize) -> Freq {
        let k = self.bandwidth as i64;
        match self.layout {
            Layout::Circle => [idx as i64 - k, 0],
            Layout::Sectors => [idx as i64 - k, block as i64 - k],
            Layout::Dense2d => [(idx / self.side()) as i64 - k, (idx % self.side()) as i64 - k],
        }
    }

    /// Entry `<A e_col, e_row>`.
    pub fn entry(&self, row: Freq, col: Freq) -> C64 {
        let k = self.bandwidth as i64;
        let side = self.side();
        let inside = |f: Freq| f[0].abs() <= k && f[1].abs() <= k;
        if !inside(row) || !inside(col) {
            return C64::new(0.0, 0.0);
        }
        match self.layout {
            Layout::Circle => self.blocks[0][((row[0] + k) as usize, (col[0] + k) as usize)],
            Layout::Sectors => {
                if row[1] != col[1] {
                    C64::new(0.0, 0.0)
                } else {
                    self.blocks[(row[1] + k) as usize][((row[0] + k) as usize, (col[0] + k) as usize)]
                }
            }
            Layout::Dense2d => {
                let r = (row[0] + k) as usize * side + (row[1] + k) as usize;
                let c = (col[0] + k) as usize * side + (col[1] + k) as usize;
                self.blocks[0][(r, c)]
            }
        }
    }

    pub fn apply(&self, f: &SpectralField) -> SpectralField {
        assert_eq!(f.dim(), self.dim, "dimension mismatch");
        let f = if f.bandwidth() == self.bandwidth {
            f.clone()
        } else {
            f.resized(self.bandwidth)
        };
        let side = self.side();
        let mut out = SpectralField::zeros(self.dim, self.bandwidth);
        match self.layout {
            Layout::Circle | Layout::Dense2d => {
                let b = &self.blocks[0];
                let v = f.coeffs();
                let o = out.coeffs_mut();
                for (r, slot) in o.iter_mut().enumerate() {
                    *slot = (0..v.len()).map(|c| b[(r, c)] * v[c]).sum();
                }
            }
            Layout::Sectors => {
                let v = f.coeffs();
                let o = out.coeffs_mut();
                for (s, b) in self.blocks.iter().enumerate() {
                    for r in 0..side {
                        o[r * side + s] = (0..side).map(|c| b[(r, c)] * v[c * side + s]).sum();
                    }
                }
            }
        }
        out
    }

    /// Dense matrix over the full frequency box (field storage order).
    pub fn to_dense(&self) -> DMatrix<C64> {
        match self.layout {
            Layout::Circle | Layout::Dense2d => self.blocks[0].clone(),
            Layout::Sectors => {
                let side = self.side();
                let mut out = DMatrix::zeros(side * side, side * side);
                for (s, b) in self.blocks.iter().enumerate() {
                    for r in 0..side {
                        for c in 0..side {
                            out[(r * side + s, c * side + s)] = b[(r, c)];
                        }
                    }
                }
                out
            }
        }
    }

    fn densified(&self) -> Self {
        match self.layout {
            Layout::Sectors => Self {
                layout: Layout::Dense2d,
                blocks: vec![self.to_dense()],
                ..self.clone()
            },
            _ => self.clone(),
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.bandwidth != other.bandwidth {
            return Err(Error::InvalidArgument("incompatible transfer matrices".into()));
        }
        Ok(())
    }

    /// Composition `self o rhs`, i.e. the matrix product `self * rhs`.
    pub fn compose(&self, rhs: &Self) -> Result<Self> {
        self.check_compatible(rhs)?;
        let (a, b) = if self.layout == rhs.layout {
            (self.clone(), rhs.clone())
        } else {
            (self.densified(), rhs.densified())
        };
        let blocks = a.blocks.iter().zip(&b.blocks).map(|(x, y)| x * y).collect();
        Ok(Self {
            blocks,
            lowering: a.lowering + b.lowering,
            description: format!("{} * {}", a.description, b.description),
            ..a
        })
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: C64, other: &Self, b: C64) -> Result<Self> {
        self.check_compatible(other)?;
        let (x, y) = if self.layout == other.layout {
            (self.clone(), other.clone())
        } else {
            (self.densified(), other.densified())
        };
        let blocks = x
            .blocks
            .iter()
            .zip(&y.blocks)
            .map(|(p, q)| p.map(|v| v * a) + q.map(|v| v * b))
            .collect();
        Ok(Self {
            blocks,
            lowering: x.lowering.max(y.lowering),
            description: "combination".into(),
            ..x
        })
    }

    pub fn scaled(&self, a: C64) -> Self {
        Self {
            blocks: self.blocks.iter().map(|b| b.map(|v| v * a)).collect(),
            ..self.clone()
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs(&(self.to_dense() - other.to_dense()))
    }

    /// `max_n |M[0,n] - delta_{n,0}|`.
    pub fn mass_row_defect(&self) -> f64 {
        self.mass_row_offset(1.0)
    }

    /// `max_n |M[0,n]|`; zero for derivative operators.
    pub fn mass_row_max(&self) -> f64 {
        self.mass_row_offset(0.0)
    }

    fn mass_row_offset(&self, diagonal: f64) -> f64 {
        let zero = [0, 0];
        let k = self.bandwidth as i64;
        let cols: Vec<Freq> = match self.dim {
            Dim::One => (-k..=k).map(|n| [n, 0]).collect(),
            Dim::Two => (-k..=k).flat_map(|a| (-k..=k).map(move |b| [a, b])).collect(),
        };
        cols.into_iter()
            .map(|c| {
                let target = if c == zero { diagonal } else { 0.0 };
                (self.entry(zero, c) - C64::new(target, 0.0)).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Minimum of `A 1` sampled on a 4x oversampled grid.
    pub fn positivity_margin(&self) -> Result<f64> {
        let one = SpectralField::constant(self.dim, self.bandwidth, 1.0);
        let image = self.apply(&one);
        Ok(image.synthesize(4 * self.side())?.min_real())
    }

    /// Induced norm `L(E_{j_in}, E_{j_out})`: the largest singular value of
    /// `D_out M D_in^{-1}` with `D_j = diag(w_{m+j}(k)^{1/2})`. With
    /// `zero_mass` the domain is restricted to `ker xi`.
    pub fn operator_norm(&self, ladder: &SpaceLadder, j_in: u32, j_out: u32, zero_mass: bool) -> f64 {
        let m_in = ladder.regularity(j_in);
        let m_out = ladder.regularity(j_out);
        let mut best = 0.0f64;
        for (bi, block) in self.blocks.iter().enumerate() {
            let n = block.nrows();
            let w_out: Vec<f64> = (0..n)
                .map(|i| sobolev_weight(self.block_freq(bi, i), m_out).sqrt())
                .collect();
            let w_in: Vec<f64> = (0..n)
                .map(|i| sobolev_weight(self.block_freq(bi, i), m_in).sqrt())
                .collect();
            let mut scaled = DMatrix::from_fn(n, n, |r, c| block[(r, c)] * (w_out[r] / w_in[c]));
            if zero_mass {
                if let Some(c) = (0..n).find(|&c| self.block_freq(bi, c) == [0, 0]) {
                    scaled = scaled.remove_column(c);
                }
            }
            if scaled.ncols() == 0 {
                continue;
            }
            let top = scaled.singular_values().iter().cloned().fold(0.0, f64::max);
            best = best.max(top);
        }
        best
    }

    /// CSV dump `row,col,re,im` over the dense frequency numbering.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,re,im\n");
        let side = self.side();
        for (bi, b) in self.blocks.iter().enumerate() {
            for r in 0..b.nrows() {
                for c in 0..b.ncols() {
                    let (gr, gc) = match self.layout {
                        Layout::Sectors => (r * side + bi, c * side + bi),
                        _ => (r, c),
                    };
                    let v = b[(r, c)];
                    let _ = writeln!(out, "{gr},{gc},{},{}", v.re, v.im);
                }
            }
        }
        out
    }

    pub fn sidecar(&self) -> MatrixSidecar {
        let (j_in, j_out) = self.ladder_indices();
        MatrixSidecar {
            dim: self.dim.rank(),
            bandwidth: self.bandwidth,
            layout: self.layout,
            j_in,
            j_out,
            map: self.description.clone(),
        }
    }

    /// Rebuild a matrix from its CSV dump and JSON sidecar. Entries not
    /// listed are zero; entries outside the block structure are rejected.
    pub fn from_dump(csv: &str, sidecar_json: &str) -> Result<Self> {
        let meta: MatrixSidecar = serde_json::from_str(sidecar_json)?;
        let dim = match (meta.dim, meta.layout) {
            (1, Layout::Circle) => Dim::One,
            (2, Layout::Sectors | Layout::Dense2d) => Dim::Two,
            _ => return Err(Error::parse(0, "sidecar dim and layout disagree")),
        };
        let limit = match dim {
            Dim::One => MAX_DUMP_BANDWIDTH_1D,
            Dim::Two => MAX_DUMP_BANDWIDTH_2D,
        };
        if meta.bandwidth > limit {
            return Err(Error::parse(
                0,
                format!("bandwidth {} above limit {limit}", meta.bandwidth),
            ));
        }
        if meta.j_in < meta.j_out {
            return Err(Error::parse(0, "ladder indices must satisfy j_in >= j_out"));
        }
        let side = 2 * meta.bandwidth + 1;
        let mut blocks = match meta.layout {
            Layout::Circle => vec![DMatrix::zeros(side, side)],
            Layout::Sectors => vec![DMatrix::zeros(side, side); side],
            Layout::Dense2d => vec![DMatrix::zeros(side * side, side * side)],
        };
        let total = match dim {
            Dim::One => side,
            Dim::Two => side * side,
        };
        let mut lines = csv.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == "row,col,re,im" => {}
            _ => return Err(Error::parse(1, "expected header row,col,re,im")),
        }
        for (lineno, line) in lines {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(Error::parse(lineno + 1, "expected 4 columns"));
            }
            let idx = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::parse(lineno + 1, format!("bad index {s:?}: {e}")))
            };
            let num = |s: &str| -> Result<f64> {
                let v: f64 = s
                    .parse()
                    .map_err(|e| Error::parse(lineno + 1, format!("bad number {s:?}: {e}")))?;
                v.is_finite()
                    .then_some(v)
                    .ok_or_else(|| Error::parse(lineno + 1, "non-finite entry"))
            };
            let (r, c) = (idx(f[0])?, idx(f[1])?);
            let v = C64::new(num(f[2])?, num(f[3])?);
            if r >= total || c >= total {
                return Err(Error::parse(lineno + 1, "index outside the frequency box"));
            }
            match meta.layout {
                Layout::Sectors => {
                    if r % side != c % side {
                        return Err(Error::parse(lineno + 1, "entry couples different s-sectors"));
                    }
                    blocks[r % side][(r / side, c / side)] = v;
                }
                _ => blocks[0][(r, c)] = v,
            }
        }
        Ok(Self {
            dim,
            bandwidth: meta.bandwidth,
            layout: meta.layout,
            blocks,
            lowering: meta.j_in - meta.j_out,
            description: meta.map,
        })
    }
}
