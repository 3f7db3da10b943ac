//! The constant-coin walk: arccos branches, the dispersion relation
//! `cos(lambda) = rho0 cos(xi)`, plane-wave eigenvectors, their Jordan form at
//! the band edges, the free resolvent kernel and the free propagator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::coin::CoinField;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::{Mat2, Vec2, C64};

const I: C64 = C64::new(0.0, 1.0);

/// Which arc of the essential spectrum: `Minus` is the upper arc
/// (`lambda = arccos(rho0 cos xi)` on real `xi`), `Plus` its mirror image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Minus,
    Plus,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Minus, Branch::Plus];

    pub fn name(self) -> &'static str {
        match self {
            Branch::Minus => "minus",
            Branch::Plus => "plus",
        }
    }
}

/// A point of the complex strip together with the arc it refers to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiMomentum {
    pub xi: C64,
    pub branch: Branch,
}

impl QuasiMomentum {
    pub fn new(xi: C64, branch: Branch) -> Self {
        QuasiMomentum { xi, branch }
    }

    pub fn real(xi: f64, branch: Branch) -> Self {
        QuasiMomentum {
            xi: C64::new(xi, 0.0),
            branch,
        }
    }

    pub fn negated(self) -> Self {
        QuasiMomentum {
            xi: -self.xi,
            branch: self.branch,
        }
    }
}

/// Inverse cosine onto the open upper half strip, defined off `[-1, 1]`.
pub fn principal_acos(z: C64) -> Result<C64> {
    if z.im == 0.0 && z.re.abs() <= 1.0 {
        return Err(Error::Domain(format!("{z} lies on the cut [-1, 1]")));
    }
    let w = z.acos();
    Ok(if w.im < 0.0 { -w } else { w })
}

/// Continuation of the inverse cosine across the cut `(-1, 1)`, defined for
/// `|Re z| < 1`. On real `z`, `Minus` gives `arccos z` and `Plus` gives `-arccos z`.
pub fn acos_branch(z: C64, side: Branch) -> Result<C64> {
    if z.im == 0.0 && z.re.abs() == 1.0 {
        return Err(Error::BranchPoint(format!("{z} is a branch point")));
    }
    if z.re.abs() >= 1.0 {
        return Err(Error::Domain(format!(
            "|Re z| = {} must be < 1",
            z.re.abs()
        )));
    }
    let w = z.acos();
    Ok(match side {
        Branch::Minus => w,
        Branch::Plus => -w,
    })
}

/// Largest singular value of a 2x2 matrix.
pub fn op_norm(m: &Mat2) -> f64 {
    let h = m.adjoint() * m;
    let a = h[(0, 0)].re;
    let d = h[(1, 1)].re;
    let b = h[(0, 1)].norm();
    let mid = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mid + rad).max(0.0).sqrt()
}

pub(crate) fn det_cols(a: &Vec2, b: &Vec2) -> C64 {
    a[0] * b[1] - a[1] * b[0]
}

fn sigma1() -> Mat2 {
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    Mat2::new(z, o, o, z)
}

/// `a b^T sigma1`
pub(crate) fn outer_sigma1(a: &Vec2, b: &Vec2) -> Mat2 {
    a * b.transpose() * sigma1()
}

/// Interval data of the essential spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    pub rho0: f64,
    /// `{s in [0, pi] : |cos s| <= rho0}`
    pub upper: (f64, f64),
    /// Mirror image of `upper`.
    pub lower: (f64, f64),
    /// Edge values of `lambda`: `lambda(0)` and `lambda(pi)` on each branch.
    pub edges: [f64; 4],
    pub delta0: f64,
}

/// Eigen-data of the constant transfer matrix at one quasi-momentum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeEigenpair {
    pub xi: QuasiMomentum,
    pub lambda: C64,
    pub phi_plus: Vec2,
    pub phi_minus: Vec2,
    pub a_plus: C64,
    pub a_minus: C64,
    /// Set when a normalizer is below 1e-8 in modulus.
    pub near_degenerate: bool,
}

impl FreeEigenpair {
    pub fn phi(&self, sign: Sign) -> Vec2 {
        match sign {
            Sign::Plus => self.phi_plus,
            Sign::Minus => self.phi_minus,
        }
    }
}

/// Side of a Jost solution: `Plus` decays to the right, `Minus` to the left.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// The constant-coin walk with far-field parameter `alpha0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeWalk {
    alpha0: C64,
    rho0: f64,
    delta0: f64,
}

impl FreeWalk {
    pub fn new(alpha0: C64) -> Result<Self> {
        let a = alpha0.norm();
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Config(format!("|alpha0| = {a} must lie in (0, 1)")));
        }
        let rho0 = (1.0 - alpha0.norm_sqr()).sqrt();
        Ok(FreeWalk {
            alpha0,
            rho0,
            delta0: (1.0 / rho0).acosh(),
        })
    }

    pub fn of(coin: &CoinField) -> Self {
        FreeWalk::new(coin.alpha0()).expect("validated coin")
    }

    pub fn alpha0(&self) -> C64 {
        self.alpha0
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    /// Width of the strip on which `lambda` is analytic: `rho0 cosh(delta0) = 1`.
    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    pub fn band_structure(&self) -> BandStructure {
        let a = self.rho0.acos();
        BandStructure {
            rho0: self.rho0,
            upper: (a, PI - a),
            lower: (-(PI - a), -a),
            edges: [a, PI - a, -a, -(PI - a)],
            delta0: self.delta0,
        }
    }

    pub fn check_domain(&self, q: QuasiMomentum) -> Result<()> {
        if !(q.xi.im.abs() < self.delta0) {
            return Err(Error::Domain(format!(
                "|Im xi| = {} must be below delta0 = {}",
                q.xi.im.abs(),
                self.delta0
            )));
        }
        Ok(())
    }

    pub fn lambda(&self, q: QuasiMomentum) -> Result<C64> {
        self.check_domain(q)?;
        if q.xi.im == 0.0 {
            let l = (self.rho0 * q.xi.re.cos()).acos();
            return Ok(C64::new(
                if q.branch == Branch::Minus { l } else { -l },
                0.0,
            ));
        }
        acos_branch(q.xi.cos() * self.rho0, q.branch)
    }

    /// Derivative of `lambda` with respect to `xi` on either branch.
    pub fn lambda_prime(&self, q: QuasiMomentum) -> Result<C64> {
        let l = self.lambda(q)?;
        Ok(q.xi.sin() * self.rho0 / l.sin())
    }

    pub fn transfer0(&self, lambda: C64) -> Mat2 {
        let e = (I * lambda).exp();
        Mat2::new(e, self.alpha0, self.alpha0.conj(), e.inv()) / C64::new(self.rho0, 0.0)
    }

    pub fn eigenpair(&self, q: QuasiMomentum) -> Result<FreeEigenpair> {
        let lambda = self.lambda(q)?;
        let (sl, sx) = (lambda.sin(), q.xi.sin());
        let a_plus = (sl - sx * self.rho0).powi(2) + self.alpha0.norm_sqr();
        let a_minus = (sl + sx * self.rho0).powi(2) + self.alpha0.norm_sqr();
        if a_plus.norm() == 0.0 || a_minus.norm() == 0.0 {
            return Err(Error::Degenerate("eigenvector normalizer vanishes".into()));
        }
        let e = (I * lambda).exp();
        let vec = |s: f64, a: C64| -> Vec2 {
            let n = a.sqrt().inv();
            Vec2::new(-self.alpha0 * n, (e - (I * q.xi * s).exp() * self.rho0) * n)
        };
        Ok(FreeEigenpair {
            xi: q,
            lambda,
            phi_plus: vec(1.0, a_plus),
            phi_minus: vec(-1.0, a_minus),
            a_plus,
            a_minus,
            near_degenerate: a_plus.norm() < 1e-8 || a_minus.norm() < 1e-8,
        })
    }

    /// `det(phi_plus, phi_minus)`
    pub fn w0(&self, q: QuasiMomentum) -> Result<C64> {
        let e = self.eigenpair(q)?;
        Ok(det_cols(&e.phi_plus, &e.phi_minus))
    }

    /// `lambda' / W0`, which stays finite at the band edges.
    pub fn lambda_prime_over_w0(&self, q: QuasiMomentum) -> Result<C64> {
        let e = self.eigenpair(q)?;
        Ok(I * e.a_plus.sqrt() * e.a_minus.sqrt() / (e.lambda.sin() * self.alpha0 * 2.0))
    }

    /// Unimodular `gamma` with `gamma sigma1 conj(phi(xi)) = phi(-xi)` for real
    /// `xi`; both components must agree.
    pub fn gamma(&self, xi: f64, branch: Branch, sign: Sign) -> Result<C64> {
        let here = self.eigenpair(QuasiMomentum::real(xi, branch))?.phi(sign);
        let there = self.eigenpair(QuasiMomentum::real(-xi, branch))?.phi(sign);
        let g_up = there[0] / here[1].conj();
        let g_down = there[1] / here[0].conj();
        if (g_up - g_down).norm() > 1e-10 {
            return Err(Error::Consistency(format!(
                "symmetry factor components disagree: {g_up} vs {g_down}"
            )));
        }
        Ok(g_up)
    }

    /// `(P, P^{-1})` with `P = (phi_plus, phi_minus)`; refuses the band edges.
    pub fn diagonalizer(&self, q: QuasiMomentum) -> Result<(Mat2, Mat2)> {
        if q.xi.sin().norm() < 1e-12 {
            return Err(Error::Degenerate(
                "diagonalizer at a band edge; use the triangularizer".into(),
            ));
        }
        let e = self.eigenpair(q)?;
        let p = Mat2::from_columns(&[e.phi_plus, e.phi_minus]);
        let inv = p
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("singular eigenbasis".into()))?;
        Ok((p, inv))
    }

    /// `(P~, P~^{-1})` with `P~ = (phi_plus, A_plus^{-1/2} (0, -rho0))`, which
    /// brings the transfer matrix to `[[e^{i xi}, 1], [0, e^{-i xi}]]`.
    pub fn triangularizer(&self, q: QuasiMomentum) -> Result<(Mat2, Mat2)> {
        let e = self.eigenpair(q)?;
        let tilde = Vec2::new(C64::new(0.0, 0.0), -e.a_plus.sqrt().inv() * self.rho0);
        let p = Mat2::from_columns(&[e.phi_plus, tilde]);
        let inv = p
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("singular triangularizer".into()))?;
        Ok((p, inv))
    }

    /// `(e^{-+ i xi} T0)^x` through the Jordan form, valid at the band edges too.
    pub fn a_power(&self, q: QuasiMomentum, sign: Sign, x: i64) -> Result<Mat2> {
        let (p, pinv) = self.triangularizer(q)?;
        let j = jordan_power(q.xi, x);
        Ok(p * j * pinv * (-I * q.xi * sign.value() * x as f64).exp())
    }

    pub fn a_power_norm(&self, q: QuasiMomentum, sign: Sign, x: i64) -> Result<f64> {
        Ok(op_norm(&self.a_power(q, sign, x)?))
    }

    /// Kernel of the free resolvent in the edge view, with `lambda = lambda(xi)`.
    pub fn resolvent_kernel(&self, q: QuasiMomentum, x: i64, y: i64) -> Result<Mat2> {
        if q.xi.sin().norm() < 1e-12 {
            return Err(Error::Degenerate(
                "free resolvent kernel at a band edge".into(),
            ));
        }
        let e = self.eigenpair(q)?;
        let w0 = det_cols(&e.phi_plus, &e.phi_minus);
        let d = (x - y).abs() as f64;
        let pref = (I * q.xi * d).exp() * (-I * e.lambda).exp() / w0;
        Ok(edge_kernel(&e.phi_minus, &e.phi_plus, &e.phi_plus, &e.phi_minus, x, y) * pref)
    }
}

/// `a(x) b(y)^T sigma1 diag(1_{x<=y}, 1_{x<y}) + c(x) d(y)^T sigma1 diag(1_{x>y}, 1_{x>=y})`
/// with the plane-wave factors stripped.
pub(crate) fn edge_kernel(a: &Vec2, b: &Vec2, c: &Vec2, d: &Vec2, x: i64, y: i64) -> Mat2 {
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let ind = |cond: bool| if cond { o } else { z };
    let left = Mat2::new(ind(x <= y), z, z, ind(x < y));
    let right = Mat2::new(ind(x > y), z, z, ind(x >= y));
    let mut m = Mat2::zeros();
    if x <= y {
        m += outer_sigma1(a, b) * left;
    }
    if x >= y {
        m += outer_sigma1(c, d) * right;
    }
    m
}

/// `[[e^{i xi}, 1], [0, e^{-i xi}]]^x` in closed form, any integer `x`.
pub fn jordan_power(xi: C64, x: i64) -> Mat2 {
    let e = |k: f64| (I * xi * k).exp();
    let off: C64 = if x > 0 {
        (0..x).map(|y| e((x - 1 - 2 * y) as f64)).sum()
    } else if x < 0 {
        -(0..-x).map(|y| e(-((x + 1 + 2 * y) as f64))).sum::<C64>()
    } else {
        C64::new(0.0, 0.0)
    };
    Mat2::new(e(x as f64), off, C64::new(0.0, 0.0), e(-(x as f64)))
}

/// `(lambda', lambda'', lambda''')` of `arccos(rho0 cos xi)` at real `xi`.
pub fn lambda_derivatives(xi: f64, rho0: f64) -> (f64, f64, f64) {
    let c = rho0;
    let (s, co) = xi.sin_cos();
    let d = 1.0 - c * c * co * co;
    let k = c * (1.0 - c * c);
    (
        c * s / d.sqrt(),
        k * co / d.powf(1.5),
        -k * s * (1.0 + 2.0 * c * c * co * co) / d.powf(2.5),
    )
}

/// Uniform periodic grid `xi_j = 2 pi j / n`, shifted by `i delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiGrid {
    pub n: usize,
    pub delta: f64,
}

impl XiGrid {
    pub fn new(n: usize, delta: f64) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid size {n} must be a power of two >= 4"
            )));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!(
                "grid shift {delta} must be finite and >= 0"
            )));
        }
        Ok(XiGrid { n, delta })
    }

    pub fn real(n: usize) -> Result<Self> {
        XiGrid::new(n, 0.0)
    }

    pub fn point(&self, j: usize) -> C64 {
        C64::new(2.0 * PI * j as f64 / self.n as f64, self.delta)
    }

    /// Index of the grid point `-xi_j` (for the unshifted grid).
    pub fn mirror(&self, j: usize) -> usize {
        (self.n - j) % self.n
    }

    pub fn edge_indices(&self) -> [usize; 2] {
        [0, self.n / 2]
    }
}

/// Per-point quadrature data of the free propagator on one branch.
#[derive(Clone, Debug)]
struct FreeNode {
    xi: f64,
    lambda: f64,
    weight: C64,
    phi_plus: Vec2,
    phi_minus: Vec2,
}

/// Orientation factor of the spectral integral over one arc.
pub(crate) const ARC_ORIENTATION: f64 = 1.0;

/// Kernel of `J_VE U0^t P J_EV` for the spectral projection `P` of one arc,
/// by the periodic trapezoid rule.
#[derive(Clone, Debug)]
pub struct FreePropagator {
    walk: FreeWalk,
    branch: Branch,
    nodes: Vec<FreeNode>,
}

impl FreePropagator {
    pub fn new(walk: FreeWalk, branch: Branch, n: usize, exec: Execution) -> Result<Self> {
        let grid = XiGrid::real(n)?;
        let nodes = exec.try_map(n, |j| {
            let q = QuasiMomentum::new(grid.point(j), branch);
            let e = walk.eigenpair(q)?;
            Ok::<_, Error>(FreeNode {
                xi: q.xi.re,
                lambda: e.lambda.re,
                weight: walk.lambda_prime_over_w0(q)? * (ARC_ORIENTATION / n as f64),
                phi_plus: e.phi_plus,
                phi_minus: e.phi_minus,
            })
        })?;
        Ok(FreePropagator {
            walk,
            branch,
            nodes,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.nodes.len()
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    /// Smallest power-of-two grid resolving time `t` and separation `dist`.
    pub fn required_grid(walk: &FreeWalk, t: usize, dist: usize) -> usize {
        let need = 1.5 * (t as f64 * walk.rho0 + dist as f64) + 60.0 / walk.delta0 + 64.0;
        (need.ceil() as usize).next_power_of_two().max(64)
    }

    pub fn kernel(&self, t: usize, x: i64, y: i64) -> Result<Mat2> {
        let d = (x - y).unsigned_abs() as usize;
        let need = Self::required_grid(&self.walk, t, d);
        if self.nodes.len() < need {
            return Err(Error::Resolution(format!(
                "grid {} too coarse for t = {t}, |x - y| = {d}; need {need}",
                self.nodes.len()
            )));
        }
        let mut acc = Mat2::zeros();
        for n in &self.nodes {
            let phase = (I * (n.lambda * t as f64 + n.xi * d as f64)).exp();
            acc += edge_kernel(&n.phi_minus, &n.phi_plus, &n.phi_plus, &n.phi_minus, x, y)
                * (n.weight * phase);
        }
        Ok(acc)
    }

    /// Doubles the grid from `start` until successive kernel values at the
    /// probe pairs differ by less than `tol`.
    pub fn refined(
        walk: FreeWalk,
        branch: Branch,
        t: usize,
        probes: &[(i64, i64)],
        tol: f64,
        exec: Execution,
    ) -> Result<Self> {
        let dist = probes
            .iter()
            .map(|(x, y)| (x - y).unsigned_abs() as usize)
            .max()
            .unwrap_or(0);
        let mut n = Self::required_grid(&walk, t, dist);
        let mut prev = FreePropagator::new(walk, branch, n, exec)?;
        for _ in 0..8 {
            n *= 2;
            let next = FreePropagator::new(walk, branch, n, exec)?;
            let mut diff: f64 = 0.0;
            for &(x, y) in probes {
                diff = diff.max((next.kernel(t, x, y)? - prev.kernel(t, x, y)?).norm());
            }
            if diff < tol {
                return Ok(next);
            }
            prev = next;
        }
        Err(Error::Resolution(
            "propagator did not stabilise under grid doubling".into(),
        ))
    }
}

/// One row of the dispersion table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DispersionRow {
    pub xi: f64,
    pub lambda: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub w0: C64,
}

/// Samples of the upper-arc dispersion relation on a uniform grid.
pub fn dispersion_table(walk: &FreeWalk, n: usize) -> Result<Vec<DispersionRow>> {
    let grid = XiGrid::real(n)?;
    (0..n)
        .map(|j| {
            let xi = grid.point(j).re;
            let q = QuasiMomentum::real(xi, Branch::Minus);
            let (d1, d2, d3) = lambda_derivatives(xi, walk.rho0());
            Ok(DispersionRow {
                xi,
                lambda: walk.lambda(q)?.re,
                d1,
                d2,
                d3,
                w0: walk.w0(q)?,
            })
        })
        .collect()
}
