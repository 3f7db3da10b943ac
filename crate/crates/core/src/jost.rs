//! Transfer matrices of the perturbed walk and the Jost solutions, stored
//! through their modulating parts `m_+` (normalised at the right end) and
//! `m_-` (normalised at the left end).
//!
//! Only `alpha`, `theta` and `rho` enter, so everything here describes the
//! gauge-reduced walk.

use serde::{Deserialize, Serialize};

use crate::coin::CoinField;
use crate::dispersion::{
    det_cols, op_norm, Branch, FreeEigenpair, FreeWalk, QuasiMomentum, Sign, XiGrid,
};
use crate::error::{Error, Result};
use crate::lattice::Window;
use crate::par::Execution;
use crate::wiener::{fourier_coefficients, wiener_norm_vec};
use crate::{Mat2, Vec2, C64};

const I: C64 = C64::new(0.0, 1.0);

/// Propagates the edge form of a solution of `U u = e^{i lambda} u` from
/// `x` to `x + 1`.
pub fn transfer_matrix(coin: &CoinField, x: i64, lambda: C64) -> Mat2 {
    let a = coin.alpha(x);
    let e = (I * (lambda - coin.theta(x))).exp();
    Mat2::new(e, a, a.conj(), e.inv()) / C64::new(coin.rho(x), 0.0)
}

fn potential_with(
    coin: &CoinField,
    walk: &FreeWalk,
    lambda: C64,
    xi: C64,
    sign: Sign,
    x: i64,
) -> Mat2 {
    let t = transfer_matrix(coin, x, lambda) - walk.transfer0(lambda);
    t * (-I * xi * sign.value()).exp()
}

/// `e^{-+ i xi} (T_lambda(x) - T0_lambda)`, the term that turns the constant
/// recursion `m(x+1) = A m(x)` into the perturbed one.
pub fn potential(coin: &CoinField, q: QuasiMomentum, sign: Sign, x: i64) -> Result<Mat2> {
    let walk = FreeWalk::of(coin);
    let lambda = walk.lambda(q)?;
    Ok(potential_with(coin, &walk, lambda, q.xi, sign, x))
}

/// `sum_x <x>^sigma |V(x)|` over the coin support.
pub fn potential_norm(coin: &CoinField, q: QuasiMomentum, sign: Sign, sigma: u32) -> Result<f64> {
    let Some(s) = coin.support() else {
        return Ok(0.0);
    };
    let mut acc = 0.0;
    for x in s.sites() {
        acc +=
            crate::lattice::bracket(x).powi(sigma as i32) * op_norm(&potential(coin, q, sign, x)?);
    }
    Ok(acc)
}

fn inv2(m: &Mat2) -> Result<Mat2> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if !(det.norm() > 1e-300) || !det.is_finite() {
        return Err(Error::Solver(format!("singular 2x2 system (det = {det})")));
    }
    Ok(Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

/// `m_+` and `m_-` at one quasi-momentum on a window.
#[derive(Clone, Debug)]
pub struct JostColumn {
    q: QuasiMomentum,
    eig: FreeEigenpair,
    window: Window,
    plus: Vec<Vec2>,
    minus: Vec<Vec2>,
}

impl JostColumn {
    /// Solves the Volterra equations exactly. `m_+` is built by backward
    /// substitution from the right edge of the coin support, where it equals
    /// `phi_+`; `m_-` by forward substitution from the left edge.
    pub fn solve(coin: &CoinField, q: QuasiMomentum, window: Window) -> Result<Self> {
        let walk = FreeWalk::of(coin);
        let eig = walk.eigenpair(q)?;
        let lambda = eig.lambda;
        let work = coin.support().map(|s| s.hull(&window)).unwrap_or(window);
        let n = work.len();
        let mut plus = vec![eig.phi_plus; n];
        let mut minus = vec![eig.phi_minus; n];
        if let Some(s) = coin.support() {
            let t0 = walk.transfer0(lambda);
            let a_inv = inv2(&t0)? * (I * q.xi).exp();
            let a_minus = t0 * (I * q.xi).exp();

            // sum_{y >= x} A^{-(y+1-x)} V(y) m(y), carried leftwards
            let mut acc = Vec2::zeros();
            for x in (work.min..=s.max).rev() {
                let i = (x - work.min) as usize;
                let v = potential_with(coin, &walk, lambda, q.xi, Sign::Plus, x);
                let lhs = Mat2::identity() + a_inv * v;
                let m = inv2(&lhs)? * (eig.phi_plus - a_inv * acc);
                acc = a_inv * (v * m + acc);
                plus[i] = m;
            }

            // sum_{y < x} A^{x-1-y} V(y) m(y), carried rightwards
            let mut acc = Vec2::zeros();
            for x in s.min..=work.max {
                let i = (x - work.min) as usize;
                let m = eig.phi_minus + acc;
                let v = potential_with(coin, &walk, lambda, q.xi, Sign::Minus, x);
                acc = a_minus * acc + v * m;
                minus[i] = m;
            }
        }
        let lo = (window.min - work.min) as usize;
        let hi = lo + window.len();
        Ok(JostColumn {
            q,
            eig,
            window,
            plus: plus[lo..hi].to_vec(),
            minus: minus[lo..hi].to_vec(),
        })
    }

    pub fn quasi_momentum(&self) -> QuasiMomentum {
        self.q
    }

    pub fn lambda(&self) -> C64 {
        self.eig.lambda
    }

    pub fn eigenpair(&self) -> &FreeEigenpair {
        &self.eig
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// `m_+-(x)`; panics outside the window.
    pub fn m(&self, sign: Sign, x: i64) -> Vec2 {
        let i = self.window.index(x).expect("site inside the Jost window");
        match sign {
            Sign::Plus => self.plus[i],
            Sign::Minus => self.minus[i],
        }
    }

    pub fn values(&self, sign: Sign) -> &[Vec2] {
        match sign {
            Sign::Plus => &self.plus,
            Sign::Minus => &self.minus,
        }
    }

    /// The Jost solution itself, `e^{+-i xi x} m_+-(x)`, in the edge view.
    pub fn solution(&self, sign: Sign, x: i64) -> Vec2 {
        self.m(sign, x) * (I * self.q.xi * (sign.value() * x as f64)).exp()
    }

    /// `det(m_+(x), m_-(x))`, equal to the Wronskian of the Jost solutions.
    pub fn wronskian_at(&self, x: i64) -> C64 {
        det_cols(&self.m(Sign::Plus, x), &self.m(Sign::Minus, x))
    }

    pub fn wronskian(&self) -> C64 {
        self.wronskian_at(self.window.midpoint())
    }

    /// Spread `max - min` of the Wronskian across the window.
    pub fn wronskian_variation(&self) -> f64 {
        let w0 = self.wronskian_at(self.window.min);
        self.window
            .sites()
            .map(|x| (self.wronskian_at(x) - w0).norm())
            .fold(0.0, f64::max)
    }

    /// Largest defect of `m(x+1) = e^{-+i xi} T(x) m(x)` inside the window.
    pub fn recursion_residual(&self, coin: &CoinField) -> f64 {
        let mut worst: f64 = 0.0;
        for sign in [Sign::Plus, Sign::Minus] {
            let e = (-I * self.q.xi * sign.value()).exp();
            for x in self.window.min..self.window.max {
                let t = transfer_matrix(coin, x, self.eig.lambda) * e;
                let r = self.m(sign, x + 1) - t * self.m(sign, x);
                worst = worst.max(r.norm() / (1.0 + self.m(sign, x + 1).norm()));
            }
        }
        worst
    }

    /// Defect of the Volterra equations with every sum evaluated directly
    /// through closed-form powers of the constant recursion. Needs the window
    /// to contain the coin support.
    pub fn fixed_point_residual(&self, coin: &CoinField) -> Result<f64> {
        let Some(s) = coin.support() else {
            let p = self
                .plus
                .iter()
                .map(|m| (m - self.eig.phi_plus).norm())
                .fold(0.0, f64::max);
            let m = self
                .minus
                .iter()
                .map(|m| (m - self.eig.phi_minus).norm())
                .fold(0.0, f64::max);
            return Ok(p.max(m));
        };
        if !self.window.contains_window(&s) {
            return Err(Error::WindowOverflow(
                "fixed-point check needs the whole coin support".into(),
            ));
        }
        let walk = FreeWalk::of(coin);
        let (lambda, xi) = (self.eig.lambda, self.q.xi);
        let mut worst: f64 = 0.0;
        for x in self.window.sites() {
            let mut sum = Vec2::zeros();
            for y in x.max(s.min)..=s.max {
                let v = potential_with(coin, &walk, lambda, xi, Sign::Plus, y);
                sum += walk.a_power(self.q, Sign::Plus, -(y + 1 - x))? * v * self.m(Sign::Plus, y);
            }
            let r = self.m(Sign::Plus, x) - (self.eig.phi_plus - sum);
            worst = worst.max(r.norm());
            let mut sum = Vec2::zeros();
            for y in s.min..x.min(s.max + 1) {
                let v = potential_with(coin, &walk, lambda, xi, Sign::Minus, y);
                sum += walk.a_power(self.q, Sign::Minus, x - 1 - y)? * v * self.m(Sign::Minus, y);
            }
            let r = self.m(Sign::Minus, x) - (self.eig.phi_minus + sum);
            worst = worst.max(r.norm());
        }
        Ok(worst)
    }
}

/// Independent construction of `m_+-` by plain transfer-matrix propagation
/// outward from the support edges. Returns `(m_+, m_-)` on the window.
pub fn propagate_transfer(
    coin: &CoinField,
    q: QuasiMomentum,
    window: Window,
) -> Result<(Vec<Vec2>, Vec<Vec2>)> {
    let walk = FreeWalk::of(coin);
    let eig = walk.eigenpair(q)?;
    let lambda = eig.lambda;
    let s = coin.support().unwrap_or(Window::centered(0));
    let work = s.hull(&window);
    let n = work.len();
    let e = (I * q.xi).exp();
    let mut plus = vec![eig.phi_plus; n];
    let mut minus = vec![eig.phi_minus; n];
    let mut m = eig.phi_plus;
    for x in (work.min..=s.max).rev() {
        m = inv2(&transfer_matrix(coin, x, lambda))? * m * e;
        plus[(x - work.min) as usize] = m;
    }
    let mut m = eig.phi_minus;
    for x in s.min..work.max {
        m = transfer_matrix(coin, x, lambda) * m * e;
        minus[(x + 1 - work.min) as usize] = m;
    }
    let lo = (window.min - work.min) as usize;
    let hi = lo + window.len();
    Ok((plus[lo..hi].to_vec(), minus[lo..hi].to_vec()))
}

/// Jost columns over a uniform grid, possibly shifted into the upper strip.
#[derive(Clone, Debug)]
pub struct JostTable {
    branch: Branch,
    grid: XiGrid,
    window: Window,
    columns: Vec<JostColumn>,
}

/// One CSV row of a table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JostRow {
    pub xi_re: f64,
    pub xi_im: f64,
    pub x: i64,
    pub m_plus: [f64; 4],
    pub m_minus: [f64; 4],
    pub residual: f64,
}

impl JostTable {
    pub fn solve(
        coin: &CoinField,
        branch: Branch,
        grid: XiGrid,
        window: Window,
        exec: Execution,
    ) -> Result<Self> {
        let columns = exec.try_map(grid.n, |j| {
            JostColumn::solve(coin, QuasiMomentum::new(grid.point(j), branch), window)
        })?;
        Ok(JostTable {
            branch,
            grid,
            window,
            columns,
        })
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn grid(&self) -> XiGrid {
        self.grid
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn column(&self, j: usize) -> &JostColumn {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[JostColumn] {
        &self.columns
    }

    pub fn m(&self, sign: Sign, j: usize, x: i64) -> Vec2 {
        self.columns[j].m(sign, x)
    }

    /// Samples of `xi -> m_+-(x, xi)` over the grid.
    pub fn samples(&self, sign: Sign, x: i64) -> Vec<Vec2> {
        self.columns.iter().map(|c| c.m(sign, x)).collect()
    }

    /// Fourier coefficients of both components of `xi -> m_+-(x, xi)`.
    pub fn fourier(&self, sign: Sign, x: i64) -> Result<[Vec<C64>; 2]> {
        let s = self.samples(sign, x);
        let up: Vec<C64> = s.iter().map(|v| v[0]).collect();
        let down: Vec<C64> = s.iter().map(|v| v[1]).collect();
        Ok([fourier_coefficients(&up)?, fourier_coefficients(&down)?])
    }

    pub fn wiener_norm(&self, sign: Sign, x: i64, order: u32) -> Result<f64> {
        wiener_norm_vec(&self.samples(sign, x), order)
    }

    /// Smallest `C` with `|m_+-(x, xi)| <= C max(1, -+x)` on the table.
    pub fn growth_constant(&self, sign: Sign) -> f64 {
        let mut c: f64 = 0.0;
        for col in &self.columns {
            for x in self.window.sites() {
                let scale = (-(sign.value()) * x as f64).max(1.0);
                c = c.max(col.m(sign, x).norm() / scale);
            }
        }
        c
    }

    /// Smallest `C` with `|m_+-(x, .)|_A <= C max(1, -+x)` on the window.
    pub fn wiener_growth_constant(&self, sign: Sign) -> Result<f64> {
        let mut c: f64 = 0.0;
        for x in self.window.sites() {
            let scale = (-(sign.value()) * x as f64).max(1.0);
            c = c.max(self.wiener_norm(sign, x, 0)? / scale);
        }
        Ok(c)
    }

    /// Largest Wiener distance between the `xi`-profiles of two tables over
    /// the common window, both signs.
    pub fn wiener_distance(&self, other: &JostTable) -> Result<f64> {
        if self.grid.n != other.grid.n {
            return Err(Error::Config("tables on different grids".into()));
        }
        let w = self
            .window
            .intersect(&other.window)
            .ok_or_else(|| Error::Config("tables share no sites".into()))?;
        let mut d: f64 = 0.0;
        for sign in [Sign::Plus, Sign::Minus] {
            for x in w.sites() {
                let diff: Vec<Vec2> = self
                    .samples(sign, x)
                    .iter()
                    .zip(other.samples(sign, x))
                    .map(|(a, b)| a - b)
                    .collect();
                d = d.max(wiener_norm_vec(&diff, 0)?);
            }
        }
        Ok(d)
    }

    pub fn wronskian_variation(&self) -> f64 {
        self.columns
            .iter()
            .map(|c| c.wronskian_variation())
            .fold(0.0, f64::max)
    }

    pub fn recursion_residual(&self, coin: &CoinField) -> f64 {
        self.columns
            .iter()
            .map(|c| c.recursion_residual(coin))
            .fold(0.0, f64::max)
    }

    /// Largest `|m_+- - phi_+-|` over the table.
    pub fn free_deviation(&self) -> f64 {
        let mut d: f64 = 0.0;
        for c in &self.columns {
            for sign in [Sign::Plus, Sign::Minus] {
                let phi = c.eig.phi(sign);
                d = c
                    .values(sign)
                    .iter()
                    .map(|m| (m - phi).norm())
                    .fold(d, f64::max);
            }
        }
        d
    }

    /// Rebuilds a table from its rows, as written by [`JostTable::rows`].
    pub fn restore(
        coin: &CoinField,
        branch: Branch,
        grid: XiGrid,
        window: Window,
        rows: &[JostRow],
    ) -> Result<Self> {
        let len = window.len();
        if rows.len() != grid.n * len {
            return Err(Error::Data(format!(
                "{} rows for a {} x {} table",
                rows.len(),
                grid.n,
                len
            )));
        }
        let walk = FreeWalk::of(coin);
        let vec = |a: [f64; 4]| Vec2::new(C64::new(a[0], a[1]), C64::new(a[2], a[3]));
        let mut columns = Vec::with_capacity(grid.n);
        for (j, chunk) in rows.chunks(len).enumerate() {
            let q = QuasiMomentum::new(grid.point(j), branch);
            if chunk
                .iter()
                .zip(window.sites())
                .any(|(r, x)| r.x != x || C64::new(r.xi_re, r.xi_im) != q.xi)
            {
                return Err(Error::Data(format!(
                    "rows of column {j} do not match the grid"
                )));
            }
            columns.push(JostColumn {
                q,
                eig: walk.eigenpair(q)?,
                window,
                plus: chunk.iter().map(|r| vec(r.m_plus)).collect(),
                minus: chunk.iter().map(|r| vec(r.m_minus)).collect(),
            });
        }
        Ok(JostTable {
            branch,
            grid,
            window,
            columns,
        })
    }

    pub fn rows(&self, coin: &CoinField) -> Vec<JostRow> {
        let mut out = Vec::with_capacity(self.columns.len() * self.window.len());
        for c in &self.columns {
            let res = c.recursion_residual(coin);
            for x in self.window.sites() {
                let (p, m) = (c.m(Sign::Plus, x), c.m(Sign::Minus, x));
                out.push(JostRow {
                    xi_re: c.q.xi.re,
                    xi_im: c.q.xi.im,
                    x,
                    m_plus: [p[0].re, p[0].im, p[1].re, p[1].im],
                    m_minus: [m[0].re, m[0].im, m[1].re, m[1].im],
                    residual: res,
                });
            }
        }
        out
    }
}
