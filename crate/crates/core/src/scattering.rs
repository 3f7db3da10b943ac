//! Scattering data of the perturbed walk: Wronskians, transmission and
//! reflection coefficients, band-edge resonances, eigenvalues in the gaps,
//! the perturbed resolvent kernel and the projection onto the continuous
//! spectrum.

use std::f64::consts::PI;

use serde::Serialize;

use crate::coin::CoinField;
use crate::dispersion::{
    det_cols, edge_kernel, Branch, FreeWalk, QuasiMomentum, Sign, XiGrid, ARC_ORIENTATION,
};
use crate::error::{Error, Result};
use crate::jost::{JostColumn, JostTable};
use crate::lattice::{Spinor, SpinorField, Window};
use crate::par::Execution;
use crate::wiener::wiener_norm;
use crate::{Mat2, C64};

const I: C64 = C64::new(0.0, 1.0);

/// Relative threshold deciding a band edge: `|W| < EDGE_RELATIVE * median |W|`.
pub const EDGE_RELATIVE: f64 = 1e-8;

/// Off-corner Wronskians below this are reported as data errors.
pub const EMBEDDED_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeClass {
    Generic,
    Exceptional,
    /// `|W|` within a factor 10 of the threshold; refine before deciding.
    Indeterminate,
}

/// Verdict at one of the four band edges.
#[derive(Clone, Debug, Serialize)]
pub struct EdgeFlag {
    pub branch: Branch,
    pub xi: f64,
    pub wronskian: C64,
    pub tolerance: f64,
    pub class: EdgeClass,
    /// Edge form of the bounded solution, present when exceptional.
    #[serde(skip)]
    pub bounded_solution: Option<SpinorField>,
}

fn classify(w: C64, tol: f64) -> EdgeClass {
    let r = w.norm() / tol;
    if r < 0.1 {
        EdgeClass::Exceptional
    } else if r > 10.0 {
        EdgeClass::Generic
    } else {
        EdgeClass::Indeterminate
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Flags for the two edges `xi = 0, pi` of the table's branch.
pub fn classify_edges(table: &JostTable) -> Result<[EdgeFlag; 2]> {
    if table.grid().delta != 0.0 {
        return Err(Error::Config(
            "edge classification needs the real grid".into(),
        ));
    }
    let scale = median(
        table
            .columns()
            .iter()
            .map(|c| c.wronskian().norm())
            .collect(),
    );
    let tol = EDGE_RELATIVE * scale;
    let flag = |j: usize| {
        let col = table.column(j);
        let w = col.wronskian();
        let class = classify(w, tol);
        let bounded_solution = (class == EdgeClass::Exceptional).then(|| {
            SpinorField::from_fn(table.window(), |x| {
                Spinor::from_vec2(&col.solution(Sign::Plus, x))
            })
        });
        EdgeFlag {
            branch: table.branch(),
            xi: col.quasi_momentum().xi.re,
            wronskian: w,
            tolerance: tol,
            class,
            bounded_solution,
        }
    };
    let [a, b] = table.grid().edge_indices();
    Ok([flag(a), flag(b)])
}

/// Edge flags of one branch from a table on the support with margin one.
pub fn resonance_classify(
    coin: &CoinField,
    branch: Branch,
    n: usize,
    exec: Execution,
) -> Result<[EdgeFlag; 2]> {
    let table = JostTable::solve(
        coin,
        branch,
        XiGrid::real(n)?,
        coin.support_or_origin(1),
        exec,
    )?;
    classify_edges(&table)
}

/// A band-edge zero of `W` along a one-parameter family of coins, with the
/// classifier verdict at the zero and on both sides of it.
#[derive(Clone, Debug, Serialize)]
pub struct EdgeCrossing {
    pub branch: Branch,
    pub xi: f64,
    pub parameter: f64,
    pub wronskian: C64,
    pub below: EdgeClass,
    pub at: EdgeClass,
    pub above: EdgeClass,
}

/// Offset from the crossing at which the sides are classified.
pub const CROSSING_OFFSET: f64 = 1e-3;

/// Finds the parameter in `bracket` where `W` vanishes at the band edge `xi`
/// (`0` or `pi`) of `branch`. `W` must keep a fixed phase along the family,
/// as for real coins, so that its projection on that phase changes sign.
pub fn locate_edge_crossing(
    family: &dyn Fn(f64) -> Result<CoinField>,
    branch: Branch,
    xi: f64,
    bracket: (f64, f64),
    n: usize,
    exec: Execution,
) -> Result<EdgeCrossing> {
    let edge = |s: f64| -> Result<C64> { wronskian(&family(s)?, QuasiMomentum::real(xi, branch)) };
    let wa = edge(bracket.0)?;
    let phase = wa.conj() / wa.norm();
    let f = |s: f64| edge(s).map(|w| (w * phase).re).unwrap_or(f64::NAN);
    let fb = f(bracket.1);
    if !(fb < 0.0) {
        return Err(Error::Config(format!(
            "W does not change sign on [{}, {}]",
            bracket.0, bracket.1
        )));
    }
    let mut conv = 1e-15f64;
    let root = roots::find_root_brent(bracket.0, bracket.1, &f, &mut conv)
        .map_err(|e| Error::Solver(format!("edge crossing: {e:?}")))?;
    let verdict = |s: f64| -> Result<EdgeClass> {
        let flags = resonance_classify(&family(s)?, branch, n, exec)?;
        flags
            .iter()
            .find(|f| (f.xi - xi).abs() < 1e-12 || ((f.xi - xi).abs() - 2.0 * PI).abs() < 1e-12)
            .map(|f| f.class)
            .ok_or_else(|| Error::Config(format!("xi = {xi} is not a band edge")))
    };
    Ok(EdgeCrossing {
        branch,
        xi,
        parameter: root,
        wronskian: edge(root)?,
        below: verdict(root - CROSSING_OFFSET)?,
        at: verdict(root)?,
        above: verdict(root + CROSSING_OFFSET)?,
    })
}

/// Transmission and reflection data of one branch on a real grid.
#[derive(Clone, Debug, Serialize)]
pub struct ScatteringReport {
    pub branch: Branch,
    pub xi: Vec<f64>,
    pub wronskian: Vec<C64>,
    pub w0: Vec<C64>,
    pub t: Vec<C64>,
    pub r_plus: Vec<C64>,
    pub r_minus: Vec<C64>,
    /// `max | |t|^2 + |r_+-|^2 - 1 |`
    pub unitarity_defect: f64,
    /// Largest gap between `W0 / W` and the two determinant formulas for `t`.
    pub t_consistency: f64,
    /// Largest defect of the scattering relations at the probe sites.
    pub relation_residual: f64,
    pub wronskian_variation: f64,
    pub min_offcorner_wronskian: f64,
    pub edges: [EdgeFlag; 2],
    /// Grid indices whose values were extrapolated from one side.
    pub extrapolated: Vec<usize>,
}

/// `p(0)` of the quartic through `f(1..=5)`.
fn extrapolate(f: [C64; 5]) -> C64 {
    f[0] * 5.0 - f[1] * 10.0 + f[2] * 10.0 - f[3] * 5.0 + f[4]
}

pub fn scattering_coefficients(table: &JostTable) -> Result<ScatteringReport> {
    let grid = table.grid();
    let n = grid.n;
    if n < 16 {
        return Err(Error::Config(
            "scattering needs at least 16 grid points".into(),
        ));
    }
    let edges = classify_edges(table)?;
    let window = table.window();
    let x = window.midpoint();
    let probes: Vec<i64> = (0..8)
        .map(|k| window.min + (k * (window.len() as i64 - 1)) / 7)
        .collect();

    let mut wr = Vec::with_capacity(n);
    let mut w0 = Vec::with_capacity(n);
    let (mut t, mut rp, mut rm) = (
        vec![C64::new(0.0, 0.0); n],
        vec![C64::new(0.0, 0.0); n],
        vec![C64::new(0.0, 0.0); n],
    );
    let (mut t_consistency, mut relation_residual): (f64, f64) = (0.0, 0.0);
    let mut min_off = f64::INFINITY;
    let corners = grid.edge_indices();
    for j in 0..n {
        let col = table.column(j);
        let e = col.eigenpair();
        wr.push(col.wronskian());
        w0.push(det_cols(&e.phi_plus, &e.phi_minus));
    }
    for j in 0..n {
        let here = table.column(j);
        let there = table.column(grid.mirror(j));
        let xi = here.quasi_momentum().xi;
        let w = wr[j];
        let det = |a: crate::Vec2, b: crate::Vec2| det_cols(&a, &b);
        rp[j] = -(-2.0 * I * xi * x as f64).exp()
            * det(there.m(Sign::Plus, x), here.m(Sign::Minus, x))
            / w;
        rm[j] = -(2.0 * I * xi * x as f64).exp()
            * det(here.m(Sign::Plus, x), there.m(Sign::Minus, x))
            / w;
        if corners.contains(&j) {
            continue;
        }
        min_off = min_off.min(w.norm());
        if w.norm() < EMBEDDED_FLOOR {
            return Err(Error::Data(format!(
                "|W| = {:e} at xi = {} off the band edges",
                w.norm(),
                xi.re
            )));
        }
        t[j] = w0[j] / w;
        let tp = det(here.m(Sign::Plus, x), there.m(Sign::Plus, x)) / w;
        let tm = det(there.m(Sign::Minus, x), here.m(Sign::Minus, x)) / w;
        t_consistency = t_consistency
            .max((tp - t[j]).norm())
            .max((tm - t[j]).norm());
        for &p in &probes {
            let e2 = (2.0 * I * xi * p as f64).exp();
            let right = there.m(Sign::Plus, p) + here.m(Sign::Plus, p) * (rp[j] * e2)
                - here.m(Sign::Minus, p) * t[j];
            let left = there.m(Sign::Minus, p) + here.m(Sign::Minus, p) * (rm[j] / e2)
                - here.m(Sign::Plus, p) * t[j];
            relation_residual = relation_residual.max(right.norm()).max(left.norm());
        }
    }

    let mut extrapolated = Vec::new();
    for (k, &j) in corners.iter().enumerate() {
        if edges[k].class == EdgeClass::Generic {
            t[j] = C64::new(0.0, 0.0);
            continue;
        }
        let side: [usize; 5] = if j == 0 {
            [1, 2, 3, 4, 5]
        } else {
            [j - 1, j - 2, j - 3, j - 4, j - 5]
        };
        let pick = |v: &[C64]| extrapolate(side.map(|i| v[i]));
        t[j] = pick(&t);
        rp[j] = pick(&rp);
        rm[j] = pick(&rm);
        extrapolated.push(j);
    }

    let unitarity_defect = (0..n)
        .map(|j| {
            let a = (t[j].norm_sqr() + rp[j].norm_sqr() - 1.0).abs();
            let b = (t[j].norm_sqr() + rm[j].norm_sqr() - 1.0).abs();
            a.max(b)
        })
        .fold(0.0, f64::max);

    Ok(ScatteringReport {
        branch: table.branch(),
        xi: (0..n).map(|j| grid.point(j).re).collect(),
        wronskian: wr,
        w0,
        t,
        r_plus: rp,
        r_minus: rm,
        unitarity_defect,
        t_consistency,
        relation_residual,
        wronskian_variation: table.wronskian_variation(),
        min_offcorner_wronskian: min_off,
        edges,
        extrapolated,
    })
}

impl ScatteringReport {
    /// Wiener norms of `t`, `r_+`, `r_-`.
    pub fn wiener_norms(&self) -> Result<[f64; 3]> {
        Ok([
            wiener_norm(&self.t, 0)?,
            wiener_norm(&self.r_plus, 0)?,
            wiener_norm(&self.r_minus, 0)?,
        ])
    }

    pub fn max_transmission(&self) -> f64 {
        self.t.iter().map(|t| t.norm()).fold(0.0, f64::max)
    }
}

/// `det(phi_+, phi_-)` at one quasi-momentum.
pub fn wronskian(coin: &CoinField, q: QuasiMomentum) -> Result<C64> {
    Ok(JostColumn::solve(coin, q, coin.support_or_origin(0))?.wronskian())
}

/// Kernel of the resolvent of the five-diagonal form at `e^{i lambda(xi)}`,
/// built from the Jost solutions of the column.
pub fn resolvent_kernel(col: &JostColumn, x: i64, y: i64) -> Result<Mat2> {
    let w = col.wronskian();
    if w.norm() < EMBEDDED_FLOOR {
        return Err(Error::Pole(format!(
            "W = {w} vanishes at xi = {}",
            col.quasi_momentum().xi
        )));
    }
    let xi = col.quasi_momentum().xi;
    let pref = (I * xi * (x - y).abs() as f64).exp() * (-I * col.lambda()).exp() / w;
    let k = edge_kernel(
        &col.m(Sign::Minus, x),
        &col.m(Sign::Plus, y),
        &col.m(Sign::Plus, x),
        &col.m(Sign::Minus, y),
        x,
        y,
    );
    Ok(k * pref)
}

/// An eigenvalue of the walk in a spectral gap with its eigenvector.
#[derive(Clone, Debug, Serialize)]
pub struct BoundState {
    pub branch: Branch,
    pub xi: C64,
    pub lambda: f64,
    pub eigenvalue: C64,
    /// Exponential decay rate of the eigenvector, `|Im xi|`.
    pub decay_rate: f64,
    /// `|W|` at the located zero.
    pub wronskian_residual: f64,
    /// Normalised eigenvector of the original (not gauge-reduced) walk.
    #[serde(skip)]
    pub vector: SpinorField,
}

/// Number of sample points per gap segment in [`bound_states`].
pub const GAP_SAMPLES: usize = 400;

fn gap_w(coin: &CoinField, support: Window, xi: C64, branch: Branch) -> Result<C64> {
    Ok(JostColumn::solve(coin, QuasiMomentum::new(xi, branch), support)?.wronskian())
}

fn polish(coin: &CoinField, support: Window, branch: Branch, start: C64) -> Result<C64> {
    let mut a = start;
    let mut b = start + C64::new(0.0, 1e-7);
    let mut fa = gap_w(coin, support, a, branch)?;
    let mut fb = gap_w(coin, support, b, branch)?;
    for _ in 0..60 {
        if fb == fa || fb.norm() == 0.0 {
            break;
        }
        let c = b - fb * (b - a) / (fb - fa);
        a = b;
        fa = fb;
        b = c;
        fb = gap_w(coin, support, b, branch)?;
        if (b - a).norm() < 1e-15 {
            break;
        }
    }
    Ok(b)
}

/// Zeros of the Wronskian on one gap segment `base + i delta`.
fn scan_segment(
    coin: &CoinField,
    support: Window,
    branch: Branch,
    base: f64,
    delta_max: f64,
) -> Result<Vec<C64>> {
    let k = GAP_SAMPLES;
    let deltas: Vec<f64> = (1..=k).map(|i| delta_max * i as f64 / k as f64).collect();
    let ws = deltas
        .iter()
        .map(|&d| gap_w(coin, support, C64::new(base, d), branch))
        .collect::<Result<Vec<_>>>()?;
    let scale = median(ws.iter().map(|w| w.norm()).collect());

    // phase taken modulo pi, so that W e^{-i psi} changes sign at simple zeros
    let mut psi = vec![ws[0].arg()];
    for i in 1..k {
        let mut d = ws[i].arg() - ws[i - 1].arg();
        d -= PI * (d / PI).round();
        psi.push(psi[i - 1] + d);
    }
    let g: Vec<f64> = (0..k)
        .map(|i| (ws[i] * C64::from_polar(1.0, -psi[i])).re)
        .collect();

    let mut starts = Vec::new();
    for i in 0..k - 1 {
        if g[i] == 0.0 {
            starts.push(deltas[i]);
        } else if g[i] * g[i + 1] < 0.0 {
            let phase = C64::from_polar(1.0, -psi[i]);
            let f = |d: f64| -> f64 {
                gap_w(coin, support, C64::new(base, d), branch)
                    .map(|w| (w * phase).re)
                    .unwrap_or(f64::NAN)
            };
            let mut conv = 1e-14f64;
            let root = roots::find_root_brent(deltas[i], deltas[i + 1], &f, &mut conv)
                .map_err(|e| Error::Solver(format!("bracketed gap root: {e:?}")))?;
            starts.push(root);
        }
    }
    // tangential zeros do not change sign; catch them as deep minima
    for i in 1..k - 1 {
        let m = ws[i].norm();
        if m < 1e-9 * scale
            && m <= ws[i - 1].norm()
            && m <= ws[i + 1].norm()
            && g[i] * g[i + 1] >= 0.0
            && g[i - 1] * g[i] >= 0.0
        {
            starts.push(deltas[i]);
        }
    }
    let mut out: Vec<C64> = Vec::new();
    for d in starts {
        let z = polish(coin, support, branch, C64::new(base, d))?;
        if z.im > 0.0
            && z.im < delta_max / (1.0 - 1e-4)
            && !out.iter().any(|o| (o - z).norm() < 1e-8)
        {
            out.push(z);
        }
    }
    Ok(out)
}

/// Eigenvalues of the walk in the spectral gaps, found as zeros of the
/// Wronskian on the four segments `xi in {i delta, pi + i delta}`, with
/// eigenvectors on `window`.
pub fn bound_states(coin: &CoinField, window: Window, exec: Execution) -> Result<Vec<BoundState>> {
    let Some(support) = coin.support() else {
        return Ok(Vec::new());
    };
    if !window.contains_window(&support.expand(1)) {
        return Err(Error::WindowOverflow(
            "eigenvector window must contain the coin support".into(),
        ));
    }
    let walk = FreeWalk::of(coin);
    let delta_max = walk.delta0() * (1.0 - 1e-4);
    let segments: Vec<(Branch, f64)> = Branch::BOTH
        .iter()
        .flat_map(|&b| [(b, 0.0), (b, PI)])
        .collect();
    let found = exec.try_map(segments.len(), |i| {
        let (b, base) = segments[i];
        scan_segment(coin, support, b, base, delta_max)
            .map(|zs| zs.into_iter().map(move |z| (b, z)).collect::<Vec<_>>())
    })?;
    let (_, gauge) = coin.gauge_reduce();
    let mut states = Vec::new();
    for (branch, xi) in found.into_iter().flatten() {
        let q = QuasiMomentum::new(xi, branch);
        let lambda = walk.lambda(q)?;
        if lambda.im.abs() > 1e-8 {
            return Err(Error::Consistency(format!(
                "Wronskian zero at xi = {xi} gives lambda = {lambda} off the unit circle"
            )));
        }
        let col = JostColumn::solve(coin, q, support)?;
        let mid = support.midpoint();
        let (p, m) = (
            col.solution(Sign::Plus, mid),
            col.solution(Sign::Minus, mid),
        );
        let kappa = m.dotc(&p) / m.norm_squared();
        let e = col.eigenpair();
        let edge = |x: i64| -> crate::Vec2 {
            if x >= mid {
                if x <= support.max {
                    col.solution(Sign::Plus, x)
                } else {
                    e.phi_plus * (I * xi * x as f64).exp()
                }
            } else if x >= support.min {
                col.solution(Sign::Minus, x) * kappa
            } else {
                e.phi_minus * (-I * xi * x as f64).exp() * kappa
            }
        };
        let reduced = SpinorField::from_fn(window, |x| Spinor::new(edge(x)[1], edge(x + 1)[0]));
        let mut vector = gauge.apply_inverse(&reduced);
        let norm = vector.norm_l2();
        vector = vector.scaled(C64::new(1.0 / norm, 0.0));
        states.push(BoundState {
            branch,
            xi,
            lambda: lambda.re,
            eigenvalue: C64::from_polar(1.0, lambda.re),
            decay_rate: xi.im,
            wronskian_residual: col.wronskian().norm(),
            vector,
        });
    }
    states.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(states)
}

/// Bound states on a window that covers `base`, the coin support and the
/// eigenvector tails down to roughly `1e-16`.
pub fn resolve_bound_states(
    coin: &CoinField,
    base: Window,
    exec: Execution,
) -> Result<Vec<BoundState>> {
    let base = coin.support_or_origin(2).hull(&base);
    let trial = bound_states(coin, base.expand(64), exec)?;
    let Some(slowest) = trial.iter().map(|s| s.decay_rate).reduce(f64::min) else {
        return Ok(trial);
    };
    let tail = ((37.0 / slowest).ceil() as i64).min(20_000);
    bound_states(coin, base.expand(tail), exec)
}

/// `u - sum <psi_j, u> psi_j` over the bound states.
#[derive(Clone, Debug)]
pub struct ContinuousProjection {
    states: Vec<SpinorField>,
}

impl ContinuousProjection {
    pub fn new(states: &[BoundState]) -> Self {
        ContinuousProjection {
            states: states.iter().map(|s| s.vector.clone()).collect(),
        }
    }

    /// Identity, valid when the walk has no eigenvalues.
    pub fn identity() -> Self {
        ContinuousProjection { states: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Projects `u`; the result lives on the hull of `u`'s window and the
    /// eigenvector windows.
    pub fn apply(&self, u: &SpinorField) -> Result<SpinorField> {
        let mut w = u.window();
        for s in &self.states {
            w = w.hull(&s.window());
        }
        let mut out = u.resized(w)?;
        for s in &self.states {
            let c = s.inner(u);
            for (x, v) in s.iter() {
                let i = w.index(x).expect("hull contains the eigenvector window");
                out.values_mut()[i] = out.values()[i] - v * c;
            }
        }
        Ok(out)
    }
}

/// Edge-view kernel of the continuous-spectrum projection, from the
/// resolvent integrated over the shifted circle `Im xi = eps` on both
/// branches. `eps` must stay below every bound-state decay rate.
#[derive(Clone, Debug)]
pub struct ContourProjection {
    nodes: Vec<(C64, C64, JostColumn)>,
}

impl ContourProjection {
    pub fn new(
        coin: &CoinField,
        eps: f64,
        n: usize,
        window: Window,
        exec: Execution,
    ) -> Result<Self> {
        let grid = XiGrid::new(n, eps)?;
        let walk = FreeWalk::of(coin);
        let mut nodes = Vec::with_capacity(2 * n);
        for b in Branch::BOTH {
            let cols = exec.try_map(n, |j| {
                let q = QuasiMomentum::new(grid.point(j), b);
                let col = JostColumn::solve(coin, q, window)?;
                let weight = walk.lambda_prime(q)? / col.wronskian() * (ARC_ORIENTATION / n as f64);
                Ok::<_, Error>((q.xi, weight, col))
            })?;
            nodes.extend(cols);
        }
        Ok(ContourProjection { nodes })
    }

    pub fn kernel(&self, x: i64, y: i64) -> Result<Mat2> {
        let mut acc = Mat2::zeros();
        for (xi, weight, col) in &self.nodes {
            let k = edge_kernel(
                &col.m(Sign::Minus, x),
                &col.m(Sign::Plus, y),
                &col.m(Sign::Plus, x),
                &col.m(Sign::Minus, y),
                x,
                y,
            );
            acc += k * (*weight * (I * xi * (x - y).abs() as f64).exp());
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coin::CoinPoint;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn a0() -> C64 {
        C64::new(FRAC_1_SQRT_2, 0.0)
    }

    fn defect(shift: C64, theta: f64) -> CoinField {
        CoinField::from_entries(
            a0(),
            [(0, CoinPoint::reduced(a0() + shift, theta).unwrap())],
        )
        .unwrap()
    }

    fn report(coin: &CoinField, b: Branch, n: usize) -> ScatteringReport {
        let t = JostTable::solve(
            coin,
            b,
            XiGrid::real(n).unwrap(),
            Window::new(-6, 6).unwrap(),
            Execution::default(),
        )
        .unwrap();
        scattering_coefficients(&t).unwrap()
    }

    #[test]
    fn free_walk_transmits_everything() {
        let coin = CoinField::free(a0()).unwrap();
        let r = report(&coin, Branch::Minus, 64);
        for j in 0..64 {
            if j != 0 && j != 32 {
                assert!((r.t[j] - 1.0).norm() < 1e-14);
            }
            assert!(
                r.r_plus[j].norm() < 1e-12 && r.r_minus[j].norm() < 1e-12,
                "{j}"
            );
        }
        assert!(r.edges.iter().all(|e| e.class == EdgeClass::Exceptional));
        assert!(r.edges[0].bounded_solution.is_some());
        assert_eq!(r.extrapolated, vec![0, 32]);
    }

    #[test]
    fn defect_is_unitary() {
        for (shift, th) in [
            (C64::new(-0.3, 0.0), 0.0),
            (C64::new(0.1, 0.2), 0.4),
            (C64::new(-0.5, 0.0), -0.3),
        ] {
            let coin = defect(shift, th);
            for b in Branch::BOTH {
                let r = report(&coin, b, 256);
                assert!(r.unitarity_defect < 1e-10, "{}", r.unitarity_defect);
                assert!(r.t_consistency < 1e-10);
                assert!(r.relation_residual < 1e-10, "{}", r.relation_residual);
                assert!(r.max_transmission() <= 1.0 + 1e-10);
                assert!(r.min_offcorner_wronskian > 1e-6);
                assert!(r.edges.iter().all(|e| e.class == EdgeClass::Generic));
            }
        }
    }

    #[test]
    fn quartic_extrapolation_is_exact_on_quartics() {
        let f = |x: f64| C64::new(1.0 + 2.0 * x - x.powi(3) + 0.5 * x.powi(4), x);
        assert!((extrapolate([f(1.0), f(2.0), f(3.0), f(4.0), f(5.0)]) - f(0.0)).norm() < 1e-11);
    }

    #[test]
    fn theta_defect_crosses_an_edge() {
        let family = |s: f64| CoinField::from_entries(a0(), [(0, CoinPoint::reduced(a0(), s)?)]);
        let c = locate_edge_crossing(
            &family,
            Branch::Minus,
            0.0,
            (-1.75, -1.5),
            256,
            Execution::default(),
        )
        .unwrap();
        assert!(c.wronskian.norm() < 1e-12, "{}", c.wronskian);
        assert_eq!(c.at, EdgeClass::Exceptional);
        assert_eq!(c.below, EdgeClass::Generic);
        assert_eq!(c.above, EdgeClass::Generic);
        assert!(locate_edge_crossing(
            &family,
            Branch::Minus,
            0.0,
            (-1.4, -1.2),
            256,
            Execution::default()
        )
        .is_err());
    }

    #[test]
    fn free_wronskian_value() {
        let coin = CoinField::free(a0()).unwrap();
        let w = wronskian(&coin, QuasiMomentum::real(PI / 2.0, Branch::Minus)).unwrap();
        assert!((w.norm() - FRAC_1_SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn resolvent_inverts_the_band_form() {
        use crate::evolution::{cmv_apply, cmv_band, WalkOperator};
        let coin = defect(C64::new(-0.3, 0.1), 0.3);
        let w = Window::new(-15, 15).unwrap();
        let band = cmv_band(&WalkOperator::new(coin.clone(), w).unwrap());
        for &(xi, im) in &[(PI / 3.0, 0.0), (1.0, 0.2), (2.5, 0.05)] {
            let q = QuasiMomentum::new(C64::new(xi, im), Branch::Plus);
            let col = JostColumn::solve(&coin, q, w).unwrap();
            let z = (I * col.lambda()).exp();
            for y in [-2, 0, 3] {
                for k in 0..2 {
                    let f = SpinorField::from_fn(w, |x| {
                        let c = resolvent_kernel(&col, x, y).unwrap().column(k).into_owned();
                        Spinor::from_vec2(&c)
                    });
                    let g = cmv_apply(&band, &f).unwrap();
                    for x in -13..=13 {
                        let mut r = (g.get(x) - f.get(x) * z).to_vec2();
                        if x == y {
                            r[k] -= 1.0;
                        }
                        assert!(r.norm() < 1e-10, "x {x} y {y}: {}", r.norm());
                    }
                }
            }
        }
    }

    #[test]
    fn free_walk_has_no_bound_states() {
        let coin = CoinField::free(a0()).unwrap();
        assert!(
            bound_states(&coin, Window::centered(10), Execution::default())
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn bound_states_are_eigenvectors() {
        use crate::evolution::WalkOperator;
        let coin = defect(C64::new(-0.5, 0.0), 0.3);
        // slowest decay rate is about 0.24, so 130 sites leave ~1e-14 behind
        let w = Window::centered(130);
        let states = bound_states(&coin, w, Execution::default()).unwrap();
        assert_eq!(states.len(), 4);
        let op = WalkOperator::new(coin.clone(), Window::centered(131)).unwrap();
        for s in &states {
            let u = s.vector.resized(op.window()).unwrap();
            let r = op
                .apply_u(&u)
                .unwrap()
                .sub(&u.scaled(s.eigenvalue))
                .unwrap();
            assert!(r.norm_l2() < 1e-10, "{}", r.norm_l2());
        }
        let p = ContinuousProjection::new(&states);
        for s in &states {
            assert!(p.apply(&s.vector).unwrap().norm_l2() < 1e-12);
        }
    }
}
