//! Decay experiments and oscillatory-integral tools: sup-norm decay of the
//! walk restricted to the continuous spectrum, measured by direct evolution
//! and by the spectral kernel, plus van der Corput bounds and decay fits.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::coin::{CoinField, GaugePhase};
use crate::dispersion::{
    edge_kernel, Branch, FreePropagator, FreeWalk, QuasiMomentum, Sign, XiGrid, ARC_ORIENTATION,
};
use crate::error::{Error, Result};
use crate::evolution::{apply_edge_kernel, WalkOperator};
use crate::jost::JostTable;
use crate::lattice::{SpinorField, Window};
use crate::par::Execution;
use crate::scattering::{
    resolve_bound_states, scattering_coefficients, BoundState, ContinuousProjection,
    ScatteringReport,
};
use crate::wiener::wiener_norm;
use crate::{Mat2, Vec2, C64};

/// Ordinary least squares `y = a + b x`; returns `(b, a, rms residual)`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(p, q)| (q - a - b * p).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (b, a, rms)
}

/// Log-log power-law fit of a decay series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub stderr: f64,
    pub residual: f64,
    pub n_points: usize,
    /// Points that entered the regression.
    pub fitted_points: usize,
    /// False when too few local maxima existed and all points were used.
    pub envelope: bool,
}

/// Minimum number of local maxima for an envelope fit.
const MIN_ENVELOPE: usize = 4;

/// Fits `value ~ C t^p` to the upper envelope (local maxima) of the series.
/// Needs at least 8 points spanning 1.2 decades in `t`.
pub fn fit_decay(series: &[(f64, f64)]) -> Result<DecayFit> {
    if series.len() < 8 {
        return Err(Error::Fit(format!(
            "{} points; need at least 8",
            series.len()
        )));
    }
    if series
        .iter()
        .any(|(t, v)| !(*t > 0.0 && *v > 0.0 && t.is_finite() && v.is_finite()))
    {
        return Err(Error::Fit(
            "times and values must be positive and finite".into(),
        ));
    }
    if series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Fit("times must increase".into()));
    }
    let span = (series[series.len() - 1].0 / series[0].0).log10();
    if span < 1.2 {
        return Err(Error::Fit(format!(
            "series spans {span:.2} decades; need 1.2"
        )));
    }
    let n = series.len();
    let peaks: Vec<(f64, f64)> = (0..n)
        .filter(|&i| {
            let v = series[i].1;
            (i == 0 || v >= series[i - 1].1) && (i + 1 == n || v >= series[i + 1].1)
        })
        .map(|i| series[i])
        .collect();
    let envelope = peaks.len() >= MIN_ENVELOPE;
    let used = if envelope { peaks } else { series.to_vec() };
    let x: Vec<f64> = used.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = used.iter().map(|p| p.1.ln()).collect();
    let (b, _, rms) = least_squares_slope(&x, &y);
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let stderr = if m > 2.0 {
        (rms * rms * m / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(DecayFit {
        exponent: b,
        stderr,
        residual: rms,
        n_points: n,
        fitted_points: used.len(),
        envelope,
    })
}

/// `round(100 * 1.25^k)` for `k = 0..16`.
pub fn default_schedule() -> Vec<usize> {
    (0..16)
        .map(|k| (100.0 * 1.25f64.powi(k)).round() as usize)
        .collect()
}

/// Result of [`van_der_corput_bound`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OscillatoryBound {
    pub value: C64,
    pub bound: f64,
    /// Smallest `|phase^(m)|` found on the interval.
    pub floor: f64,
    pub wiener: f64,
}

/// Constant of the van der Corput lemma for `m >= 2`: `5 2^{m-1} - 2`.
pub fn van_der_corput_constant(m: u32) -> f64 {
    5.0 * 2f64.powi(m as i32 - 1) - 2.0
}

fn derivative(phase: &dyn Fn(f64) -> f64, x: f64, m: u32, h: f64) -> f64 {
    match m {
        2 => (phase(x + h) - 2.0 * phase(x) + phase(x - h)) / (h * h),
        _ => {
            (phase(x + 2.0 * h) - 2.0 * phase(x + h) + 2.0 * phase(x - h) - phase(x - 2.0 * h))
                / (2.0 * h * h * h)
        }
    }
}

/// `int_a^b e^{i t phase} g` by composite Gauss-Legendre, with the bound
/// `c_m (mu t)^{-1/m} |g|_A` where `mu = min |phase^(m)|` on `[a, b]` and
/// `g` is read as a `2 pi`-periodic function.
pub fn van_der_corput_bound(
    phase: &dyn Fn(f64) -> f64,
    g: &dyn Fn(f64) -> C64,
    interval: (f64, f64),
    t: f64,
    m: u32,
) -> Result<OscillatoryBound> {
    if !(m == 2 || m == 3) {
        return Err(Error::Config(format!(
            "derivative order {m} must be 2 or 3"
        )));
    }
    let (a, b) = interval;
    if !(b > a && t > 0.0) {
        return Err(Error::Config("need a < b and t > 0".into()));
    }
    let probes = 2048;
    let h = 1e-3 * (b - a).min(1.0);
    let (mut floor, mut at, mut slope): (f64, f64, f64) = (f64::INFINITY, a, 0.0);
    for k in 0..=probes {
        let x = a + (b - a) * k as f64 / probes as f64;
        let d = derivative(phase, x, m, h).abs();
        if d < floor {
            floor = d;
            at = x;
        }
        slope = slope.max(((phase(x + h) - phase(x - h)) / (2.0 * h)).abs());
    }
    if !(floor > 1e-8) {
        return Err(Error::DerivativeFloor { at });
    }
    let grid = 1024;
    let samples: Vec<C64> = (0..grid)
        .map(|j| g(2.0 * PI * j as f64 / grid as f64))
        .collect();
    let wiener = wiener_norm(&samples, 0)?;

    let panels = (((b - a) * (t * slope + 10.0) / PI).ceil() as usize).max(16);
    let rule = GaussLegendre::new(NonZeroUsize::new(20).expect("nonzero"));
    let width = (b - a) / panels as f64;
    let mut value = C64::new(0.0, 0.0);
    for p in 0..panels {
        let (lo, hi) = (a + p as f64 * width, a + (p + 1) as f64 * width);
        let f = |x: f64| C64::from_polar(1.0, t * phase(x)) * g(x);
        value += C64::new(
            rule.integrate(lo, hi, |x| f(x).re),
            rule.integrate(lo, hi, |x| f(x).im),
        );
    }
    let bound = van_der_corput_constant(m) * (floor * t).powf(-1.0 / m as f64) * wiener;
    if value.norm() > bound {
        return Err(Error::Consistency(format!(
            "|I| = {} exceeds the bound {bound}",
            value.norm()
        )));
    }
    Ok(OscillatoryBound {
        value,
        bound,
        floor,
        wiener,
    })
}

/// Spectral data of one branch for the kernel of `U^t P`.
#[derive(Clone, Debug)]
struct BranchKernel {
    table: JostTable,
    report: ScatteringReport,
    lambda: Vec<f64>,
    weight: Vec<C64>,
}

/// Edge-view kernel of `U^t P_c` for the gauge-reduced walk, assembled from
/// Jost solutions and scattering data on a real grid of both branches.
#[derive(Clone, Debug)]
pub struct PerturbedPropagator {
    walk: FreeWalk,
    window: Window,
    reach: i64,
    branches: Vec<BranchKernel>,
}

/// Largest `grid x sites` product a propagator may hold.
pub const PROPAGATOR_LIMIT: usize = 1 << 24;

impl PerturbedPropagator {
    /// Kernel values are available for `x, y` in `window`.
    pub fn new(coin: &CoinField, window: Window, n: usize, exec: Execution) -> Result<Self> {
        if n.saturating_mul(window.len()) > PROPAGATOR_LIMIT {
            return Err(Error::MemoryGuard {
                sites: n * window.len(),
                limit: PROPAGATOR_LIMIT,
            });
        }
        let walk = FreeWalk::of(coin);
        let grid = XiGrid::real(n)?;
        let mut branches = Vec::new();
        for b in Branch::BOTH {
            let table = JostTable::solve(coin, b, grid, window, exec)?;
            let report = scattering_coefficients(&table)?;
            let mut lambda = Vec::with_capacity(n);
            let mut weight = Vec::with_capacity(n);
            for j in 0..n {
                let q = QuasiMomentum::new(grid.point(j), b);
                lambda.push(table.column(j).lambda().re);
                // the transmission coefficient lives inside each node
                let w = walk.lambda_prime_over_w0(q)? * (ARC_ORIENTATION / n as f64);
                if !w.is_finite() {
                    return Err(Error::Consistency(format!(
                        "non-integrable weight at xi = {}",
                        q.xi.re
                    )));
                }
                weight.push(w);
            }
            branches.push(BranchKernel {
                table,
                report,
                lambda,
                weight,
            });
        }
        let s = coin.support_or_origin(0);
        Ok(PerturbedPropagator {
            walk,
            window,
            reach: s.min.abs().max(s.max.abs()),
            branches,
        })
    }

    /// Grid size resolving the pair `(x, y)` at time `t` for a coin whose
    /// support reaches `reach` sites from the origin.
    pub fn required_pair(walk: &FreeWalk, t: usize, x: i64, y: i64, reach: i64) -> usize {
        let far = x.abs().max(y.abs()) + reach;
        FreePropagator::required_grid(walk, t, (x - y).unsigned_abs() as usize + 2 * far as usize)
    }

    /// Grid size resolving every pair of `window` up to time `t`.
    pub fn required_grid(walk: &FreeWalk, t: usize, window: Window, reach: i64) -> usize {
        let far = window.min.abs().max(window.max.abs());
        Self::required_pair(walk, t, far, -far, reach)
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn grid_size(&self) -> usize {
        self.branches[0].lambda.len()
    }

    /// Scattering data of the minus and plus branches.
    pub fn reports(&self) -> [&ScatteringReport; 2] {
        [&self.branches[0].report, &self.branches[1].report]
    }

    /// `t m_-(p, xi_j)`, rewritten through the reflection identity when
    /// `p >= 0` so that only bounded factors appear.
    fn transmitted_minus(b: &BranchKernel, j: usize, p: i64) -> Vec2 {
        let grid = b.table.grid();
        if p >= 0 {
            let xi = grid.point(j).re;
            let e2 = C64::from_polar(1.0, 2.0 * xi * p as f64);
            b.table.m(Sign::Plus, grid.mirror(j), p)
                + b.table.m(Sign::Plus, j, p) * (b.report.r_plus[j] * e2)
        } else {
            b.table.m(Sign::Minus, j, p) * b.report.t[j]
        }
    }

    /// `t m_+(p, xi_j)`, rewritten when `p < 0`.
    fn transmitted_plus(b: &BranchKernel, j: usize, p: i64) -> Vec2 {
        let grid = b.table.grid();
        if p < 0 {
            let xi = grid.point(j).re;
            let e2 = C64::from_polar(1.0, -2.0 * xi * p as f64);
            b.table.m(Sign::Minus, grid.mirror(j), p)
                + b.table.m(Sign::Minus, j, p) * (b.report.r_minus[j] * e2)
        } else {
            b.table.m(Sign::Plus, j, p) * b.report.t[j]
        }
    }

    /// One node's matrix with the transmission coefficient absorbed into the
    /// factor that would otherwise grow.
    fn node(b: &BranchKernel, j: usize, x: i64, y: i64) -> Mat2 {
        let m = |s: Sign, p: i64| b.table.m(s, j, p);
        let z = Vec2::zeros();
        let (a, bb) = if x > y {
            (z, z)
        } else if x >= 0 {
            (Self::transmitted_minus(b, j, x), m(Sign::Plus, y))
        } else if y < 0 {
            (m(Sign::Minus, x), Self::transmitted_plus(b, j, y))
        } else {
            (m(Sign::Minus, x) * b.report.t[j], m(Sign::Plus, y))
        };
        let (c, d) = if x < y {
            (z, z)
        } else if y >= 0 {
            (m(Sign::Plus, x), Self::transmitted_minus(b, j, y))
        } else if x < 0 {
            (Self::transmitted_plus(b, j, x), m(Sign::Minus, y))
        } else {
            (m(Sign::Plus, x), m(Sign::Minus, y) * b.report.t[j])
        };
        edge_kernel(&a, &bb, &c, &d, x, y)
    }

    fn check(&self, time: usize, x: i64, y: i64) -> Result<()> {
        if !(self.window.contains(x) && self.window.contains(y)) {
            return Err(Error::WindowOverflow(format!(
                "kernel pair ({x}, {y}) outside the propagator window"
            )));
        }
        let need = Self::required_pair(&self.walk, time, x, y, self.reach);
        if self.grid_size() < need {
            return Err(Error::Resolution(format!(
                "grid {} too coarse for t = {time} at ({x}, {y}); need {need}",
                self.grid_size()
            )));
        }
        Ok(())
    }

    /// Kernel of one branch.
    pub fn branch_kernel(&self, branch: Branch, time: usize, x: i64, y: i64) -> Result<Mat2> {
        self.check(time, x, y)?;
        let b = &self.branches[if branch == Branch::Minus { 0 } else { 1 }];
        let d = (x - y).abs() as f64;
        let mut acc = Mat2::zeros();
        for j in 0..b.lambda.len() {
            let xi = b.table.grid().point(j).re;
            let phase = C64::from_polar(1.0, b.lambda[j] * time as f64 + xi * d);
            acc += Self::node(b, j, x, y) * (b.weight[j] * phase);
        }
        Ok(acc)
    }

    /// Kernel of `U^t P_c` in the edge view, both branches summed.
    pub fn kernel(&self, time: usize, x: i64, y: i64) -> Result<Mat2> {
        Ok(self.branch_kernel(Branch::Minus, time, x, y)?
            + self.branch_kernel(Branch::Plus, time, x, y)?)
    }

    /// Largest defect of the reflection identities behind the rewriting.
    pub fn identity_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for b in &self.branches {
            for j in 0..b.lambda.len() {
                for p in self.window.sites() {
                    let (s, rewritten) = if p >= 0 {
                        (Sign::Minus, Self::transmitted_minus(b, j, p))
                    } else {
                        (Sign::Plus, Self::transmitted_plus(b, j, p))
                    };
                    worst = worst.max((b.table.m(s, j, p) * b.report.t[j] - rewritten).norm());
                }
            }
        }
        worst
    }
}

/// How [`run_decay`] evaluates `U^t P_c u0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Direct,
    Kernel,
    Both,
}

impl Route {
    pub fn name(self) -> &'static str {
        match self {
            Route::Direct => "direct",
            Route::Kernel => "kernel",
            Route::Both => "both",
        }
    }
}

#[derive(Clone, Debug)]
pub struct DecayExperiment {
    pub coin: CoinField,
    pub initial: SpinorField,
    pub schedule: Vec<usize>,
    pub route: Route,
    pub exec: Execution,
}

/// One row of a decay table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecaySample {
    pub t: usize,
    pub supnorm: f64,
    /// The kernel route only sees the light cone of `u0`, so its value
    /// misses the exponentially small tails of the projection.
    pub l2norm: f64,
    /// `|U^t P_c u0|_inf / |u0|_1`
    pub ratio: f64,
    pub route: Route,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayResult {
    pub samples: Vec<DecaySample>,
    pub bound_states: usize,
    /// Largest change of the l2 norm of `U^t P_c u0` along the schedule.
    pub l2_drift: f64,
    /// Largest entry difference between the two routes, when both ran.
    pub route_gap: Option<f64>,
}

/// `P_c u0` from the bound states, on a window wide enough for their tails.
pub fn project_continuous(
    coin: &CoinField,
    u0: &SpinorField,
    exec: Execution,
) -> Result<(SpinorField, Vec<BoundState>)> {
    let states = resolve_bound_states(coin, u0.window(), exec)?;
    if states.is_empty() {
        return Ok((u0.clone(), states));
    }
    Ok((ContinuousProjection::new(&states).apply(u0)?, states))
}

/// Applies the kernel of `U^t P_c` to a vertex field and returns the result
/// on `out`, undoing the gauge reduction on both sides.
pub fn apply_propagator(
    prop: &PerturbedPropagator,
    gauge: &GaugePhase,
    time: usize,
    u: &SpinorField,
    out: Window,
) -> Result<SpinorField> {
    let reduced = gauge.apply(u);
    let v = apply_edge_kernel(&reduced, out, |x, y| prop.kernel(time, x, y))?;
    Ok(gauge.apply_inverse(&v))
}

pub fn run_decay(exp: &DecayExperiment) -> Result<DecayResult> {
    if exp.schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("schedule must increase".into()));
    }
    let Some(&tmax) = exp.schedule.last() else {
        return Err(Error::Config("empty schedule".into()));
    };
    let l1 = exp.initial.norm_l1();
    let mut samples = Vec::new();
    let mut direct_states = Vec::new();
    let (projected, states) = project_continuous(&exp.coin, &exp.initial, exp.exec)?;
    let l2_0 = projected.norm_l2();
    let mut l2_drift: f64 = 0.0;

    if exp.route != Route::Kernel {
        let w = projected
            .window()
            .hull(&exp.coin.support_or_origin(1))
            .expand(tmax as i64 + 1);
        let op = WalkOperator::new(exp.coin.clone(), w)?;
        let mut ev = op.evolve(&projected.resized(w)?)?;
        for &t in &exp.schedule {
            ev.advance_to(t)?;
            let l2 = ev.norm_l2();
            l2_drift = l2_drift.max((l2 - l2_0).abs());
            samples.push(DecaySample {
                t,
                supnorm: ev.norm_sup(),
                l2norm: l2,
                ratio: ev.norm_sup() / l1,
                route: Route::Direct,
            });
            if exp.route == Route::Both {
                direct_states.push(ev.state());
            }
        }
    }

    let mut route_gap = None;
    if exp.route != Route::Direct {
        let walk = FreeWalk::of(&exp.coin);
        let out = exp.initial.window().expand(tmax as i64 + 1);
        let s = exp.coin.support_or_origin(0);
        let reach = s.min.abs().max(s.max.abs());
        let n = PerturbedPropagator::required_grid(&walk, tmax, out.expand(1), reach);
        let prop = PerturbedPropagator::new(&exp.coin, out.expand(1), n, exp.exec)?;
        let (_, gauge) = exp.coin.gauge_reduce();
        let mut gap: f64 = 0.0;
        for (k, &t) in exp.schedule.iter().enumerate() {
            let window = exp.initial.window().expand(t as i64 + 1);
            let v = apply_propagator(&prop, &gauge, t, &exp.initial, window)?;
            if let Some(d) = direct_states.get(k) {
                for x in window.sites() {
                    let e = v.get(x) - d.get(x);
                    gap = gap.max(e.up.norm().max(e.down.norm()));
                }
            }
            samples.push(DecaySample {
                t,
                supnorm: v.norm_sup(),
                l2norm: v.norm_l2(),
                ratio: v.norm_sup() / l1,
                route: Route::Kernel,
            });
        }
        if exp.route == Route::Both {
            route_gap = Some(gap);
        }
    }
    Ok(DecayResult {
        samples,
        bound_states: states.len(),
        l2_drift,
        route_gap,
    })
}

/// Sup-norm of `U0^t P u0` for the spectral projection `P` of one arc of the
/// constant-coin walk, at every time of the schedule.
pub fn free_branch_decay(
    walk: FreeWalk,
    branch: Branch,
    u0: &SpinorField,
    schedule: &[usize],
    exec: Execution,
) -> Result<Vec<(usize, f64)>> {
    let coin = CoinField::free(walk.alpha0())?;
    // the projection kernel decays like e^{-delta0 |x - y|}
    let radius = (40.0 / walk.delta0()).ceil() as i64;
    let w = u0.window().expand(radius);
    let d = w.len();
    let prop = FreePropagator::refined(walk, branch, 0, &[(0, d as i64)], 1e-14, exec)?;
    let projected = apply_edge_kernel(u0, w, |x, y| prop.kernel(0, x, y))?;
    let tmax = schedule.iter().copied().max().unwrap_or(0);
    let op = WalkOperator::new(coin, w.expand(tmax as i64 + 1))?;
    let mut ev = op.evolve(&projected.resized(op.window())?)?;
    let mut out = Vec::with_capacity(schedule.len());
    for &t in schedule {
        ev.advance_to(t)?;
        out.push((t, ev.norm_sup()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coin::CoinPoint;
    use crate::lattice::Spinor;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn exact_power_law() {
        let s: Vec<(f64, f64)> = (0..20)
            .map(|k| {
                let t = 10.0 * 1.3f64.powi(k);
                (t, t.powf(-1.0 / 3.0))
            })
            .collect();
        let f = fit_decay(&s).unwrap();
        assert!((f.exponent + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn oscillating_envelope() {
        let s: Vec<(f64, f64)> = (10..=1000)
            .map(|t| {
                let t = t as f64;
                (t, t.powf(-0.5) * (2.0 + t.sin()))
            })
            .collect();
        let f = fit_decay(&s).unwrap();
        assert!(f.envelope);
        assert!((f.exponent + 0.5).abs() < 0.02, "{}", f.exponent);
    }

    #[test]
    fn constant_series_and_errors() {
        let s: Vec<(f64, f64)> = (1..=10)
            .map(|k| (10f64.powi(k / 3) * k as f64, 2.0))
            .collect();
        let mut s = s;
        s.sort_by(|a, b| a.0.total_cmp(&b.0));
        s.dedup_by(|a, b| a.0 == b.0);
        let s: Vec<(f64, f64)> = (0..10).map(|k| (10.0 * 1.5f64.powi(k), 2.0)).collect();
        assert!(fit_decay(&s).unwrap().exponent.abs() < 1e-12);
        let short: Vec<(f64, f64)> = (0..10).map(|k| (100.0 + k as f64, 1.0)).collect();
        assert!(matches!(fit_decay(&short), Err(Error::Fit(_))));
        assert!(matches!(fit_decay(&s[..5]), Err(Error::Fit(_))));
    }

    #[test]
    fn schedule_shape() {
        let s = default_schedule();
        assert_eq!(s.len(), 16);
        assert_eq!(s[0], 100);
        assert_eq!(s[1], 125);
        assert_eq!(*s.last().unwrap(), 2842);
    }

    #[test]
    fn fresnel_bound() {
        let phase = |x: f64| 0.5 * x * x;
        let one = |_: f64| C64::new(1.0, 0.0);
        for t in [1e2, 1e3, 1e4] {
            let r = van_der_corput_bound(&phase, &one, (-1.0, 1.0), t, 2).unwrap();
            assert!((r.wiener - 1.0).abs() < 1e-12);
            // endpoint corrections are O(1/t)
            assert!((r.value.norm() * t.sqrt() - (2.0 * PI).sqrt()).abs() < 2.5 / t.sqrt());
            let five = |_: f64| C64::new(5.0, 0.0);
            let r5 = van_der_corput_bound(&phase, &five, (-1.0, 1.0), t, 2).unwrap();
            assert!((r5.bound / r.bound - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn caustic_decays_like_cube_root() {
        let walk = FreeWalk::new(C64::new(FRAC_1_SQRT_2, 0.0)).unwrap();
        let lam = move |xi: f64| {
            walk.lambda(QuasiMomentum::real(xi, Branch::Minus))
                .unwrap()
                .re
        };
        let h = 1e-4;
        let second = |xi: f64| (lam(xi + h) - 2.0 * lam(xi) + lam(xi - h)) / (h * h);
        // inflection point of the dispersion curve in (0, pi)
        let (mut lo, mut hi) = (0.3, 2.8);
        assert!(second(lo) * second(hi) < 0.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if second(lo) * second(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let star = 0.5 * (lo + hi);
        let v = -(lam(star + h) - lam(star - h)) / (2.0 * h);
        let phase = move |xi: f64| lam(xi) + v * xi;
        let g = move |xi: f64| C64::new(((1.0 + (xi - star).cos()) / 2.0).powi(4), 0.0);
        let series: Vec<(f64, f64)> = (0..12)
            .map(|k| {
                let t = 100.0 * 10f64.powf(k as f64 / 5.5);
                let r = van_der_corput_bound(&phase, &g, (star - 0.6, star + 0.6), t, 3).unwrap();
                (t, r.value.norm())
            })
            .collect();
        let (b, _, _) = least_squares_slope(
            &series.iter().map(|p| p.0.ln()).collect::<Vec<_>>(),
            &series.iter().map(|p| p.1.ln()).collect::<Vec<_>>(),
        );
        assert!((b + 1.0 / 3.0).abs() < 0.05, "{b}");
    }

    #[test]
    fn flat_phase_is_refused() {
        let phase = |x: f64| x;
        let one = |_: f64| C64::new(1.0, 0.0);
        assert!(matches!(
            van_der_corput_bound(&phase, &one, (0.0, 1.0), 10.0, 2),
            Err(Error::DerivativeFloor { .. })
        ));
    }

    fn defect() -> CoinField {
        let a0 = C64::new(FRAC_1_SQRT_2, 0.0);
        CoinField::from_entries(a0, [(0, CoinPoint::reduced(a0 * 0.6, 0.2).unwrap())]).unwrap()
    }

    #[test]
    fn free_kernel_matches_free_propagator() {
        let a0 = C64::new(FRAC_1_SQRT_2, 0.0);
        let coin = CoinField::free(a0).unwrap();
        let w = Window::centered(12);
        let prop = PerturbedPropagator::new(&coin, w, 256, Execution::default()).unwrap();
        let walk = FreeWalk::of(&coin);
        let fp = FreePropagator::new(walk, Branch::Minus, 256, Execution::default()).unwrap();
        for (x, y) in [(0, 0), (3, -2), (-5, 4), (7, 7)] {
            let d =
                prop.branch_kernel(Branch::Minus, 10, x, y).unwrap() - fp.kernel(10, x, y).unwrap();
            assert!(d.norm() < 1e-10, "{}", d.norm());
        }
    }

    #[test]
    fn routes_agree_on_a_defect() {
        let coin = defect();
        let u0 = SpinorField::delta(Window::centered(0), 0, Spinor::real(1.0, 0.0)).unwrap();
        let exp = DecayExperiment {
            coin,
            initial: u0,
            schedule: vec![5, 12],
            route: Route::Both,
            exec: Execution::default(),
        };
        let r = run_decay(&exp).unwrap();
        assert!(r.route_gap.unwrap() < 1e-7, "{:?}", r.route_gap);
        assert!(r.l2_drift < 1e-10);
    }

    #[test]
    fn reflection_identity_holds() {
        let prop =
            PerturbedPropagator::new(&defect(), Window::centered(10), 128, Execution::default())
                .unwrap();
        assert!(prop.identity_residual() < 1e-9);
    }
}
