//! The walk operator, its powers, the vertex/edge change of view, the banded
//! five-diagonal form and a dense periodic truncation used as an oracle.

use nalgebra::DMatrix;

use crate::coin::{CoinField, CoinPoint};
use crate::error::{Error, Result};
use crate::lattice::{Spinor, SpinorField, Window};
use crate::{Mat2, C64};

/// Largest window accepted by [`dense_truncation`].
pub const DENSE_SITE_LIMIT: usize = 8192;

/// `U = S C` restricted to a finite window.
#[derive(Clone, Debug)]
pub struct WalkOperator {
    coin: CoinField,
    window: Window,
    mats: Vec<Mat2>,
}

impl WalkOperator {
    /// The window must contain the coin support with at least one spare site
    /// on each side.
    pub fn new(coin: CoinField, window: Window) -> Result<Self> {
        if let Some(s) = coin.support() {
            if !window.contains_window(&s.expand(1)) {
                return Err(Error::WindowOverflow(format!(
                    "window [{}, {}] must contain the coin support [{}, {}] with margin 1",
                    window.min, window.max, s.min, s.max
                )));
            }
        }
        let mats = window.sites().map(|x| coin.at(x).matrix()).collect();
        Ok(WalkOperator { coin, window, mats })
    }

    pub fn coin(&self) -> &CoinField {
        &self.coin
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Copy of the operator whose coin at `x0` has `beta = 0`, keeping the
    /// phase of `alpha(x0)` and `theta(x0)`. Such a coin is outside the
    /// validated class and exists only for [`decoupling_check`].
    pub fn with_decoupled_site(&self, x0: i64) -> Result<Self> {
        let i = self.window.index(x0).ok_or_else(|| {
            Error::WindowOverflow(format!("site {x0} outside the operator window"))
        })?;
        let p = self.coin.at(x0);
        let mut out = self.clone();
        out.mats[i] = CoinPoint::decoupling(p.alpha().arg(), p.theta()).matrix();
        Ok(out)
    }

    fn check_interior(&self, u: &SpinorField, steps: usize) -> Result<()> {
        self.window.check_same(&u.window())?;
        if let Some(s) = u.support() {
            let needed = s.expand(steps as i64);
            if !self.window.contains_window(&needed) {
                return Err(Error::WindowOverflow(format!(
                    "support [{}, {}] after {steps} steps leaves [{}, {}]",
                    s.min, s.max, self.window.min, self.window.max
                )));
            }
        }
        Ok(())
    }

    /// One step; `out` is written on `lo..=hi` (window offsets).
    fn step_range(&self, src: &[Spinor], dst: &mut [Spinor], lo: usize, hi: usize) {
        for i in lo..=hi {
            let up = if i > 0 {
                let m = &self.mats[i - 1];
                let s = src[i - 1];
                m[(0, 0)] * s.up + m[(0, 1)] * s.down
            } else {
                C64::new(0.0, 0.0)
            };
            let down = if i + 1 < src.len() {
                let m = &self.mats[i + 1];
                let s = src[i + 1];
                m[(1, 0)] * s.up + m[(1, 1)] * s.down
            } else {
                C64::new(0.0, 0.0)
            };
            dst[i] = Spinor::new(up, down);
        }
    }

    pub fn apply_u(&self, u: &SpinorField) -> Result<SpinorField> {
        self.check_interior(u, 1)?;
        let mut out = vec![Spinor::ZERO; self.window.len()];
        self.step_range(u.values(), &mut out, 0, self.window.len() - 1);
        SpinorField::from_values(self.window, out)
    }

    pub fn apply_u_power(&self, u: &SpinorField, t: usize) -> Result<SpinorField> {
        self.check_interior(u, t)?;
        let mut ev = Evolution::start(self, u)?;
        ev.advance_to(t)?;
        Ok(ev.state())
    }

    /// One step on the ring obtained by identifying the window ends.
    pub fn apply_u_periodic(&self, u: &SpinorField) -> Result<SpinorField> {
        self.window.check_same(&u.window())?;
        let n = self.window.len();
        let src = u.values();
        let out = (0..n)
            .map(|i| {
                let l = (i + n - 1) % n;
                let r = (i + 1) % n;
                let (ml, mr) = (&self.mats[l], &self.mats[r]);
                Spinor::new(
                    ml[(0, 0)] * src[l].up + ml[(0, 1)] * src[l].down,
                    mr[(1, 0)] * src[r].up + mr[(1, 1)] * src[r].down,
                )
            })
            .collect();
        SpinorField::from_values(self.window, out)
    }

    pub fn evolve(&self, u: &SpinorField) -> Result<Evolution<'_>> {
        Evolution::start(self, u)
    }
}

/// Incremental evolution tracking the light cone, so each step costs
/// O(current support) rather than O(window).
pub struct Evolution<'a> {
    op: &'a WalkOperator,
    cur: Vec<Spinor>,
    next: Vec<Spinor>,
    lo: usize,
    hi: usize,
    time: usize,
    empty: bool,
}

impl<'a> Evolution<'a> {
    fn start(op: &'a WalkOperator, u: &SpinorField) -> Result<Self> {
        op.window.check_same(&u.window())?;
        let (lo, hi, empty) = match u.support() {
            Some(s) => (
                op.window.index(s.min).unwrap(),
                op.window.index(s.max).unwrap(),
                false,
            ),
            None => (0, 0, true),
        };
        Ok(Evolution {
            op,
            cur: u.values().to_vec(),
            next: vec![Spinor::ZERO; u.values().len()],
            lo,
            hi,
            time: 0,
            empty,
        })
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn step(&mut self) -> Result<()> {
        if self.empty {
            self.time += 1;
            return Ok(());
        }
        if self.lo == 0 || self.hi + 1 >= self.cur.len() {
            return Err(Error::WindowOverflow(format!(
                "light cone reaches the window edge at t = {}",
                self.time + 1
            )));
        }
        let (lo, hi) = (self.lo - 1, self.hi + 1);
        self.op.step_range(&self.cur, &mut self.next, lo, hi);
        std::mem::swap(&mut self.cur, &mut self.next);
        self.lo = lo;
        self.hi = hi;
        self.time += 1;
        Ok(())
    }

    pub fn advance_to(&mut self, t: usize) -> Result<()> {
        if t < self.time {
            return Err(Error::Config(format!(
                "cannot rewind from {} to {t}",
                self.time
            )));
        }
        while self.time < t {
            self.step()?;
        }
        Ok(())
    }

    fn active(&self) -> &[Spinor] {
        if self.empty {
            &[]
        } else {
            &self.cur[self.lo..=self.hi]
        }
    }

    pub fn norm_sup(&self) -> f64 {
        self.active().iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    pub fn norm_l2(&self) -> f64 {
        self.active()
            .iter()
            .map(|s| s.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn state(&self) -> SpinorField {
        SpinorField::from_values(self.op.window, self.cur.clone()).expect("window length")
    }
}

/// Edge view of a vertex field: `(u_down(x-1), u_up(x))`. Same window in and
/// out; fails instead of dropping `u_down(x_max)`.
pub fn vertex_to_edge(u: &SpinorField) -> Result<SpinorField> {
    let w = u.window();
    if !u.get(w.max).down.eq(&C64::new(0.0, 0.0)) {
        return Err(Error::WindowOverflow(
            "down component at the right edge would leave the window".into(),
        ));
    }
    Ok(SpinorField::from_fn(w, |x| {
        let left = if x > w.min {
            u.get(x - 1).down
        } else {
            C64::new(0.0, 0.0)
        };
        Spinor::new(left, u.get(x).up)
    }))
}

/// Inverse of [`vertex_to_edge`]: `(v_down(x), v_up(x+1))`.
pub fn edge_to_vertex(v: &SpinorField) -> Result<SpinorField> {
    let w = v.window();
    if !v.get(w.min).up.eq(&C64::new(0.0, 0.0)) {
        return Err(Error::WindowOverflow(
            "up component at the left edge would leave the window".into(),
        ));
    }
    Ok(SpinorField::from_fn(w, |x| {
        let right = if x < w.max {
            v.get(x + 1).up
        } else {
            C64::new(0.0, 0.0)
        };
        Spinor::new(v.get(x).down, right)
    }))
}

/// Applies an operator given by its edge-view kernel to a vertex field:
/// returns `J_EV K J_VE u` on `out`.
pub fn apply_edge_kernel(
    u: &SpinorField,
    out: Window,
    kernel: impl Fn(i64, i64) -> Result<Mat2>,
) -> Result<SpinorField> {
    let w = u.window();
    let sources: Vec<(i64, crate::Vec2)> = (w.min..=w.max + 1)
        .map(|y| (y, Spinor::new(u.get(y - 1).down, u.get(y).up)))
        .filter(|(_, s)| !s.is_zero())
        .map(|(y, s)| (y, s.to_vec2()))
        .collect();
    let edge = |z: i64| -> Result<crate::Vec2> {
        let mut acc = crate::Vec2::zeros();
        for (y, s) in &sources {
            acc += kernel(z, *y)? * s;
        }
        Ok(acc)
    };
    let mut values = Vec::with_capacity(out.len());
    let mut next = edge(out.min)?;
    for x in out.sites() {
        let here = next;
        next = edge(x + 1)?;
        values.push(Spinor::new(here[1], next[0]));
    }
    SpinorField::from_values(out, values)
}

/// The three nonzero blocks of row `x` of the five-diagonal form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CmvBlocks {
    pub lower: Mat2,
    pub diag: Mat2,
    pub upper: Mat2,
}

impl CmvBlocks {
    pub fn at(coin: &CoinField, x: i64) -> Self {
        let here = coin.at(x);
        let left = coin.at(x - 1);
        let eh = C64::from_polar(1.0, here.theta());
        let el = C64::from_polar(1.0, left.theta());
        let z = C64::new(0.0, 0.0);
        CmvBlocks {
            lower: Mat2::new(z, z, z, el * left.beta()),
            diag: Mat2::new(z, -eh * here.alpha(), el * left.alpha().conj(), z),
            upper: Mat2::new(eh * here.beta().conj(), z, z, z),
        }
    }
}

/// Banded form on a window; reads outside the window are zero.
#[derive(Clone, Debug)]
pub struct CmvBand {
    window: Window,
    blocks: Vec<CmvBlocks>,
}

impl CmvBand {
    pub fn window(&self) -> Window {
        self.window
    }

    pub fn blocks(&self, x: i64) -> Option<&CmvBlocks> {
        self.window.index(x).map(|i| &self.blocks[i])
    }
}

pub fn cmv_band(op: &WalkOperator) -> CmvBand {
    CmvBand {
        window: op.window,
        blocks: op
            .window
            .sites()
            .map(|x| CmvBlocks::at(&op.coin, x))
            .collect(),
    }
}

pub fn cmv_apply(band: &CmvBand, v: &SpinorField) -> Result<SpinorField> {
    band.window.check_same(&v.window())?;
    let read = |x: i64| {
        if band.window.contains(x) {
            v.get(x).to_vec2()
        } else {
            crate::Vec2::zeros()
        }
    };
    Ok(SpinorField::from_fn(band.window, |x| {
        let b = &band.blocks[(x - band.window.min) as usize];
        Spinor::from_vec2(&(b.lower * read(x - 1) + b.diag * read(x) + b.upper * read(x + 1)))
    }))
}

/// Dense `2N x 2N` matrix of the walk on the periodic ring over the window.
/// Basis index of `(x, component)` is `2 (x - x_min) + component`.
pub fn dense_truncation(op: &WalkOperator) -> Result<DMatrix<C64>> {
    let n = op.window.len();
    if n > DENSE_SITE_LIMIT {
        return Err(Error::MemoryGuard {
            sites: n,
            limit: DENSE_SITE_LIMIT,
        });
    }
    let mut m = DMatrix::<C64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        let c = &op.mats[i];
        let r = (i + 1) % n;
        let l = (i + n - 1) % n;
        for k in 0..2 {
            m[(2 * r, 2 * i + k)] += c[(0, k)];
            m[(2 * l + 1, 2 * i + k)] += c[(1, k)];
        }
    }
    Ok(m)
}

/// Orthogonal projection keeping every site right of `x0` and the down
/// component at `x0`.
pub fn half_line_projection(u: &SpinorField, x0: i64) -> SpinorField {
    SpinorField::from_fn(u.window(), |x| {
        let s = u.get(x);
        if x > x0 {
            s
        } else if x == x0 {
            Spinor::new(C64::new(0.0, 0.0), s.down)
        } else {
            Spinor::ZERO
        }
    })
}

/// `max ||[U, chi] e||` over unit deltas `e` at every interior site and
/// both components.
pub fn decoupling_check(op: &WalkOperator, x0: i64) -> f64 {
    let w = op.window;
    let mut worst: f64 = 0.0;
    for x in w.min + 1..w.max {
        for k in 0..2 {
            let s = if k == 0 {
                Spinor::real(1.0, 0.0)
            } else {
                Spinor::real(0.0, 1.0)
            };
            let e = SpinorField::delta(w, x, s).expect("interior");
            let a = op.apply_u(&half_line_projection(&e, x0)).expect("interior");
            let b = half_line_projection(&op.apply_u(&e).expect("interior"), x0);
            worst = worst.max(a.sub(&b).expect("same window").norm_l2());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coin::CoinPoint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_field(rng: &mut ChaCha8Rng, w: Window, inner: Window) -> SpinorField {
        SpinorField::from_fn(w, |x| {
            if inner.contains(x) {
                Spinor::new(
                    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                )
            } else {
                Spinor::ZERO
            }
        })
    }

    fn defect_coin() -> CoinField {
        CoinField::from_entries(
            c(0.6, 0.2),
            [
                (
                    -1,
                    CoinPoint::new(
                        c(0.2, -0.3),
                        C64::from_polar((1.0f64 - 0.13).sqrt(), 1.1),
                        0.4,
                    )
                    .unwrap(),
                ),
                (0, CoinPoint::reduced(c(-0.5, 0.1), -0.7).unwrap()),
                (
                    2,
                    CoinPoint::new(
                        c(0.1, 0.1),
                        C64::from_polar((1.0f64 - 0.02).sqrt(), -2.0),
                        0.0,
                    )
                    .unwrap(),
                ),
            ],
        )
        .unwrap()
    }

    #[test]
    fn free_step_example() {
        let a0 = c(FRAC_1_SQRT_2, 0.0);
        let op = WalkOperator::new(CoinField::free(a0).unwrap(), Window::centered(4)).unwrap();
        let u = SpinorField::delta(op.window(), 0, Spinor::real(1.0, 0.0)).unwrap();
        let v = op.apply_u(&u).unwrap();
        assert!((v.get(1) - Spinor::real(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((v.get(-1) - Spinor::real(0.0, -FRAC_1_SQRT_2)).norm() < 1e-15);
        assert_eq!(v.get(0), Spinor::ZERO);
        let m = dense_truncation(&op).unwrap();
        let idx = op.window().index(0).unwrap();
        let col = m.column(2 * idx);
        let i1 = op.window().index(1).unwrap();
        let im1 = op.window().index(-1).unwrap();
        assert!((col[2 * i1] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((col[2 * im1 + 1] - c(-FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pure_shift() {
        let field = CoinField::from_entries(
            c(0.5, 0.0),
            [(0, CoinPoint::new(c(0.0, 0.0), c(1.0, 0.0), 0.0).unwrap())],
        )
        .unwrap();
        let op = WalkOperator::new(field, Window::centered(3)).unwrap();
        let u = SpinorField::delta(op.window(), 0, Spinor::real(1.0, 0.0)).unwrap();
        let v = op.apply_u(&u).unwrap();
        assert_eq!(v.get(1), Spinor::real(1.0, 0.0));
        assert_eq!(v.support(), Some(Window::new(1, 1).unwrap()));
    }

    #[test]
    fn powers_compose() {
        let op = WalkOperator::new(defect_coin(), Window::centered(20)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_field(&mut rng, op.window(), Window::centered(4));
        assert_eq!(op.apply_u_power(&u, 0).unwrap(), u);
        let twice = op.apply_u(&op.apply_u(&u).unwrap()).unwrap();
        assert_eq!(op.apply_u_power(&u, 2).unwrap(), twice);
    }

    #[test]
    fn overflow_detected() {
        let op = WalkOperator::new(defect_coin(), Window::centered(6)).unwrap();
        let u = SpinorField::delta(op.window(), 6, Spinor::real(1.0, 0.0)).unwrap();
        assert!(matches!(op.apply_u(&u), Err(Error::WindowOverflow(_))));
        let v = SpinorField::delta(op.window(), 0, Spinor::real(1.0, 0.0)).unwrap();
        assert!(op.apply_u_power(&v, 7).is_err());
        assert!(op.apply_u_power(&v, 6).is_ok());
    }

    #[test]
    fn window_must_cover_support() {
        assert!(WalkOperator::new(defect_coin(), Window::new(-1, 2).unwrap()).is_err());
        assert!(WalkOperator::new(defect_coin(), Window::new(-2, 3).unwrap()).is_ok());
    }

    #[test]
    fn strict_light_cone() {
        let op = WalkOperator::new(defect_coin(), Window::centered(40)).unwrap();
        let u = SpinorField::delta(op.window(), 1, Spinor::real(0.3, -0.8)).unwrap();
        for t in 0..30 {
            let v = op.apply_u_power(&u, t).unwrap();
            let s = v.support().unwrap();
            assert!(s.min >= 1 - t as i64 && s.max <= 1 + t as i64);
        }
    }

    #[test]
    fn edge_view_example_and_round_trip() {
        let w = Window::new(-2, 2).unwrap();
        let u = SpinorField::delta(w, 0, Spinor::new(c(2.0, 0.0), c(0.0, 3.0))).unwrap();
        let v = vertex_to_edge(&u).unwrap();
        assert_eq!(v.get(0), Spinor::new(c(0.0, 0.0), c(2.0, 0.0)));
        assert_eq!(v.get(1), Spinor::new(c(0.0, 3.0), c(0.0, 0.0)));
        assert_eq!(edge_to_vertex(&v).unwrap(), u);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let f = random_field(&mut rng, Window::centered(10), Window::centered(8));
            let back = edge_to_vertex(&vertex_to_edge(&f).unwrap()).unwrap();
            assert_eq!(back, f);
            assert!((vertex_to_edge(&f).unwrap().norm_l2() - f.norm_l2()).abs() < 1e-14);
        }
    }

    #[test]
    fn edge_view_refuses_loss() {
        let w = Window::new(0, 3).unwrap();
        let u = SpinorField::delta(w, 3, Spinor::real(0.0, 1.0)).unwrap();
        assert!(vertex_to_edge(&u).is_err());
        let v = SpinorField::delta(w, 0, Spinor::real(1.0, 0.0)).unwrap();
        assert!(edge_to_vertex(&v).is_err());
    }

    #[test]
    fn free_band_blocks() {
        let a0 = c(0.6, 0.3);
        let coin = CoinField::free(a0).unwrap();
        let rho = coin.rho0();
        for x in [-3, 0, 5] {
            let b = CmvBlocks::at(&coin, x);
            assert_eq!(b.diag, Mat2::new(c(0.0, 0.0), -a0, a0.conj(), c(0.0, 0.0)));
            assert_eq!(
                b.lower,
                Mat2::new(c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(rho, 0.0))
            );
            assert_eq!(
                b.upper,
                Mat2::new(c(rho, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0))
            );
        }
    }

    #[test]
    fn band_matches_conjugation() {
        let op = WalkOperator::new(defect_coin(), Window::centered(12)).unwrap();
        let band = cmv_band(&op);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let v = random_field(&mut rng, op.window(), Window::centered(9));
            let direct =
                vertex_to_edge(&op.apply_u(&edge_to_vertex(&v).unwrap()).unwrap()).unwrap();
            let banded = cmv_apply(&band, &v).unwrap();
            assert!(direct.max_diff(&banded).unwrap() < 1e-13);
        }
    }

    #[test]
    fn dense_matches_local_rule() {
        let op = WalkOperator::new(defect_coin(), Window::centered(10)).unwrap();
        let m = dense_truncation(&op).unwrap();
        assert!((m.adjoint() * &m - DMatrix::<C64>::identity(42, 42)).norm() < 1e-13);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_field(&mut rng, op.window(), Window::centered(8));
        let vec =
            nalgebra::DVector::from_iterator(42, u.values().iter().flat_map(|s| [s.up, s.down]));
        let out = &m * vec;
        let v = op.apply_u(&u).unwrap();
        for (i, s) in v.values().iter().enumerate() {
            assert!((s.up - out[2 * i]).norm() < 1e-15 && (s.down - out[2 * i + 1]).norm() < 1e-15);
        }
        let periodic = op.apply_u_periodic(&u).unwrap();
        assert!(periodic.max_diff(&v).unwrap() < 1e-15);
    }

    #[test]
    fn dense_guard() {
        let op = WalkOperator::new(
            CoinField::free(c(0.5, 0.0)).unwrap(),
            Window::new(0, 9000).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            dense_truncation(&op),
            Err(Error::MemoryGuard { .. })
        ));
    }

    #[test]
    fn small_free_ring_unitary() {
        let op = WalkOperator::new(
            CoinField::free(c(FRAC_1_SQRT_2, 0.0)).unwrap(),
            Window::new(0, 3).unwrap(),
        )
        .unwrap();
        let m = dense_truncation(&op).unwrap();
        assert!((m.adjoint() * &m - DMatrix::<C64>::identity(8, 8)).norm() < 1e-14);
    }

    #[test]
    fn decoupling() {
        let h = FRAC_1_SQRT_2;
        let hadamard = CoinField::from_entries(
            c(0.0, -h),
            [(0, CoinPoint::new(c(0.0, -h), c(0.0, h), -PI / 2.0).unwrap())],
        )
        .unwrap();
        let op = WalkOperator::new(hadamard, Window::centered(8)).unwrap();
        assert!(decoupling_check(&op, 0) > 0.1);
        let split = op.with_decoupled_site(0).unwrap();
        assert!(decoupling_check(&split, 0) < 1e-14);
        let u = SpinorField::from_fn(op.window(), |x| Spinor::real(x as f64, 1.0));
        let once = half_line_projection(&u, 0);
        assert_eq!(half_line_projection(&once, 0), once);
    }
}
