//! Coin parameterization, validation, gauge reduction and profile ingestion.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{bracket, Spinor, SpinorField, Window};
use crate::{Mat2, C64};

const NORMALIZATION_TOL: f64 = 1e-12;

/// Local coin `e^{i theta} [[beta, conj(alpha)], [-alpha, conj(beta)]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoinPoint {
    alpha: C64,
    beta: C64,
    theta: f64,
}

impl CoinPoint {
    /// Validated constructor: `|alpha|^2 + |beta|^2 = 1` and `|alpha| < 1`.
    pub fn new(alpha: C64, beta: C64, theta: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite() && theta.is_finite()) {
            return Err(Error::validation(None, "non-finite coin parameter"));
        }
        if (alpha.norm_sqr() + beta.norm_sqr() - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::validation(
                None,
                format!(
                    "|alpha|^2 + |beta|^2 = {} != 1",
                    alpha.norm_sqr() + beta.norm_sqr()
                ),
            ));
        }
        if alpha.norm() >= 1.0 {
            return Err(Error::validation(
                None,
                format!("|alpha| = {} >= 1", alpha.norm()),
            ));
        }
        Ok(CoinPoint { alpha, beta, theta })
    }

    /// Coin with real positive `beta = sqrt(1 - |alpha|^2)`.
    pub fn reduced(alpha: C64, theta: f64) -> Result<Self> {
        let r = 1.0 - alpha.norm_sqr();
        if r <= 0.0 || !r.is_finite() {
            return Err(Error::validation(
                None,
                format!("|alpha| = {} >= 1", alpha.norm()),
            ));
        }
        CoinPoint::new(alpha, C64::new(r.sqrt(), 0.0), theta)
    }

    /// A coin with `beta = 0`, which never passes validation. Used only to
    /// probe decoupling of the two half-lines.
    pub(crate) fn decoupling(alpha_phase: f64, theta: f64) -> Self {
        CoinPoint {
            alpha: C64::from_polar(1.0, alpha_phase),
            beta: C64::new(0.0, 0.0),
            theta,
        }
    }

    pub fn alpha(&self) -> C64 {
        self.alpha
    }

    pub fn beta(&self) -> C64 {
        self.beta
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `sqrt(1 - |alpha|^2)`, equal to `|beta|`.
    pub fn rho(&self) -> f64 {
        (1.0 - self.alpha.norm_sqr()).max(0.0).sqrt()
    }

    pub fn matrix(&self) -> Mat2 {
        coin_matrix(self)
    }
}

pub fn coin_matrix(p: &CoinPoint) -> Mat2 {
    let ph = C64::from_polar(1.0, p.theta);
    Mat2::new(p.beta, p.alpha.conj(), -p.alpha, p.beta.conj()) * ph
}

/// Record of discarding the tail of a decaying profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub radius: i64,
    /// Upper bound on the discarded `l^{1,sigma}` mass for sigma = 0, 1, 2;
    /// infinite when that weighted tail diverges.
    pub discarded: [f64; 3],
}

/// Position-dependent coin: explicit entries on a finite support, the
/// constant far-field coin `C(alpha0, rho0, 0)` elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct CoinField {
    alpha0: C64,
    far: CoinPoint,
    support: Option<Window>,
    entries: Vec<CoinPoint>,
    truncation: Option<Truncation>,
}

impl CoinField {
    pub fn free(alpha0: C64) -> Result<Self> {
        let n = alpha0.norm();
        if !(n > 0.0 && n < 1.0) {
            return Err(Error::validation(
                None,
                format!("|alpha0| = {n} must lie in (0, 1)"),
            ));
        }
        Ok(CoinField {
            alpha0,
            far: CoinPoint::reduced(alpha0, 0.0)?,
            support: None,
            entries: Vec::new(),
            truncation: None,
        })
    }

    /// Sites missing between the extreme listed sites get the far-field coin.
    pub fn from_entries(
        alpha0: C64,
        entries: impl IntoIterator<Item = (i64, CoinPoint)>,
    ) -> Result<Self> {
        let mut field = CoinField::free(alpha0)?;
        let mut list: Vec<(i64, CoinPoint)> = entries.into_iter().collect();
        if list.is_empty() {
            return Ok(field);
        }
        list.sort_by_key(|e| e.0);
        for w in list.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::ingestion(Some(w[0].0), "duplicate coin entry"));
            }
        }
        let window = Window::new(list[0].0, list[list.len() - 1].0)?;
        let mut values = vec![field.far; window.len()];
        for (x, p) in list {
            values[window.index(x).expect("sorted")] = p;
        }
        field.support = Some(window);
        field.entries = values;
        Ok(field)
    }

    pub fn alpha0(&self) -> C64 {
        self.alpha0
    }

    pub fn rho0(&self) -> f64 {
        self.far.rho()
    }

    pub fn far_field(&self) -> CoinPoint {
        self.far
    }

    pub fn support(&self) -> Option<Window> {
        self.support
    }

    pub fn truncation(&self) -> Option<&Truncation> {
        self.truncation.as_ref()
    }

    pub fn at(&self, x: i64) -> CoinPoint {
        match self.support.and_then(|w| w.index(x)) {
            Some(i) => self.entries[i],
            None => self.far,
        }
    }

    pub fn alpha(&self, x: i64) -> C64 {
        self.at(x).alpha
    }

    pub fn theta(&self, x: i64) -> f64 {
        self.at(x).theta
    }

    pub fn rho(&self, x: i64) -> f64 {
        self.at(x).rho()
    }

    pub fn is_free(&self) -> bool {
        self.support.is_none()
    }

    /// True when every `beta(x)` is real and nonnegative.
    pub fn is_reduced(&self) -> bool {
        self.entries
            .iter()
            .all(|p| p.beta.im == 0.0 && p.beta.re >= 0.0)
    }

    /// Smallest window covering the support with `margin` extra sites, or
    /// `[-margin, margin]` for the free field.
    pub fn support_or_origin(&self, margin: i64) -> Window {
        self.support
            .map(|w| w.hull(&Window::centered(0)).expand(margin))
            .unwrap_or_else(|| Window::centered(margin))
    }

    /// `sum_x <x>^sigma (|alpha(x) - alpha0| + |theta(x)|)` over the support.
    pub fn perturbation_norm(&self, sigma: u32) -> f64 {
        let Some(w) = self.support else { return 0.0 };
        w.sites()
            .zip(&self.entries)
            .map(|(x, p)| {
                bracket(x).powi(sigma as i32) * ((p.alpha - self.alpha0).norm() + p.theta.abs())
            })
            .sum()
    }

    /// Perturbation norm including the recorded bound on any discarded tail.
    pub fn perturbation_norm_with_tail(&self, sigma: u32) -> f64 {
        let tail = self.truncation.as_ref().map_or(0.0, |t| {
            t.discarded
                .get(sigma as usize)
                .copied()
                .unwrap_or(f64::INFINITY)
        });
        self.perturbation_norm(sigma) + tail
    }

    /// Replaces each `beta(x)` by `|beta(x)|`; returns the reduced field and
    /// the diagonal phase conjugating the two walks.
    pub fn gauge_reduce(&self) -> (CoinField, GaugePhase) {
        let mut reduced = self.clone();
        for p in reduced.entries.iter_mut() {
            p.beta = C64::new(p.rho(), 0.0);
        }
        let Some(s) = self.support else {
            return (
                reduced,
                GaugePhase {
                    lo: 0,
                    cumulative: vec![0.0],
                },
            );
        };
        let lo = s.min.min(0);
        let hi = s.max.max(0) + 1;
        let b = |x: i64| -> f64 {
            let beta = self.at(x).beta;
            let a = beta.arg();
            if a < 0.0 {
                a + TAU
            } else {
                a
            }
        };
        let len = (hi - lo + 1) as usize;
        let mut cumulative = vec![0.0; len];
        let zero = (0 - lo) as usize;
        for i in zero + 1..len {
            cumulative[i] = cumulative[i - 1] + b(lo + i as i64 - 1);
        }
        for i in (0..zero).rev() {
            cumulative[i] = cumulative[i + 1] - b(lo + i as i64);
        }
        (reduced, GaugePhase { lo, cumulative })
    }

    pub(crate) fn with_truncation(mut self, t: Truncation) -> Self {
        self.truncation = Some(t);
        self
    }
}

/// Cumulative phase `B` with `B(0) = 0` and `B(x+1) - B(x) = arg beta(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugePhase {
    lo: i64,
    cumulative: Vec<f64>,
}

impl GaugePhase {
    pub fn b(&self, x: i64) -> f64 {
        let i = (x - self.lo).clamp(0, self.cumulative.len() as i64 - 1) as usize;
        self.cumulative[i]
    }

    pub fn g_up(&self, x: i64) -> f64 {
        -self.b(x)
    }

    pub fn g_down(&self, x: i64) -> f64 {
        -self.b(x + 1)
    }

    pub fn is_trivial(&self) -> bool {
        self.cumulative.iter().all(|b| *b == 0.0)
    }

    /// Applies the diagonal phase `G`.
    pub fn apply(&self, u: &SpinorField) -> SpinorField {
        self.rotate(u, 1.0)
    }

    pub fn apply_inverse(&self, u: &SpinorField) -> SpinorField {
        self.rotate(u, -1.0)
    }

    fn rotate(&self, u: &SpinorField, sign: f64) -> SpinorField {
        SpinorField::from_fn(u.window(), |x| {
            let s = u.get(x);
            Spinor::new(
                s.up * C64::from_polar(1.0, sign * self.g_up(x)),
                s.down * C64::from_polar(1.0, sign * self.g_down(x)),
            )
        })
        .with_outside(u.outside())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct ComplexJson {
    pub re: f64,
    pub im: f64,
}

impl From<ComplexJson> for C64 {
    fn from(c: ComplexJson) -> C64 {
        C64::new(c.re, c.im)
    }
}

impl From<C64> for ComplexJson {
    fn from(c: C64) -> Self {
        ComplexJson { re: c.re, im: c.im }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EntryJson {
    pub x: i64,
    pub alpha: ComplexJson,
    #[serde(default)]
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<ComplexJson>,
}

/// Knobs of the built-in presets. Unused knobs are ignored.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PresetParams {
    /// Size of `|alpha(x) - alpha0|` at the defect, or the peak amplitude.
    pub strength: f64,
    /// Direction of the defect relative to `alpha0`; `pi` shrinks `|alpha|`.
    pub direction: f64,
    /// Extra `theta` at the defect sites.
    pub theta: f64,
    pub x0: i64,
    pub width: i64,
    /// Exponential rate for `random-decay`, power for `power-decay`.
    pub rate: f64,
    pub seed: u64,
    /// Hard cap on the truncation radius of decaying presets.
    pub max_radius: i64,
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams {
            strength: 0.3,
            direction: PI,
            theta: 0.0,
            x0: 0,
            width: 4,
            rate: 0.5,
            seed: 1,
            max_radius: 4096,
        }
    }
}

/// Top-level profile document.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProfileJson {
    pub alpha0: ComplexJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PresetParams>,
    #[serde(default)]
    pub entries: Vec<EntryJson>,
}

const TAIL_TARGET: f64 = 1e-10;

type PresetSites = (Vec<(i64, CoinPoint)>, Option<Truncation>);

/// Parses and validates a coin profile. Preset sites come first; explicit
/// entries override them.
pub fn load_coin_profile(document: &str) -> Result<CoinField> {
    let doc: ProfileJson = serde_json::from_str(document)
        .map_err(|e| Error::ingestion(None, format!("schema: {e}")))?;
    build_profile(&doc)
}

pub fn build_profile(doc: &ProfileJson) -> Result<CoinField> {
    let alpha0: C64 = doc.alpha0.into();
    let n0 = alpha0.norm();
    if !(n0 > 0.0 && n0 < 1.0) || !n0.is_finite() {
        return Err(Error::ingestion(
            None,
            format!("|alpha0| = {n0} must lie in (0, 1)"),
        ));
    }
    let params = doc.params.clone().unwrap_or_default();
    let (mut sites, truncation) = match doc.preset.as_deref() {
        None | Some("free") => (Vec::new(), None),
        Some("single-defect") => (vec![(params.x0, defect_point(alpha0, &params)?)], None),
        Some("barrier") => {
            if params.width < 1 {
                return Err(Error::ingestion(None, "barrier width must be positive"));
            }
            let p = defect_point(alpha0, &params)?;
            (
                (params.x0..params.x0 + params.width)
                    .map(|x| (x, p))
                    .collect(),
                None,
            )
        }
        Some("random-decay") => random_decay(alpha0, &params)?,
        Some("power-decay") => power_decay(alpha0, &params)?,
        Some(other) => return Err(Error::ingestion(None, format!("unknown preset {other:?}"))),
    };
    for e in &doc.entries {
        let alpha: C64 = e.alpha.into();
        let point = match e.beta {
            Some(b) => CoinPoint::new(alpha, b.into(), e.theta),
            None => CoinPoint::reduced(alpha, e.theta),
        }
        .map_err(|err| match err {
            Error::Validation { msg, .. } => Error::ingestion(Some(e.x), msg),
            other => other,
        })?;
        if let Some(slot) = sites.iter_mut().find(|s| s.0 == e.x) {
            slot.1 = point;
        } else {
            sites.push((e.x, point));
        }
    }
    let field = CoinField::from_entries(alpha0, sites)?;
    Ok(match truncation {
        Some(t) => field.with_truncation(t),
        None => field,
    })
}

fn defect_point(alpha0: C64, p: &PresetParams) -> Result<CoinPoint> {
    let unit = alpha0 / alpha0.norm();
    let alpha = alpha0 + unit * C64::from_polar(p.strength, p.direction);
    CoinPoint::reduced(alpha, p.theta).map_err(|e| match e {
        Error::Validation { msg, .. } => Error::ingestion(Some(p.x0), msg),
        other => other,
    })
}

fn random_decay(alpha0: C64, p: &PresetParams) -> Result<PresetSites> {
    if p.rate <= 0.0 {
        return Err(Error::ingestion(None, "random-decay needs a positive rate"));
    }
    // Per-site perturbation is at most 2 s e^{-r|x|}; the sigma = 2 tail
    // dominates the others, so it sets the radius.
    let s = p.strength.abs();
    let tail = |r: i64, sigma: i32| -> f64 {
        let mut acc = 0.0;
        let mut x = r + 1;
        loop {
            let term = 2.0 * 2.0 * s * (-p.rate * x as f64).exp() * bracket(x).powi(sigma);
            acc += term;
            if term < 1e-20 * acc.max(1e-300) || x > r + 100_000 {
                break;
            }
            x += 1;
        }
        acc
    };
    let mut radius = 0;
    while tail(radius, 2) >= TAIL_TARGET && radius < p.max_radius {
        radius += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut sites = Vec::new();
    for x in -radius..=radius {
        let amp = s * (-p.rate * x.abs() as f64).exp();
        let (r, phi): (f64, f64) = (rng.random::<f64>().sqrt(), rng.random::<f64>() * TAU);
        let eta: f64 = rng.random::<f64>() * 2.0 - 1.0;
        let mut alpha = alpha0 + C64::from_polar(amp * r, phi);
        if alpha.norm() > 0.999 {
            alpha *= 0.999 / alpha.norm();
        }
        let point = CoinPoint::reduced(alpha, amp * eta).map_err(|e| match e {
            Error::Validation { msg, .. } => Error::ingestion(Some(x), msg),
            other => other,
        })?;
        sites.push((x, point));
    }
    let discarded = [tail(radius, 0), tail(radius, 1), tail(radius, 2)];
    Ok((sites, Some(Truncation { radius, discarded })))
}

/// `alpha(x) = alpha0 + s <x>^{-rate}` with real `s`. The weighted tail of
/// order sigma converges only when `rate - sigma > 1`.
fn power_decay(alpha0: C64, p: &PresetParams) -> Result<PresetSites> {
    if p.rate <= 1.0 {
        return Err(Error::ingestion(None, "power-decay needs rate > 1"));
    }
    let s = p.strength.abs();
    let unit = alpha0 / alpha0.norm();
    // Integral bound: sum_{|x|>R} <x>^{sigma-rate} <= 2 R^{1+sigma-rate}/(rate-sigma-1).
    let tail = |r: i64, sigma: f64| -> f64 {
        let e = p.rate - sigma;
        if e <= 1.0 {
            f64::INFINITY
        } else {
            2.0 * s * (r.max(1) as f64).powf(1.0 - e) / (e - 1.0)
        }
    };
    let finite_sigma = [2.0, 1.0, 0.0]
        .into_iter()
        .find(|sg| p.rate - sg > 1.0)
        .unwrap_or(0.0);
    let mut radius = 1;
    while tail(radius, finite_sigma) >= TAIL_TARGET && radius < p.max_radius {
        radius = (radius * 2).min(p.max_radius);
    }
    let mut sites = Vec::new();
    for x in -radius..=radius {
        let alpha = alpha0 + unit * (p.strength * bracket(x).powf(-p.rate));
        let point = CoinPoint::reduced(alpha, 0.0).map_err(|e| match e {
            Error::Validation { msg, .. } => Error::ingestion(Some(x), msg),
            other => other,
        })?;
        sites.push((x, point));
    }
    let discarded = [tail(radius, 0.0), tail(radius, 1.0), tail(radius, 2.0)];
    Ok((sites, Some(Truncation { radius, discarded })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn unitarity_defect(m: &Mat2) -> f64 {
        (m.adjoint() * m - Mat2::identity()).norm()
    }

    #[test]
    fn identity_coin() {
        let p = CoinPoint::new(c(0.0, 0.0), c(1.0, 0.0), 0.0).unwrap();
        assert_eq!(coin_matrix(&p), Mat2::identity());
    }

    #[test]
    fn unit_alpha_rejected() {
        assert!(CoinPoint::new(c(1.0, 0.0), c(0.0, 0.0), 0.0).is_err());
        assert!(CoinPoint::reduced(c(1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn unnormalized_rejected() {
        assert!(CoinPoint::new(c(0.5, 0.0), c(0.5, 0.0), 0.0).is_err());
    }

    #[test]
    fn hadamard_parameters() {
        let h = FRAC_1_SQRT_2;
        let p = CoinPoint::new(c(0.0, -h), c(0.0, h), -PI / 2.0).unwrap();
        let m = coin_matrix(&p);
        let expected = Mat2::new(c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0));
        assert!((m - expected).norm() < 1e-15);
    }

    #[test]
    fn gauge_example_single_site() {
        let rho = (1.0f64 - 0.25).sqrt();
        let p = CoinPoint::new(c(0.5, 0.0), c(0.0, rho), 0.0).unwrap();
        let field = CoinField::from_entries(c(0.5, 0.0), [(0, p)]).unwrap();
        let (reduced, g) = field.gauge_reduce();
        assert!(reduced.is_reduced());
        for x in -5..=0 {
            assert_eq!(g.b(x), 0.0);
        }
        for x in 1..=5 {
            assert!((g.b(x) - PI / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gauge_idempotent() {
        let field = CoinField::from_entries(
            c(0.6, 0.1),
            [
                (-2, CoinPoint::reduced(c(0.3, 0.2), 0.1).unwrap()),
                (3, CoinPoint::reduced(c(-0.1, 0.4), -0.2).unwrap()),
            ],
        )
        .unwrap();
        let (_, g) = field.gauge_reduce();
        assert!(g.is_trivial());
        let (r1, _) = field.gauge_reduce();
        let (r2, g2) = r1.gauge_reduce();
        assert!(g2.is_trivial());
        assert_eq!(r1, r2);
    }

    #[test]
    fn perturbation_norm_examples() {
        let a0 = c(FRAC_1_SQRT_2, 0.0);
        assert_eq!(CoinField::free(a0).unwrap().perturbation_norm(2), 0.0);
        let one =
            CoinField::from_entries(a0, [(0, CoinPoint::reduced(a0 + 0.1, 0.0).unwrap())]).unwrap();
        assert!((one.perturbation_norm(2) - 0.1).abs() < 1e-15);
        let two = CoinField::from_entries(
            a0,
            [
                (-1, CoinPoint::reduced(a0 - 0.1, 0.0).unwrap()),
                (1, CoinPoint::reduced(a0 + c(0.0, 0.1), 0.0).unwrap()),
            ],
        )
        .unwrap();
        assert!((two.perturbation_norm(1) - 0.2 * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn profile_examples() {
        let free =
            load_coin_profile(r#"{"alpha0":{"re":0.70710678,"im":0},"entries":[]}"#).unwrap();
        assert!(free.is_free());
        let bad = load_coin_profile(
            r#"{"alpha0":{"re":0.7,"im":0},"entries":[{"x":4,"alpha":{"re":1.0,"im":0}}]}"#,
        );
        match bad {
            Err(Error::Ingestion { site: Some(4), .. }) => {}
            other => panic!("expected ingestion error at 4, got {other:?}"),
        }
        let defect = load_coin_profile(
            r#"{"alpha0":{"re":0.70710678,"im":0},"preset":"single-defect","params":{"strength":0.3,"x0":0}}"#,
        )
        .unwrap();
        assert!((defect.perturbation_norm(0) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn degenerate_alpha0_rejected() {
        assert!(load_coin_profile(r#"{"alpha0":{"re":0,"im":0}}"#).is_err());
        assert!(load_coin_profile(r#"{"alpha0":{"re":1,"im":0}}"#).is_err());
        assert!(load_coin_profile(r#"{"alpha0":{"re":0.5,"im":0},"preset":"nope"}"#).is_err());
    }

    #[test]
    fn explicit_entries_override_preset() {
        let f = load_coin_profile(
            r#"{"alpha0":{"re":0.6,"im":0},"preset":"barrier","params":{"x0":0,"width":3,"strength":0.2},
                "entries":[{"x":1,"alpha":{"re":0.1,"im":0.1},"theta":0.3}]}"#,
        )
        .unwrap();
        assert_eq!(f.support(), Some(Window::new(0, 2).unwrap()));
        assert_eq!(f.alpha(1), c(0.1, 0.1));
        assert!((f.alpha(0) - c(0.4, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn random_decay_truncation_recorded() {
        let f = load_coin_profile(
            r#"{"alpha0":{"re":0.7,"im":0},"preset":"random-decay","params":{"strength":0.2,"rate":1.0,"seed":9}}"#,
        )
        .unwrap();
        let t = f.truncation().unwrap();
        assert!(t.discarded[2] < 1e-10);
        assert!(t.discarded[0] <= t.discarded[1] && t.discarded[1] <= t.discarded[2]);
        let again = load_coin_profile(
            r#"{"alpha0":{"re":0.7,"im":0},"preset":"random-decay","params":{"strength":0.2,"rate":1.0,"seed":9}}"#,
        )
        .unwrap();
        assert_eq!(f, again);
    }

    #[test]
    fn power_decay_tail_divergence() {
        let f = load_coin_profile(
            r#"{"alpha0":{"re":0.7,"im":0},"preset":"power-decay","params":{"strength":0.05,"rate":2.5,"max_radius":512}}"#,
        )
        .unwrap();
        assert!(f.perturbation_norm_with_tail(1).is_finite());
        assert!(f.perturbation_norm_with_tail(2).is_infinite());
    }

    proptest! {
        #[test]
        fn coin_matrix_unitary(ar in -0.7f64..0.7, ai in -0.7f64..0.7, bphase in 0.0f64..TAU, theta in -PI..PI) {
            let alpha = c(ar, ai);
            let rho = (1.0 - alpha.norm_sqr()).sqrt();
            let p = CoinPoint::new(alpha, C64::from_polar(rho, bphase), theta).unwrap();
            let m = coin_matrix(&p);
            prop_assert!(unitarity_defect(&m) < 1e-14);
            prop_assert!((m.determinant() - C64::from_polar(1.0, 2.0 * theta)).norm() < 1e-14);
        }

        #[test]
        fn gauge_keeps_norms(phases in prop::collection::vec(0.0f64..TAU, 1..8), start in -5i64..5) {
            let a0 = c(0.6, 0.2);
            let entries: Vec<_> = phases.iter().enumerate().map(|(i, ph)| {
                let alpha = c(0.3 + 0.05 * i as f64, -0.1);
                let rho = (1.0 - alpha.norm_sqr()).sqrt();
                (start + i as i64, CoinPoint::new(alpha, C64::from_polar(rho, *ph), 0.1 * i as f64).unwrap())
            }).collect();
            let field = CoinField::from_entries(a0, entries).unwrap();
            let (reduced, g) = field.gauge_reduce();
            for s in 0..3 {
                prop_assert_eq!(field.perturbation_norm(s), reduced.perturbation_norm(s));
            }
            for x in start - 2..start + phases.len() as i64 + 2 {
                let b = field.at(x).beta().arg().rem_euclid(TAU);
                prop_assert!(((g.b(x + 1) - g.b(x)) - b).abs() < 1e-12);
            }
        }
    }
}
