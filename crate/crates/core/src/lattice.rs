//! Spinor-valued fields on finite integer windows and weighted sequence norms.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Vec2, C64};

/// Japanese bracket `sqrt(1 + x^2)`.
pub fn bracket(x: i64) -> f64 {
    let x = x as f64;
    (1.0 + x * x).sqrt()
}

/// A two-component complex amplitude.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Spinor {
    pub up: C64,
    pub down: C64,
}

impl Spinor {
    pub const ZERO: Spinor = Spinor {
        up: C64::new(0.0, 0.0),
        down: C64::new(0.0, 0.0),
    };

    pub fn new(up: C64, down: C64) -> Self {
        Spinor { up, down }
    }

    pub fn real(up: f64, down: f64) -> Self {
        Spinor::new(C64::new(up, 0.0), C64::new(down, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.up.norm_sqr() + self.down.norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.up == C64::new(0.0, 0.0) && self.down == C64::new(0.0, 0.0)
    }

    /// `conj(self) . other`
    pub fn dot(&self, other: &Spinor) -> C64 {
        self.up.conj() * other.up + self.down.conj() * other.down
    }

    pub fn to_vec2(self) -> Vec2 {
        Vec2::new(self.up, self.down)
    }

    pub fn from_vec2(v: &Vec2) -> Self {
        Spinor::new(v[0], v[1])
    }

    pub fn conj(self) -> Self {
        Spinor::new(self.up.conj(), self.down.conj())
    }
}

impl Add for Spinor {
    type Output = Spinor;
    fn add(self, o: Spinor) -> Spinor {
        Spinor::new(self.up + o.up, self.down + o.down)
    }
}

impl AddAssign for Spinor {
    fn add_assign(&mut self, o: Spinor) {
        self.up += o.up;
        self.down += o.down;
    }
}

impl Sub for Spinor {
    type Output = Spinor;
    fn sub(self, o: Spinor) -> Spinor {
        Spinor::new(self.up - o.up, self.down - o.down)
    }
}

impl Neg for Spinor {
    type Output = Spinor;
    fn neg(self) -> Spinor {
        Spinor::new(-self.up, -self.down)
    }
}

impl Mul<C64> for Spinor {
    type Output = Spinor;
    fn mul(self, s: C64) -> Spinor {
        Spinor::new(self.up * s, self.down * s)
    }
}

impl Mul<f64> for Spinor {
    type Output = Spinor;
    fn mul(self, s: f64) -> Spinor {
        Spinor::new(self.up * s, self.down * s)
    }
}

/// Inclusive integer interval `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub min: i64,
    pub max: i64,
}

impl Window {
    pub fn new(min: i64, max: i64) -> Result<Self> {
        if min > max {
            return Err(Error::Config(format!("empty window [{min}, {max}]")));
        }
        Ok(Window { min, max })
    }

    /// `[-radius, radius]`
    pub fn centered(radius: i64) -> Self {
        let r = radius.abs();
        Window { min: -r, max: r }
    }

    pub fn len(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: i64) -> bool {
        x >= self.min && x <= self.max
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        other.min >= self.min && other.max <= self.max
    }

    pub fn index(&self, x: i64) -> Option<usize> {
        self.contains(x).then(|| (x - self.min) as usize)
    }

    pub fn site(&self, index: usize) -> i64 {
        self.min + index as i64
    }

    pub fn expand(&self, margin: i64) -> Window {
        Window {
            min: self.min - margin,
            max: self.max + margin,
        }
    }

    pub fn hull(&self, other: &Window) -> Window {
        Window {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    pub fn intersect(&self, other: &Window) -> Option<Window> {
        let min = self.min.max(other.min);
        let max = self.max.min(other.max);
        (min <= max).then_some(Window { min, max })
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.min..=self.max
    }

    pub fn midpoint(&self) -> i64 {
        self.min + (self.max - self.min) / 2
    }

    pub(crate) fn check_same(&self, other: &Window) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::WindowMismatch(
                self.min, self.max, other.min, other.max,
            ))
        }
    }
}

/// What reads outside the window return.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outside {
    #[default]
    Zero,
    /// Constant continuation of the nearest edge value. Only meaningful for
    /// plane-wave-like data over a constant far-field coin; norms ignore it.
    FreeExtension,
}

/// A spinor-valued field on an explicit window.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    window: Window,
    values: Vec<Spinor>,
    outside: Outside,
}

#[derive(Serialize, Deserialize)]
struct FieldRow {
    x: i64,
    up_re: f64,
    up_im: f64,
    down_re: f64,
    down_im: f64,
}

impl SpinorField {
    pub fn zeros(window: Window) -> Self {
        SpinorField {
            window,
            values: vec![Spinor::ZERO; window.len()],
            outside: Outside::Zero,
        }
    }

    pub fn from_fn(window: Window, mut f: impl FnMut(i64) -> Spinor) -> Self {
        SpinorField {
            window,
            values: window.sites().map(&mut f).collect(),
            outside: Outside::Zero,
        }
    }

    pub fn from_values(window: Window, values: Vec<Spinor>) -> Result<Self> {
        if values.len() != window.len() {
            return Err(Error::Config(format!(
                "{} values for a window of {} sites",
                values.len(),
                window.len()
            )));
        }
        Ok(SpinorField {
            window,
            values,
            outside: Outside::Zero,
        })
    }

    pub fn delta(window: Window, x: i64, s: Spinor) -> Result<Self> {
        let mut f = SpinorField::zeros(window);
        f.set(x, s)?;
        Ok(f)
    }

    pub fn with_outside(mut self, outside: Outside) -> Self {
        self.outside = outside;
        self
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn outside(&self) -> Outside {
        self.outside
    }

    pub fn values(&self) -> &[Spinor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Spinor] {
        &mut self.values
    }

    pub fn get(&self, x: i64) -> Spinor {
        match self.window.index(x) {
            Some(i) => self.values[i],
            None => match self.outside {
                Outside::Zero => Spinor::ZERO,
                Outside::FreeExtension => {
                    if x < self.window.min {
                        self.values[0]
                    } else {
                        self.values[self.values.len() - 1]
                    }
                }
            },
        }
    }

    pub fn set(&mut self, x: i64, s: Spinor) -> Result<()> {
        let i = self.window.index(x).ok_or_else(|| {
            Error::WindowOverflow(format!(
                "site {x} outside [{}, {}]",
                self.window.min, self.window.max
            ))
        })?;
        self.values[i] = s;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Spinor)> + '_ {
        self.window.sites().zip(self.values.iter().copied())
    }

    /// Smallest window holding every nonzero value.
    pub fn support(&self) -> Option<Window> {
        let first = self.values.iter().position(|s| !s.is_zero())?;
        let last = self.values.iter().rposition(|s| !s.is_zero())?;
        Some(Window {
            min: self.window.site(first),
            max: self.window.site(last),
        })
    }

    /// Copies the field onto another window, zero-filling new sites.
    /// Fails if nonzero data would be dropped.
    pub fn resized(&self, window: Window) -> Result<Self> {
        if let Some(s) = self.support() {
            if !window.contains_window(&s) {
                return Err(Error::WindowOverflow(format!(
                    "support [{}, {}] does not fit in [{}, {}]",
                    s.min, s.max, window.min, window.max
                )));
            }
        }
        Ok(SpinorField {
            window,
            values: window
                .sites()
                .map(|x| {
                    self.window
                        .index(x)
                        .map_or(Spinor::ZERO, |i| self.values[i])
                })
                .collect(),
            outside: self.outside,
        })
    }

    pub fn scaled(&self, c: C64) -> Self {
        SpinorField {
            window: self.window,
            values: self.values.iter().map(|s| *s * c).collect(),
            outside: self.outside,
        }
    }

    pub fn add(&self, other: &SpinorField) -> Result<Self> {
        self.window.check_same(&other.window)?;
        Ok(SpinorField {
            window: self.window,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| *a + *b)
                .collect(),
            outside: self.outside,
        })
    }

    pub fn sub(&self, other: &SpinorField) -> Result<Self> {
        self.window.check_same(&other.window)?;
        Ok(SpinorField {
            window: self.window,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| *a - *b)
                .collect(),
            outside: self.outside,
        })
    }

    /// `sum_x conj(self(x)) . other(x)` over the common sites.
    pub fn inner(&self, other: &SpinorField) -> C64 {
        let Some(w) = self.window.intersect(&other.window) else {
            return C64::new(0.0, 0.0);
        };
        w.sites().map(|x| self.get(x).dot(&other.get(x))).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.values.iter().map(|s| s.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn norm_sup(&self) -> f64 {
        self.values.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    pub fn norm_l1(&self) -> f64 {
        self.values.iter().map(|s| s.norm()).sum()
    }

    /// Largest pointwise distance; windows must match.
    pub fn max_diff(&self, other: &SpinorField) -> Result<f64> {
        self.window.check_same(&other.window)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).norm())
            .fold(0.0, f64::max))
    }

    pub fn to_json(&self) -> Result<String> {
        let rows: Vec<FieldRow> = self
            .iter()
            .map(|(x, s)| FieldRow {
                x,
                up_re: s.up.re,
                up_im: s.up.im,
                down_re: s.down.re,
                down_im: s.down.im,
            })
            .collect();
        Ok(serde_json::to_string(&rows)?)
    }

    /// Parses the row-array form. The window is the hull of the listed sites;
    /// unlisted sites inside it are zero.
    pub fn from_json(text: &str) -> Result<Self> {
        let rows: Vec<FieldRow> = serde_json::from_str(text)?;
        let min = rows.iter().map(|r| r.x).min();
        let max = rows.iter().map(|r| r.x).max();
        let (Some(min), Some(max)) = (min, max) else {
            return Err(Error::ingestion(None, "empty field"));
        };
        let window = Window::new(min, max)?;
        let mut seen = vec![false; window.len()];
        let mut field = SpinorField::zeros(window);
        for r in rows {
            let i = window.index(r.x).expect("inside hull");
            if seen[i] {
                return Err(Error::ingestion(Some(r.x), "duplicate site"));
            }
            seen[i] = true;
            field.values[i] =
                Spinor::new(C64::new(r.up_re, r.up_im), C64::new(r.down_re, r.down_im));
        }
        Ok(field)
    }
}

/// Supported exponents of the weighted norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exponent {
    One,
    Two,
    Infinity,
}

/// Weighted sequence norm `l^{p, sigma}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub p: Exponent,
    pub sigma: u32,
}

impl NormSpec {
    pub fn new(p: f64, sigma: f64) -> Result<Self> {
        let p = if p == 1.0 {
            Exponent::One
        } else if p == 2.0 {
            Exponent::Two
        } else if p == f64::INFINITY {
            Exponent::Infinity
        } else {
            return Err(Error::Config(format!("unsupported norm exponent p = {p}")));
        };
        if !(sigma == 0.0 || sigma == 1.0 || sigma == 2.0) {
            return Err(Error::Config(format!(
                "unsupported weight exponent sigma = {sigma}"
            )));
        }
        Ok(NormSpec {
            p,
            sigma: sigma as u32,
        })
    }
}

/// `(sum_x <x>^{p sigma} |u(x)|^p)^{1/p}`, or the weighted sup-norm for `p = inf`.
/// Reads only the window (zero convention).
pub fn weighted_norm(u: &SpinorField, spec: NormSpec) -> f64 {
    let w = |x: i64| bracket(x).powi(spec.sigma as i32);
    match spec.p {
        Exponent::One => u.iter().map(|(x, s)| w(x) * s.norm()).sum(),
        Exponent::Two => u
            .iter()
            .map(|(x, s)| (w(x) * s.norm()).powi(2))
            .sum::<f64>()
            .sqrt(),
        Exponent::Infinity => u.iter().map(|(x, s)| w(x) * s.norm()).fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn bracket_values() {
        assert_eq!(bracket(0), 1.0);
        assert!((bracket(1) - 2f64.sqrt()).abs() < 1e-15);
        assert!((bracket(-3) - 10f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn norm_examples() {
        let w = Window::new(-3, 3).unwrap();
        let d0 = SpinorField::delta(w, 0, Spinor::real(1.0, 0.0)).unwrap();
        assert_eq!(weighted_norm(&d0, NormSpec::new(2.0, 0.0).unwrap()), 1.0);
        let d2 = SpinorField::delta(w, 2, Spinor::real(1.0, 0.0)).unwrap();
        let n = weighted_norm(&d2, NormSpec::new(1.0, 1.0).unwrap());
        assert!((n - 5f64.sqrt()).abs() < 1e-15);
        let mut two = d0.clone();
        two.set(1, Spinor::real(0.0, 1.0)).unwrap();
        assert_eq!(
            weighted_norm(&two, NormSpec::new(f64::INFINITY, 0.0).unwrap()),
            1.0
        );
    }

    #[test]
    fn unsupported_specs_rejected() {
        assert!(NormSpec::new(3.0, 0.0).is_err());
        assert!(NormSpec::new(2.0, 0.5).is_err());
    }

    #[test]
    fn outside_reads() {
        let w = Window::new(0, 2).unwrap();
        let f = SpinorField::from_fn(w, |x| Spinor::real(x as f64 + 1.0, 0.0));
        assert_eq!(f.get(-5), Spinor::ZERO);
        let g = f.clone().with_outside(Outside::FreeExtension);
        assert_eq!(g.get(-5), Spinor::real(1.0, 0.0));
        assert_eq!(g.get(9), Spinor::real(3.0, 0.0));
        // norms ignore the extension
        assert_eq!(f.norm_l1(), g.norm_l1());
    }

    #[test]
    fn json_round_trip() {
        let w = Window::new(-2, 4).unwrap();
        let f = SpinorField::from_fn(w, |x| {
            Spinor::new(c(x as f64, 0.5), c(-0.25, x as f64 * 0.1))
        });
        let back = SpinorField::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn json_rejects_duplicates() {
        let text = r#"[{"x":0,"up_re":1,"up_im":0,"down_re":0,"down_im":0},
                       {"x":0,"up_re":1,"up_im":0,"down_re":0,"down_im":0}]"#;
        assert!(SpinorField::from_json(text).is_err());
    }

    #[test]
    fn mismatched_windows_rejected() {
        let a = SpinorField::zeros(Window::new(0, 3).unwrap());
        let b = SpinorField::zeros(Window::new(0, 4).unwrap());
        assert!(matches!(a.add(&b), Err(Error::WindowMismatch(..))));
    }

    fn field_strategy() -> impl Strategy<Value = SpinorField> {
        (
            -10i64..10,
            prop::collection::vec(prop::array::uniform4(-1.0f64..1.0), 1..30),
        )
            .prop_map(|(min, vals)| {
                let w = Window::new(min, min + vals.len() as i64 - 1).unwrap();
                let values = vals
                    .iter()
                    .map(|v| Spinor::new(c(v[0], v[1]), c(v[2], v[3])))
                    .collect();
                SpinorField::from_values(w, values).unwrap()
            })
    }

    proptest! {
        #[test]
        fn triangle_and_homogeneity(u in field_strategy(), seed in prop::array::uniform4(-1.0f64..1.0), k in -3.0f64..3.0) {
            let v = SpinorField::from_fn(u.window(), |x| Spinor::new(c(seed[0] * x as f64, seed[1]), c(seed[2], seed[3])));
            for p in [1.0, 2.0, f64::INFINITY] {
                for s in [0.0, 1.0, 2.0] {
                    let spec = NormSpec::new(p, s).unwrap();
                    let sum = weighted_norm(&u.add(&v).unwrap(), spec);
                    let bound = weighted_norm(&u, spec) + weighted_norm(&v, spec);
                    prop_assert!(sum <= bound * (1.0 + 1e-12) + 1e-12);
                    let scaled = weighted_norm(&u.scaled(c(k, 0.0)), spec);
                    prop_assert!((scaled - k.abs() * weighted_norm(&u, spec)).abs() <= 1e-12 * (1.0 + scaled));
                }
            }
        }

        #[test]
        fn monotone_in_weight(u in field_strategy()) {
            let n0 = weighted_norm(&u, NormSpec::new(1.0, 0.0).unwrap());
            let n1 = weighted_norm(&u, NormSpec::new(1.0, 1.0).unwrap());
            let n2 = weighted_norm(&u, NormSpec::new(1.0, 2.0).unwrap());
            prop_assert!(n0 <= n1 && n1 <= n2);
        }
    }
}
