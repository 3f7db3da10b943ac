//! Brute-force spectral oracles for the walk on the periodic ring over a
//! window: full Schur decomposition for small rings and a gap-restricted
//! eigensolver for large ones.
//!
//! The large-ring solver works with the Hermitian part `H = (U + U*)/2`, whose
//! spectrum is `cos(lambda)`. Folding the ring order `0, N-1, 1, N-2, ...`
//! makes `H` block tridiagonal with 4x4 blocks, so Sylvester inertia counts
//! and block-Thomas solves cost O(N). Eigenvalues in the gaps are isolated by
//! bisection, resolved by subspace inverse iteration and turned back into
//! eigenpairs of `U` by a Rayleigh-Ritz step with `U` itself.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evolution::{dense_truncation, WalkOperator};
use crate::lattice::{Spinor, SpinorField};
use crate::{Mat2, C64};

type M4 = Matrix4<C64>;
type V4 = Vector4<C64>;

/// Eigen-decomposition of the dense ring matrix. Columns of `vectors` are
/// orthonormal eigenvectors because the matrix is normal.
pub struct DenseSpectrum {
    pub values: Vec<C64>,
    pub vectors: DMatrix<C64>,
    op: WalkOperator,
}

impl DenseSpectrum {
    pub fn compute(op: &WalkOperator) -> Result<Self> {
        let m = dense_truncation(op)?;
        let n = m.nrows();
        let schur = nalgebra::Schur::try_new(m, 1e-15, 10_000)
            .ok_or_else(|| Error::Solver("Schur iteration did not converge".into()))?;
        let (q, t) = schur.unpack();
        let values = (0..n).map(|i| t[(i, i)]).collect();
        Ok(DenseSpectrum {
            values,
            vectors: q,
            op: op.clone(),
        })
    }

    /// Angles `lambda` in `(-pi, pi]`.
    pub fn angles(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.arg()).collect()
    }

    /// Sum of `q q*` applied to `u` over eigenvalues selected by `keep`.
    pub fn project(&self, u: &SpinorField, keep: impl Fn(C64) -> bool) -> Result<SpinorField> {
        self.op.window().check_same(&u.window())?;
        let v = to_vector(u);
        let mut out = DVector::<C64>::zeros(v.len());
        for (k, val) in self.values.iter().enumerate() {
            if keep(*val) {
                let col = self.vectors.column(k);
                let c = col.dotc(&v);
                out += col * c;
            }
        }
        Ok(from_vector(u.window(), &out))
    }
}

/// True for eigenvalues on the upper arc of the band `|cos| <= rho0`.
pub fn on_upper_arc(value: C64, rho0: f64) -> bool {
    value.im > 0.0 && value.re.abs() <= rho0 + 1e-9
}

/// True for eigenvalues on either arc of the band.
pub fn on_band(value: C64, rho0: f64) -> bool {
    value.re.abs() <= rho0 + 1e-9
}

fn to_vector(u: &SpinorField) -> DVector<C64> {
    DVector::from_iterator(
        2 * u.values().len(),
        u.values().iter().flat_map(|s| [s.up, s.down]),
    )
}

fn from_vector(window: crate::lattice::Window, v: &DVector<C64>) -> SpinorField {
    let values = (0..v.len() / 2)
        .map(|i| Spinor::new(v[2 * i], v[2 * i + 1]))
        .collect();
    SpinorField::from_values(window, values).expect("length")
}

/// An eigenpair of the ring walk with eigenvalue in a spectral gap.
#[derive(Clone, Debug)]
pub struct GapEigenpair {
    /// Angle in `(-pi, pi]`.
    pub lambda: f64,
    pub value: C64,
    pub vector: SpinorField,
    /// `||U psi - e^{i lambda} psi||`
    pub residual: f64,
    /// Multiplicity of `cos(lambda)` as an eigenvalue of the Hermitian part.
    pub cluster: usize,
}

/// Gap eigensolver for rings of even size, O(N) per inertia count.
pub struct RingOracle {
    op: WalkOperator,
    diag: Vec<M4>,
    lower: Vec<M4>,
    rho0: f64,
}

impl RingOracle {
    pub fn new(op: &WalkOperator) -> Result<Self> {
        let n = op.window().len();
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "ring oracle needs an even number of sites >= 4, got {n}"
            )));
        }
        let w = op.window();
        let mats: Vec<Mat2> = w.sites().map(|x| op.coin().at(x).matrix()).collect();
        let z = C64::new(0.0, 0.0);
        // U_{i+1,i} = P_up C(i), U_{i-1,i} = P_down C(i)
        let up = |i: usize| Mat2::new(mats[i][(0, 0)], mats[i][(0, 1)], z, z);
        let down = |i: usize| Mat2::new(z, z, mats[i][(1, 0)], mats[i][(1, 1)]);
        // H_{i+1,i} = (U_{i+1,i} + U_{i,i+1}^*) / 2 on the ring
        let h_next = |i: usize| (up(i) + down((i + 1) % n).adjoint()) * C64::new(0.5, 0.0);
        let h = |i: usize, j: usize| -> Mat2 {
            if j == (i + n - 1) % n {
                h_next(j)
            } else if i == (j + n - 1) % n {
                h_next(i).adjoint()
            } else {
                Mat2::zeros()
            }
        };
        let k = n / 2;
        let place = |m: &mut M4, r: usize, c: usize, b: &Mat2| {
            for a in 0..2 {
                for d in 0..2 {
                    m[(2 * r + a, 2 * c + d)] = b[(a, d)];
                }
            }
        };
        let mut diag = vec![M4::zeros(); k];
        let mut lower = vec![M4::zeros(); k.saturating_sub(1)];
        for (b, d) in diag.iter_mut().enumerate() {
            let (sa, sb) = (b, n - 1 - b);
            place(d, 0, 1, &h(sa, sb));
            place(d, 1, 0, &h(sb, sa));
        }
        for (b, e) in lower.iter_mut().enumerate() {
            let (sa, sb) = (b, n - 1 - b);
            place(e, 0, 0, &h(sa + 1, sa));
            place(e, 1, 1, &h(sb - 1, sb));
        }
        Ok(RingOracle {
            op: op.clone(),
            diag,
            lower,
            rho0: op.coin().rho0(),
        })
    }

    fn shifted(&self, k: usize, mu: f64) -> M4 {
        self.diag[k] - M4::identity() * C64::new(mu, 0.0)
    }

    /// Number of eigenvalues of the Hermitian part strictly below `mu`.
    pub fn count_below(&self, mu: f64) -> usize {
        let mut count = 0;
        let mut s = self.shifted(0, mu);
        for k in 0..self.diag.len() {
            if k > 0 {
                let e = &self.lower[k - 1];
                let prev_inv = safe_inverse(&s);
                s = self.shifted(k, mu) - e * prev_inv * e.adjoint();
            }
            let herm = (s + s.adjoint()) * C64::new(0.5, 0.0);
            count += herm
                .symmetric_eigenvalues()
                .iter()
                .filter(|v| **v < 0.0)
                .count();
        }
        count
    }

    fn solve(&self, mu: f64, rhs: &[V4]) -> Vec<V4> {
        let kk = self.diag.len();
        let mut s_inv = Vec::with_capacity(kk);
        let mut y = Vec::with_capacity(kk);
        let mut s = self.shifted(0, mu);
        for k in 0..kk {
            if k > 0 {
                let e = &self.lower[k - 1];
                s = self.shifted(k, mu) - e * s_inv[k - 1] * e.adjoint();
            }
            let inv = safe_inverse(&s);
            let yk = if k == 0 {
                rhs[0]
            } else {
                rhs[k] - self.lower[k - 1] * (s_inv[k - 1] * y[k - 1])
            };
            s_inv.push(inv);
            y.push(yk);
        }
        let mut x = vec![V4::zeros(); kk];
        x[kk - 1] = s_inv[kk - 1] * y[kk - 1];
        for k in (0..kk - 1).rev() {
            x[k] = s_inv[k] * (y[k] - self.lower[k].adjoint() * x[k + 1]);
        }
        x
    }

    fn fold(&self, u: &SpinorField) -> Vec<V4> {
        let v = u.values();
        let n = v.len();
        (0..n / 2)
            .map(|b| {
                let (a, c) = (v[b], v[n - 1 - b]);
                V4::new(a.up, a.down, c.up, c.down)
            })
            .collect()
    }

    fn unfold(&self, f: &[V4]) -> SpinorField {
        let n = 2 * f.len();
        let mut vals = vec![Spinor::ZERO; n];
        for (b, v) in f.iter().enumerate() {
            vals[b] = Spinor::new(v[0], v[1]);
            vals[n - 1 - b] = Spinor::new(v[2], v[3]);
        }
        SpinorField::from_values(self.op.window(), vals).expect("length")
    }

    /// Eigenvalues of the Hermitian part inside `(lo, hi)`, as clusters
    /// `(centre, multiplicity)` resolved to width `tol`.
    pub fn hermitian_clusters(&self, lo: f64, hi: f64, tol: f64) -> Vec<(f64, usize)> {
        let mut out = Vec::new();
        let (clo, chi) = (self.count_below(lo), self.count_below(hi));
        self.bisect(lo, hi, clo, chi, tol, &mut out);
        out
    }

    fn bisect(
        &self,
        lo: f64,
        hi: f64,
        clo: usize,
        chi: usize,
        tol: f64,
        out: &mut Vec<(f64, usize)>,
    ) {
        if chi == clo {
            return;
        }
        if hi - lo < tol {
            out.push((0.5 * (lo + hi), chi - clo));
            return;
        }
        let mid = 0.5 * (lo + hi);
        let cm = self.count_below(mid);
        self.bisect(lo, mid, clo, cm, tol, out);
        self.bisect(mid, hi, cm, chi, tol, out);
    }

    /// All eigenpairs of the ring walk whose eigenvalues lie in the spectral
    /// gaps, at least `margin` away (in `cos(lambda)`) from the band edges.
    pub fn gap_eigenpairs(&self, margin: f64, seed: u64) -> Result<Vec<GapEigenpair>> {
        let mut clusters = self.hermitian_clusters(self.rho0 + margin, 1.0 + 1e-9, 1e-13);
        clusters.extend(self.hermitian_clusters(-1.0 - 1e-9, -self.rho0 - margin, 1e-13));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = Vec::new();
        for (mu, mult) in clusters {
            pairs.extend(self.resolve_cluster(mu, mult, &mut rng)?);
        }
        pairs.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        Ok(pairs)
    }

    fn resolve_cluster(
        &self,
        mu: f64,
        mult: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<GapEigenpair>> {
        let w = self.op.window();
        let shift = mu + 1e-12;
        let mut basis: Vec<SpinorField> = (0..mult)
            .map(|_| {
                SpinorField::from_fn(w, |_| {
                    Spinor::new(
                        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    )
                })
            })
            .collect();
        for _ in 0..4 {
            basis = basis
                .iter()
                .map(|b| self.unfold(&self.solve(shift, &self.fold(b))))
                .collect();
            orthonormalize(&mut basis)?;
        }
        // Rayleigh-Ritz with U on the cluster subspace.
        let images: Vec<SpinorField> = basis
            .iter()
            .map(|b| self.op.apply_u_periodic(b))
            .collect::<Result<_>>()?;
        let m = DMatrix::from_fn(mult, mult, |i, j| basis[i].inner(&images[j]));
        let (vals, coeffs) = small_eigen(&m)?;
        let mut out = Vec::new();
        for (k, val) in vals.iter().enumerate() {
            let mut v = SpinorField::zeros(w);
            for (i, b) in basis.iter().enumerate() {
                v = v.add(&b.scaled(coeffs[(i, k)]))?;
            }
            let n = v.norm_l2();
            v = v.scaled(C64::new(1.0 / n, 0.0));
            let uv = self.op.apply_u_periodic(&v)?;
            let value = C64::from_polar(1.0, val.arg());
            let residual = uv.sub(&v.scaled(value))?.norm_l2();
            out.push(GapEigenpair {
                lambda: val.arg(),
                value,
                vector: v,
                residual,
                cluster: mult,
            });
        }
        Ok(out)
    }
}

fn safe_inverse(m: &M4) -> M4 {
    if let Some(inv) = m.try_inverse() {
        if inv.iter().all(|z| z.is_finite()) {
            return inv;
        }
    }
    let bumped = m + M4::identity() * C64::new(1e-300_f64.max(1e-14 * m.norm()), 0.0);
    bumped.try_inverse().unwrap_or_else(M4::zeros)
}

fn orthonormalize(basis: &mut [SpinorField]) -> Result<()> {
    for i in 0..basis.len() {
        for j in 0..i {
            let c = basis[j].inner(&basis[i]);
            basis[i] = basis[i].sub(&basis[j].scaled(c))?;
        }
        let n = basis[i].norm_l2();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Solver("inverse iteration lost rank".into()));
        }
        basis[i] = basis[i].scaled(C64::new(1.0 / n, 0.0));
    }
    Ok(())
}

/// Eigenvalues and eigenvectors of a small normal matrix.
fn small_eigen(m: &DMatrix<C64>) -> Result<(Vec<C64>, DMatrix<C64>)> {
    if m.nrows() == 1 {
        return Ok((
            vec![m[(0, 0)]],
            DMatrix::from_element(1, 1, C64::new(1.0, 0.0)),
        ));
    }
    if m.nrows() == 2 {
        let m2 = Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let schur = nalgebra::Schur::new(m2);
        let (q, t) = schur.unpack();
        return Ok((
            vec![t[(0, 0)], t[(1, 1)]],
            DMatrix::from_fn(2, 2, |i, j| q[(i, j)]),
        ));
    }
    let schur = nalgebra::Schur::try_new(m.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Solver("Ritz eigenproblem did not converge".into()))?;
    let (q, t) = schur.unpack();
    Ok(((0..m.nrows()).map(|i| t[(i, i)]).collect(), q))
}
