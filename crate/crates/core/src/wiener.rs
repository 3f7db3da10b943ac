//! Fourier coefficients of periodic samples and the Wiener algebra norms
//! `sum |u_n|` and `sum <n> |u_n|`.

use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lattice::bracket;
use crate::{Vec2, C64};

fn check_size(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Config(format!(
            "sample count {n} must be a power of two"
        )));
    }
    Ok(())
}

/// Frequency carried by FFT slot `k` of an `n`-point transform, in `[-n/2, n/2)`.
pub fn frequency(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// `u_n = (1/n) sum_j u(xi_j) e^{-i n xi_j}` for `xi_j = 2 pi j / n`,
/// in FFT slot order (see [`frequency`]).
pub fn fourier_coefficients(samples: &[C64]) -> Result<Vec<C64>> {
    check_size(samples.len())?;
    let n = samples.len();
    let mut buf = samples.to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    Ok(buf)
}

fn weight(k: usize, n: usize, order: u32) -> Result<f64> {
    match order {
        0 => Ok(1.0),
        1 => Ok(bracket(frequency(k, n))),
        _ => Err(Error::Config(format!(
            "Wiener norm order {order} must be 0 or 1"
        ))),
    }
}

/// `sum_n <n>^order |u_n|` of scalar samples.
pub fn wiener_norm(samples: &[C64], order: u32) -> Result<f64> {
    let c = fourier_coefficients(samples)?;
    let n = c.len();
    let mut acc = 0.0;
    for (k, v) in c.iter().enumerate() {
        acc += weight(k, n, order)? * v.norm();
    }
    Ok(acc)
}

/// Vector version: `sum_n <n>^order |u_n|` with the Euclidean norm on `C^2`.
pub fn wiener_norm_vec(samples: &[Vec2], order: u32) -> Result<f64> {
    let up: Vec<C64> = samples.iter().map(|v| v[0]).collect();
    let down: Vec<C64> = samples.iter().map(|v| v[1]).collect();
    let (a, b) = (fourier_coefficients(&up)?, fourier_coefficients(&down)?);
    let n = a.len();
    let mut acc = 0.0;
    for k in 0..n {
        acc += weight(k, n, order)? * (a[k].norm_sqr() + b[k].norm_sqr()).sqrt();
    }
    Ok(acc)
}
