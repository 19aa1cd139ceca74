use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::state::SymTraceless2;
use crate::subsolutions::Subsolution;

/// Signed wavenumber of FFT bin `i` on `n` points; `None` at Nyquist.
fn wavenumber(i: usize, n: usize) -> Option<f64> {
    if n % 2 == 0 && i == n / 2 {
        None
    } else if i <= n / 2 {
        Some(i as f64)
    } else {
        Some(i as f64 - n as f64)
    }
}

fn fft2(data: &mut [Complex<f64>], n: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::default(); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = data[i * n + j];
        }
        fft.process(&mut col);
        for i in 0..n {
            data[i * n + j] = col[i];
        }
    }
}

/// Mean-free periodic solution of `-Lap p = div div (sigma + e id)` on an
/// `n x n` cell-centred slice, index `i * n + j` with `i` along `x1`.
/// Nyquist modes are dropped.
pub fn pressure_recovery(sigma: &[SymTraceless2], e: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 || sigma.len() != n * n || e.len() != n * n {
        return Err(Error::Config(format!(
            "pressure recovery expects {n}x{n} samples, got {} and {}",
            sigma.len(),
            e.len()
        )));
    }
    let mut f11: Vec<Complex<f64>> = sigma.iter().zip(e).map(|(s, e)| Complex::new(s.a + e, 0.0)).collect();
    let mut f12: Vec<Complex<f64>> = sigma.iter().map(|s| Complex::new(s.b, 0.0)).collect();
    let mut f22: Vec<Complex<f64>> = sigma.iter().zip(e).map(|(s, e)| Complex::new(e - s.a, 0.0)).collect();
    for f in [&mut f11, &mut f12, &mut f22] {
        fft2(f, n, false);
    }
    let mut p = vec![Complex::default(); n * n];
    for i in 0..n {
        for j in 0..n {
            let (Some(k1), Some(k2)) = (wavenumber(i, n), wavenumber(j, n)) else {
                continue;
            };
            let kk = k1 * k1 + k2 * k2;
            if kk == 0.0 {
                continue;
            }
            let idx = i * n + j;
            p[idx] = -(f11[idx] * (k1 * k1) + f12[idx] * (2.0 * k1 * k2) + f22[idx] * (k2 * k2)) / kk;
        }
    }
    fft2(&mut p, n, true);
    let norm = 1.0 / (n * n) as f64;
    Ok(p.iter().map(|c| c.re * norm).collect())
}

/// Recovered and prescribed pressure on the `t` slice, both with their
/// means removed.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureComparison {
    pub recovered: Vec<f64>,
    pub prescribed: Vec<f64>,
    /// Largest pointwise difference.
    pub max_error: f64,
}

pub fn compare_pressure(field: &dyn Subsolution, n: usize, t: f64) -> Result<PressureComparison> {
    let h = 1.0 / n as f64;
    let mut sigma = Vec::with_capacity(n * n);
    let mut e = Vec::with_capacity(n * n);
    let mut prescribed = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let y = [-0.5 + (i as f64 + 0.5) * h, -0.5 + (j as f64 + 0.5) * h, t];
            let s = field.sample(y);
            sigma.push(s.state.sigma);
            e.push(s.state.e);
            prescribed.push(s.pressure.0);
        }
    }
    let recovered = pressure_recovery(&sigma, &e, n)?;
    let mean = prescribed.iter().sum::<f64>() / prescribed.len() as f64;
    prescribed.iter_mut().for_each(|p| *p -= mean);
    let max_error = recovered
        .iter()
        .zip(&prescribed)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(PressureComparison {
        recovered,
        prescribed,
        max_error,
    })
}
