//! Dense matrix exponential and an embedded Runge–Kutta integrator.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Scaled argument bound for the Taylor series.
const SCALED_NORM: f64 = 0.5;
/// Series terms below this 1-norm are dropped.
const TERM_CUTOFF: f64 = 1e-16;

/// Induced 1-norm (max column sum).
pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(a)` by scaling and squaring with a truncated Taylor series.
///
/// The argument is scaled by `2^-s` until its 1-norm is at most 0.5; the
/// series is summed until a term's 1-norm drops below 1e-16 and the result is
/// squared `s` times.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = norm1(a);
    let mut squarings = 0i32;
    if norm > SCALED_NORM {
        squarings = (norm / SCALED_NORM).log2().ceil() as i32;
    }
    let b = a / 2f64.powi(squarings);

    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..64 {
        term = &term * &b / k as f64;
        sum += &term;
        if norm1(&term) < TERM_CUTOFF {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

/// Adaptive Dormand–Prince integrator for an autonomous system `y' = f(y)`.
pub struct DormandPrince<F> {
    rhs: F,
    tol: Tolerances,
    h: f64,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    pub steps: usize,
    pub rejected: usize,
}

impl<F: FnMut(&[f64], &mut [f64])> DormandPrince<F> {
    pub fn new(rhs: F, dim: usize, tol: Tolerances, h0: f64) -> Self {
        DormandPrince {
            rhs,
            tol,
            h: h0,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
            steps: 0,
            rejected: 0,
        }
    }

    fn stage(&mut self, y: &[f64], h: f64, coeffs: &[f64], out: usize) {
        for i in 0..y.len() {
            let mut acc = 0.0;
            for (j, c) in coeffs.iter().enumerate() {
                acc += c * self.k[j][i];
            }
            self.tmp[i] = y[i] + h * acc;
        }
        let (rhs, tmp, k) = (&mut self.rhs, &self.tmp, &mut self.k);
        rhs(tmp, &mut k[out]);
    }

    /// Advances `y` from `t0` to `t1`, calling `after_step` on every accepted step.
    pub fn advance(
        &mut self,
        y: &mut Vec<f64>,
        t0: f64,
        t1: f64,
        mut after_step: impl FnMut(&mut [f64]) -> Result<()>,
    ) -> Result<()> {
        let n = y.len();
        let mut t = t0;
        let mut y_new = vec![0.0; n];
        (self.rhs)(y, &mut self.k[0]);
        while t < t1 {
            let last = t + self.h >= t1;
            let h = if last { t1 - t } else { self.h };
            if h < 1e-14 * t.abs().max(1.0) && !last {
                return Err(Error::StepUnderflow { t, h });
            }
            self.stage(y, h, &[A21], 1);
            self.stage(y, h, &[A31, A32], 2);
            self.stage(y, h, &[A41, A42, A43], 3);
            self.stage(y, h, &[A51, A52, A53, A54], 4);
            self.stage(y, h, &[A61, A62, A63, A64, A65], 5);
            for i in 0..n {
                y_new[i] = y[i]
                    + h * (B1 * self.k[0][i]
                        + B3 * self.k[2][i]
                        + B4 * self.k[3][i]
                        + B5 * self.k[4][i]
                        + B6 * self.k[5][i]);
            }
            (self.rhs)(&y_new, &mut self.k[6]);

            let mut err = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * self.k[0][i]
                        + E3 * self.k[2][i]
                        + E4 * self.k[3][i]
                        + E5 * self.k[4][i]
                        + E6 * self.k[5][i]
                        + E7 * self.k[6][i]);
                let sc = self.tol.atol + self.tol.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / n as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::StepUnderflow { t, h });
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };

            if err <= 1.0 {
                t = if last { t1 } else { t + h };
                after_step(&mut y_new)?;
                std::mem::swap(y, &mut y_new);
                self.steps += 1;
                // FSAL, unless the hook modified y
                (self.rhs)(y, &mut self.k[0]);
                if !last {
                    self.h = h * factor;
                } else {
                    self.h = self.h.max(h * factor.min(1.0));
                }
            } else {
                self.rejected += 1;
                self.h = h * factor.min(1.0);
                if self.h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::StepUnderflow { t, h: self.h });
                }
            }
        }
        Ok(())
    }
}
