//! Weighted sinusoid fits for interferograms: I(chi) = i0 + b sin(w chi + phi).
//!
//! For a fixed frequency the problem is linear in (i0, b sin, b cos) and is
//! solved exactly; a free frequency is seeded by a grid of such solutions and
//! polished with damped Gauss-Newton steps. Every result carries the full
//! 4x4 covariance in the parameter order (i0, b, omega, phi), zero-padded
//! when the frequency was held fixed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synth::Interferogram;

/// Sweeps advance one path's phase directly, so fringes sit at unit
/// frequency; the free-frequency search covers [0.5, 1.5] around this.
pub const OMEGA_NOMINAL: f64 = 1.0;
const OMEGA_GRID_N: usize = 41;
const MAX_ITERS: usize = 200;
const MAX_LAMBDA: f64 = 1e14;
/// Relative chi-squared improvement below which the polish has converged.
const CONVERGENCE_REL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("{n} points cannot constrain {k} parameters")]
    InsufficientPoints { n: usize, k: usize },
    #[error("sigma at point {index} must be positive and finite")]
    BadSigma { index: usize },
    #[error("non-finite sample at point {index}")]
    NonFinite { index: usize },
    #[error("chi grid spans less than 1e-9 radians; nothing to fit")]
    DegenerateGrid,
    #[error("fixed frequency {omega} must be positive and finite")]
    BadFixedOmega { omega: f64 },
    #[error("no descent step found after {iters} iterations")]
    NonConvergence { iters: usize },
    #[error("normal matrix is singular even after ridge regularization")]
    SingularNormalMatrix,
    #[error("fitted mean level {i0} is not positive; contrast undefined")]
    NonPositiveMean { i0: f64 },
}

/// Fitted sinusoid with uncertainties and goodness of fit. The amplitude is
/// canonicalized non-negative with the phase wrapped into [-pi, pi).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub i0: f64,
    pub b: f64,
    pub omega: f64,
    pub phi: f64,
    pub d_i0: f64,
    pub d_b: f64,
    pub d_omega: f64,
    pub d_phi: f64,
    /// Parameter order (i0, b, omega, phi); omega row and column are zero
    /// when the frequency was fixed.
    pub covariance: [[f64; 4]; 4],
    pub chi2_red: f64,
    pub omega_fixed: bool,
    pub n_points: usize,
}

impl FitResult {
    /// Fringe contrast b / i0 with its propagated uncertainty, including the
    /// amplitude-mean covariance term.
    pub fn contrast(&self) -> Result<(f64, f64), FitError> {
        if !(self.i0 > 0.0) {
            return Err(FitError::NonPositiveMean { i0: self.i0 });
        }
        let c = self.b / self.i0;
        let v = self.covariance;
        let var = v[1][1] / (self.i0 * self.i0)
            + self.b * self.b * v[0][0] / self.i0.powi(4)
            - 2.0 * self.b * v[0][1] / self.i0.powi(3);
        Ok((c, var.max(0.0).sqrt()))
    }
}

struct Samples<'a> {
    chi: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
}

/// Active parameters: always (i0, b, phi), plus omega between b and phi when
/// it floats. Internally the full vector [i0, b, omega, phi] is carried and
/// the mask picks the fitted subset.
#[derive(Clone, Copy)]
struct Params {
    full: [f64; 4],
    free_omega: bool,
}

impl Params {
    fn k(&self) -> usize {
        if self.free_omega {
            4
        } else {
            3
        }
    }

    /// Maps an active-parameter slot to its index in the full vector.
    fn slot(&self, j: usize) -> usize {
        if self.free_omega || j < 2 {
            j
        } else {
            3
        }
    }
}

fn model(p: &[f64; 4], chi: f64) -> f64 {
    p[0] + p[1] * (p[2] * chi + p[3]).sin()
}

fn chi_squared(s: &Samples, p: &[f64; 4]) -> f64 {
    s.chi
        .iter()
        .zip(s.y)
        .zip(&s.w)
        .map(|((&x, &y), &w)| {
            let r = y - model(p, x);
            w * r * r
        })
        .sum()
}

/// Weighted normal matrix and gradient at p, over the active parameters.
fn normal_equations(s: &Samples, p: &Params) -> ([[f64; 4]; 4], [f64; 4]) {
    let k = p.k();
    let mut n = [[0.0; 4]; 4];
    let mut g = [0.0; 4];
    for ((&x, &y), &w) in s.chi.iter().zip(s.y).zip(&s.w) {
        let theta = p.full[2] * x + p.full[3];
        let (sin, cos) = theta.sin_cos();
        let full_jac = [1.0, sin, p.full[1] * x * cos, p.full[1] * cos];
        let r = y - (p.full[0] + p.full[1] * sin);
        for a in 0..k {
            let ja = full_jac[p.slot(a)];
            g[a] += w * ja * r;
            for b in a..k {
                n[a][b] += w * ja * full_jac[p.slot(b)];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            n[a][b] = n[b][a];
        }
    }
    (n, g)
}

/// Gauss elimination with partial pivoting on the leading k x k block.
fn solve(k: usize, mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..k {
            let f = a[row][col] / a[col][col];
            for c in col..k {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..k).rev() {
        let mut acc = b[row];
        for c in row + 1..k {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Gauss-Jordan inverse of the leading k x k block.
fn invert(k: usize, a: [[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
    let mut aug = [[0.0; 8]; 4];
    for i in 0..k {
        aug[i][..k].copy_from_slice(&a[i][..k]);
        aug[i][k + i] = 1.0;
    }
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))?;
        if aug[pivot][col].abs() < 1e-300 {
            return None;
        }
        aug.swap(col, pivot);
        let d = aug[col][col];
        for c in 0..2 * k {
            aug[col][c] /= d;
        }
        for row in 0..k {
            if row == col {
                continue;
            }
            let f = aug[row][col];
            for c in 0..2 * k {
                aug[row][c] -= f * aug[col][c];
            }
        }
    }
    let mut out = [[0.0; 4]; 4];
    for i in 0..k {
        out[i][..k].copy_from_slice(&aug[i][k..2 * k]);
    }
    Some(out)
}

/// Exact weighted least squares for fixed omega via the linear basis
/// (1, sin, cos); returns the full parameter vector and its chi-squared.
fn linear_seed(s: &Samples, omega: f64) -> Option<([f64; 4], f64)> {
    let mut n = [[0.0; 4]; 4];
    let mut g = [0.0; 4];
    for ((&x, &y), &w) in s.chi.iter().zip(s.y).zip(&s.w) {
        let (sin, cos) = (omega * x).sin_cos();
        let basis = [1.0, sin, cos];
        for a in 0..3 {
            g[a] += w * basis[a] * y;
            for b in a..3 {
                n[a][b] += w * basis[a] * basis[b];
            }
        }
    }
    for a in 0..3 {
        for b in 0..a {
            n[a][b] = n[b][a];
        }
    }
    let x = solve(3, n, g)?;
    let (i0, a, c) = (x[0], x[1], x[2]);
    // a sin + c cos = b sin(. + phi) with b cos phi = a, b sin phi = c.
    let p = [i0, a.hypot(c), omega, c.atan2(a)];
    let chi2 = chi_squared(s, &p);
    Some((p, chi2))
}

fn wrap_phase(phi: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = (phi + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if w >= std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

/// Fits the sinusoid. `fixed_omega` pins the frequency (the pipeline does
/// this everywhere except on the empty-device fringes that measure it).
pub fn fit_sinusoid(ifg: &Interferogram, fixed_omega: Option<f64>) -> Result<FitResult, FitError> {
    let n = ifg.len();
    let free_omega = fixed_omega.is_none();
    let k = if free_omega { 4 } else { 3 };
    if n < k + 1 {
        return Err(FitError::InsufficientPoints { n, k });
    }
    if let Some(w) = fixed_omega {
        if !w.is_finite() || w <= 0.0 {
            return Err(FitError::BadFixedOmega { omega: w });
        }
    }
    let mut weights = Vec::with_capacity(n);
    for (index, (&s, (&x, &y))) in ifg.sigma.iter().zip(ifg.chi.iter().zip(&ifg.value)).enumerate()
    {
        if !s.is_finite() || s <= 0.0 {
            return Err(FitError::BadSigma { index });
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(FitError::NonFinite { index });
        }
        weights.push(1.0 / (s * s));
    }
    let span = ifg.chi[n - 1] - ifg.chi[0];
    if !(span.abs() > 1e-9) {
        return Err(FitError::DegenerateGrid);
    }
    let samples = Samples { chi: &ifg.chi, y: &ifg.value, w: weights };

    // Seed: exact linear solution at the fixed frequency, or the best of a
    // frequency grid around nominal.
    let seed = if let Some(omega) = fixed_omega {
        linear_seed(&samples, omega)
    } else {
        (0..OMEGA_GRID_N)
            .filter_map(|i| {
                let omega = OMEGA_NOMINAL * (0.5 + i as f64 / (OMEGA_GRID_N - 1) as f64);
                linear_seed(&samples, omega)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
    };
    let (full, mut chi2) = seed.ok_or(FitError::SingularNormalMatrix)?;
    let mut p = Params { full, free_omega };

    // Damped Gauss-Newton polish.
    let mut lambda = 1e-6;
    let mut converged = false;
    for _ in 0..MAX_ITERS {
        let (nmat, grad) = normal_equations(&samples, &p);
        let max_diag = (0..k).map(|i| nmat[i][i]).fold(0.0_f64, f64::max);
        let floor = 1e-12 * max_diag + 1e-300;
        let mut accepted = false;
        while lambda <= MAX_LAMBDA {
            let mut damped = nmat;
            for i in 0..k {
                damped[i][i] += lambda * nmat[i][i].max(floor);
            }
            let step = match solve(k, damped, grad) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial = p;
            for j in 0..k {
                trial.full[p.slot(j)] += step[j];
            }
            if trial.free_omega && trial.full[2] <= 0.0 {
                lambda *= 10.0;
                continue;
            }
            let trial_chi2 = chi_squared(&samples, &trial.full);
            if trial_chi2.is_finite() && trial_chi2 <= chi2 {
                let gain = chi2 - trial_chi2;
                p = trial;
                chi2 = trial_chi2;
                lambda = (lambda / 8.0).max(1e-15);
                accepted = true;
                if gain < CONVERGENCE_REL * (1.0 + chi2) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // Damping exhausted without any downhill step: the seed already
            // sits at the minimum to machine precision.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(FitError::NonConvergence { iters: MAX_ITERS });
    }

    // Canonical form before extracting the covariance so its derivatives
    // refer to the reported parameters.
    if p.full[1] < 0.0 {
        p.full[1] = -p.full[1];
        p.full[3] += std::f64::consts::PI;
    }
    p.full[3] = wrap_phase(p.full[3]);

    let (nmat, _) = normal_equations(&samples, &p);
    let cov_small = invert(k, nmat).or_else(|| {
        let max_diag = (0..k).map(|i| nmat[i][i]).fold(0.0_f64, f64::max);
        let mut ridged = nmat;
        for i in 0..k {
            ridged[i][i] += 1e-12 * max_diag + 1e-300;
        }
        invert(k, ridged)
    });
    let cov_small = cov_small.ok_or(FitError::SingularNormalMatrix)?;

    // Embed into the fixed (i0, b, omega, phi) layout.
    let mut covariance = [[0.0; 4]; 4];
    for a in 0..k {
        for b in 0..k {
            covariance[p.slot(a)][p.slot(b)] = cov_small[a][b];
        }
    }
    let err = |j: usize| covariance[j][j].max(0.0).sqrt();
    Ok(FitResult {
        i0: p.full[0],
        b: p.full[1],
        omega: p.full[2],
        phi: p.full[3],
        d_i0: err(0),
        d_b: err(1),
        d_omega: err(2),
        d_phi: err(3),
        covariance,
        chi2_red: chi2 / (n - k) as f64,
        omega_fixed: !free_omega,
        n_points: n,
    })
}
