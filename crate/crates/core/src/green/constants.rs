//! Green constants of the unit-rate simple walk on Z^d.
//!
//! The return-to-origin transition probability of the unit-rate walk is
//! p_t(0,0) = (e^{−t/d} I₀(t/d))^d, the Fourier integral over the torus
//! factoring into one modified Bessel function per coordinate. Hence
//!
//!   g = ∫₀^∞ p_t(0,0) dt = d ∫₀^∞ (e^{−x} I₀(x))^d dx,
//!
//! integrated by composite Gauss–Legendre on [0, X] plus an asymptotic
//! tail from the large-x expansion of e^{−x} I₀(x).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Result};

const SERIES_CUTOFF: f64 = 30.0;
const TAIL_START: f64 = 60.0;
const TAIL_TERMS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenConstant {
    pub dim: usize,
    pub value: f64,
    /// Estimated absolute quadrature error.
    pub error: f64,
}

/// e^{−x} I₀(x) for x ≥ 0.
pub fn scaled_bessel_i0(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        // I₀(x) = Σ (x²/4)^k / (k!)²
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        let c = asymptotic_coefficients(TAIL_TERMS);
        let mut s = 0.0;
        let mut p = 1.0;
        for ck in c {
            s += ck * p;
            p /= x;
        }
        s / (2.0 * PI * x).sqrt()
    }
}

/// a_k in e^{−x} I₀(x) ~ (2πx)^{−1/2} Σ a_k x^{−k}: a_k = ((2k−1)!!)² / (k! 8^k).
fn asymptotic_coefficients(terms: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(terms);
    let mut a = 1.0;
    c.push(a);
    for k in 1..terms {
        let kf = k as f64;
        a *= (2.0 * kf - 1.0).powi(2) / (8.0 * kf);
        c.push(a);
    }
    c
}

/// Nodes and weights of the n-point Gauss–Legendre rule on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn composite(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (xs, ws) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let s: f64 = xs
            .iter()
            .zip(&ws)
            .map(|(x, w)| w * f(mid + 0.5 * h * x))
            .sum();
        total += 0.5 * h * s;
    }
    total
}

/// ∫_X^∞ (e^{−x} I₀(x))^d dx from the term-by-term integrated power of the
/// asymptotic series.
fn tail_integral(d: usize, x0: f64) -> f64 {
    let a = asymptotic_coefficients(TAIL_TERMS);
    let mut pow = vec![0.0; TAIL_TERMS];
    pow[0] = 1.0;
    for _ in 0..d {
        let mut next = vec![0.0; TAIL_TERMS];
        for (i, &p) in pow.iter().enumerate() {
            for (j, &c) in a.iter().enumerate() {
                if i + j < TAIL_TERMS {
                    next[i + j] += p * c;
                }
            }
        }
        pow = next;
    }
    let half = d as f64 / 2.0;
    let pre = (2.0 * PI).powf(-half);
    pow.iter()
        .enumerate()
        .map(|(k, &c)| {
            let e = half + k as f64 - 1.0;
            pre * c * x0.powf(-e) / e
        })
        .sum()
}

/// g = G(0,0) for the unit-rate simple walk on Z^d.
pub fn lattice_green_constant(dim: usize) -> Result<GreenConstant> {
    if dim < 3 {
        return Err(invalid(format!(
            "the walk on Z^{dim} is recurrent: g is infinite"
        )));
    }
    let f = |x: f64| scaled_bessel_i0(x).powi(dim as i32);
    let coarse = composite(f, 0.0, TAIL_START, 60, 16);
    let fine = composite(f, 0.0, TAIL_START, 120, 20);
    let tail = tail_integral(dim, TAIL_START);
    let value = dim as f64 * (fine + tail);
    let error = dim as f64 * ((fine - coarse).abs() + 1e-14 * tail.abs() + 1e-13);
    Ok(GreenConstant { dim, value, error })
}

/// a_d = (d/2) Γ(d/2 − 1) π^{−d/2}, the coefficient of |x|^{2−d} in the
/// asymptotics of the Green function of the unit-rate walk.
pub fn a_d_constant(dim: usize) -> Result<f64> {
    if dim < 3 {
        return Err(invalid(format!("a_d is defined for d ≥ 3, got {dim}")));
    }
    let h = dim as f64 / 2.0;
    Ok(h * gamma(h - 1.0) * PI.powf(-h))
}

/// Closed form of g in three dimensions:
/// √6 / (32 π³) · Γ(1/24) Γ(5/24) Γ(7/24) Γ(11/24).
pub fn watson_closed_form_d3() -> f64 {
    6f64.sqrt() / (32.0 * PI.powi(3))
        * gamma(1.0 / 24.0)
        * gamma(5.0 / 24.0)
        * gamma(7.0 / 24.0)
        * gamma(11.0 / 24.0)
}

/// Slope of G_N(x,x) in log N for a planar walk with total jump rate 1 and
/// step covariance 𝒢: 1/(π √det 𝒢).
pub fn potential_slope_2d(sqrt_det: f64) -> f64 {
    1.0 / (PI * sqrt_det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bessel_branches_agree() {
        // compare the two branches around the cutoff against each other
        for &x in &[25.0, 28.0, 32.0, 40.0] {
            let q = 0.25 * x * x;
            let (mut term, mut sum, mut k) = (1.0, 1.0, 1.0);
            while term > 1e-18 * sum {
                term *= q / (k * k);
                sum += term;
                k += 1.0;
            }
            assert_relative_eq!(scaled_bessel_i0(x), sum * (-x).exp(), max_relative = 1e-12);
        }
        assert_eq!(scaled_bessel_i0(0.0), 1.0);
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(5);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert_relative_eq!(integral, 2.0 / 9.0, epsilon = 1e-14);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn three_dimensional_constant() {
        let g = lattice_green_constant(3).unwrap();
        assert!(g.error < 1e-6);
        assert_relative_eq!(g.value, watson_closed_form_d3(), epsilon = 1e-9);
        assert_relative_eq!(g.value, 1.516386059, epsilon = 1e-8);
    }

    #[test]
    fn decreases_towards_one() {
        let gs: Vec<f64> = (3..=8)
            .map(|d| lattice_green_constant(d).unwrap().value)
            .collect();
        assert!(gs.windows(2).all(|w| w[1] < w[0]));
        assert!(gs.iter().all(|&g| g > 1.0));
        assert_relative_eq!(gs[1], 1.2394671218, epsilon = 1e-8);
        assert!(lattice_green_constant(2).is_err());
    }

    #[test]
    fn a_d_values() {
        assert_relative_eq!(a_d_constant(3).unwrap(), 3.0 / (2.0 * PI), epsilon = 1e-12);
        assert_relative_eq!(a_d_constant(4).unwrap(), 2.0 / (PI * PI), epsilon = 1e-12);
        for d in 3..9 {
            let h = d as f64 / 2.0;
            assert_relative_eq!(
                a_d_constant(d).unwrap() * PI.powf(h) / h,
                gamma(h - 1.0),
                max_relative = 1e-12
            );
        }
    }
}
