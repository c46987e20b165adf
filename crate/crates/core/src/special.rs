//! Scalar special functions shared by the Legendre catalog and the penalties.
//!
//! Everything here is written for accuracy near the places the solver lives:
//! exponential arguments that would overflow, Bregman distances between
//! nearly equal points, and the dilogarithm on the whole half-line `x <= 1`.

use std::f64::consts::PI;

pub const PI2_6: f64 = PI * PI / 6.0;
pub const PI2_12: f64 = PI * PI / 12.0;

/// Power series `sum x^k / k^2`, valid for `|x| <= 0.5`.
fn dilog_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = 0.0;
    for k in 1..200u32 {
        let contrib = term / f64::from(k * k);
        sum += contrib;
        if contrib.abs() <= 1e-18 * sum.abs().max(1e-300) {
            break;
        }
        term *= x;
    }
    sum
}

/// Real dilogarithm `Li2(x)` for `x <= 1`; `NaN` above 1.
pub fn dilog(x: f64) -> f64 {
    if x.is_nan() || x > 1.0 {
        f64::NAN
    } else if x == 1.0 {
        PI2_6
    } else if x > 0.5 {
        // reflection t -> 1 - t
        PI2_6 - x.ln() * (-x).ln_1p() - dilog_series(1.0 - x)
    } else if x >= -0.5 {
        dilog_series(x)
    } else if x >= -1.0 {
        // Landen: x/(x-1) lands in [1/3, 1/2]
        let ln1mx = (-x).ln_1p();
        -dilog_series(x / (x - 1.0)) - 0.5 * ln1mx * ln1mx
    } else {
        // inversion to (-1, 0)
        let l = (-x).ln();
        -PI2_6 - 0.5 * l * l - dilog(1.0 / x)
    }
}

/// `ln(1 + e^t)` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(e^t - 1)` for `t > 0`.
pub fn log_expm1(t: f64) -> f64 {
    if t > 30.0 {
        t + (-(-t).exp()).ln_1p()
    } else {
        t.exp_m1().ln()
    }
}

/// `ln sum exp(u_i)`, shifted by the maximum.
pub fn logsumexp(u: &[f64]) -> f64 {
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + u.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Antiderivative `int_0^t ln(1 + e^s) ds + pi^2/12 = -Li2(-e^t)`.
pub fn softplus_integral(t: f64) -> f64 {
    if t <= 0.0 {
        -dilog(-t.exp())
    } else {
        PI2_6 + 0.5 * t * t + dilog(-(-t).exp())
    }
}

/// Spence entropy `int_0^t ln(e^s - 1) ds` for `t >= 0`.
pub fn spence_entropy(t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let w = -(-t).exp_m1(); // 1 - e^{-t}
    if w <= 0.5 {
        0.5 * t * t + t * w.ln() - dilog(w)
    } else {
        0.5 * t * t + dilog((-t).exp()) - PI2_6
    }
}

/// `x - ln(1 + x)` for `x > -1`, accurate near zero.
pub fn x_minus_log1p(x: f64) -> f64 {
    if x.abs() < 0.1 {
        // x^2/2 - x^3/3 + x^4/4 - ...
        let mut pow = x * x;
        let mut sum = 0.0;
        for k in 2..60 {
            let term = pow / k as f64;
            sum += if k % 2 == 0 { term } else { -term };
            if term.abs() < 1e-20 * sum.abs() {
                break;
            }
            pow *= x;
        }
        sum
    } else {
        x - x.ln_1p()
    }
}

/// `(1 + x) ln(1 + x) - x` for `x >= -1`, accurate near zero.
pub fn xlogx_excess(x: f64) -> f64 {
    if x == -1.0 {
        return 1.0;
    }
    if x.abs() < 0.1 {
        // sum_{k>=2} (-1)^k x^k / (k (k-1))
        let mut pow = x * x;
        let mut sum = 0.0;
        for k in 2..60 {
            let term = pow / (k * (k - 1)) as f64;
            sum += if k % 2 == 0 { term } else { -term };
            if term.abs() < 1e-20 * sum.abs() {
                break;
            }
            pow *= x;
        }
        sum
    } else {
        (1.0 + x) * x.ln_1p() - x
    }
}

// 8-point Gauss-Legendre on [-1, 1].
const GL_NODES: [f64; 4] =
    [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_2];
const GL_WEIGHTS: [f64; 4] =
    [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

/// Gauss-Legendre integral of a smooth `f` over `[a, b]`.
pub(crate) fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        acc += w * (f(mid + half * x) + f(mid - half * x));
    }
    acc * half
}
