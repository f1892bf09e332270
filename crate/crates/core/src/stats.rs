//! Welch's t-test, Pearson correlation and the Student-t tail they share.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

/// Smallest reported p-value.
pub const P_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample {which} has {n} values, need at least {min}")]
    TooFew { which: &'static str, n: usize, min: usize },
    #[error("both samples have zero variance")]
    ZeroVariance,
    #[error("input {0} has zero variance")]
    Constant(&'static str),
    #[error("x has {x} values but y has {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("degrees of freedom must be positive, got {0}")]
    InvalidDof(f64),
    #[error("non-finite input")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// Mean of the first sample is greater.
    AGreater,
    /// Mean of the second sample is greater.
    BGreater,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchResult {
    pub t_statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PearsonResult {
    pub r: f64,
    pub p_two_sided: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

fn floor_p(p: f64) -> f64 {
    p.clamp(P_FLOOR, 1.0)
}

pub fn welch_t(a: &[f64], b: &[f64], alternative: Alternative) -> Result<WelchResult, StatsError> {
    for (which, s) in [("a", a), ("b", b)] {
        if s.len() < 2 {
            return Err(StatsError::TooFew {
                which,
                n: s.len(),
                min: 2,
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 && vb == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let t = (ma - mb) / (sa + sb).sqrt();
    let dof = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = match alternative {
        Alternative::AGreater => t_tail(t, dof)?,
        Alternative::BGreater => t_tail(-t, dof)?,
        Alternative::TwoSided => 2.0 * t_tail(t.abs(), dof)?,
    };
    Ok(WelchResult {
        t_statistic: t,
        dof,
        p_value: floor_p(p),
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<PearsonResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew {
            which: "x",
            n: x.len(),
            min: 3,
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let (dx, dy) = (xi - mx, yi - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::Constant("x"));
    }
    if syy == 0.0 {
        return Err(StatsError::Constant("y"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let dof = n - 2.0;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (dof / (1.0 - r * r)).sqrt();
        2.0 * t_tail(t.abs(), dof)?
    };
    Ok(PearsonResult {
        r,
        p_two_sided: floor_p(p),
    })
}

/// Upper tail `P(T > t)` of Student's t with `dof` degrees of freedom.
pub fn t_tail(t: f64, dof: f64) -> Result<f64, StatsError> {
    if !(dof > 0.0) || !dof.is_finite() {
        return Err(StatsError::InvalidDof(dof));
    }
    if t.is_nan() {
        return Err(StatsError::NonFinite);
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 0.0 } else { 1.0 });
    }
    let t2 = t * t;
    // x = dof / (dof + t^2), kept in log form for accuracy at large dof.
    let ln_x = -(t2 / dof).ln_1p();
    let ln_1mx = (t2 / (dof + t2)).ln();
    let x = dof / (dof + t2);
    let half = 0.5 * reg_inc_beta(x, ln_x, ln_1mx, dof / 2.0, 0.5);
    Ok(if t > 0.0 { half } else { 1.0 - half })
}

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + 7.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Stirling-series remainder of `ln_gamma(z) - [(z - 1/2) ln z - z + ln(2 pi)/2]`.
fn stirling_correction(z: f64) -> f64 {
    let z2 = z * z;
    (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * z2)) / z2) / z2) / z
}

fn ln_beta(a: f64, b: f64) -> f64 {
    if b == 0.5 && a >= 10.0 {
        // ln B(a, 1/2) = ln gamma(1/2) + [ln gamma(a) - ln gamma(a + 1/2)], difference taken analytically.
        let diff =
            -(a * (0.5 / a).ln_1p()) - 0.5 * a.ln() + 0.5 + stirling_correction(a) - stirling_correction(a + 0.5);
        return 0.5 * PI.ln() + diff;
    }
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta `I_x(a, b)` via the Lentz continued fraction.
fn reg_inc_beta(x: f64, ln_x: f64, ln_1mx: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (a * ln_x + b * ln_1mx - ln_beta(a, b)).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_fraction(1.0 - x, b, a) / b
    }
}

fn beta_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let guard = |v: f64| if v.abs() < TINY { TINY } else { v };
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..100_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
