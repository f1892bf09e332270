//! Central-difference verification of analytic gradients.

use crate::error::{AutodiffError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Outcome of comparing analytic and numeric partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Max over checked coordinates of `|a - n| / max(1, |a|, |n|)`.
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Checks every coordinate of `x`; returns the max relative error.
///
/// `f` records a scalar function of its argument on the given tape. It is
/// called once with gradient tracking and twice per coordinate without, so any
/// randomness inside it must be re-seeded on every call.
pub fn finite_diff_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: FnMut(&mut Tape, Var) -> Result<Var>,
{
    let coords: Vec<usize> = (0..x.numel()).collect();
    finite_diff_check_at(f, x, h, &coords).map(|r| r.max_rel_error)
}

/// Like [`finite_diff_check`], restricted to the listed flat indices.
pub fn finite_diff_check_at<F>(mut f: F, x: &Tensor, h: f64, coords: &[usize]) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, Var) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(AutodiffError::invalid(
            "finite_diff_check",
            format!("step must be positive, got {h}"),
        ));
    }
    let mut tape = Tape::new();
    let xv = tape.param(x.clone().with_requires_grad(true));
    let out = f(&mut tape, xv)?;
    tape.backward(out)?;
    let analytic = tape
        .grad(xv)
        .map(|g| g.to_vec())
        .unwrap_or_else(|| vec![0.0; x.numel()]);

    let mut eval = |point: Tensor| -> Result<f64> {
        let mut t = Tape::new();
        let v = t.constant(point);
        let out = f(&mut t, v)?;
        Ok(t.values(out)[0])
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: coords.len(),
    };
    for &i in coords {
        let mut plus = x.clone();
        plus.values_mut()[i] += h;
        let mut minus = x.clone();
        minus.values_mut()[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h);
        let a = analytic[i];
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        if err > report.max_rel_error || (err.is_nan() && !report.max_rel_error.is_nan()) {
            report = GradCheckReport {
                max_rel_error: err,
                worst_index: i,
                analytic: a,
                numeric,
                coordinates: coords.len(),
            };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::new(vec![4], vec![0.1, -2.0, 3.5, 7.0]).unwrap();
        let err = finite_diff_check(
            |tape, v| {
                let c = tape.constant(Tensor::new(vec![4], vec![1.0, -3.0, 0.25, 2.0]).unwrap());
                let p = tape.mul(v, c)?;
                Ok(tape.sum(p))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn square_sum() {
        let x = Tensor::new(vec![3], vec![1.0, -2.0, 0.3]).unwrap();
        let err = finite_diff_check(
            |tape, v| {
                let p = tape.mul(v, v)?;
                Ok(tape.sum(p))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn rejects_nonpositive_step() {
        let x = Tensor::zeros(&[1]);
        assert!(finite_diff_check(|t, v| Ok(t.sum(v)), &x, 0.0).is_err());
    }
}
