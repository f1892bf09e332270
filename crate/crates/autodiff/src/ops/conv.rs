use rayon::prelude::*;

use super::Op;
use crate::error::{AutodiffError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Stride, asymmetric zero padding and group count of a 1-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dSpec {
    pub stride: usize,
    pub padding: (usize, usize),
    pub groups: usize,
}

impl Conv1dSpec {
    pub fn new(stride: usize, padding: (usize, usize), groups: usize) -> Self {
        Conv1dSpec {
            stride,
            padding,
            groups,
        }
    }

    /// Padding split as `left = ceil((k - s) / 2)`, `right = floor((k - s) / 2)`.
    ///
    /// With stride 1 this preserves the length; with stride 2 the output is `floor(L / 2)`.
    pub fn same(kernel: usize, stride: usize, groups: usize) -> Self {
        let total = kernel.saturating_sub(stride);
        Conv1dSpec {
            stride,
            padding: (total.div_ceil(2), total / 2),
            groups,
        }
    }
}

/// Output length, or `None` when the kernel does not fit in the padded input.
pub fn conv1d_output_len(len: usize, kernel: usize, spec: &Conv1dSpec) -> Option<usize> {
    let padded = len + spec.padding.0 + spec.padding.1;
    if kernel == 0 || spec.stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / spec.stride + 1)
}

#[derive(Debug, Clone, Copy)]
struct Dims {
    batch: usize,
    cin: usize,
    cout: usize,
    len: usize,
    kernel: usize,
    lout: usize,
    stride: usize,
    pad: usize,
    groups: usize,
}

impl Dims {
    fn cin_per_group(&self) -> usize {
        self.cin / self.groups
    }

    fn cout_per_group(&self) -> usize {
        self.cout / self.groups
    }

    /// Output positions `t` whose tap `k` lands inside the unpadded input.
    #[inline]
    fn valid_range(&self, k: usize) -> (usize, usize) {
        let lo = if self.pad > k {
            (self.pad - k).div_ceil(self.stride)
        } else {
            0
        };
        if self.len + self.pad <= k {
            return (0, 0);
        }
        let hi = ((self.len - 1 + self.pad - k) / self.stride + 1).min(self.lout);
        (lo.min(hi), hi)
    }
}

impl Tape {
    /// Grouped 1-D cross-correlation over `[B, Cin, L]` with weight `[Cout, Cin/groups, K]`.
    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Option<Var>, spec: Conv1dSpec) -> Result<Var> {
        const OP: &str = "conv1d";
        let xs = self.check_rank(OP, input, 3)?.to_vec();
        let ws = self.check_rank(OP, weight, 3)?.to_vec();
        let (batch, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, cin_g, kernel) = (ws[0], ws[1], ws[2]);
        if spec.stride == 0 {
            return Err(AutodiffError::invalid(OP, "stride must be at least 1"));
        }
        if spec.groups == 0 || cin % spec.groups != 0 {
            return Err(AutodiffError::invalid(
                OP,
                format!("input channels {cin} not divisible by groups {}", spec.groups),
            ));
        }
        if cout % spec.groups != 0 {
            return Err(AutodiffError::invalid(
                OP,
                format!("output channels {cout} not divisible by groups {}", spec.groups),
            ));
        }
        if cin_g != cin / spec.groups {
            return Err(AutodiffError::mismatch(
                OP,
                "weight in-channels per group",
                cin / spec.groups,
                cin_g,
            ));
        }
        if let Some(b) = bias {
            let bs = self.check_rank(OP, b, 1)?;
            if bs[0] != cout {
                return Err(AutodiffError::mismatch(OP, "bias length", cout, bs[0]));
            }
        }
        let lout = conv1d_output_len(len, kernel, &spec).ok_or(AutodiffError::KernelExceedsPaddedLength {
            kernel,
            padded: len + spec.padding.0 + spec.padding.1,
        })?;
        let dims = Dims {
            batch,
            cin,
            cout,
            len,
            kernel,
            lout,
            stride: spec.stride,
            pad: spec.padding.0,
            groups: spec.groups,
        };
        let out = forward(
            self.values(input),
            self.values(weight),
            bias.map(|b| self.values(b)),
            dims,
        );
        Ok(self.push(
            Tensor::from_parts(vec![batch, cout, lout], out),
            Op::Conv1d {
                input,
                weight,
                bias,
                spec,
            },
        ))
    }
}

/// Upper bound on im2col buffer size (elements); larger batches are processed in chunks.
const COLS_BUDGET: usize = 1 << 22;

/// Per-group weight and bias gradients.
type GroupGrads = (Option<Vec<f64>>, Option<Vec<f64>>);

impl Dims {
    fn rows(&self) -> usize {
        self.cin_per_group() * self.kernel
    }

    /// Batch items per chunk so that one group's column buffer stays within budget.
    fn chunk(&self) -> usize {
        (COLS_BUDGET / (self.rows() * self.lout).max(1)).clamp(1, self.batch)
    }

    /// Unfolds group `g` of batch items `b0..b0+nb` into `[cin_g * K, nb * lout]`.
    /// `cols` must arrive zeroed; padding positions are never written.
    fn im2col(&self, x: &[f64], g: usize, b0: usize, nb: usize, cols: &mut [f64]) {
        let cin_g = self.cin_per_group();
        let n = nb * self.lout;
        for cig in 0..cin_g {
            let ci = g * cin_g + cig;
            for k in 0..self.kernel {
                let (t0, t1) = self.valid_range(k);
                if t0 >= t1 {
                    continue;
                }
                let p0 = t0 * self.stride + k - self.pad;
                let row = &mut cols[(cig * self.kernel + k) * n..(cig * self.kernel + k + 1) * n];
                for bi in 0..nb {
                    let xrow = &x[((b0 + bi) * self.cin + ci) * self.len..((b0 + bi) * self.cin + ci + 1) * self.len];
                    let dst = &mut row[bi * self.lout + t0..bi * self.lout + t1];
                    if self.stride == 1 {
                        dst.copy_from_slice(&xrow[p0..p0 + (t1 - t0)]);
                    } else {
                        for (o, &v) in dst.iter_mut().zip(xrow[p0..].iter().step_by(self.stride)) {
                            *o = v;
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Dims::im2col`]: scatter-adds columns back into `gx`.
    fn col2im(&self, cols: &[f64], g: usize, b0: usize, nb: usize, gx: &mut [f64]) {
        let cin_g = self.cin_per_group();
        let n = nb * self.lout;
        for cig in 0..cin_g {
            let ci = g * cin_g + cig;
            for k in 0..self.kernel {
                let (t0, t1) = self.valid_range(k);
                if t0 >= t1 {
                    continue;
                }
                let p0 = t0 * self.stride + k - self.pad;
                let row = &cols[(cig * self.kernel + k) * n..(cig * self.kernel + k + 1) * n];
                for bi in 0..nb {
                    let base = ((b0 + bi) * self.cin + ci) * self.len;
                    let gxrow = &mut gx[base..base + self.len];
                    let src = &row[bi * self.lout + t0..bi * self.lout + t1];
                    if self.stride == 1 {
                        for (o, &v) in gxrow[p0..p0 + (t1 - t0)].iter_mut().zip(src) {
                            *o += v;
                        }
                    } else {
                        for (o, &v) in gxrow[p0..].iter_mut().step_by(self.stride).zip(src) {
                            *o += v;
                        }
                    }
                }
            }
        }
    }
}

/// Row-major `c[m x n] = alpha * a[m x k] * b[k x n] + beta * c`, with explicit strides for `a` and `b`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: strides describe in-bounds views of `a` (m x k), `b` (k x n) and `c` (m x n).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn forward(x: &[f64], w: &[f64], bias: Option<&[f64]>, d: Dims) -> Vec<f64> {
    let mut out = vec![0.0; d.batch * d.cout * d.lout];
    let (cout_g, rows, chunk) = (d.cout_per_group(), d.rows(), d.chunk());
    for b0 in (0..d.batch).step_by(chunk) {
        let nb = chunk.min(d.batch - b0);
        let n = nb * d.lout;
        let per_group: Vec<Vec<f64>> = (0..d.groups)
            .into_par_iter()
            .map(|g| {
                let mut cols = vec![0.0; rows * n];
                d.im2col(x, g, b0, nb, &mut cols);
                let mut y = vec![0.0; cout_g * n];
                let wg = &w[g * cout_g * rows..(g + 1) * cout_g * rows];
                gemm(
                    cout_g,
                    rows,
                    n,
                    wg,
                    (rows as isize, 1),
                    &cols,
                    (n as isize, 1),
                    0.0,
                    &mut y,
                );
                y
            })
            .collect();
        for (g, y) in per_group.iter().enumerate() {
            for cog in 0..cout_g {
                let co = g * cout_g + cog;
                let shift = bias.map_or(0.0, |bias| bias[co]);
                for bi in 0..nb {
                    let src = &y[cog * n + bi * d.lout..cog * n + (bi + 1) * d.lout];
                    let base = ((b0 + bi) * d.cout + co) * d.lout;
                    for (o, &v) in out[base..base + d.lout].iter_mut().zip(src) {
                        *o = v + shift;
                    }
                }
            }
        }
    }
    out
}

pub(super) fn backward(
    tape: &Tape,
    input: Var,
    weight: Var,
    bias: Option<Var>,
    spec: Conv1dSpec,
    out_shape: &[usize],
    gout: &[f64],
) -> Vec<(Var, Vec<f64>)> {
    let xs = tape.shape(input);
    let ws = tape.shape(weight);
    let d = Dims {
        batch: xs[0],
        cin: xs[1],
        cout: ws[0],
        len: xs[2],
        kernel: ws[2],
        lout: out_shape[2],
        stride: spec.stride,
        pad: spec.padding.0,
        groups: spec.groups,
    };
    let x = tape.values(input);
    let w = tape.values(weight);
    let (cout_g, rows, chunk) = (d.cout_per_group(), d.rows(), d.chunk());
    let want_x = tape.wants_grad(input);
    let want_w = tape.wants_grad(weight);
    let mut gx = want_x.then(|| vec![0.0; x.len()]);
    let mut gw = want_w.then(|| vec![0.0; w.len()]);
    if want_x || want_w {
        for b0 in (0..d.batch).step_by(chunk) {
            let nb = chunk.min(d.batch - b0);
            let n = nb * d.lout;
            let per_group: Vec<GroupGrads> = (0..d.groups)
                .into_par_iter()
                .map(|g| {
                    let mut gy = vec![0.0; cout_g * n];
                    for cog in 0..cout_g {
                        let co = g * cout_g + cog;
                        for bi in 0..nb {
                            let base = ((b0 + bi) * d.cout + co) * d.lout;
                            gy[cog * n + bi * d.lout..cog * n + (bi + 1) * d.lout]
                                .copy_from_slice(&gout[base..base + d.lout]);
                        }
                    }
                    let gw_g = want_w.then(|| {
                        let mut cols = vec![0.0; rows * n];
                        d.im2col(x, g, b0, nb, &mut cols);
                        let mut acc = vec![0.0; cout_g * rows];
                        gemm(
                            cout_g,
                            n,
                            rows,
                            &gy,
                            (n as isize, 1),
                            &cols,
                            (1, n as isize),
                            0.0,
                            &mut acc,
                        );
                        acc
                    });
                    let gcols = want_x.then(|| {
                        let wg = &w[g * cout_g * rows..(g + 1) * cout_g * rows];
                        let mut gc = vec![0.0; rows * n];
                        gemm(
                            rows,
                            cout_g,
                            n,
                            wg,
                            (1, rows as isize),
                            &gy,
                            (n as isize, 1),
                            0.0,
                            &mut gc,
                        );
                        gc
                    });
                    (gw_g, gcols)
                })
                .collect();
            for (g, (gw_g, gcols)) in per_group.into_iter().enumerate() {
                if let (Some(gw), Some(acc)) = (gw.as_mut(), gw_g) {
                    for (o, v) in gw[g * cout_g * rows..(g + 1) * cout_g * rows].iter_mut().zip(acc) {
                        *o += v;
                    }
                }
                if let (Some(gx), Some(gc)) = (gx.as_mut(), gcols) {
                    d.col2im(&gc, g, b0, nb, gx);
                }
            }
        }
    }
    let mut grads = Vec::with_capacity(3);
    if let Some(gx) = gx {
        grads.push((input, gx));
    }
    if let Some(gw) = gw {
        grads.push((weight, gw));
    }
    if let Some(bias) = bias.filter(|&b| tape.wants_grad(b)) {
        let mut gb = vec![0.0; d.cout];
        for b in 0..d.batch {
            for (co, gbv) in gb.iter_mut().enumerate() {
                *gbv += gout[(b * d.cout + co) * d.lout..(b * d.cout + co + 1) * d.lout]
                    .iter()
                    .sum::<f64>();
            }
        }
        grads.push((bias, gb));
    }
    grads
}
