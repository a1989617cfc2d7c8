//! Differentiable kernels: 2-D convolution, max pooling, linear maps,
//! ReLU, softmax cross-entropy, temporal mean pooling and concatenation.
//!
//! Each forward has a matching exact backward. There is no graph; callers
//! compose ops and invoke the backwards in reverse order themselves.

use crate::error::{Error, Result};
use crate::netcore::Tensor;

fn expect_rank(t: &Tensor, rank: usize, what: &str) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::Shape(format!(
            "{what}: expected rank {rank}, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// Valid (no padding) 3x3 cross-correlation with stride 1.
///
/// `input` is `[C_in, H, W]`, `kernels` `[C_out, C_in, 3, 3]`, `bias`
/// `[C_out]`; output is `[C_out, H-2, W-2]`.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    expect_rank(input, 3, "conv2d input")?;
    expect_rank(kernels, 4, "conv2d kernels")?;
    expect_rank(bias, 1, "conv2d bias")?;
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let c_out = kernels.shape()[0];
    if kernels.shape() != [c_out, c_in, 3, 3] {
        return Err(Error::Shape(format!(
            "conv2d kernels {:?} incompatible with input {:?}",
            kernels.shape(),
            input.shape()
        )));
    }
    if bias.shape() != [c_out] {
        return Err(Error::Shape(format!(
            "conv2d bias {:?} does not match {} output channels",
            bias.shape(),
            c_out
        )));
    }
    if h < 3 || w < 3 {
        return Err(Error::Shape(format!(
            "conv2d input spatial dims {h}x{w} below kernel size 3x3"
        )));
    }
    let (oh, ow) = (h - 2, w - 2);
    let mut out = Tensor::zeros(&[c_out, oh, ow]);
    let x = input.data();
    let k = kernels.data();
    let o = out.data_mut();
    for co in 0..c_out {
        let ob = co * oh * ow;
        let b = bias.data()[co];
        o[ob..ob + oh * ow].fill(b);
        for ci in 0..c_in {
            let xb = ci * h * w;
            let kb = (co * c_in + ci) * 9;
            for ky in 0..3 {
                for kx in 0..3 {
                    let kv = k[kb + ky * 3 + kx];
                    if kv == 0.0 {
                        continue;
                    }
                    for y in 0..oh {
                        let xrow = xb + (y + ky) * w + kx;
                        let orow = ob + y * ow;
                        for xcol in 0..ow {
                            o[orow + xcol] += kv * x[xrow + xcol];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] w.r.t. input, kernels and bias.
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let c_out = kernels.shape()[0];
    let (oh, ow) = (h - 2, w - 2);
    if grad_out.shape() != [c_out, oh, ow] {
        return Err(Error::Shape(format!(
            "conv2d_backward grad {:?}, expected {:?}",
            grad_out.shape(),
            [c_out, oh, ow]
        )));
    }
    let mut gx = Tensor::zeros(input.shape());
    let mut gk = Tensor::zeros(kernels.shape());
    let mut gb = Tensor::zeros(&[c_out]);
    let x = input.data();
    let k = kernels.data();
    let g = grad_out.data();
    {
        let gbd = gb.data_mut();
        for co in 0..c_out {
            let ob = co * oh * ow;
            gbd[co] = g[ob..ob + oh * ow].iter().sum();
        }
    }
    {
        let gkd = gk.data_mut();
        let gxd = gx.data_mut();
        for co in 0..c_out {
            let ob = co * oh * ow;
            for ci in 0..c_in {
                let xb = ci * h * w;
                let kb = (co * c_in + ci) * 9;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let kv = k[kb + ky * 3 + kx];
                        let mut acc = 0.0;
                        for y in 0..oh {
                            let xrow = xb + (y + ky) * w + kx;
                            let orow = ob + y * ow;
                            for xcol in 0..ow {
                                let gv = g[orow + xcol];
                                acc += x[xrow + xcol] * gv;
                                gxd[xrow + xcol] += kv * gv;
                            }
                        }
                        gkd[kb + ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
    Ok((gx, gk, gb))
}

/// Output of [`maxpool2`]: pooled values plus the flat input index that won
/// each window, which the backward routes gradients through.
pub struct MaxPool2 {
    pub output: Tensor,
    argmax: Vec<usize>,
    input_shape: Vec<usize>,
}

/// Non-overlapping 2x2 max pooling with stride 2.
///
/// Odd trailing rows/columns are dropped. Ties go to the first element of
/// the window in row-major order.
pub fn maxpool2(input: &Tensor) -> Result<MaxPool2> {
    expect_rank(input, 3, "maxpool2 input")?;
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if h < 2 || w < 2 {
        return Err(Error::Shape(format!("maxpool2 input {h}x{w} below 2x2")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let mut argmax = vec![0usize; c * oh * ow];
    let x = input.data();
    let o = out.data_mut();
    for ci in 0..c {
        let xb = ci * h * w;
        let ob = ci * oh * ow;
        for y in 0..oh {
            for xc in 0..ow {
                let base = xb + (2 * y) * w + 2 * xc;
                let idxs = [base, base + 1, base + w, base + w + 1];
                let mut best = idxs[0];
                for &i in &idxs[1..] {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                o[ob + y * ow + xc] = x[best];
                argmax[ob + y * ow + xc] = best;
            }
        }
    }
    Ok(MaxPool2 {
        output: out,
        argmax,
        input_shape: input.shape().to_vec(),
    })
}

/// Routes each output gradient to the argmax input position.
pub fn maxpool2_backward(pool: &MaxPool2, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.shape() != pool.output.shape() {
        return Err(Error::Shape(format!(
            "maxpool2_backward grad {:?}, expected {:?}",
            grad_out.shape(),
            pool.output.shape()
        )));
    }
    let mut gx = Tensor::zeros(&pool.input_shape);
    let gxd = gx.data_mut();
    for (i, &src) in pool.argmax.iter().enumerate() {
        gxd[src] += grad_out.data()[i];
    }
    Ok(gx)
}

/// `weight · input + bias` with `weight` `[D_out, D_in]`.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    expect_rank(input, 1, "linear input")?;
    expect_rank(weight, 2, "linear weight")?;
    expect_rank(bias, 1, "linear bias")?;
    let (d_out, d_in) = (weight.shape()[0], weight.shape()[1]);
    if input.len() != d_in || bias.len() != d_out {
        return Err(Error::Shape(format!(
            "linear: weight {:?} with input {:?}, bias {:?}",
            weight.shape(),
            input.shape(),
            bias.shape()
        )));
    }
    let mut out = Tensor::zeros(&[d_out]);
    let x = input.data();
    let w = weight.data();
    let o = out.data_mut();
    for r in 0..d_out {
        let row = &w[r * d_in..(r + 1) * d_in];
        let mut acc = bias.data()[r];
        for (wv, xv) in row.iter().zip(x.iter()) {
            acc += wv * xv;
        }
        o[r] = acc;
    }
    Ok(out)
}

/// Gradients of [`linear`] w.r.t. input, weight and bias.
pub fn linear_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (d_out, d_in) = (weight.shape()[0], weight.shape()[1]);
    if grad_out.len() != d_out {
        return Err(Error::Shape(format!(
            "linear_backward grad {:?}, expected [{d_out}]",
            grad_out.shape()
        )));
    }
    let mut gx = Tensor::zeros(&[d_in]);
    let mut gw = Tensor::zeros(weight.shape());
    let gb = grad_out.clone();
    let x = input.data();
    let w = weight.data();
    let g = grad_out.data();
    {
        let gxd = gx.data_mut();
        let gwd = gw.data_mut();
        for r in 0..d_out {
            let gr = g[r];
            let row = &w[r * d_in..(r + 1) * d_in];
            let grow = &mut gwd[r * d_in..(r + 1) * d_in];
            for i in 0..d_in {
                gxd[i] += row[i] * gr;
                grow[i] += x[i] * gr;
            }
        }
    }
    Ok((gx, gw, gb))
}

/// Elementwise `max(0, x)`.
pub fn relu(input: &Tensor) -> Tensor {
    Tensor::from_fn(input.shape(), |i| input.data()[i].max(0.0))
}

/// Subgradient 0 at exactly zero.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    debug_assert_eq!(input.shape(), grad_out.shape());
    Tensor::from_fn(input.shape(), |i| {
        if input.data()[i] > 0.0 {
            grad_out.data()[i]
        } else {
            0.0
        }
    })
}

/// Softmax cross-entropy against a class index.
///
/// Max-subtraction stabilized; returns `(loss, probabilities)` with
/// `loss = -ln p[label]`. Gradient w.r.t. logits is `p - onehot(label)`.
pub fn softmax_ce(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    expect_rank(logits, 1, "softmax_ce logits")?;
    let k = logits.len();
    if label >= k {
        return Err(Error::Index(format!(
            "label {label} out of range for {k} classes"
        )));
    }
    let z = logits.data();
    let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - zmax).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs = Tensor::from_vec(&[k], exps.iter().map(|e| e / sum).collect())?;
    // -ln p[label] through log-sum-exp keeps the saturated case exact.
    let loss = sum.ln() - (z[label] - zmax);
    Ok((loss, probs))
}

/// `p - onehot(label)`, the gradient of [`softmax_ce`] w.r.t. its logits.
pub fn softmax_ce_backward(probs: &Tensor, label: usize) -> Tensor {
    Tensor::from_fn(probs.shape(), |i| {
        probs.data()[i] - if i == label { 1.0 } else { 0.0 }
    })
}

/// Columnwise mean of a `[T, H]` sequence.
pub fn mean_pool_time(inputs: &Tensor) -> Result<Tensor> {
    expect_rank(inputs, 2, "mean_pool_time input")?;
    let (t, h) = (inputs.shape()[0], inputs.shape()[1]);
    if t == 0 {
        return Err(Error::Shape("mean_pool_time over empty sequence".into()));
    }
    let mut out = Tensor::zeros(&[h]);
    let x = inputs.data();
    let o = out.data_mut();
    for row in 0..t {
        for col in 0..h {
            o[col] += x[row * h + col];
        }
    }
    for v in o.iter_mut() {
        *v /= t as f64;
    }
    Ok(out)
}

/// Distributes `grad/T` to every step.
pub fn mean_pool_time_backward(t: usize, grad_out: &Tensor) -> Tensor {
    let h = grad_out.len();
    let inv = 1.0 / t as f64;
    Tensor::from_fn(&[t, h], |i| grad_out.data()[i % h] * inv)
}

/// 1-D concatenation, `a` followed by `b`.
pub fn concat(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    expect_rank(a, 1, "concat lhs")?;
    expect_rank(b, 1, "concat rhs")?;
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[a.len() + b.len()], data)
}

/// Splits the gradient at the boundary between the operands.
pub fn concat_backward(d1: usize, grad_out: &Tensor) -> (Tensor, Tensor) {
    let ga = Tensor::from_vec(&[d1], grad_out.data()[..d1].to_vec()).expect("split lhs");
    let gb = Tensor::from_vec(&[grad_out.len() - d1], grad_out.data()[d1..].to_vec())
        .expect("split rhs");
    (ga, gb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_diff, max_rel_err, FD_EPS, FD_TOL};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    /// Scalar probe: dot(projection, op(inputs)). Backward is fed the
    /// projection as upstream gradient; finite differences perturb inputs.
    fn rand_projection(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    fn dot(a: &Tensor, b: &Tensor) -> f64 {
        a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn conv_delta_kernel_is_identity_crop() {
        let input = Tensor::from_fn(&[1, 5, 6], |i| i as f64 * 0.1);
        let mut k = Tensor::zeros(&[1, 1, 3, 3]);
        k.data_mut()[4] = 1.0; // center tap
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &k, &bias).unwrap();
        assert_eq!(out.shape(), &[1, 3, 4]);
        for y in 0..3 {
            for x in 0..4 {
                let expect = input.data()[(y + 1) * 6 + (x + 1)];
                assert_eq!(out.data()[y * 4 + x], expect);
            }
        }
    }

    #[test]
    fn conv_all_ones_sums_nine() {
        let input = Tensor::scalar_filled(&[1, 3, 3], 1.0);
        let k = Tensor::scalar_filled(&[1, 1, 3, 3], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &k, &bias).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data()[0], 9.0);
    }

    #[test]
    fn conv_shape_mismatch_errors() {
        let input = Tensor::zeros(&[2, 4, 4]);
        let k = Tensor::zeros(&[3, 1, 3, 3]); // wrong C_in
        let bias = Tensor::zeros(&[3]);
        assert!(matches!(
            conv2d(&input, &k, &bias),
            Err(crate::error::Error::Shape(_))
        ));
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let input = rand_tensor(&mut rng, &[2, 4, 5]);
        let kernels = rand_tensor(&mut rng, &[3, 2, 3, 3]);
        let bias = rand_tensor(&mut rng, &[3]);
        let proj = rand_projection(&mut rng, &[3, 2, 3]);

        let (gx, gk, gb) = conv2d_backward(&input, &kernels, &proj).unwrap();

        let num_x = central_diff(
            |v| {
                let t = Tensor::from_vec(&[2, 4, 5], v.to_vec()).unwrap();
                dot(&conv2d(&t, &kernels, &bias).unwrap(), &proj)
            },
            input.data(),
            FD_EPS,
        );
        assert!(max_rel_err(gx.data(), &num_x) < FD_TOL);

        let num_k = central_diff(
            |v| {
                let t = Tensor::from_vec(&[3, 2, 3, 3], v.to_vec()).unwrap();
                dot(&conv2d(&input, &t, &bias).unwrap(), &proj)
            },
            kernels.data(),
            FD_EPS,
        );
        assert!(max_rel_err(gk.data(), &num_k) < FD_TOL);

        let num_b = central_diff(
            |v| {
                let t = Tensor::from_vec(&[3], v.to_vec()).unwrap();
                dot(&conv2d(&input, &kernels, &t).unwrap(), &proj)
            },
            bias.data(),
            FD_EPS,
        );
        assert!(max_rel_err(gb.data(), &num_b) < FD_TOL);
    }

    #[test]
    fn conv_is_linear_in_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = rand_tensor(&mut rng, &[2, 5, 5]);
        let y = rand_tensor(&mut rng, &[2, 5, 5]);
        let k = rand_tensor(&mut rng, &[2, 2, 3, 3]);
        let bias = Tensor::zeros(&[2]);
        let (alpha, beta) = (0.7, -1.3);
        let mixed = Tensor::from_fn(&[2, 5, 5], |i| alpha * x.data()[i] + beta * y.data()[i]);
        let lhs = conv2d(&mixed, &k, &bias).unwrap();
        let cx = conv2d(&x, &k, &bias).unwrap();
        let cy = conv2d(&y, &k, &bias).unwrap();
        for i in 0..lhs.len() {
            let rhs = alpha * cx.data()[i] + beta * cy.data()[i];
            assert!((lhs.data()[i] - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn maxpool_basics() {
        let input = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = maxpool2(&input).unwrap();
        assert_eq!(p.output.data(), &[4.0]);
    }

    #[test]
    fn maxpool_tie_break_first_in_window() {
        let input = Tensor::scalar_filled(&[1, 4, 4], 2.5);
        let p = maxpool2(&input).unwrap();
        assert!(p.output.data().iter().all(|&v| v == 2.5));
        let g = Tensor::scalar_filled(&[1, 2, 2], 1.0);
        let gx = maxpool2_backward(&p, &g).unwrap();
        // gradient lands on the top-left element of each 2x2 window
        for y in 0..4 {
            for x in 0..4 {
                let expect = if y % 2 == 0 && x % 2 == 0 { 1.0 } else { 0.0 };
                assert_eq!(gx.data()[y * 4 + x], expect);
            }
        }
    }

    #[test]
    fn maxpool_drops_odd_trailing() {
        let input = Tensor::zeros(&[1, 5, 7]);
        let p = maxpool2(&input).unwrap();
        assert_eq!(p.output.shape(), &[1, 2, 3]);
    }

    #[test]
    fn maxpool_rejects_tiny_input() {
        let input = Tensor::zeros(&[1, 1, 4]);
        assert!(maxpool2(&input).is_err());
    }

    #[test]
    fn maxpool_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let input = rand_tensor(&mut rng, &[3, 7, 9]);
        let proj = rand_projection(&mut rng, &[3, 3, 4]);
        let p = maxpool2(&input).unwrap();
        let gx = maxpool2_backward(&p, &proj).unwrap();
        let num = central_diff(
            |v| {
                let t = Tensor::from_vec(&[3, 7, 9], v.to_vec()).unwrap();
                dot(&maxpool2(&t).unwrap().output, &proj)
            },
            input.data(),
            FD_EPS,
        );
        assert!(max_rel_err(gx.data(), &num) < FD_TOL);
    }

    #[test]
    fn maxpool_backward_one_nonzero_per_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let input = rand_tensor(&mut rng, &[2, 6, 6]);
        let p = maxpool2(&input).unwrap();
        let g = Tensor::scalar_filled(&[2, 3, 3], 1.0);
        let gx = maxpool2_backward(&p, &g).unwrap();
        for c in 0..2 {
            for wy in 0..3 {
                for wx in 0..3 {
                    let mut nonzero = 0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let idx = c * 36 + (2 * wy + dy) * 6 + (2 * wx + dx);
                            if gx.data()[idx] != 0.0 {
                                nonzero += 1;
                            }
                        }
                    }
                    assert_eq!(nonzero, 1, "window ({c},{wy},{wx})");
                }
            }
        }
    }

    #[test]
    fn linear_identity_and_degenerate() {
        let x = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let eye = Tensor::from_fn(&[3, 3], |i| if i / 3 == i % 3 { 1.0 } else { 0.0 });
        let zero_b = Tensor::zeros(&[3]);
        assert_eq!(linear(&x, &eye, &zero_b).unwrap().data(), x.data());

        let zero_w = Tensor::zeros(&[2, 3]);
        let b = Tensor::from_vec(&[2], vec![4.0, -1.0]).unwrap();
        assert_eq!(linear(&x, &zero_w, &b).unwrap().data(), b.data());
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = rand_tensor(&mut rng, &[7]);
        let w = rand_tensor(&mut rng, &[5, 7]);
        let b = rand_tensor(&mut rng, &[5]);
        let proj = rand_projection(&mut rng, &[5]);
        let (gx, gw, gb) = linear_backward(&x, &w, &proj).unwrap();

        let num_x = central_diff(
            |v| {
                let t = Tensor::from_vec(&[7], v.to_vec()).unwrap();
                dot(&linear(&t, &w, &b).unwrap(), &proj)
            },
            x.data(),
            FD_EPS,
        );
        assert!(max_rel_err(gx.data(), &num_x) < FD_TOL);

        let num_w = central_diff(
            |v| {
                let t = Tensor::from_vec(&[5, 7], v.to_vec()).unwrap();
                dot(&linear(&x, &t, &b).unwrap(), &proj)
            },
            w.data(),
            FD_EPS,
        );
        assert!(max_rel_err(gw.data(), &num_w) < FD_TOL);

        let num_b = central_diff(
            |v| {
                let t = Tensor::from_vec(&[5], v.to_vec()).unwrap();
                dot(&linear(&x, &w, &t).unwrap(), &proj)
            },
            b.data(),
            FD_EPS,
        );
        assert!(max_rel_err(gb.data(), &num_b) < FD_TOL);
    }

    #[test]
    fn relu_definition_and_dead_region() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);

        let neg = Tensor::from_vec(&[4], vec![-3.0, -0.5, -1e-9, -7.0]).unwrap();
        let y = relu(&neg);
        assert!(y.data().iter().all(|&v| v == 0.0));
        let g = Tensor::scalar_filled(&[4], 1.0);
        assert!(relu_backward(&neg, &g).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_gradient_away_from_kink() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        // keep samples away from 0 so the finite difference is valid
        let x = Tensor::from_fn(&[20], |_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        });
        let proj = rand_projection(&mut rng, &[20]);
        let ana = relu_backward(&x, &proj);
        let num = central_diff(
            |v| {
                let t = Tensor::from_vec(&[20], v.to_vec()).unwrap();
                dot(&relu(&t), &proj)
            },
            x.data(),
            FD_EPS,
        );
        assert!(max_rel_err(ana.data(), &num) < FD_TOL);
    }

    #[test]
    fn softmax_uniform_logits() {
        let z = Tensor::zeros(&[4]);
        let (loss, p) = softmax_ce(&z, 2).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
        for &v in p.data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_saturated_correct_class() {
        let z = Tensor::from_vec(&[3], vec![100.0, 0.0, 0.0]).unwrap();
        let (loss, _) = softmax_ce(&z, 0).unwrap();
        assert!(loss < 1e-9);
    }

    #[test]
    fn softmax_label_out_of_range() {
        let z = Tensor::zeros(&[3]);
        assert!(matches!(softmax_ce(&z, 3), Err(crate::error::Error::Index(_))));
    }

    #[test]
    fn softmax_probs_sum_to_one_under_huge_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let z = Tensor::from_fn(&[6], |_| rng.gen_range(-1e4..1e4));
            let (_, p) = softmax_ce(&z, 0).unwrap();
            let sum: f64 = p.data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let z = rand_tensor(&mut rng, &[7]);
        let label = 3;
        let (_, p) = softmax_ce(&z, label).unwrap();
        let ana = softmax_ce_backward(&p, label);
        let num = central_diff(
            |v| {
                let t = Tensor::from_vec(&[7], v.to_vec()).unwrap();
                softmax_ce(&t, label).unwrap().0
            },
            z.data(),
            FD_EPS,
        );
        assert!(max_rel_err(ana.data(), &num) < FD_TOL);
    }

    #[test]
    fn mean_pool_examples() {
        let one = Tensor::from_vec(&[1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        assert_eq!(mean_pool_time(&one).unwrap().data(), one.data());

        let two = Tensor::from_vec(&[2, 2], vec![1.0, 3.0, 3.0, 1.0]).unwrap();
        assert_eq!(mean_pool_time(&two).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn mean_pool_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x = rand_tensor(&mut rng, &[6, 5]);
        let proj = rand_projection(&mut rng, &[5]);
        let ana = mean_pool_time_backward(6, &proj);
        let num = central_diff(
            |v| {
                let t = Tensor::from_vec(&[6, 5], v.to_vec()).unwrap();
                dot(&mean_pool_time(&t).unwrap(), &proj)
            },
            x.data(),
            FD_EPS,
        );
        assert!(max_rel_err(ana.data(), &num) < FD_TOL);
    }

    #[test]
    fn concat_definition_and_empty_rhs() {
        let a = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_vec(&[1], vec![3.0]).unwrap();
        assert_eq!(concat(&a, &b).unwrap().data(), &[1.0, 2.0, 3.0]);

        let empty = Tensor::zeros(&[0]);
        assert_eq!(concat(&a, &empty).unwrap().data(), a.data());
    }

    #[test]
    fn concat_backward_splits_at_boundary() {
        let g = Tensor::scalar_filled(&[5], 1.0);
        let (ga, gb) = concat_backward(2, &g);
        assert_eq!(ga.data(), &[1.0, 1.0]);
        assert_eq!(gb.data(), &[1.0, 1.0, 1.0]);
    }
}
