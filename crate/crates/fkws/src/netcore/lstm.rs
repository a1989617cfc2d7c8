//! Single-layer LSTM with full backpropagation through time.
//!
//! Gate layout inside the stacked weight matrices is input, forget, cell
//! candidate, output (rows `0..H`, `H..2H`, `2H..3H`, `3H..4H`). State
//! starts at zero; sequences are processed one clip at a time.

use crate::error::{Error, Result};
use crate::netcore::Tensor;

/// Per-step values cached by the forward pass for the backward sweep.
struct StepCache {
    x: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

/// Forward activations over a sequence plus everything needed for BPTT.
pub struct LstmTrace {
    /// Hidden states, `[T, H]`.
    pub hidden: Tensor,
    steps: Vec<StepCache>,
    h0: Vec<f64>,
    c0: Vec<f64>,
    input_dim: usize,
    hidden_dim: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Runs the LSTM over `inputs` (`[T, D]`) from initial state `(h0, c0)`.
///
/// `w_ih` is `[4H, D]`, `w_hh` `[4H, H]`, `bias` `[4H]`, all with the
/// input/forget/candidate/output gate blocks stacked in that order.
/// The initial state is treated as a constant by the backward pass.
pub fn lstm_forward(
    inputs: &Tensor,
    w_ih: &Tensor,
    w_hh: &Tensor,
    bias: &Tensor,
    h0: &Tensor,
    c0: &Tensor,
) -> Result<LstmTrace> {
    if inputs.rank() != 2 {
        return Err(Error::Shape(format!(
            "lstm input must be [T, D], got {:?}",
            inputs.shape()
        )));
    }
    let (t_len, d) = (inputs.shape()[0], inputs.shape()[1]);
    if t_len == 0 {
        return Err(Error::Shape("lstm over empty sequence".into()));
    }
    let four_h = w_ih.shape()[0];
    if four_h % 4 != 0 {
        return Err(Error::Shape(format!(
            "stacked lstm weight rows {four_h} not divisible by 4"
        )));
    }
    let h_dim = four_h / 4;
    if w_ih.shape() != [4 * h_dim, d]
        || w_hh.shape() != [4 * h_dim, h_dim]
        || bias.shape() != [4 * h_dim]
        || h0.shape() != [h_dim]
        || c0.shape() != [h_dim]
    {
        return Err(Error::Shape(format!(
            "lstm weights {:?}/{:?}/{:?} with state {:?}/{:?} inconsistent with input {:?}",
            w_ih.shape(),
            w_hh.shape(),
            bias.shape(),
            h0.shape(),
            c0.shape(),
            inputs.shape()
        )));
    }

    let wih = w_ih.data();
    let whh = w_hh.data();
    let b = bias.data();
    let mut h_prev = h0.data().to_vec();
    let mut c_prev = c0.data().to_vec();
    let mut steps = Vec::with_capacity(t_len);
    let mut hidden = Tensor::zeros(&[t_len, h_dim]);

    for t in 0..t_len {
        let x = &inputs.data()[t * d..(t + 1) * d];
        // pre-activations for all four gates
        let mut pre = b.to_vec();
        for r in 0..4 * h_dim {
            let mut acc = 0.0;
            let wrow = &wih[r * d..(r + 1) * d];
            for (wv, xv) in wrow.iter().zip(x.iter()) {
                acc += wv * xv;
            }
            let hrow = &whh[r * h_dim..(r + 1) * h_dim];
            for (wv, hv) in hrow.iter().zip(h_prev.iter()) {
                acc += wv * hv;
            }
            pre[r] += acc;
        }
        let mut step = StepCache {
            x: x.to_vec(),
            i: vec![0.0; h_dim],
            f: vec![0.0; h_dim],
            g: vec![0.0; h_dim],
            o: vec![0.0; h_dim],
            c: vec![0.0; h_dim],
            tanh_c: vec![0.0; h_dim],
            h: vec![0.0; h_dim],
        };
        for j in 0..h_dim {
            step.i[j] = sigmoid(pre[j]);
            step.f[j] = sigmoid(pre[h_dim + j]);
            step.g[j] = pre[2 * h_dim + j].tanh();
            step.o[j] = sigmoid(pre[3 * h_dim + j]);
            step.c[j] = step.f[j] * c_prev[j] + step.i[j] * step.g[j];
            step.tanh_c[j] = step.c[j].tanh();
            step.h[j] = step.o[j] * step.tanh_c[j];
        }
        hidden.data_mut()[t * h_dim..(t + 1) * h_dim].copy_from_slice(&step.h);
        h_prev.copy_from_slice(&step.h);
        c_prev.copy_from_slice(&step.c);
        steps.push(step);
    }

    Ok(LstmTrace {
        hidden,
        steps,
        h0: h0.data().to_vec(),
        c0: c0.data().to_vec(),
        input_dim: d,
        hidden_dim: h_dim,
    })
}

/// Gradients of the whole sequence given `d_hidden` (`[T, H]`, upstream
/// gradient on every hidden state). Returns
/// `(d_inputs, d_w_ih, d_w_hh, d_bias)`.
pub fn lstm_backward(
    trace: &LstmTrace,
    w_ih: &Tensor,
    w_hh: &Tensor,
    d_hidden: &Tensor,
) -> Result<(Tensor, Tensor, Tensor, Tensor)> {
    let t_len = trace.steps.len();
    let (d, h_dim) = (trace.input_dim, trace.hidden_dim);
    if d_hidden.shape() != [t_len, h_dim] {
        return Err(Error::Shape(format!(
            "lstm_backward grad {:?}, expected {:?}",
            d_hidden.shape(),
            [t_len, h_dim]
        )));
    }

    let wih = w_ih.data();
    let whh = w_hh.data();
    let mut gx = Tensor::zeros(&[t_len, d]);
    let mut g_wih = Tensor::zeros(w_ih.shape());
    let mut g_whh = Tensor::zeros(w_hh.shape());
    let mut g_b = Tensor::zeros(&[4 * h_dim]);

    let mut dh_next = vec![0.0; h_dim]; // gradient flowing into h_t from t+1
    let mut dc_next = vec![0.0; h_dim];
    let mut dpre = vec![0.0; 4 * h_dim];

    for t in (0..t_len).rev() {
        let s = &trace.steps[t];
        let c_prev: &[f64] = if t == 0 { &trace.c0 } else { &trace.steps[t - 1].c };
        let h_prev: &[f64] = if t == 0 { &trace.h0 } else { &trace.steps[t - 1].h };

        for j in 0..h_dim {
            let dh = d_hidden.data()[t * h_dim + j] + dh_next[j];
            let dc = dh * s.o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]) + dc_next[j];
            let d_o = dh * s.tanh_c[j];
            let d_i = dc * s.g[j];
            let d_g = dc * s.i[j];
            let d_f = dc * c_prev[j];
            dpre[j] = d_i * s.i[j] * (1.0 - s.i[j]);
            dpre[h_dim + j] = d_f * s.f[j] * (1.0 - s.f[j]);
            dpre[2 * h_dim + j] = d_g * (1.0 - s.g[j] * s.g[j]);
            dpre[3 * h_dim + j] = d_o * s.o[j] * (1.0 - s.o[j]);
            dc_next[j] = dc * s.f[j];
        }

        {
            let gxd = &mut gx.data_mut()[t * d..(t + 1) * d];
            let gwih = g_wih.data_mut();
            for r in 0..4 * h_dim {
                let dp = dpre[r];
                if dp == 0.0 {
                    continue;
                }
                let wrow = &wih[r * d..(r + 1) * d];
                let grow = &mut gwih[r * d..(r + 1) * d];
                for col in 0..d {
                    gxd[col] += wrow[col] * dp;
                    grow[col] += s.x[col] * dp;
                }
            }
        }
        {
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            let gwhh = g_whh.data_mut();
            for r in 0..4 * h_dim {
                let dp = dpre[r];
                g_b.data_mut()[r] += dp;
                if dp == 0.0 {
                    continue;
                }
                let wrow = &whh[r * h_dim..(r + 1) * h_dim];
                let grow = &mut gwhh[r * h_dim..(r + 1) * h_dim];
                for col in 0..h_dim {
                    dh_next[col] += wrow[col] * dp;
                    grow[col] += h_prev[col] * dp;
                }
            }
        }
    }

    Ok((gx, g_wih, g_whh, g_b))
}
