//! Batched forward/backward over many windows at once.
//!
//! Functionally the same computation as the per-window path in `mod.rs`, with
//! the batch dimension lifted into matrix products so the work runs as gemm
//! instead of thousands of small matvecs. The per-window path stays the
//! finite-difference-validated reference; an equivalence test pins this one
//! to it.

use ndarray::{Array2, ArrayView2, Axis};

use super::{AutoencoderModel, GateParams, LstmCellParams, ModelGradients};
use crate::error::Result;

struct BatchStep {
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
}

pub(crate) struct BatchTrace {
    encoder_steps: Vec<BatchStep>,
    code: Array2<f64>,
    decoder_steps: Vec<BatchStep>,
    /// Per step t: batch x m reconstruction rows.
    pub reconstruction: Vec<Array2<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One cell step over the whole batch: inputs are batch x in_dim.
fn cell_step(
    cell: &LstmCellParams,
    x: &Array2<f64>,
    h_prev: &Array2<f64>,
    c_prev: &Array2<f64>,
) -> BatchStep {
    let pre = |gate: &GateParams| x.dot(&gate.w.t()) + h_prev.dot(&gate.u.t()) + &gate.b;
    let i = pre(&cell.input).mapv_into(sigmoid);
    let f = pre(&cell.forget).mapv_into(sigmoid);
    let g = pre(&cell.cell).mapv_into(f64::tanh);
    let o = pre(&cell.output).mapv_into(sigmoid);
    let c = &f * c_prev + &i * &g;
    let tanh_c = c.mapv(f64::tanh);
    let h = &o * &tanh_c;
    BatchStep {
        i,
        f,
        g,
        o,
        c,
        tanh_c,
        h,
    }
}

pub(crate) fn forward(model: &AutoencoderModel, windows: &[ArrayView2<f64>]) -> Result<BatchTrace> {
    let batch = windows.len();
    let l = model.window_len;
    let m = model.num_features;
    for w in windows {
        model.check_window(w)?;
    }

    let mut encoder_steps = Vec::with_capacity(l);
    let mut h = Array2::zeros((batch, model.hidden_dim));
    let mut c = Array2::zeros((batch, model.hidden_dim));
    let mut x_t = Array2::zeros((batch, m));
    for t in 0..l {
        for (row, w) in windows.iter().enumerate() {
            x_t.row_mut(row).assign(&w.row(t));
        }
        let step = cell_step(&model.encoder, &x_t, &h, &c);
        h.assign(&step.h);
        c.assign(&step.c);
        encoder_steps.push(step);
    }

    let code = h.dot(&model.latent_w.t()) + &model.latent_b;

    let mut decoder_steps = Vec::with_capacity(l);
    let mut reconstruction = Vec::with_capacity(l);
    let mut h = Array2::zeros((batch, model.hidden_dim));
    let mut c = Array2::zeros((batch, model.hidden_dim));
    for _ in 0..l {
        let step = cell_step(&model.decoder, &code, &h, &c);
        reconstruction.push(step.h.dot(&model.output_w.t()) + &model.output_b);
        h.assign(&step.h);
        c.assign(&step.c);
        decoder_steps.push(step);
    }

    Ok(BatchTrace {
        encoder_steps,
        code,
        decoder_steps,
        reconstruction,
    })
}

/// Backward through one cell across the batch. `dh_out[t]` is the external
/// gradient on h_t; `inputs(t)` yields the step-t input matrix. Returns the
/// per-step input gradients; parameter gradients accumulate (summed over the
/// batch) into `grads`.
fn cell_backward(
    cell: &LstmCellParams,
    inputs: impl Fn(usize) -> Array2<f64>,
    steps: &[BatchStep],
    dh_out: &[Array2<f64>],
    grads: &mut LstmCellParams,
) -> Vec<Array2<f64>> {
    let l = steps.len();
    let (batch, hidden) = (steps[0].h.nrows(), steps[0].h.ncols());
    let zeros = Array2::zeros((batch, hidden));
    let mut dinputs = Vec::with_capacity(l);
    for _ in 0..l {
        dinputs.push(Array2::zeros((0, 0)));
    }
    let mut dh_next = Array2::zeros((batch, hidden));
    let mut dc_next = Array2::zeros((batch, hidden));

    for t in (0..l).rev() {
        let step = &steps[t];
        let c_prev = if t == 0 { &zeros } else { &steps[t - 1].c };
        let h_prev = if t == 0 { &zeros } else { &steps[t - 1].h };

        let dh = &dh_out[t] + &dh_next;
        let d_o = &dh * &step.tanh_c;
        let dc = &dc_next + &(&dh * &step.o * &step.tanh_c.mapv(|v| 1.0 - v * v));
        let d_f = &dc * c_prev;
        let d_i = &dc * &step.g;
        let d_g = &dc * &step.i;
        dc_next = &dc * &step.f;

        let da_i = d_i * step.i.mapv(|v| v * (1.0 - v));
        let da_f = d_f * step.f.mapv(|v| v * (1.0 - v));
        let da_g = d_g * step.g.mapv(|v| 1.0 - v * v);
        let da_o = d_o * step.o.mapv(|v| v * (1.0 - v));

        let x_t = inputs(t);
        let mut dx = Array2::zeros(x_t.raw_dim());
        dh_next = Array2::zeros((batch, hidden));
        let pairs = [
            (&cell.input, &da_i),
            (&cell.forget, &da_f),
            (&cell.cell, &da_g),
            (&cell.output, &da_o),
        ];
        let grad_gates = grads.gates_mut();
        for ((params, da), grad) in pairs.into_iter().zip(grad_gates) {
            grad.w += &da.t().dot(&x_t);
            grad.u += &da.t().dot(h_prev);
            grad.b += &da.sum_axis(Axis(0));
            dx += &da.dot(&params.w);
            dh_next += &da.dot(&params.u);
        }
        dinputs[t] = dx;
    }
    dinputs
}

/// Full batched backward. `dxhat[t]` is batch x m, the gradient of the
/// objective with respect to reconstruction row t. Parameter gradients come
/// back summed over the batch; per-window input gradients in window order.
pub(crate) fn backward(
    model: &AutoencoderModel,
    windows: &[ArrayView2<f64>],
    trace: &BatchTrace,
    dxhat: &[Array2<f64>],
) -> (ModelGradients, Vec<Array2<f64>>) {
    let batch = windows.len();
    let l = model.window_len;
    let m = model.num_features;
    let mut grads = model.zeros_like();

    let mut dh_dec = Vec::with_capacity(l);
    for t in 0..l {
        grads.output_w += &dxhat[t].t().dot(&trace.decoder_steps[t].h);
        grads.output_b += &dxhat[t].sum_axis(Axis(0));
        dh_dec.push(dxhat[t].dot(&model.output_w));
    }

    let code = trace.code.clone();
    let dcode_steps = cell_backward(
        &model.decoder,
        |_| code.clone(),
        &trace.decoder_steps,
        &dh_dec,
        &mut grads.decoder,
    );
    let mut dcode = Array2::zeros((batch, model.latent_dim));
    for d in dcode_steps {
        dcode += &d;
    }

    let h_enc_last = &trace.encoder_steps[l - 1].h;
    grads.latent_w += &dcode.t().dot(h_enc_last);
    grads.latent_b += &dcode.sum_axis(Axis(0));

    let mut dh_enc = vec![Array2::zeros((batch, model.hidden_dim)); l];
    dh_enc[l - 1] = dcode.dot(&model.latent_w);

    let assemble = |t: usize| {
        let mut x_t = Array2::zeros((batch, m));
        for (row, w) in windows.iter().enumerate() {
            x_t.row_mut(row).assign(&w.row(t));
        }
        x_t
    };
    let dx_steps = cell_backward(
        &model.encoder,
        assemble,
        &trace.encoder_steps,
        &dh_enc,
        &mut grads.encoder,
    );

    let mut dinputs = vec![Array2::zeros((l, m)); batch];
    for (t, dx) in dx_steps.iter().enumerate() {
        for (row, dinput) in dinputs.iter_mut().enumerate() {
            dinput.row_mut(t).assign(&dx.row(row));
        }
    }
    (grads, dinputs)
}

/// Mean training loss and mean parameter gradients over a batch, the training
/// step's workhorse.
pub(crate) fn loss_and_gradients(
    model: &AutoencoderModel,
    windows: &[ArrayView2<f64>],
) -> Result<(f64, ModelGradients)> {
    let batch = windows.len();
    let trace = forward(model, windows)?;
    let l = model.window_len;
    let m = model.num_features;

    let mut loss_sum = 0.0;
    let scale = 2.0 / (l * m) as f64;
    let mut dxhat = Vec::with_capacity(l);
    for t in 0..l {
        let mut d = trace.reconstruction[t].clone();
        for (row, w) in windows.iter().enumerate() {
            for k in 0..m {
                let diff = d[[row, k]] - w[[t, k]];
                loss_sum += diff * diff;
                d[[row, k]] = diff * scale;
            }
        }
        dxhat.push(d);
    }
    let mean_loss = loss_sum / (batch * l * m) as f64;

    let (mut grads, _) = backward(model, windows, &trace, &dxhat);
    let flat_scale = 1.0 / batch as f64;
    for mut tensor in grads.tensor_views_mut() {
        tensor.mapv_inplace(|v| v * flat_scale);
    }
    Ok((mean_loss, grads))
}

/// Gradient of the anomaly surrogate with respect to each window in the batch.
pub(crate) fn input_gradients(
    model: &AutoencoderModel,
    windows: &[ArrayView2<f64>],
) -> Result<Vec<Array2<f64>>> {
    let trace = forward(model, windows)?;
    let l = model.window_len;
    let m = model.num_features;

    // residual r = x - xhat; ds/dxhat = -2 r; direct term ds/dx = 2 r.
    let mut dxhat = Vec::with_capacity(l);
    for t in 0..l {
        let mut d = trace.reconstruction[t].clone();
        for (row, w) in windows.iter().enumerate() {
            for k in 0..m {
                d[[row, k]] = 2.0 * (d[[row, k]] - w[[t, k]]);
            }
        }
        dxhat.push(d);
    }
    let (_, mut dinputs) = backward(model, windows, &trace, &dxhat);
    for (row, w) in windows.iter().enumerate() {
        for t in 0..l {
            for k in 0..m {
                dinputs[row][[t, k]] += 2.0 * (w[[t, k]] - trace.reconstruction[t][[row, k]]);
            }
        }
    }
    Ok(dinputs)
}
