//! LSTM encoder-decoder over sliding windows, with hand-derived
//! backpropagation through time.
//!
//! The encoder reads the l rows of a window and its final hidden state is
//! projected to a latent code; the decoder is fed that code at every step and
//! each decoder hidden state is projected back to feature space. Gates use the
//! logistic sigmoid, the cell candidate and cell output use tanh.
//!
//! Two scalars are differentiated through the network:
//! * the training loss `mse_loss(reconstruct(X), X)`, with gradients for
//!   every parameter ([`parameter_gradients`]);
//! * the anomaly surrogate `s(X) = sum((X - reconstruct(X))^2)`, with the
//!   gradient taken with respect to the input window itself
//!   ([`input_gradient`]), which is what the attribution sampler consumes.

pub(crate) mod batch;
mod train;

pub use train::{mean_loss, train, TrainOptions, TrainingHistory};

/// Batched form of [`input_gradient`] over many windows at once.
pub fn input_gradients_batch(
    model: &AutoencoderModel,
    windows: &[ndarray::ArrayView2<f64>],
) -> Result<Vec<Array2<f64>>> {
    batch::input_gradients(model, windows)
}

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Weights for one LSTM gate: input weight, recurrent weight, bias.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    /// hidden x in_dim
    pub w: Array2<f64>,
    /// hidden x hidden
    pub u: Array2<f64>,
    /// hidden
    pub b: Array1<f64>,
}

impl GateParams {
    fn zeros(hidden: usize, in_dim: usize) -> Self {
        GateParams {
            w: Array2::zeros((hidden, in_dim)),
            u: Array2::zeros((hidden, hidden)),
            b: Array1::zeros(hidden),
        }
    }
}

/// Parameters of a single LSTM cell: input, forget, cell-candidate and
/// output gates.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub input: GateParams,
    pub forget: GateParams,
    pub cell: GateParams,
    pub output: GateParams,
}

impl LstmCellParams {
    fn zeros(hidden: usize, in_dim: usize) -> Self {
        LstmCellParams {
            input: GateParams::zeros(hidden, in_dim),
            forget: GateParams::zeros(hidden, in_dim),
            cell: GateParams::zeros(hidden, in_dim),
            output: GateParams::zeros(hidden, in_dim),
        }
    }

    fn gates(&self) -> [&GateParams; 4] {
        [&self.input, &self.forget, &self.cell, &self.output]
    }

    fn gates_mut(&mut self) -> [&mut GateParams; 4] {
        [
            &mut self.input,
            &mut self.forget,
            &mut self.cell,
            &mut self.output,
        ]
    }
}

/// The full encoder-decoder parameter set plus architecture metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    /// Encoder cell, in_dim = num_features.
    pub encoder: LstmCellParams,
    /// latent_dim x hidden projection of the final encoder hidden state.
    pub latent_w: Array2<f64>,
    pub latent_b: Array1<f64>,
    /// Decoder cell, in_dim = latent_dim.
    pub decoder: LstmCellParams,
    /// num_features x hidden projection of each decoder hidden state.
    pub output_w: Array2<f64>,
    pub output_b: Array1<f64>,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub window_len: usize,
    pub num_features: usize,
    pub seed: u64,
}

/// Build a model with weights drawn uniformly from [-s, s], s = 1/sqrt(hidden_dim),
/// reproducibly from `seed`. Forget-gate biases start at 1.0, all other biases at 0.
pub fn init_model(
    num_features: usize,
    window_len: usize,
    hidden_dim: usize,
    latent_dim: usize,
    seed: u64,
) -> Result<AutoencoderModel> {
    for (name, dim) in [
        ("num_features", num_features),
        ("window_len", window_len),
        ("hidden_dim", hidden_dim),
        ("latent_dim", latent_dim),
    ] {
        if dim < 1 {
            return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
        }
    }
    let mut model = AutoencoderModel {
        encoder: LstmCellParams::zeros(hidden_dim, num_features),
        latent_w: Array2::zeros((latent_dim, hidden_dim)),
        latent_b: Array1::zeros(latent_dim),
        decoder: LstmCellParams::zeros(hidden_dim, latent_dim),
        output_w: Array2::zeros((num_features, hidden_dim)),
        output_b: Array1::zeros(num_features),
        hidden_dim,
        latent_dim,
        window_len,
        num_features,
        seed,
    };
    let scale = 1.0 / (hidden_dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |a: &mut Array2<f64>| {
        for v in a.iter_mut() {
            *v = rng.random_range(-scale..=scale);
        }
    };
    for cell in [&mut model.encoder, &mut model.decoder] {
        for gate in cell.gates_mut() {
            fill(&mut gate.w);
            fill(&mut gate.u);
        }
    }
    fill(&mut model.latent_w);
    fill(&mut model.output_w);
    model.encoder.forget.b.fill(1.0);
    model.decoder.forget.b.fill(1.0);
    Ok(model)
}

impl AutoencoderModel {
    fn check_window(&self, window: &ArrayView2<f64>) -> Result<()> {
        if window.nrows() != self.window_len || window.ncols() != self.num_features {
            return Err(Error::shape(
                format!("{} x {} window", self.window_len, self.num_features),
                format!("{} x {}", window.nrows(), window.ncols()),
            ));
        }
        Ok(())
    }

    /// Encode and decode one window. Output shape equals input shape.
    pub fn reconstruct(&self, window: &ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(window)?.reconstruction)
    }

    /// Row-major flattening of the reconstruction, the vector-valued head the
    /// attribution wrapper can explain instead of the scalar surrogate.
    pub fn reconstruct_flattened(&self, window: &ArrayView2<f64>) -> Result<Array1<f64>> {
        let recon = self.reconstruct(window)?;
        Ok(Array1::from_iter(recon.iter().copied()))
    }

    /// Anomaly surrogate s(X) = sum((X - reconstruct(X))^2).
    pub fn surrogate_score(&self, window: &ArrayView2<f64>) -> Result<f64> {
        let recon = self.reconstruct(window)?;
        Ok(window
            .iter()
            .zip(recon.iter())
            .map(|(x, r)| (x - r) * (x - r))
            .sum())
    }

    pub(crate) fn forward(&self, window: &ArrayView2<f64>) -> Result<ForwardTrace> {
        self.check_window(window)?;
        let l = self.window_len;

        let mut encoder_steps = Vec::with_capacity(l);
        let mut h = Array1::zeros(self.hidden_dim);
        let mut c = Array1::zeros(self.hidden_dim);
        for t in 0..l {
            let step = cell_step(&self.encoder, &window.row(t), &h, &c);
            h = step.h.clone();
            c = step.c.clone();
            encoder_steps.push(step);
        }

        let code = self.latent_w.dot(&h) + &self.latent_b;

        let mut decoder_steps = Vec::with_capacity(l);
        let mut reconstruction = Array2::zeros((l, self.num_features));
        let mut h = Array1::zeros(self.hidden_dim);
        let mut c = Array1::zeros(self.hidden_dim);
        for t in 0..l {
            let step = cell_step(&self.decoder, &code.view(), &h, &c);
            let out = self.output_w.dot(&step.h) + &self.output_b;
            reconstruction.row_mut(t).assign(&out);
            h = step.h.clone();
            c = step.c.clone();
            decoder_steps.push(step);
        }

        Ok(ForwardTrace {
            encoder_steps,
            code,
            decoder_steps,
            reconstruction,
        })
    }
}

/// Mean squared error (1 / (l * m)) * sum((x - xhat)^2).
pub fn mse_loss(window: &ArrayView2<f64>, reconstruction: &ArrayView2<f64>) -> Result<f64> {
    if window.shape() != reconstruction.shape() {
        return Err(Error::shape(
            format!("{:?}", window.shape()),
            format!("{:?}", reconstruction.shape()),
        ));
    }
    let n = window.len() as f64;
    Ok(window
        .iter()
        .zip(reconstruction.iter())
        .map(|(x, r)| (x - r) * (x - r))
        .sum::<f64>()
        / n)
}

/// Exact analytic gradients of `mse_loss(reconstruct(X), X)` with respect to
/// every parameter, by backpropagation through time across decoder and encoder.
pub fn parameter_gradients(model: &AutoencoderModel, window: &ArrayView2<f64>) -> Result<ModelGradients> {
    let trace = model.forward(window)?;
    let scale = 2.0 / (window.len() as f64);
    let dxhat = (&trace.reconstruction - window) * scale;
    let (grads, _) = backward(model, window, &trace, &dxhat);
    Ok(grads)
}

/// Exact gradient of the anomaly surrogate s(X) = sum((X - reconstruct(X))^2)
/// with respect to the input window, including the dependence of the
/// reconstruction on X.
pub fn input_gradient(model: &AutoencoderModel, window: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let trace = model.forward(window)?;
    let residual = window - &trace.reconstruction;
    // ds/dxhat = -2 (x - xhat); ds/dx_direct = 2 (x - xhat).
    let dxhat = &residual * -2.0;
    let (_, dinput) = backward(model, window, &trace, &dxhat);
    Ok(dinput + &(&residual * 2.0))
}

/// Per-window loss and parameter gradients in one pass.
pub fn loss_and_gradients(
    model: &AutoencoderModel,
    window: &ArrayView2<f64>,
) -> Result<(f64, ModelGradients)> {
    let trace = model.forward(window)?;
    let loss = mse_loss(window, &trace.reconstruction.view())?;
    let scale = 2.0 / (window.len() as f64);
    let dxhat = (&trace.reconstruction - window) * scale;
    let (grads, _) = backward(model, window, &trace, &dxhat);
    Ok((loss, grads))
}

/// Gradients, one tensor per model parameter tensor.
pub type ModelGradients = AutoencoderModel;

impl AutoencoderModel {
    pub(crate) fn zeros_like(&self) -> AutoencoderModel {
        AutoencoderModel {
            encoder: LstmCellParams::zeros(self.hidden_dim, self.num_features),
            latent_w: Array2::zeros(self.latent_w.raw_dim()),
            latent_b: Array1::zeros(self.latent_b.raw_dim()),
            decoder: LstmCellParams::zeros(self.hidden_dim, self.latent_dim),
            output_w: Array2::zeros(self.output_w.raw_dim()),
            output_b: Array1::zeros(self.output_b.raw_dim()),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> AutoencoderModel {
        AutoencoderModel {
            encoder: LstmCellParams::zeros(0, 0),
            latent_w: Array2::zeros((0, 0)),
            latent_b: Array1::zeros(0),
            decoder: LstmCellParams::zeros(0, 0),
            output_w: Array2::zeros((0, 0)),
            output_b: Array1::zeros(0),
            hidden_dim: self.hidden_dim,
            latent_dim: self.latent_dim,
            window_len: self.window_len,
            num_features: self.num_features,
            seed: self.seed,
        }
    }

    /// Total number of scalar parameters.
    pub fn flat_len(&self) -> usize {
        self.tensor_views().iter().map(|t| t.len()).sum()
    }

    /// All parameters flattened in a fixed order (encoder gates i/f/g/o as
    /// w,u,b; latent projection; decoder gates; output projection), each
    /// tensor row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for view in self.tensor_views() {
            out.extend(view.iter().copied());
        }
        out
    }

    /// Inverse of [`AutoencoderModel::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.flat_len(), "flat parameter length");
        let mut offset = 0;
        for tensor in self.tensor_views_mut() {
            for v in tensor {
                *v = flat[offset];
                offset += 1;
            }
        }
    }

    fn tensor_views(&self) -> Vec<ndarray::ArrayViewD<'_, f64>> {
        let mut views = Vec::with_capacity(28);
        for cell_idx in 0..2 {
            let cell = if cell_idx == 0 { &self.encoder } else { &self.decoder };
            for gate in cell.gates() {
                views.push(gate.w.view().into_dyn());
                views.push(gate.u.view().into_dyn());
                views.push(gate.b.view().into_dyn());
            }
            if cell_idx == 0 {
                views.push(self.latent_w.view().into_dyn());
                views.push(self.latent_b.view().into_dyn());
            }
        }
        views.push(self.output_w.view().into_dyn());
        views.push(self.output_b.view().into_dyn());
        views
    }

    fn tensor_views_mut(&mut self) -> Vec<ndarray::ArrayViewMutD<'_, f64>> {
        let AutoencoderModel {
            encoder,
            latent_w,
            latent_b,
            decoder,
            output_w,
            output_b,
            ..
        } = self;
        let mut views = Vec::with_capacity(28);
        for gate in encoder.gates_mut() {
            views.push(gate.w.view_mut().into_dyn());
            views.push(gate.u.view_mut().into_dyn());
            views.push(gate.b.view_mut().into_dyn());
        }
        views.push(latent_w.view_mut().into_dyn());
        views.push(latent_b.view_mut().into_dyn());
        for gate in decoder.gates_mut() {
            views.push(gate.w.view_mut().into_dyn());
            views.push(gate.u.view_mut().into_dyn());
            views.push(gate.b.view_mut().into_dyn());
        }
        views.push(output_w.view_mut().into_dyn());
        views.push(output_b.view_mut().into_dyn());
        views
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations recorded for one LSTM step.
#[derive(Debug, Clone)]
pub(crate) struct StepTrace {
    pub i: Array1<f64>,
    pub f: Array1<f64>,
    pub g: Array1<f64>,
    pub o: Array1<f64>,
    pub c: Array1<f64>,
    pub tanh_c: Array1<f64>,
    pub h: Array1<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    pub encoder_steps: Vec<StepTrace>,
    pub code: Array1<f64>,
    pub decoder_steps: Vec<StepTrace>,
    pub reconstruction: Array2<f64>,
}

fn cell_step(
    cell: &LstmCellParams,
    x: &ArrayView1<f64>,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
) -> StepTrace {
    let pre = |gate: &GateParams| gate.w.dot(x) + gate.u.dot(h_prev) + &gate.b;
    let i = pre(&cell.input).mapv(sigmoid);
    let f = pre(&cell.forget).mapv(sigmoid);
    let g = pre(&cell.cell).mapv(f64::tanh);
    let o = pre(&cell.output).mapv(sigmoid);
    let c = &f * c_prev + &i * &g;
    let tanh_c = c.mapv(f64::tanh);
    let h = &o * &tanh_c;
    StepTrace {
        i,
        f,
        g,
        o,
        c,
        tanh_c,
        h,
    }
}

/// acc += a * b^T
fn add_outer(acc: &mut Array2<f64>, a: &Array1<f64>, b: &ArrayView1<f64>) {
    for (mut row, &ai) in acc.rows_mut().into_iter().zip(a.iter()) {
        if ai != 0.0 {
            row.scaled_add(ai, b);
        }
    }
}

/// Backward pass through one LSTM cell over its whole unrolled run.
///
/// `inputs[t]` is the step-t input vector, `dh_out[t]` the gradient flowing
/// into h_t from outside the cell. Returns the gradient with respect to each
/// step input; parameter gradients accumulate into `grads`.
fn cell_backward(
    cell: &LstmCellParams,
    inputs: &[ArrayView1<f64>],
    steps: &[StepTrace],
    dh_out: &[Array1<f64>],
    grads: &mut LstmCellParams,
) -> Vec<Array1<f64>> {
    let l = steps.len();
    let hidden = cell.input.b.len();
    let zero = Array1::zeros(hidden);
    let mut dinputs = vec![Array1::zeros(inputs[0].len()); l];
    let mut dh_next: Array1<f64> = Array1::zeros(hidden);
    let mut dc_next: Array1<f64> = Array1::zeros(hidden);

    for t in (0..l).rev() {
        let step = &steps[t];
        let c_prev = if t == 0 { &zero } else { &steps[t - 1].c };
        let h_prev = if t == 0 { &zero } else { &steps[t - 1].h };

        let dh = &dh_out[t] + &dh_next;
        let d_o = &dh * &step.tanh_c;
        let dc = &dc_next + &(&dh * &step.o * step.tanh_c.mapv(|v| 1.0 - v * v));
        let d_f = &dc * c_prev;
        let d_i = &dc * &step.g;
        let d_g = &dc * &step.i;
        dc_next = &dc * &step.f;

        let da_i = &d_i * &step.i.mapv(|v| v * (1.0 - v));
        let da_f = &d_f * &step.f.mapv(|v| v * (1.0 - v));
        let da_g = &d_g * &step.g.mapv(|v| 1.0 - v * v);
        let da_o = &d_o * &step.o.mapv(|v| v * (1.0 - v));

        dh_next = Array1::zeros(hidden);
        let x = &inputs[t];
        let gates = [
            (&cell.input, &da_i),
            (&cell.forget, &da_f),
            (&cell.cell, &da_g),
            (&cell.output, &da_o),
        ];
        let grad_gates = grads.gates_mut();
        for ((params, da), grad) in gates.into_iter().zip(grad_gates) {
            add_outer(&mut grad.w, da, x);
            add_outer(&mut grad.u, da, &h_prev.view());
            grad.b += da;
            dinputs[t] += &params.w.t().dot(da);
            dh_next += &params.u.t().dot(da);
        }
    }
    dinputs
}

/// Full backward pass: given d(loss)/d(reconstruction), produce all parameter
/// gradients and the indirect gradient with respect to the input window.
fn backward(
    model: &AutoencoderModel,
    window: &ArrayView2<f64>,
    trace: &ForwardTrace,
    dxhat: &Array2<f64>,
) -> (ModelGradients, Array2<f64>) {
    let l = model.window_len;
    let mut grads = model.zeros_like();

    // Output projection: xhat_t = output_w h_t + output_b.
    let mut dh_dec: Vec<Array1<f64>> = Vec::with_capacity(l);
    for t in 0..l {
        let dxt = dxhat.row(t).to_owned();
        add_outer(&mut grads.output_w, &dxt, &trace.decoder_steps[t].h.view());
        grads.output_b += &dxt;
        dh_dec.push(model.output_w.t().dot(&dxt));
    }

    // Decoder consumed the code at every step.
    let code_inputs: Vec<ArrayView1<f64>> = (0..l).map(|_| trace.code.view()).collect();
    let dcode_steps = cell_backward(
        &model.decoder,
        &code_inputs,
        &trace.decoder_steps,
        &dh_dec,
        &mut grads.decoder,
    );
    let mut dcode = Array1::zeros(model.latent_dim);
    for d in dcode_steps {
        dcode += &d;
    }

    // Latent projection: code = latent_w h_enc_last + latent_b.
    let h_enc_last = &trace.encoder_steps[l - 1].h;
    add_outer(&mut grads.latent_w, &dcode, &h_enc_last.view());
    grads.latent_b += &dcode;

    let mut dh_enc = vec![Array1::zeros(model.hidden_dim); l];
    dh_enc[l - 1] = model.latent_w.t().dot(&dcode);

    let row_inputs: Vec<ArrayView1<f64>> = (0..l).map(|t| window.row(t)).collect();
    let dx_rows = cell_backward(
        &model.encoder,
        &row_inputs,
        &trace.encoder_steps,
        &dh_enc,
        &mut grads.encoder,
    );

    let mut dinput = Array2::zeros((l, model.num_features));
    for (t, dx) in dx_rows.into_iter().enumerate() {
        dinput.row_mut(t).assign(&dx);
    }
    (grads, dinput)
}
