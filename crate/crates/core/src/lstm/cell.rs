//! LSTM cell, forward pass over a prompt and backpropagation through time.

use nalgebra::{DMatrix, DVector};

use super::params::{Gate, LstmParams};
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn affine(w: &DMatrix<f64>, b: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut out = w.tr_mul(x);
    out += b.column(0);
    out
}

/// Activations of one time step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    /// `[input; h_prev]`
    pub concat: DVector<f64>,
    pub i: DVector<f64>,
    pub f: DVector<f64>,
    pub o: DVector<f64>,
    pub g: DVector<f64>,
    pub c_prev: DVector<f64>,
    pub c: DVector<f64>,
    pub h: DVector<f64>,
}

fn step_cached(
    params: &LstmParams,
    input: &DVector<f64>,
    h_prev: &DVector<f64>,
    c_prev: &DVector<f64>,
) -> StepCache {
    let d = params.dims;
    let mut concat = DVector::zeros(d.concat());
    concat.rows_mut(0, d.input()).copy_from(input);
    concat.rows_mut(d.input(), d.dh).copy_from(h_prev);
    let pre = |gate: Gate| {
        affine(
            &params.gate_w[gate.index()],
            &params.gate_b[gate.index()],
            &concat,
        )
    };
    let i = pre(Gate::Input).map(sigmoid);
    let f = pre(Gate::Forget).map(sigmoid);
    let o = pre(Gate::Output).map(sigmoid);
    let g = pre(Gate::Cell).map(f64::tanh);
    let c = f.component_mul(c_prev) + i.component_mul(&g);
    let h = o.component_mul(&c.map(f64::tanh));
    StepCache {
        concat,
        i,
        f,
        o,
        g,
        c_prev: c_prev.clone(),
        c,
        h,
    }
}

/// One LSTM step: `input` has `dt + dv` entries, states have `dh`.
pub fn lstm_step(
    params: &LstmParams,
    input: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = params.dims;
    if input.len() != d.input() || h_prev.len() != d.dh || c_prev.len() != d.dh {
        return Err(Error::Shape(format!(
            "lstm_step expects input {} and state {}, got {}, {}, {}",
            d.input(),
            d.dh,
            input.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let s = step_cached(
        params,
        &DVector::from_column_slice(input),
        &DVector::from_column_slice(h_prev),
        &DVector::from_column_slice(c_prev),
    );
    Ok((s.h.as_slice().to_vec(), s.c.as_slice().to_vec()))
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub image: DVector<f64>,
    pub projected: DVector<f64>,
    pub tokens: Vec<usize>,
    pub steps: Vec<StepCache>,
    pub output: DVector<f64>,
}

fn check_inputs(params: &LstmParams, image: &[f64], prompt: &[usize]) -> Result<()> {
    let d = params.dims;
    if prompt.is_empty() {
        return Err(Error::InvalidInput("prompt must be non-empty".into()));
    }
    if image.len() != d.dv_in {
        return Err(Error::Shape(format!(
            "image feature has dim {}, model expects {}",
            image.len(),
            d.dv_in
        )));
    }
    if let Some(&t) = prompt.iter().find(|&&t| t >= d.vocab) {
        return Err(Error::InvalidInput(format!(
            "token index {t} outside vocabulary of {}",
            d.vocab
        )));
    }
    Ok(())
}

/// Runs the prompt through the LSTM with the projected image concatenated
/// at every step, returning the trace of all activations.
pub fn forward_trace(params: &LstmParams, image: &[f64], prompt: &[usize]) -> Result<ForwardTrace> {
    check_inputs(params, image, prompt)?;
    let d = params.dims;
    let image = DVector::from_column_slice(image);
    let projected = affine(&params.image_w, &params.image_b, &image);
    let mut h = DVector::zeros(d.dh);
    let mut c = DVector::zeros(d.dh);
    let mut steps = Vec::with_capacity(prompt.len());
    let mut input = DVector::zeros(d.input());
    input.rows_mut(d.dt, d.dv).copy_from(&projected);
    for &tok in prompt {
        input
            .rows_mut(0, d.dt)
            .copy_from(&params.token_embed.row(tok).transpose());
        let s = step_cached(params, &input, &h, &c);
        h = s.h.clone();
        c = s.c.clone();
        steps.push(s);
    }
    let output = affine(&params.out_w, &params.out_b, &h);
    Ok(ForwardTrace {
        image,
        projected,
        tokens: prompt.to_vec(),
        steps,
        output,
    })
}

/// The output embedding for an image and prompt.
pub fn forward(params: &LstmParams, image: &[f64], prompt: &[usize]) -> Result<Vec<f64>> {
    Ok(forward_trace(params, image, prompt)?
        .output
        .as_slice()
        .to_vec())
}

/// Negated cosine similarity and its gradient with respect to `e`.
pub fn cosine_loss(e: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if e.len() != target.len() {
        return Err(Error::Shape(format!(
            "cosine loss of dims {} and {}",
            e.len(),
            target.len()
        )));
    }
    let ne = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nt = target.iter().map(|v| v * v).sum::<f64>().sqrt();
    if ne == 0.0 || nt == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let cos = e.iter().zip(target).map(|(a, b)| a * b).sum::<f64>() / (ne * nt);
    let grad = e
        .iter()
        .zip(target)
        .map(|(ei, ti)| -(ti / (ne * nt) - cos * ei / (ne * ne)))
        .collect();
    Ok((-cos, grad))
}

/// Backpropagates `grad_out` (the loss gradient w.r.t. the output embedding)
/// through a recorded forward pass, adding into `grads`.
pub fn backward_from_trace(
    params: &LstmParams,
    trace: &ForwardTrace,
    grad_out: &[f64],
    grads: &mut LstmParams,
) {
    let d = params.dims;
    let grad_out = DVector::from_column_slice(grad_out);
    let last_h = &trace.steps.last().expect("non-empty prompt").h;

    grads.out_w.ger(1.0, last_h, &grad_out, 1.0);
    grads.out_b.column_mut(0).axpy(1.0, &grad_out, 1.0);

    let mut dh = &params.out_w * &grad_out;
    let mut dc = DVector::<f64>::zeros(d.dh);
    let mut dv = DVector::<f64>::zeros(d.dv);

    for (s, &tok) in trace.steps.iter().zip(&trace.tokens).rev() {
        let tanh_c = s.c.map(f64::tanh);
        let d_o = dh.component_mul(&tanh_c);
        dc += dh
            .component_mul(&s.o)
            .component_mul(&tanh_c.map(|t| 1.0 - t * t));
        let d_i = dc.component_mul(&s.g);
        let d_g = dc.component_mul(&s.i);
        let d_f = dc.component_mul(&s.c_prev);

        let pre = [
            d_i.zip_map(&s.i, |gr, a| gr * a * (1.0 - a)),
            d_f.zip_map(&s.f, |gr, a| gr * a * (1.0 - a)),
            d_o.zip_map(&s.o, |gr, a| gr * a * (1.0 - a)),
            d_g.zip_map(&s.g, |gr, a| gr * (1.0 - a * a)),
        ];

        let mut d_concat = DVector::<f64>::zeros(d.concat());
        for gate in Gate::ALL {
            let k = gate.index();
            grads.gate_w[k].ger(1.0, &s.concat, &pre[k], 1.0);
            grads.gate_b[k].column_mut(0).axpy(1.0, &pre[k], 1.0);
            d_concat.gemv(1.0, &params.gate_w[k], &pre[k], 1.0);
        }

        let mut row = grads.token_embed.row_mut(tok);
        row += d_concat.rows(0, d.dt).transpose();
        dv += d_concat.rows(d.dt, d.dv);
        dh = d_concat.rows(d.input(), d.dh).into_owned();
        dc = dc.component_mul(&s.f);
    }

    grads.image_w.ger(1.0, &trace.image, &dv, 1.0);
    grads.image_b.column_mut(0).axpy(1.0, &dv, 1.0);
}

/// Loss and full parameter gradients for one training example.
pub fn backward(
    params: &LstmParams,
    image: &[f64],
    prompt: &[usize],
    target: &[f64],
) -> Result<(f64, LstmParams)> {
    let trace = forward_trace(params, image, prompt)?;
    let (loss, grad_e) = cosine_loss(trace.output.as_slice(), target)?;
    let mut grads = params.zeros_like();
    backward_from_trace(params, &trace, &grad_e, &mut grads);
    Ok((loss, grads))
}
