use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pooling::BLANK_TOKEN;

pub const UNK_TOKEN: &str = "<UNK>";

/// Layer sizes of the embedded LSTM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmDims {
    /// Prompt vocabulary size.
    pub vocab: usize,
    /// Token embedding size.
    pub dt: usize,
    /// Raw image feature size.
    pub dv_in: usize,
    /// Projected image size.
    pub dv: usize,
    /// Hidden and cell size.
    pub dh: usize,
    /// Output size, the word-vector dimension.
    pub d_out: usize,
}

impl LstmDims {
    pub fn input(&self) -> usize {
        self.dt + self.dv
    }

    pub fn concat(&self) -> usize {
        self.dt + self.dv + self.dh
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.vocab, self.dt, self.dv_in, self.dv, self.dh, self.d_out,
        ];
        if all.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "all LSTM dims must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Cell,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Cell];

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

/// Every learnable tensor. Also used as the gradient container.
///
/// Weight matrices are stored input-major: a layer computes `Wᵀ·x + b`.
/// Biases are single-column matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub dims: LstmDims,
    pub token_embed: DMatrix<f64>,
    pub image_w: DMatrix<f64>,
    pub image_b: DMatrix<f64>,
    /// Gate weights `(dt + dv + dh) x dh`, indexed by [`Gate`].
    pub gate_w: [DMatrix<f64>; 4],
    pub gate_b: [DMatrix<f64>; 4],
    pub out_w: DMatrix<f64>,
    pub out_b: DMatrix<f64>,
}

impl LstmParams {
    pub fn zeros(dims: LstmDims) -> Result<Self> {
        dims.validate()?;
        let z = DMatrix::zeros;
        Ok(LstmParams {
            dims,
            token_embed: z(dims.vocab, dims.dt),
            image_w: z(dims.dv_in, dims.dv),
            image_b: z(dims.dv, 1),
            gate_w: std::array::from_fn(|_| z(dims.concat(), dims.dh)),
            gate_b: std::array::from_fn(|_| z(dims.dh, 1)),
            out_w: z(dims.dh, dims.d_out),
            out_b: z(dims.d_out, 1),
        })
    }

    /// Uniform(-s, s) weights with `s = 1/sqrt(fan_in)`, zero biases and a
    /// forget-gate bias of 1.
    pub fn init(dims: LstmDims, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut p = LstmParams::zeros(dims)?;
        let mut fill = |m: &mut DMatrix<f64>| {
            let s = 1.0 / (m.nrows() as f64).sqrt();
            // column-major fill order is part of the determinism contract
            m.iter_mut().for_each(|v| *v = rng.random_range(-s..s));
        };
        fill(&mut p.token_embed);
        fill(&mut p.image_w);
        for w in p.gate_w.iter_mut() {
            fill(w);
        }
        fill(&mut p.out_w);
        p.gate_b[Gate::Forget.index()].fill(1.0);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        LstmParams::zeros(self.dims).expect("dims already validated")
    }

    pub fn tensors(&self) -> Vec<(&'static str, &DMatrix<f64>)> {
        vec![
            ("token_embed", &self.token_embed),
            ("image_w", &self.image_w),
            ("image_b", &self.image_b),
            ("w_input", &self.gate_w[0]),
            ("w_forget", &self.gate_w[1]),
            ("w_output", &self.gate_w[2]),
            ("w_cell", &self.gate_w[3]),
            ("b_input", &self.gate_b[0]),
            ("b_forget", &self.gate_b[1]),
            ("b_output", &self.gate_b[2]),
            ("b_cell", &self.gate_b[3]),
            ("out_w", &self.out_w),
            ("out_b", &self.out_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut DMatrix<f64>)> {
        let [wi, wf, wo, wg] = &mut self.gate_w;
        let [bi, bf, bo, bg] = &mut self.gate_b;
        vec![
            ("token_embed", &mut self.token_embed),
            ("image_w", &mut self.image_w),
            ("image_b", &mut self.image_b),
            ("w_input", wi),
            ("w_forget", wf),
            ("w_output", wo),
            ("w_cell", wg),
            ("b_input", bi),
            ("b_forget", bf),
            ("b_output", bo),
            ("b_cell", bg),
            ("out_w", &mut self.out_w),
            ("out_b", &mut self.out_b),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &LstmParams, scale: f64) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.zip_apply(b, |x, y| *x += scale * y);
        }
    }
}

/// Prompt vocabulary with reserved `<BLANK>` (index 0) and `<UNK>` (index 1).
#[derive(Debug, Clone, PartialEq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for TokenVocab {
    fn default() -> Self {
        let mut v = TokenVocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.add(BLANK_TOKEN);
        v.add(UNK_TOKEN);
        v
    }
}

impl TokenVocab {
    /// Vocabulary over every token of `prompts`, in first-seen order.
    pub fn build<'a, I, S>(prompts: I) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut v = TokenVocab::default();
        for p in prompts {
            for t in p {
                v.add(t.as_ref());
            }
        }
        v
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(BLANK_TOKEN)
            || tokens.get(1).map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err(Error::InvalidInput(
                "vocabulary must start with <BLANK> and <UNK>".into(),
            ));
        }
        let mut v = TokenVocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in tokens {
            if v.index.contains_key(&t) {
                return Err(Error::InvalidInput(format!(
                    "duplicate vocabulary token {t:?}"
                )));
            }
            v.add(&t);
        }
        Ok(v)
    }

    fn add(&mut self, token: &str) {
        if !self.index.contains_key(token) {
            self.index.insert(token.to_string(), self.tokens.len());
            self.tokens.push(token.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn unk(&self) -> usize {
        1
    }

    /// Index of `token`, mapping unknown tokens to `<UNK>`.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.unk())
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.lookup(t.as_ref())).collect()
    }
}
