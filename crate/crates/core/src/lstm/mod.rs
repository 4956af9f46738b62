//! Embedded CNN+LSTM: an LSTM reads the prompt with the image feature
//! concatenated to every token embedding, and its final hidden state is
//! mapped into word-vector space. Training maximizes the cosine similarity
//! between that output and the summed word vectors of the correct answer;
//! prediction picks the candidate with the highest cosine.

mod adam;
mod cell;
mod params;

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};
pub use cell::{
    backward, backward_from_trace, cosine_loss, forward, forward_trace, lstm_step, ForwardTrace,
    StepCache,
};
pub use params::{Gate, LstmDims, LstmParams, TokenVocab, UNK_TOKEN};

use crate::error::{Error, Result};
use crate::pooling::{EmbeddingTable, FeatureVector};
use crate::selection::{choose_completion, EvalReport, MadlibInstance, Outcome};
use crate::textfmt::{write_matrix, LineReader};

const MAGIC: &str = "ELSTM1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub dh: usize,
    pub dt: usize,
    pub dv: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            seed: 0,
            dh: 256,
            dt: 128,
            dv: 128,
            adam: AdamConfig::default(),
        }
    }
}

/// One supervised example: image feature, prompt token ids and the summed
/// word vectors of the correct completion.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub image: FeatureVector,
    pub prompt: Vec<usize>,
    pub target: FeatureVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: LstmParams,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains from a seeded initialization with shuffled minibatches and ADAM.
pub fn train(
    dataset: &[TrainExample],
    vocab_size: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::InvalidInput("training set is empty".into()))?;
    if config.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }
    let dims = LstmDims {
        vocab: vocab_size,
        dt: config.dt,
        dv_in: first.image.dim(),
        dv: config.dv,
        dh: config.dh,
        d_out: first.target.dim(),
    };
    for ex in dataset {
        if ex.image.dim() != dims.dv_in || ex.target.dim() != dims.d_out {
            return Err(Error::Shape("training examples disagree on dims".into()));
        }
        if ex.target.norm() == 0.0 {
            return Err(Error::ZeroNorm);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = LstmParams::init(dims, &mut rng)?;
    let mut adam = AdamState::for_params(config.adam, &params);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = params.zeros_like();
            for &i in batch {
                let ex = &dataset[i];
                let trace = forward_trace(&params, &ex.image, &ex.prompt)?;
                let (loss, grad_e) = match cosine_loss(trace.output.as_slice(), &ex.target) {
                    Ok(v) => v,
                    // a zero output has no defined direction; skip its gradient
                    Err(Error::ZeroNorm) => (0.0, vec![0.0; dims.d_out]),
                    Err(e) => return Err(e),
                };
                loss_sum += loss;
                backward_from_trace(&params, &trace, &grad_e, &mut grads);
            }
            let scale = 1.0 / batch.len() as f64;
            for (_, g) in grads.tensors_mut() {
                *g *= scale;
            }
            adam.step_params(&mut params, &grads)?;
        }
        epoch_losses.push(loss_sum / dataset.len() as f64);
    }
    Ok(TrainOutcome {
        params,
        epoch_losses,
    })
}

/// Index of the candidate whose summed word vector is most cosine-similar
/// to the network output.
pub fn predict(
    params: &LstmParams,
    image: &[f64],
    prompt: &[usize],
    candidates: &[Vec<String>],
    table: &EmbeddingTable,
) -> Result<usize> {
    let e = forward(params, image, prompt)?;
    let cands = candidates
        .iter()
        .map(|c| match table.encode_sum(c) {
            Ok(v) => Ok(Some(v)),
            Err(Error::Unencodable) => Ok(None),
            Err(err) => Err(err),
        })
        .collect::<Result<Vec<_>>>()?;
    choose_completion(&e, &cands)
}

/// A trained network together with its prompt vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedLstm {
    pub vocab: TokenVocab,
    pub params: LstmParams,
}

impl EmbeddedLstm {
    /// Builds training examples from instances, encoding each correct
    /// answer as the sum of its word vectors. Instances without an image
    /// feature or with an unencodable answer are skipped.
    pub fn examples<F>(
        vocab: &TokenVocab,
        instances: &[MadlibInstance],
        features: F,
        table: &EmbeddingTable,
    ) -> Vec<TrainExample>
    where
        F: Fn(&str) -> Option<FeatureVector>,
    {
        instances
            .iter()
            .filter_map(|inst| {
                let image = features(&inst.image_id)?;
                let target = table.encode_sum(&inst.candidates[inst.truth_index]).ok()?;
                Some(TrainExample {
                    image,
                    prompt: vocab.encode(&inst.prompt),
                    target,
                })
            })
            .collect()
    }

    /// Trains on `instances`, returning the model and per-epoch losses.
    pub fn fit<F>(
        instances: &[MadlibInstance],
        features: F,
        table: &EmbeddingTable,
        config: &TrainConfig,
    ) -> Result<(EmbeddedLstm, Vec<f64>)>
    where
        F: Fn(&str) -> Option<FeatureVector>,
    {
        let vocab = TokenVocab::build(instances.iter().map(|i| i.prompt.as_slice()));
        let data = EmbeddedLstm::examples(&vocab, instances, features, table);
        let out = train(&data, vocab.len(), config)?;
        Ok((
            EmbeddedLstm {
                vocab,
                params: out.params,
            },
            out.epoch_losses,
        ))
    }

    pub fn predict(
        &self,
        inst: &MadlibInstance,
        image: &[f64],
        table: &EmbeddingTable,
    ) -> Result<usize> {
        predict(
            &self.params,
            image,
            &self.vocab.encode(&inst.prompt),
            &inst.candidates,
            table,
        )
    }

    pub fn evaluate<F>(
        &self,
        instances: &[MadlibInstance],
        features: F,
        table: &EmbeddingTable,
    ) -> EvalReport
    where
        F: Fn(&str) -> Option<FeatureVector>,
    {
        EvalReport::from_outcomes(instances.iter().map(|inst| {
            let outcome = match features(&inst.image_id) {
                None => Outcome::DataError(format!("missing image feature for {}", inst.image_id)),
                Some(image) => {
                    Outcome::from_choice(self.predict(inst, &image, table), inst.truth_index)
                }
            };
            (inst, outcome)
        }))
    }

    /// Writes the versioned checkpoint: dims, vocabulary, then every tensor.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.params.dims;
        writeln!(out, "{MAGIC}")?;
        writeln!(
            out,
            "dims {} {} {} {} {} {}",
            d.vocab, d.dt, d.dv_in, d.dv, d.dh, d.d_out
        )?;
        writeln!(out, "vocab {}", self.vocab.len())?;
        for t in self.vocab.tokens() {
            writeln!(out, "{t}")?;
        }
        for (name, t) in self.params.tensors() {
            write_matrix(&mut out, name, t)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = LineReader::new(reader);
        if lines.next_line()?.trim() != MAGIC {
            return Err(Error::parse(
                lines.lineno,
                format!("expected magic {MAGIC}"),
            ));
        }
        let dims: Vec<usize> = lines.labeled("dims")?;
        let [vocab, dt, dv_in, dv, dh, d_out] = dims[..] else {
            return Err(Error::parse(lines.lineno, "dims needs six values"));
        };
        let dims = LstmDims {
            vocab,
            dt,
            dv_in,
            dv,
            dh,
            d_out,
        };
        let count: Vec<usize> = lines.labeled("vocab")?;
        if count != [vocab] {
            return Err(Error::parse(
                lines.lineno,
                "vocab count disagrees with dims",
            ));
        }
        let mut tokens = Vec::with_capacity(vocab);
        for _ in 0..vocab {
            tokens.push(lines.next_line()?.trim().to_string());
        }
        let vocab = TokenVocab::from_tokens(tokens)
            .map_err(|e| Error::parse(lines.lineno, e.to_string()))?;
        let mut params = LstmParams::zeros(dims)?;
        for (name, t) in params.tensors_mut() {
            let (r, c) = t.shape();
            *t = lines.matrix(name, r, c)?;
        }
        Ok(EmbeddedLstm { vocab, params })
    }
}

/// Per-epoch loss log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

pub fn loss_log_jsonl(losses: &[f64]) -> String {
    losses
        .iter()
        .enumerate()
        .map(|(i, &loss)| {
            serde_json::to_string(&EpochLoss { epoch: i + 1, loss })
                .expect("loss record serializes")
                + "\n"
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<TrainExample>, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        use rand::Rng;
        let data = (0..12)
            .map(|i| {
                let class = i % 3;
                let mut img = vec![0.0; 4];
                img[class] = 1.0;
                img[3] = rng.random_range(-0.1..0.1);
                let mut tgt = vec![0.1; 5];
                tgt[class + 1] = 1.0;
                TrainExample {
                    image: FeatureVector::new(img).unwrap(),
                    prompt: vec![2, 0],
                    target: FeatureVector::new(tgt).unwrap(),
                }
            })
            .collect();
        (data, 3)
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 4,
            seed: 9,
            dh: 4,
            dt: 3,
            dv: 3,
            adam: AdamConfig::default(),
        }
    }

    #[test]
    fn zero_learning_rate_keeps_initialization() {
        let (data, v) = toy();
        let mut cfg = small_config();
        cfg.epochs = 1;
        cfg.adam.alpha = 0.0;
        let out = train(&data, v, &cfg).unwrap();
        let init =
            LstmParams::init(out.params.dims, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
        assert_eq!(out.params, init);
    }

    #[test]
    fn training_is_deterministic() {
        let (data, v) = toy();
        let a = train(&data, v, &small_config()).unwrap();
        let b = train(&data, v, &small_config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.epoch_losses.len(), 3);
        assert!(a.epoch_losses.iter().all(|l| (-1.0..=1.0).contains(l)));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(train(&[], 3, &small_config()).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let (data, v) = toy();
        let out = train(&data, v, &small_config()).unwrap();
        let vocab = TokenVocab::build([["the".to_string()].as_slice()]);
        let model = EmbeddedLstm {
            vocab,
            params: out.params,
        };
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        assert!(buf.starts_with(b"ELSTM1\n"));
        assert_eq!(EmbeddedLstm::read_from(buf.as_slice()).unwrap(), model);
    }

    #[test]
    fn loss_log_format() {
        assert_eq!(
            loss_log_jsonl(&[-0.5, -0.75]),
            "{\"epoch\":1,\"loss\":-0.5}\n{\"epoch\":2,\"loss\":-0.75}\n"
        );
    }
}
