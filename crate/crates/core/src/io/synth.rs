//! Seeded synthetic fill-in-the-blank data.
//!
//! Concepts come in confusable groups (pairs, with one triple when the
//! concept count is odd) whose image prototypes share a group center and
//! differ by a small offset. Each concept owns a cluster of words. Every
//! image shows one concept: its global vector and proposal vectors are the
//! concept prototype plus Gaussian noise. The correct answer uses words of
//! the image's concept. Easy distractors are answers of images showing any
//! other concept; hard distractors come from the confusable partners only.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::manifest::{Manifest, ManifestRecord, Split};
use super::store::{FeatureStore, ImageFeatures};
use crate::error::{Error, Result};
use crate::pooling::{EmbeddingTable, FeatureVector};
use crate::proposals::ScoredBox;
use crate::selection::{Category, Task, NUM_CANDIDATES};

const IMAGE_W: f64 = 640.0;
const IMAGE_H: f64 = 480.0;
const MIN_SIDE: f64 = 16.0;
const WORD_NOISE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub concepts: usize,
    pub images: usize,
    /// Total number of answer words, spread round-robin over concepts.
    pub vocab_size: usize,
    /// Standard deviation of the global-vector noise.
    pub noise: f64,
    pub seed: u64,
    pub feature_dim: usize,
    pub word_dim: usize,
    pub proposals: usize,
    /// Proposal noise is `noise * proposal_noise_scale`.
    pub proposal_noise_scale: f64,
    /// Scale of the offset separating confusable prototypes.
    pub confusion: f64,
    pub categories: usize,
    pub words_per_answer: usize,
    pub train_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            concepts: 8,
            images: 400,
            vocab_size: 64,
            noise: 0.3,
            seed: 0,
            feature_dim: 32,
            word_dim: 300,
            proposals: 120,
            proposal_noise_scale: 3.0,
            confusion: 0.1,
            categories: 1,
            words_per_answer: 3,
            train_fraction: 0.75,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidInput(m));
        if self.concepts < 2 {
            return fail(format!("need at least 2 concepts, got {}", self.concepts));
        }
        if self.images < 4 * self.concepts {
            return fail(format!(
                "need at least 4 images per concept ({}), got {}",
                4 * self.concepts,
                self.images
            ));
        }
        if self.vocab_size < self.concepts {
            return fail("vocabulary must give every concept a word".into());
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return fail(format!("noise must be >= 0, got {}", self.noise));
        }
        if !(self.proposal_noise_scale >= 0.0 && self.confusion >= 0.0) {
            return fail("noise scales must be >= 0".into());
        }
        if self.feature_dim == 0 || self.word_dim == 0 || self.words_per_answer == 0 {
            return fail("dims and answer length must be positive".into());
        }
        if !(1..=Category::ALL.len()).contains(&self.categories) {
            return fail(format!(
                "categories must be in 1..=12, got {}",
                self.categories
            ));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return fail("train fraction must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Generated data plus the ground truth needed by oracles.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub manifest: Manifest,
    pub store: FeatureStore,
    pub table: EmbeddingTable,
    /// Image-space prototype of every concept.
    pub prototypes: Vec<FeatureVector>,
    /// Concept shown by image `i` (id `img{i:05}`).
    pub image_concepts: Vec<usize>,
    /// Words owned by each concept.
    pub concept_words: Vec<Vec<String>>,
    /// Confusable partners of each concept.
    pub partners: Vec<Vec<usize>>,
}

fn prompt_for(category: Category) -> &'static str {
    match category {
        Category::Scenes => "The place is a <BLANK>.",
        Category::Emotion => "When I look at this picture, I feel <BLANK>.",
        Category::Past => "The person or people <BLANK> one second ago.",
        Category::Future => "The person or people will <BLANK> one second after.",
        Category::Interesting => "The most interesting aspect of this picture is <BLANK>.",
        Category::ObjectAttribute => "The object is <BLANK>.",
        Category::ObjectAffordance => "People could <BLANK> the object.",
        Category::ObjectPosition => "The object is <BLANK> in the image.",
        Category::PersonAttribute => "The person is <BLANK>.",
        Category::PersonActivity => "The person is <BLANK>.",
        Category::PersonLocation => "The person is <BLANK>.",
        Category::PairRelationship => "The first person is <BLANK> the second.",
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

// Four decimals keep fixture files small and exactly representable in text.
fn quantize(v: Vec<f64>) -> FeatureVector {
    let q = v.into_iter().map(|x| (x * 1e4).round() / 1e4).collect();
    FeatureVector::new(q).expect("finite synthetic values")
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn confusable_groups(k: usize) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = (0..k / 2).map(|g| vec![2 * g, 2 * g + 1]).collect();
    if k % 2 == 1 {
        groups.last_mut().expect("k >= 2").push(k - 1);
    }
    groups
}

pub fn image_id(i: usize) -> String {
    format!("img{i:05}")
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticData> {
    config.validate()?;
    let k = config.concepts;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let groups = confusable_groups(k);
    let mut partners = vec![Vec::new(); k];
    let mut prototypes = vec![FeatureVector::zeros(config.feature_dim); k];
    for g in &groups {
        let center = gaussian(&mut rng, config.feature_dim, 1.0);
        for &c in g {
            partners[c] = g.iter().copied().filter(|&o| o != c).collect();
            let offset = gaussian(&mut rng, config.feature_dim, config.confusion);
            prototypes[c] = quantize(add(&center, &offset));
        }
    }

    let text_protos: Vec<Vec<f64>> = (0..k)
        .map(|_| gaussian(&mut rng, config.word_dim, 1.0))
        .collect();
    let mut table = EmbeddingTable::new(config.word_dim)?;
    let mut concept_words = vec![Vec::new(); k];
    for j in 0..config.vocab_size {
        let c = j % k;
        let word = format!("c{c}w{}", j / k);
        let noise = gaussian(&mut rng, config.word_dim, WORD_NOISE);
        table.insert(word.clone(), quantize(add(&text_protos[c], &noise)))?;
        concept_words[c].push(word);
    }

    let mut store = FeatureStore::new(config.feature_dim);
    let mut image_concepts = Vec::with_capacity(config.images);
    let mut answers = Vec::with_capacity(config.images);
    let proposal_sigma = config.noise * config.proposal_noise_scale;
    for i in 0..config.images {
        let c = i % k;
        image_concepts.push(c);
        let proto = prototypes[c].as_slice();
        let global = quantize(add(
            proto,
            &gaussian(&mut rng, config.feature_dim, config.noise),
        ));
        let mut proposals = Vec::with_capacity(config.proposals);
        for _ in 0..config.proposals {
            let x = rng.random_range(0.0..IMAGE_W - 2.0 * MIN_SIDE);
            let y = rng.random_range(0.0..IMAGE_H - 2.0 * MIN_SIDE);
            let w = MIN_SIDE + rng.random_range(0.0..1.0) * (IMAGE_W - x - MIN_SIDE);
            let h = MIN_SIDE + rng.random_range(0.0..1.0) * (IMAGE_H - y - MIN_SIDE);
            let score: f64 = rng.random_range(0.0..1.0);
            let r = |v: f64| (v * 100.0).round() / 100.0;
            let b = ScoredBox::new(r(x), r(y), r(w), r(h), (score * 1e4).round() / 1e4)?;
            let v = quantize(add(
                proto,
                &gaussian(&mut rng, config.feature_dim, proposal_sigma),
            ));
            proposals.push((b, v));
        }
        store.insert(image_id(i), ImageFeatures { global, proposals })?;
        let words: Vec<&str> = (0..config.words_per_answer)
            .map(|_| {
                concept_words[c]
                    .choose(&mut rng)
                    .expect("every concept has words")
                    .as_str()
            })
            .collect();
        answers.push(words.join(" "));
    }

    let n_train = (config.images as f64 * config.train_fraction).round() as usize;
    // Whole blocks of `k` images share a category so each category sees every concept.
    let category_of = |i: usize| Category::ALL[(i / k) % config.categories];
    let mut records = Vec::with_capacity(2 * config.images);
    for i in 0..config.images {
        let c = image_concepts[i];
        let category = category_of(i);
        for task in [Task::Easy, Task::Hard] {
            let pool: Vec<usize> = (0..config.images)
                .filter(|&j| {
                    let cj = image_concepts[j];
                    category_of(j) == category
                        && match task {
                            Task::Easy => cj != c,
                            Task::Hard => partners[c].contains(&cj),
                        }
                })
                .collect();
            if pool.len() < NUM_CANDIDATES - 1 {
                return Err(Error::InvalidInput(format!(
                    "not enough {task} distractor images for image {i}"
                )));
            }
            let mut candidates: Vec<String> = pool
                .choose_multiple(&mut rng, NUM_CANDIDATES - 1)
                .map(|&j| answers[j].clone())
                .collect();
            let truth_index = rng.random_range(0..NUM_CANDIDATES);
            candidates.insert(truth_index, answers[i].clone());
            records.push(ManifestRecord {
                image_id: image_id(i),
                category,
                task,
                prompt: prompt_for(category).to_string(),
                candidates,
                truth_index,
                split: Some(if i < n_train {
                    Split::Train
                } else {
                    Split::Test
                }),
                boxes: Vec::new(),
            });
        }
    }

    Ok(SyntheticData {
        manifest: Manifest { records },
        store,
        table,
        prototypes,
        image_concepts,
        concept_words,
        partners,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            concepts: 3,
            images: 24,
            vocab_size: 9,
            proposals: 5,
            feature_dim: 4,
            word_dim: 6,
            seed: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn shapes_and_partitions() {
        let d = generate_synthetic(&small()).unwrap();
        assert_eq!(d.store.len(), 24);
        assert_eq!(d.manifest.records.len(), 48);
        assert_eq!(d.table.len(), 9);
        assert_eq!(d.partners, vec![vec![1, 2], vec![0, 2], vec![0, 1]]);
        for r in &d.manifest.records {
            let inst = r.to_instance().unwrap();
            assert_eq!(inst.candidates.len(), 4);
        }
    }

    #[test]
    fn hard_distractors_come_from_partners() {
        let cfg = SynthConfig {
            concepts: 4,
            images: 32,
            vocab_size: 8,
            proposals: 2,
            feature_dim: 3,
            word_dim: 4,
            ..SynthConfig::default()
        };
        let d = generate_synthetic(&cfg).unwrap();
        let concept_of_word = |w: &str| {
            d.concept_words
                .iter()
                .position(|ws| ws.iter().any(|x| x == w))
                .unwrap()
        };
        for r in d.manifest.records.iter().filter(|r| r.task == Task::Hard) {
            let i: usize = r.image_id[3..].parse().unwrap();
            let c = d.image_concepts[i];
            for (j, cand) in r.candidates.iter().enumerate() {
                let cw = concept_of_word(cand.split(' ').next().unwrap());
                if j == r.truth_index {
                    assert_eq!(cw, c);
                } else {
                    assert!(d.partners[c].contains(&cw));
                }
            }
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(generate_synthetic(&SynthConfig {
            concepts: 1,
            ..small()
        })
        .is_err());
        assert!(generate_synthetic(&SynthConfig {
            images: 11,
            ..small()
        })
        .is_err());
        assert!(generate_synthetic(&SynthConfig {
            noise: -1.0,
            ..small()
        })
        .is_err());
        assert!(generate_synthetic(&SynthConfig {
            categories: 13,
            ..small()
        })
        .is_err());
    }
}
