//! Per-image feature store.
//!
//! Text layout, whitespace separated:
//!
//! ```text
//! <dim> <count>
//! <image_id>
//! <global vector: dim values>
//! <proposal count>
//! <x> <y> <w> <h> <score> <dim values>      (one line per proposal)
//! ...next image block
//! ```
//!
//! Floats are written in shortest round-trip form, so write-then-read is
//! bit-exact.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::pooling::{build_image_representation, FeatureVector, PoolMode};
use crate::proposals::{greedy_nms_indices, select_top_k_indices, ScoredBox};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub global: FeatureVector,
    pub proposals: Vec<(ScoredBox, FeatureVector)>,
}

/// Knobs of the proposal pooling step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolConfig {
    pub nms: f64,
    pub top_k: usize,
    pub mode: PoolMode,
    /// L2-normalize every vector before pooling.
    pub normalize: bool,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            nms: 0.75,
            top_k: 100,
            mode: PoolMode::Mean,
            normalize: false,
        }
    }
}

impl ImageFeatures {
    /// NMS, then top-k by score, then pooling with the global vector.
    pub fn pooled(&self, config: &PoolConfig) -> Result<FeatureVector> {
        let boxes: Vec<ScoredBox> = self.proposals.iter().map(|(b, _)| *b).collect();
        let kept = greedy_nms_indices(&boxes, config.nms)?;
        let kept_boxes: Vec<ScoredBox> = kept.iter().map(|&i| boxes[i]).collect();
        let chosen: Vec<usize> = select_top_k_indices(&kept_boxes, config.top_k)
            .into_iter()
            .map(|j| kept[j])
            .collect();
        let prep = |v: &FeatureVector| {
            if config.normalize {
                v.l2_normalized()
            } else {
                v.clone()
            }
        };
        let proposals: Vec<FeatureVector> =
            chosen.iter().map(|&i| prep(&self.proposals[i].1)).collect();
        build_image_representation(&prep(&self.global), &proposals, config.mode)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    ids: Vec<String>,
    images: Vec<ImageFeatures>,
    index: HashMap<String, usize>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Self {
        FeatureStore {
            dim,
            ids: Vec::new(),
            images: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, features: ImageFeatures) -> Result<()> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(Error::InvalidInput(format!("invalid image id {id:?}")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::InvalidInput(format!("duplicate image id {id:?}")));
        }
        let dims_ok = features.global.dim() == self.dim
            && features.proposals.iter().all(|(_, v)| v.dim() == self.dim);
        if !dims_ok {
            return Err(Error::Shape(format!(
                "image {id} has vectors not of store dim {}",
                self.dim
            )));
        }
        for (b, _) in &features.proposals {
            b.validate()?;
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.images.push(features);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ImageFeatures> {
        self.index.get(id).map(|&i| &self.images[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ImageFeatures)> {
        self.ids.iter().map(String::as_str).zip(&self.images)
    }

    /// True when no image carries proposals, i.e. the store holds final
    /// image representations.
    pub fn is_pooled(&self) -> bool {
        self.images.iter().all(|f| f.proposals.is_empty())
    }

    /// The representation of a pooled store's image.
    pub fn representation(&self, id: &str) -> Option<FeatureVector> {
        self.get(id).map(|f| f.global.clone())
    }

    /// A new store with one pooled vector per image and no proposals.
    pub fn pool(&self, config: &PoolConfig) -> Result<FeatureStore> {
        let mut out = FeatureStore::new(self.dim);
        for (id, f) in self.iter() {
            let pooled = f
                .pooled(config)
                .map_err(|e| Error::Data(format!("image {id}: {e}")))?;
            out.insert(
                id,
                ImageFeatures {
                    global: pooled,
                    proposals: Vec::new(),
                },
            )?;
        }
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.dim, self.len())?;
        for (id, f) in self.iter() {
            writeln!(out, "{id}")?;
            write_values(&mut out, f.global.iter())?;
            writeln!(out, "{}", f.proposals.len())?;
            for (b, v) in &f.proposals {
                write_values(
                    &mut out,
                    [b.x, b.y, b.w, b.h, b.score].iter().chain(v.iter()),
                )?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, String)> {
            loop {
                match lines.next() {
                    Some((_, Ok(l))) if l.trim().is_empty() => continue,
                    Some((n, Ok(l))) => return Ok((n, l)),
                    Some((_, Err(e))) => return Err(e.into()),
                    None => {
                        return Err(Error::parse(
                            0,
                            format!("unexpected end of file, expected {what}"),
                        ))
                    }
                }
            }
        };

        let (n, header) = next("header")?;
        let head = parse_numbers::<usize>(n, &header)?;
        let [dim, count] = head[..] else {
            return Err(Error::parse(n, "header must be `<dim> <count>`"));
        };
        let mut store = FeatureStore::new(dim);
        for _ in 0..count {
            let (n, id) = next("image id")?;
            let id = id.trim().to_string();
            if id.split_whitespace().count() != 1 {
                return Err(Error::parse(n, format!("invalid image id {id:?}")));
            }
            let (n, g) = next("global vector")?;
            let global = parse_vector(n, &g, dim)?;
            let (n, c) = next("proposal count")?;
            let pc = parse_numbers::<usize>(n, &c)?;
            let [pc] = pc[..] else {
                return Err(Error::parse(n, "expected a proposal count"));
            };
            let mut proposals = Vec::with_capacity(pc);
            for _ in 0..pc {
                let (n, l) = next("proposal")?;
                let vals = parse_numbers::<f64>(n, &l)?;
                if vals.len() != 5 + dim {
                    return Err(Error::Shape(format!(
                        "line {n}: proposal has {} values, expected {}",
                        vals.len(),
                        5 + dim
                    )));
                }
                let b = ScoredBox::new(vals[0], vals[1], vals[2], vals[3], vals[4])
                    .map_err(|e| Error::parse(n, e.to_string()))?;
                let v = FeatureVector::new(vals[5..].to_vec())
                    .map_err(|e| Error::parse(n, e.to_string()))?;
                proposals.push((b, v));
            }
            store
                .insert(id, ImageFeatures { global, proposals })
                .map_err(|e| match e {
                    Error::Shape(m) => Error::Shape(m),
                    other => Error::parse(n, other.to_string()),
                })?;
        }
        if let Ok((n, _)) = next("end") {
            return Err(Error::parse(
                n,
                "trailing data after the announced image count",
            ));
        }
        Ok(store)
    }
}

fn write_values<'a, W: Write>(out: &mut W, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    let line: Vec<String> = values.map(|v| v.to_string()).collect();
    writeln!(out, "{}", line.join(" "))?;
    Ok(())
}

fn parse_numbers<T: std::str::FromStr>(line: usize, text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split_whitespace()
        .map(|f| {
            f.parse::<T>()
                .map_err(|e| Error::parse(line, format!("{f:?}: {e}")))
        })
        .collect()
}

fn parse_vector(line: usize, text: &str, dim: usize) -> Result<FeatureVector> {
    let vals = parse_numbers::<f64>(line, text)?;
    if vals.len() != dim {
        return Err(Error::Shape(format!(
            "line {line}: vector has {} values, expected {dim}",
            vals.len()
        )));
    }
    FeatureVector::new(vals).map_err(|e| Error::parse(line, e.to_string()))
}
