//! Bounding-box geometry and proposal post-processing.
//!
//! Proposals arrive pre-scored. The pipeline applies greedy non-maximum
//! suppression first and then keeps the top-k survivors by score.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An axis-aligned rectangle with an objectness score.
///
/// Coordinates are continuous: `(x, y)` is the top-left corner and the box
/// covers `[x, x + w] x [y, y + h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl ScoredBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64, score: f64) -> Result<Self> {
        let b = ScoredBox { x, y, w, h, score };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x, self.y, self.w, self.h, self.score]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidInput(format!("non-finite box {self:?}")));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "box must have positive extent, got w={} h={}",
                self.w, self.h
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &ScoredBox, b: &ScoredBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok(iou_unchecked(a, b))
}

// Symmetric by construction: min/max and the area sum commute.
fn iou_unchecked(a: &ScoredBox, b: &ScoredBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Indices of `boxes` ordered by score descending, ties by index ascending.
pub fn score_order(boxes: &[ScoredBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&i, &j| {
        boxes[j]
            .score
            .partial_cmp(&boxes[i].score)
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    });
    order
}

/// Greedy NMS returning indices into `boxes` of the retained proposals, in
/// score-descending order. A box is removed when its IoU with an already
/// retained box is strictly greater than `beta`.
pub fn greedy_nms_indices(boxes: &[ScoredBox], beta: f64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidInput(format!(
            "NMS threshold must lie in [0, 1], got {beta}"
        )));
    }
    for b in boxes {
        b.validate()?;
    }
    let order = score_order(boxes);
    let mut suppressed = vec![false; order.len()];
    let mut keep = Vec::new();
    for (pos, &idx) in order.iter().enumerate() {
        if suppressed[pos] {
            continue;
        }
        keep.push(idx);
        for (later, &other) in order.iter().enumerate().skip(pos + 1) {
            if !suppressed[later] && iou_unchecked(&boxes[idx], &boxes[other]) > beta {
                suppressed[later] = true;
            }
        }
    }
    Ok(keep)
}

pub fn greedy_nms(boxes: &[ScoredBox], beta: f64) -> Result<Vec<ScoredBox>> {
    Ok(greedy_nms_indices(boxes, beta)?
        .into_iter()
        .map(|i| boxes[i])
        .collect())
}

/// Indices of the `k` highest-scoring boxes, score-descending.
pub fn select_top_k_indices(boxes: &[ScoredBox], k: usize) -> Vec<usize> {
    let mut order = score_order(boxes);
    order.truncate(k);
    order
}

pub fn select_top_k(boxes: &[ScoredBox], k: usize) -> Vec<ScoredBox> {
    select_top_k_indices(boxes, k)
        .into_iter()
        .map(|i| boxes[i])
        .collect()
}
