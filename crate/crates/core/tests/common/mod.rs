//! Reference implementations used as test oracles. They are written
//! independently of the library code paths they check.

#![allow(dead_code)]

use mbpool::io::SyntheticData;
use mbpool::lstm::{cosine_loss, forward, LstmParams};
use mbpool::pooling::FeatureVector;
use mbpool::proposals::ScoredBox;
use mbpool::selection::{MadlibInstance, Task};
use mbpool::CcaModel;
use nalgebra::DMatrix;

/// IoU from corner coordinates.
pub fn iou_corners(a: &ScoredBox, b: &ScoredBox) -> f64 {
    let (ax2, ay2, bx2, by2) = (a.x + a.w, a.y + a.h, b.x + b.w, b.y + b.h);
    let iw = (ax2.min(bx2) - a.x.max(b.x)).max(0.0);
    let ih = (ay2.min(by2) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.w * a.h + b.w * b.h - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// O(n^2) NMS: repeatedly take the best remaining box and drop every
/// remaining box overlapping it by more than `beta`.
pub fn brute_force_nms(boxes: &[ScoredBox], beta: f64) -> Vec<usize> {
    let mut alive: Vec<usize> = (0..boxes.len()).collect();
    let mut kept = Vec::new();
    while !alive.is_empty() {
        let mut best = 0;
        for (pos, &i) in alive.iter().enumerate() {
            let b = alive[best];
            if boxes[i].score > boxes[b].score || (boxes[i].score == boxes[b].score && i < b) {
                best = pos;
            }
        }
        let top = alive.remove(best);
        kept.push(top);
        alive.retain(|&i| iou_corners(&boxes[top], &boxes[i]) <= beta);
    }
    kept
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Largest entry of |cov(projection) - I| for the unscaled projections of
/// the rows of `x` onto `basis`.
pub fn whitening_error(x: &DMatrix<f64>, basis: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let proj = centered * basis;
    let cov = proj.transpose() * &proj / (n as f64 - 1.0);
    let d = cov.nrows();
    (cov - DMatrix::<f64>::identity(d, d)).amax()
}

pub fn whitening_errors(model: &CcaModel, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (f64, f64) {
    let (bx, by) = model.unscaled();
    (whitening_error(x, bx), whitening_error(y, by))
}

fn nearest(v: &[f64], prototypes: &[FeatureVector]) -> usize {
    let dist = |p: &FeatureVector| p.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    (0..prototypes.len())
        .min_by(|&a, &b| dist(&prototypes[a]).total_cmp(&dist(&prototypes[b])))
        .expect("prototypes")
}

/// Concept owning a synthetic answer word `c{c}w{j}`.
fn word_concept(word: &str) -> Option<usize> {
    word.strip_prefix('c')?.split('w').next()?.parse().ok()
}

/// Accuracy of classifying each image to its nearest concept prototype and
/// picking the candidate whose words belong to that concept.
pub fn nearest_prototype_accuracy(
    data: &SyntheticData,
    instances: &[MadlibInstance],
    image: impl Fn(&str) -> Vec<f64>,
) -> f64 {
    let mut correct = 0;
    for inst in instances {
        let c = nearest(&image(&inst.image_id), &data.prototypes);
        let pick = inst
            .candidates
            .iter()
            .position(|cand| cand.iter().all(|w| word_concept(w) == Some(c)));
        if pick == Some(inst.truth_index) {
            correct += 1;
        }
    }
    correct as f64 / instances.len() as f64
}

pub fn of_task(instances: &[MadlibInstance], task: Task) -> Vec<MadlibInstance> {
    instances
        .iter()
        .filter(|i| i.task == task)
        .cloned()
        .collect()
}

pub fn loss_at(params: &LstmParams, image: &[f64], prompt: &[usize], target: &[f64]) -> f64 {
    let e = forward(params, image, prompt).expect("forward");
    cosine_loss(&e, target).expect("loss").0
}

/// Central finite-difference gradient of every parameter tensor.
pub fn numeric_gradient(
    params: &LstmParams,
    image: &[f64],
    prompt: &[usize],
    target: &[f64],
    h: f64,
) -> Vec<(&'static str, DMatrix<f64>)> {
    let mut work = params.clone();
    let shapes: Vec<(&'static str, (usize, usize))> = params
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.shape()))
        .collect();
    let mut out = Vec::new();
    for (ti, (name, (r, c))) in shapes.into_iter().enumerate() {
        let mut g = DMatrix::zeros(r, c);
        for idx in 0..r * c {
            let orig = work.tensors()[ti].1[idx];
            work.tensors_mut()[ti].1[idx] = orig + h;
            let plus = loss_at(&work, image, prompt, target);
            work.tensors_mut()[ti].1[idx] = orig - h;
            let minus = loss_at(&work, image, prompt, target);
            work.tensors_mut()[ti].1[idx] = orig;
            g[idx] = (plus - minus) / (2.0 * h);
        }
        out.push((name, g));
    }
    out
}

/// Norm-wise relative error, with an absolute floor for near-zero tensors.
pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    let diff = (a - b).norm();
    if scale < 1e-9 {
        diff
    } else {
        diff / scale
    }
}
