//! Multiple-choice decision rule and accuracy reporting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cca::{fit_with, CcaConfig, CcaModel, DataMatrix, View};
use crate::error::{Error, Result};
use crate::pooling::{encode_answer, EmbeddingTable, FeatureVector, BLANK_TOKEN};

pub const NUM_CANDIDATES: usize = 4;

/// Question categories, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Scenes,
    Emotion,
    Past,
    Future,
    Interesting,
    ObjectAttribute,
    ObjectAffordance,
    ObjectPosition,
    PersonAttribute,
    PersonActivity,
    PersonLocation,
    PairRelationship,
}

impl Category {
    pub const ALL: [Category; 12] = [
        Category::Scenes,
        Category::Emotion,
        Category::Past,
        Category::Future,
        Category::Interesting,
        Category::ObjectAttribute,
        Category::ObjectAffordance,
        Category::ObjectPosition,
        Category::PersonAttribute,
        Category::PersonActivity,
        Category::PersonLocation,
        Category::PairRelationship,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Scenes => "scenes",
            Category::Emotion => "emotion",
            Category::Past => "past",
            Category::Future => "future",
            Category::Interesting => "interesting",
            Category::ObjectAttribute => "object_attribute",
            Category::ObjectAffordance => "object_affordance",
            Category::ObjectPosition => "object_position",
            Category::PersonAttribute => "person_attribute",
            Category::PersonActivity => "person_activity",
            Category::PersonLocation => "person_location",
            Category::PairRelationship => "pair_relationship",
        }
    }

    /// Row label used in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            Category::Scenes => "Image's scenes",
            Category::Emotion => "Image's emotion",
            Category::Past => "Image's past",
            Category::Future => "Image's future",
            Category::Interesting => "Image's interesting",
            Category::ObjectAttribute => "Object's attribute",
            Category::ObjectAffordance => "Object's affordance",
            Category::ObjectPosition => "Object's position",
            Category::PersonAttribute => "Person's attribute",
            Category::PersonActivity => "Person's activity",
            Category::PersonLocation => "Person's location",
            Category::PairRelationship => "Pair's relationship",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown category {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Easy,
    Hard,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Easy => "easy",
            Task::Hard => "hard",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One fill-in-the-blank question with four candidate completions.
#[derive(Debug, Clone, PartialEq)]
pub struct MadlibInstance {
    pub image_id: String,
    pub category: Category,
    pub task: Task,
    pub prompt: Vec<String>,
    pub candidates: Vec<Vec<String>>,
    pub truth_index: usize,
}

impl MadlibInstance {
    pub fn new(
        image_id: impl Into<String>,
        category: Category,
        task: Task,
        prompt: Vec<String>,
        candidates: Vec<Vec<String>>,
        truth_index: usize,
    ) -> Result<Self> {
        let inst = MadlibInstance {
            image_id: image_id.into(),
            category,
            task,
            prompt,
            candidates,
            truth_index,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates.len() != NUM_CANDIDATES {
            return Err(Error::InvalidInput(format!(
                "expected {NUM_CANDIDATES} candidates, got {}",
                self.candidates.len()
            )));
        }
        if self.truth_index >= NUM_CANDIDATES {
            return Err(Error::InvalidInput(format!(
                "truth index {} out of range",
                self.truth_index
            )));
        }
        let blanks = self.prompt.iter().filter(|t| *t == BLANK_TOKEN).count();
        if blanks != 1 {
            return Err(Error::InvalidInput(format!(
                "prompt must contain exactly one {BLANK_TOKEN}, found {blanks}"
            )));
        }
        Ok(())
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine of dims {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Index of the candidate most cosine-similar to `query`.
///
/// `None` (unencodable) and zero-norm candidates rank below every scored
/// candidate; ties go to the lowest index.
pub fn choose_completion(query: &[f64], candidates: &[Option<FeatureVector>]) -> Result<usize> {
    if query.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroNorm);
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, cand) in candidates.iter().enumerate() {
        let Some(c) = cand else { continue };
        let sim = match cosine_similarity(query, c) {
            Ok(s) => s,
            Err(Error::ZeroNorm) => continue,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((i, sim));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::NoDecision)
}

/// Per (category, task) accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: Category,
    pub task: Task,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// An instance that could not be evaluated and is excluded from totals.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DataError {
    pub image_id: String,
    pub category: Category,
    pub task: Task,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ReportRecord {
    Score(CategoryScore),
    DataError(DataError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub scores: Vec<CategoryScore>,
    pub errors: Vec<DataError>,
}

/// Result of deciding a single instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Decided {
        correct: bool,
    },
    /// No candidate could be scored; counts as incorrect.
    NoDecision,
    DataError(String),
}

impl Outcome {
    /// Maps a decision result against the truth index. Failures to score
    /// any candidate are incorrect answers; anything else is a data error.
    pub fn from_choice(choice: Result<usize>, truth_index: usize) -> Outcome {
        match choice {
            Ok(i) => Outcome::Decided {
                correct: i == truth_index,
            },
            Err(Error::NoDecision) | Err(Error::ZeroNorm) => Outcome::NoDecision,
            Err(e) => Outcome::DataError(e.to_string()),
        }
    }
}

impl EvalReport {
    /// Aggregates outcomes; the result does not depend on their order.
    pub fn from_outcomes<'a, I>(outcomes: I) -> EvalReport
    where
        I: IntoIterator<Item = (&'a MadlibInstance, Outcome)>,
    {
        let mut tally: BTreeMap<(Category, Task), (usize, usize)> = BTreeMap::new();
        let mut errors = Vec::new();
        for (inst, outcome) in outcomes {
            let key = (inst.category, inst.task);
            match outcome {
                Outcome::Decided { correct } => {
                    let e = tally.entry(key).or_default();
                    e.0 += usize::from(correct);
                    e.1 += 1;
                }
                Outcome::NoDecision => tally.entry(key).or_default().1 += 1,
                Outcome::DataError(message) => errors.push(DataError {
                    image_id: inst.image_id.clone(),
                    category: inst.category,
                    task: inst.task,
                    message,
                }),
            }
        }
        errors.sort();
        let scores = tally
            .into_iter()
            .filter(|(_, (_, total))| *total > 0)
            .map(|((category, task), (correct, total))| CategoryScore {
                category,
                task,
                correct,
                total,
                accuracy: correct as f64 / total as f64,
            })
            .collect();
        EvalReport { scores, errors }
    }

    /// Combines reports over disjoint instance sets.
    pub fn merge(reports: impl IntoIterator<Item = EvalReport>) -> EvalReport {
        let mut tally: BTreeMap<(Category, Task), (usize, usize)> = BTreeMap::new();
        let mut errors = Vec::new();
        for r in reports {
            for s in r.scores {
                let e = tally.entry((s.category, s.task)).or_default();
                e.0 += s.correct;
                e.1 += s.total;
            }
            errors.extend(r.errors);
        }
        errors.sort();
        let scores = tally
            .into_iter()
            .map(|((category, task), (correct, total))| CategoryScore {
                category,
                task,
                correct,
                total,
                accuracy: correct as f64 / total as f64,
            })
            .collect();
        EvalReport { scores, errors }
    }

    pub fn get(&self, category: Category, task: Task) -> Option<&CategoryScore> {
        self.scores
            .iter()
            .find(|s| s.category == category && s.task == task)
    }

    /// Unweighted mean accuracy over the categories present for `task`.
    pub fn average(&self, task: Task) -> Option<f64> {
        let accs: Vec<f64> = self
            .scores
            .iter()
            .filter(|s| s.task == task)
            .map(|s| s.accuracy)
            .collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }

    /// Plain-text table, one row per category, accuracies in percent.
    pub fn render_table(&self) -> String {
        let cell = |v: Option<f64>| match v {
            Some(a) => format!("{:.1}", 100.0 * a),
            None => "-".to_string(),
        };
        let mut out = String::new();
        let _ = writeln!(out, "{:<22}{:>11}{:>11}", "", "Easy Task", "Hard Task");
        let categories: Vec<Category> = {
            let mut c: Vec<Category> = self.scores.iter().map(|s| s.category).collect();
            c.dedup();
            c
        };
        for c in categories {
            let easy = self.get(c, Task::Easy).map(|s| s.accuracy);
            let hard = self.get(c, Task::Hard).map(|s| s.accuracy);
            let _ = writeln!(out, "{:<22}{:>11}{:>11}", c.label(), cell(easy), cell(hard));
        }
        let _ = writeln!(
            out,
            "{:<22}{:>11}{:>11}",
            "Average",
            cell(self.average(Task::Easy)),
            cell(self.average(Task::Hard))
        );
        if !self.errors.is_empty() {
            let _ = writeln!(out, "data errors: {}", self.errors.len());
            for e in &self.errors {
                let _ = writeln!(
                    out,
                    "  {} [{} {}]: {}",
                    e.image_id, e.category, e.task, e.message
                );
            }
        }
        out
    }

    /// Newline-delimited JSON, one record per (category, task) and per data error.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let records = self
            .scores
            .iter()
            .cloned()
            .map(ReportRecord::Score)
            .chain(self.errors.iter().cloned().map(ReportRecord::DataError));
        for r in records {
            out.push_str(&serde_json::to_string(&r).expect("report records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<EvalReport> {
        let mut report = EvalReport::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ReportRecord =
                serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
            match record {
                ReportRecord::Score(s) => report.scores.push(s),
                ReportRecord::DataError(e) => report.errors.push(e),
            }
        }
        Ok(report)
    }
}

/// Encodes candidates as mean word vectors projected into the joint space.
fn joint_candidates(
    model: &CcaModel,
    table: &EmbeddingTable,
    candidates: &[Vec<String>],
) -> Result<Vec<Option<FeatureVector>>> {
    candidates
        .iter()
        .map(|c| match encode_answer(c, table) {
            Ok(v) => model.project(&v, View::Text).map(Some),
            Err(Error::Unencodable) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// Fits nCCA on the (image, correct answer) pairs of `instances`. A pair
/// shared by several instances is used once. Instances without an image
/// feature or with an unencodable answer are skipped.
pub fn fit_on_instances<F>(
    instances: &[MadlibInstance],
    features: F,
    table: &EmbeddingTable,
    config: &CcaConfig,
) -> Result<CcaModel>
where
    F: Fn(&str) -> Option<FeatureVector>,
{
    let mut seen = BTreeSet::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for inst in instances {
        let answer = &inst.candidates[inst.truth_index];
        if !seen.insert((inst.image_id.as_str(), answer.as_slice())) {
            continue;
        }
        let Some(image) = features(&inst.image_id) else {
            continue;
        };
        match encode_answer(answer, table) {
            Ok(text) => {
                xs.push(image);
                ys.push(text);
            }
            Err(Error::Unencodable) => {}
            Err(e) => return Err(e),
        }
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: xs.len(),
        });
    }
    fit_with(
        &DataMatrix::from_rows(&xs)?,
        &DataMatrix::from_rows(&ys)?,
        config,
    )
}

/// Decides one instance with the nCCA joint embedding.
pub fn decide_cca(
    inst: &MadlibInstance,
    model: &CcaModel,
    image: &FeatureVector,
    table: &EmbeddingTable,
) -> Result<usize> {
    let query = model.project(image, View::Image)?;
    let cands = joint_candidates(model, table, &inst.candidates)?;
    choose_completion(&query, &cands)
}

/// Evaluates a fitted model on `instances`, looking up each image's pooled
/// representation with `features`.
pub fn evaluate<F>(
    instances: &[MadlibInstance],
    model: &CcaModel,
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
                Outcome::from_choice(decide_cca(inst, model, &image, table), inst.truth_index)
            }
        };
        (inst, outcome)
    }))
}
