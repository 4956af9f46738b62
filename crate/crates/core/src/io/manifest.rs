//! Newline-delimited JSON manifests of multiple-choice instances.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pooling::tokenize;
use crate::proposals::ScoredBox;
use crate::selection::{Category, MadlibInstance, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_id: String,
    pub category: Category,
    pub task: Task,
    /// Prompt text containing the literal `<BLANK>` token.
    pub prompt: String,
    pub candidates: Vec<String>,
    pub truth_index: usize,
    /// Records without a split are used for both fitting and evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boxes: Vec<ScoredBox>,
}

impl ManifestRecord {
    pub fn to_instance(&self) -> Result<MadlibInstance> {
        MadlibInstance::new(
            self.image_id.clone(),
            self.category,
            self.task,
            tokenize(&self.prompt),
            self.candidates.iter().map(|c| tokenize(c)).collect(),
            self.truth_index,
        )
    }

    pub fn in_split(&self, split: Split) -> bool {
        self.split.is_none_or(|s| s == split)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
            rec.to_instance()
                .map_err(|e| Error::parse(i + 1, e.to_string()))?;
            for b in &rec.boxes {
                b.validate()
                    .map_err(|e| Error::parse(i + 1, e.to_string()))?;
            }
            records.push(rec);
        }
        Ok(Manifest { records })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Instances of one split.
    pub fn instances(&self, split: Split) -> Result<Vec<MadlibInstance>> {
        self.records
            .iter()
            .filter(|r| r.in_split(split))
            .map(ManifestRecord::to_instance)
            .collect()
    }

    /// Distinct categories in first-seen order.
    pub fn categories(&self) -> Vec<Category> {
        let mut out: Vec<Category> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.category) {
                out.push(r.category);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"image_id":"img1","category":"scenes","task":"easy","prompt":"The place is a <BLANK>.","candidates":["beach","kitchen","park","office"],"truth_index":2,"split":"test","boxes":[{"x":0.0,"y":1.0,"w":2.0,"h":3.0,"score":0.5}]}"#;

    #[test]
    fn parses_and_reserializes() {
        let m = Manifest::read_jsonl(LINE.as_bytes()).unwrap();
        assert_eq!(m.records.len(), 1);
        let r = &m.records[0];
        assert_eq!(r.boxes[0].h, 3.0);
        let inst = r.to_instance().unwrap();
        assert_eq!(inst.prompt.last().unwrap(), "<BLANK>");
        let mut buf = Vec::new();
        m.write_jsonl(&mut buf).unwrap();
        assert_eq!(Manifest::read_jsonl(buf.as_slice()).unwrap(), m);
        assert!(m.instances(Split::Train).unwrap().is_empty());
        assert_eq!(m.instances(Split::Test).unwrap().len(), 1);
    }

    #[test]
    fn reports_line_numbers() {
        let text = format!("{LINE}\n\n{{\"image_id\": 3}}\n");
        match Manifest::read_jsonl(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad_truth = LINE.replace("\"truth_index\":2", "\"truth_index\":7");
        assert!(Manifest::read_jsonl(bad_truth.as_bytes()).is_err());
        let no_blank = LINE.replace("<BLANK>", "thing");
        assert!(Manifest::read_jsonl(no_blank.as_bytes()).is_err());
    }
}
