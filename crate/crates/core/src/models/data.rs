//! Bag-labelled browse logs, one JSON object per session.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One shown item. `true_continue` is a simulator-only diagnostic; trainers
/// never read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub item_id: String,
    pub category_id: String,
    pub features: Vec<f64>,
    #[serde(default)]
    pub click: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_continue: Option<u8>,
}

impl Instance {
    pub fn clicked(&self) -> bool {
        self.click != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BagLabel {
    /// The user kept browsing after this page.
    #[serde(rename = "pos")]
    Positive,
    #[serde(rename = "neg")]
    Negative,
}

impl BagLabel {
    pub fn is_positive(self) -> bool {
        self == BagLabel::Positive
    }
}

/// One page of items shown between two user requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bag {
    pub label: BagLabel,
    pub instances: Vec<Instance>,
}

impl Bag {
    /// Positions of instances whose simulator ground truth says "continue".
    pub fn planted_witnesses(&self) -> Vec<usize> {
        self.instances
            .iter()
            .enumerate()
            .filter(|(_, i)| i.true_continue == Some(1))
            .map(|(j, _)| j)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub user_id: String,
    pub bags: Vec<Bag>,
}

impl SessionLog {
    /// Checks the `(B+, …, B+, B−)` shape: every bag non-empty, at most one
    /// negative bag, and only in last position.
    pub fn validate(&self) -> Result<()> {
        let last = self.bags.len().saturating_sub(1);
        for (i, bag) in self.bags.iter().enumerate() {
            if bag.instances.is_empty() {
                return Err(Error::InvalidData(format!(
                    "session {}: bag {i} is empty",
                    self.user_id
                )));
            }
            if !bag.label.is_positive() && i != last {
                return Err(Error::InvalidData(format!(
                    "session {}: negative bag {i} is not the last bag",
                    self.user_id
                )));
            }
        }
        Ok(())
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.bags.iter().flat_map(|b| b.instances.iter())
    }
}

/// Feature dimension shared by every instance, or an error if they disagree.
pub fn feature_dim<'a>(instances: impl IntoIterator<Item = &'a Instance>) -> Result<usize> {
    let mut dim = None;
    for inst in instances {
        if inst.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite feature on item {}",
                inst.item_id
            )));
        }
        match dim {
            None => dim = Some(inst.features.len()),
            Some(d) if d != inst.features.len() => {
                return Err(Error::InvalidData(format!(
                    "feature dimension {} differs from {d}",
                    inst.features.len()
                )))
            }
            _ => {}
        }
    }
    dim.ok_or_else(|| Error::InvalidData("no instances".into()))
}

pub fn write_jsonl<W: Write>(mut out: W, sessions: &[SessionLog]) -> Result<()> {
    for s in sessions {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<SessionLog>> {
    let mut sessions = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let session: SessionLog = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(format!("session log line {}: {e}", n + 1)))?;
        session.validate()?;
        sessions.push(session);
    }
    Ok(sessions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(id: &str, cont: Option<u8>) -> Instance {
        Instance {
            item_id: id.into(),
            category_id: "c0".into(),
            features: vec![0.5, -1.0],
            click: 1,
            true_continue: cont,
        }
    }

    #[test]
    fn jsonl_wire_format() {
        let session = SessionLog {
            user_id: "u1".into(),
            bags: vec![
                Bag {
                    label: BagLabel::Positive,
                    instances: vec![inst("a", Some(1)), inst("b", Some(0))],
                },
                Bag {
                    label: BagLabel::Negative,
                    instances: vec![inst("c", Some(0))],
                },
            ],
        };
        let mut buf = Vec::new();
        write_jsonl(&mut buf, std::slice::from_ref(&session)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("\"label\":\"pos\""));
        assert!(text.contains("\"click\":1"));
        assert!(text.contains("\"true_continue\":0"));
        let back = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, vec![session.clone()]);
        assert_eq!(session.bags[0].planted_witnesses(), vec![0]);
    }

    #[test]
    fn diagnostics_are_optional() {
        let line = r#"{"user_id":"u","bags":[{"label":"neg","instances":[{"item_id":"i","category_id":"c","features":[1.0],"click":0}]}]}"#;
        let sessions = read_jsonl(line.as_bytes()).unwrap();
        assert_eq!(sessions[0].bags[0].instances[0].true_continue, None);
    }

    #[test]
    fn negative_bag_must_be_last() {
        let bad = SessionLog {
            user_id: "u".into(),
            bags: vec![
                Bag {
                    label: BagLabel::Negative,
                    instances: vec![inst("a", None)],
                },
                Bag {
                    label: BagLabel::Positive,
                    instances: vec![inst("b", None)],
                },
            ],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn schema_errors_are_reported() {
        let err = read_jsonl("{\"user_id\":3}".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn feature_dim_checks() {
        let mut a = inst("a", None);
        let b = inst("b", None);
        assert_eq!(feature_dim([&a, &b]).unwrap(), 2);
        a.features.push(1.0);
        assert!(feature_dim([&a, &b]).is_err());
        a.features = vec![f64::NAN, 0.0];
        assert!(feature_dim([&a]).is_err());
    }
}
