//! The session log: an append-only list of records written one JSON
//! object per line.
//!
//! The log holds every score in the order it was given, so it can drive
//! a replay of the session.

use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interaction::InteractionConfig;
use crate::search::SearchConfig;

/// Version of the record layout below.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderRecord {
    pub schema_version: u32,
    pub subject: String,
    pub targets: usize,
    pub seed: u64,
    pub search: SearchConfig,
    pub interaction: InteractionConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyScore {
    pub canonical_key: String,
    pub score: u32,
}

/// One completed single interaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub interaction_id: u32,
    pub moment: u32,
    pub generation: u32,
    pub target: u32,
    pub target_label: String,
    /// Inner tests selected as candidates.
    pub candidates_selected: usize,
    /// Candidates that collapsed onto an earlier minimization.
    pub dedup_count: usize,
    /// Minimizations already in the readability archive.
    pub archive_hits: usize,
    /// Scores for the unseen minimizations, in presentation order.
    pub scores: Vec<KeyScore>,
    pub winner: Option<String>,
    pub preference_updated: bool,
    pub preparation_ms: u64,
    pub scoring_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceEntryRecord {
    pub target: u32,
    pub label: String,
    pub canonical_key: String,
    pub score: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteEntryRecord {
    pub target: u32,
    pub label: String,
    pub source: String,
    pub score: Option<u32>,
    pub canonical_key: String,
    pub covers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Header(HeaderRecord),
    MomentStart {
        moment: u32,
        generation: u32,
        coverage: f64,
    },
    Interaction(InteractionRecord),
    InteractionSkipped {
        moment: u32,
        generation: u32,
        target: u32,
        target_label: String,
        reason: String,
    },
    PreferenceUpdate {
        interaction_id: u32,
        entry: PreferenceEntryRecord,
        previous_score: Option<u32>,
    },
    MomentAborted {
        moment: u32,
        generation: u32,
        error: String,
    },
    MomentEnd {
        moment: u32,
        generation: u32,
        interactions: u32,
        preparation_ms: u64,
        scoring_ms: u64,
        preference: Vec<PreferenceEntryRecord>,
    },
    FinalSuite {
        generations: u32,
        covered_targets: usize,
        tests: Vec<SuiteEntryRecord>,
    },
    RunAborted {
        generation: u32,
        reason: String,
    },
}

impl LogRecord {
    /// The record with wall-clock measurements zeroed.
    pub fn untimed(&self) -> LogRecord {
        let mut r = self.clone();
        match &mut r {
            LogRecord::Interaction(i) => {
                i.preparation_ms = 0;
                i.scoring_ms = 0;
            }
            LogRecord::MomentEnd {
                preparation_ms,
                scoring_ms,
                ..
            } => {
                *preparation_ms = 0;
                *scoring_ms = 0;
            }
            _ => {}
        }
        r
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported log schema version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionLog {
    pub records: Vec<LogRecord>,
}

impl SessionLog {
    pub fn push(&mut self, record: LogRecord) {
        self.records.push(record);
    }

    pub fn header(&self) -> Option<&HeaderRecord> {
        self.records.iter().find_map(|r| match r {
            LogRecord::Header(h) => Some(h),
            _ => None,
        })
    }

    pub fn interactions(&self) -> impl Iterator<Item = &InteractionRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Interaction(i) => Some(i),
            _ => None,
        })
    }

    pub fn untimed(&self) -> Vec<LogRecord> {
        self.records.iter().map(LogRecord::untimed).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, LogError> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: LogRecord = serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?;
            if let LogRecord::Header(h) = &r {
                if h.schema_version != SCHEMA_VERSION {
                    return Err(LogError::Version(h.schema_version));
                }
            }
            records.push(r);
        }
        Ok(SessionLog { records })
    }

    pub fn load(path: &Path) -> Result<Self, LogError> {
        let f = std::fs::File::open(path)?;
        Self::read_jsonl(io::BufReader::new(f))
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = io::BufWriter::new(f);
        self.write_jsonl(&mut w)?;
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SessionLog {
        let mut log = SessionLog::default();
        log.push(LogRecord::Header(HeaderRecord {
            schema_version: SCHEMA_VERSION,
            subject: "ArrayIntList".into(),
            targets: 10,
            seed: 7,
            search: SearchConfig::default(),
            interaction: InteractionConfig::default(),
        }));
        log.push(LogRecord::Interaction(InteractionRecord {
            interaction_id: 1,
            moment: 1,
            generation: 200,
            target: 4,
            target_label: "L28".into(),
            candidates_selected: 4,
            dedup_count: 1,
            archive_hits: 0,
            scores: vec![KeyScore {
                canonical_key: "ab".into(),
                score: 7,
            }],
            winner: Some("ab".into()),
            preference_updated: true,
            preparation_ms: 12,
            scoring_ms: 3400,
        }));
        log
    }

    #[test]
    fn jsonl_round_trip() {
        let log = sample();
        let text = log.to_jsonl();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().next().unwrap().contains("\"type\":\"header\""));
        let back = SessionLog::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn untimed_zeroes_durations() {
        let log = sample();
        match &log.untimed()[1] {
            LogRecord::Interaction(i) => assert_eq!((i.preparation_ms, i.scoring_ms), (0, 0)),
            _ => panic!(),
        }
    }

    #[test]
    fn rejects_future_schema() {
        let text = sample().to_jsonl().replace("\"schema_version\":1", "\"schema_version\":99");
        assert!(matches!(SessionLog::read_jsonl(text.as_bytes()), Err(LogError::Version(99))));
    }

    #[test]
    fn reports_bad_line() {
        let text = format!("{}not json\n", sample().to_jsonl());
        assert!(matches!(SessionLog::read_jsonl(text.as_bytes()), Err(LogError::Parse { line: 3, .. })));
    }
}
