//! Run directory layout.
//!
//! ```text
//! <output root>/<run id>/
//!   config.toml               effective configuration
//!   session.jsonl             session log, partial if the run aborted
//!   events.jsonl              every progress event
//!   coverage_archive.json
//!   preference_archive.json
//!   readability_archive.json
//!   suite.txt                 final suite
//!   suite.json                final suite, machine-readable
//!   interactions/NNNN/        what each interaction showed
//!   preference/moment_NN.*    preference archive after each moment
//! ```

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use rtgen_core::events::{Event, EventSink};
use rtgen_core::interaction::RunResult;
use rtgen_core::session::SessionLog;

use crate::config::RunConfig;

pub const CONFIG_FILE: &str = "config.toml";
pub const SESSION_FILE: &str = "session.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SUITE_FILE: &str = "suite.txt";
pub const SUITE_JSON_FILE: &str = "suite.json";

/// Creates `root/id`, or `root/id-2`, `root/id-3`, ... when taken.
pub fn create_run_dir(root: &Path, id: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(root)?;
    for n in 1.. {
        let name = if n == 1 { id.to_string() } else { format!("{id}-{n}") };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!("the loop returns")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    fs::write(path, text + "\n")
}

pub fn write_config(dir: &Path, config: &RunConfig) -> io::Result<()> {
    fs::write(dir.join(CONFIG_FILE), config.to_toml())
}

pub fn write_log(dir: &Path, log: &SessionLog) -> io::Result<()> {
    log.save(&dir.join(SESSION_FILE))
}

/// Everything a completed run leaves behind apart from the config and
/// the per-interaction files.
pub fn write_result(dir: &Path, result: &RunResult) -> io::Result<()> {
    write_log(dir, &result.log)?;
    write_json(&dir.join("coverage_archive.json"), &result.coverage_archive)?;
    write_json(&dir.join("preference_archive.json"), &result.preference)?;
    write_json(&dir.join("readability_archive.json"), &result.readability)?;
    fs::write(dir.join(SUITE_FILE), &result.suite_text)?;
    write_json(&dir.join(SUITE_JSON_FILE), &result.suite)
}

/// Appends events to a JSON-lines file. Write errors are remembered and
/// reported by [`JsonlSink::finish`].
pub struct JsonlSink {
    out: BufWriter<File>,
    error: Option<io::Error>,
}

impl JsonlSink {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(JsonlSink {
            out: BufWriter::new(File::create(path)?),
            error: None,
        })
    }

    pub fn finish(mut self) -> io::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()
    }
}

impl EventSink for JsonlSink {
    fn emit(&mut self, event: &Event) {
        if self.error.is_some() {
            return;
        }
        let line = serde_json::to_string(event).expect("events serialize");
        if let Err(e) = writeln!(self.out, "{line}") {
            self.error = Some(e);
        }
    }
}

/// Sends every event to each sink in turn.
pub struct Tee<'a>(pub Vec<&'a mut dyn EventSink>);

impl EventSink for Tee<'_> {
    fn emit(&mut self, event: &Event) {
        for sink in &mut self.0 {
            sink.emit(event);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rtgen_core::events::{Emitter, EventKind, EventLog};

    #[test]
    fn run_dirs_never_collide() {
        let root = tempfile::tempdir().unwrap();
        let a = create_run_dir(root.path(), "x-seed1").unwrap();
        let b = create_run_dir(root.path(), "x-seed1").unwrap();
        assert_eq!(a.file_name().unwrap(), "x-seed1");
        assert_eq!(b.file_name().unwrap(), "x-seed1-2");
    }

    #[test]
    fn tee_feeds_every_sink() {
        let root = tempfile::tempdir().unwrap();
        let path = root.path().join(EVENTS_FILE);
        let mut file = JsonlSink::create(&path).unwrap();
        let mut memory = EventLog::default();
        {
            let mut tee = Tee(vec![&mut file, &mut memory]);
            let mut emitter = Emitter::new(&mut tee);
            emitter.emit(EventKind::MomentOpened { moment: 1, generation: 200 });
            emitter.emit(EventKind::RunAborted { reason: "x".into() });
        }
        file.finish().unwrap();
        assert_eq!(memory.events.len(), 2);
        let text = fs::read_to_string(path).unwrap();
        let seqs: Vec<u64> = text
            .lines()
            .map(|l| serde_json::from_str::<Event>(l).unwrap().seq)
            .collect();
        assert_eq!(seqs, vec![1, 2]);
    }
}
