//! On-disk layout: `<data_dir>/<dyad>/{log.jsonl, stimulus.json, schedule.json}`
//! plus `<data_dir>/feedback.jsonl`.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use colex_core::engine::{DyadLog, Game, LogEvent};
use colex_core::lexicon::StimulusBundle;
use colex_core::schedule::TrialSchedule;
use serde::{Deserialize, Serialize};

pub const LOG_FILE: &str = "log.jsonl";
pub const STIMULUS_FILE: &str = "stimulus.json";
pub const SCHEDULE_FILE: &str = "schedule.json";
pub const FEEDBACK_FILE: &str = "feedback.jsonl";

/// Append-only writer for one dyad's log.
#[derive(Debug)]
pub struct LogWriter {
    file: File,
    fsync: bool,
    written: usize,
}

impl LogWriter {
    /// Writes the bundle files and the events logged so far.
    pub fn create(dir: &Path, game: &Game, fsync: bool) -> io::Result<LogWriter> {
        fs::create_dir_all(dir)?;
        write_synced(&dir.join(STIMULUS_FILE), game.state.stimulus.to_json().as_bytes(), fsync)?;
        write_synced(&dir.join(SCHEDULE_FILE), game.state.schedule.to_json().as_bytes(), fsync)?;
        let file = OpenOptions::new().create_new(true).append(true).open(dir.join(LOG_FILE))?;
        let mut w = LogWriter {
            file,
            fsync,
            written: 0,
        };
        w.append_new(&game.log.events)?;
        Ok(w)
    }

    /// Appends every event past those already written, then flushes.
    pub fn append_new(&mut self, events: &[LogEvent]) -> io::Result<()> {
        if events.len() <= self.written {
            return Ok(());
        }
        let mut buf = String::new();
        for e in &events[self.written..] {
            buf.push_str(&e.to_line());
            buf.push('\n');
        }
        self.file.write_all(buf.as_bytes())?;
        self.file.flush()?;
        if self.fsync {
            self.file.sync_data()?;
        }
        self.written = events.len();
        Ok(())
    }
}

fn write_synced(path: &Path, bytes: &[u8], fsync: bool) -> io::Result<()> {
    let mut f = File::create(path)?;
    f.write_all(bytes)?;
    if fsync {
        f.sync_all()?;
    }
    Ok(())
}

/// Dyad directories under `root`, sorted by name.
pub fn dyad_dirs(root: &Path) -> io::Result<Vec<PathBuf>> {
    if !root.exists() {
        return Ok(Vec::new());
    }
    let mut out: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(LOG_FILE).is_file())
        .collect();
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recovery {
    Complete,
    Withdrawn,
    /// Was mid-game at startup; a dropout event now closes it.
    MarkedAbandoned,
    /// Could not be replayed; left untouched.
    Unreadable(String),
}

/// Closes any game that was still running when the server stopped. A torn
/// final line from an interrupted append is dropped before the dropout is
/// logged.
pub fn recover_dyad(dir: &Path, fsync: bool) -> Recovery {
    match try_recover(dir, fsync) {
        Ok(r) => r,
        Err(msg) => Recovery::Unreadable(msg),
    }
}

fn try_recover(dir: &Path, fsync: bool) -> Result<Recovery, String> {
    let text = fs::read_to_string(dir.join(LOG_FILE)).map_err(|e| e.to_string())?;
    let mut lines: Vec<&str> = text.lines().collect();
    let torn = !text.is_empty() && !text.ends_with('\n');
    if torn {
        lines.pop();
    }
    let log = DyadLog::from_jsonl(&lines.join("\n")).map_err(|e| e.to_string())?;
    if log.is_complete() && !torn {
        return Ok(Recovery::Complete);
    }
    if log.is_withdrawn() && !torn {
        return Ok(Recovery::Withdrawn);
    }
    let stim = StimulusBundle::load(dir.join(STIMULUS_FILE)).map_err(|e| e.to_string())?;
    let sched = TrialSchedule::load(dir.join(SCHEDULE_FILE)).map_err(|e| e.to_string())?;
    let mut log = log;
    let mut game = loop {
        match Game::replay(stim.clone(), sched.clone(), &log) {
            Ok(g) => break g,
            // The tail lost an engine-generated event; drop the action that
            // produced it.
            Err(e) if e.index == log.events.len() && log.events.len() > 1 => {
                log.events.pop();
            }
            Err(e) => return Err(e.to_string()),
        }
    };
    let t = log.events.last().map_or(0, |e| e.t_ms);
    let outcome = if game.state.is_finished() {
        Recovery::Complete
    } else if game.state.is_abandoned() {
        Recovery::Withdrawn
    } else {
        game.dropout(None, "server_restart", t).map_err(|e| e.to_string())?;
        Recovery::MarkedAbandoned
    };
    write_synced(&dir.join(LOG_FILE), game.log.to_jsonl().as_bytes(), fsync).map_err(|e| e.to_string())?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub dyad: Option<String>,
    pub role: Option<String>,
    pub text: String,
    pub took_notes: bool,
}

pub fn append_feedback(root: &Path, rec: &FeedbackRecord, fsync: bool) -> io::Result<()> {
    fs::create_dir_all(root)?;
    let mut f = OpenOptions::new().create(true).append(true).open(root.join(FEEDBACK_FILE))?;
    let mut line = serde_json::to_string(rec).expect("record serializes");
    line.push('\n');
    f.write_all(line.as_bytes())?;
    f.flush()?;
    if fsync {
        f.sync_data()?;
    }
    Ok(())
}

/// Files of one dyad directory, by file name.
pub type DyadFiles = Vec<(String, Vec<u8>)>;

/// A tar holding a config snapshot, the feedback file and one directory per
/// dyad. Entries are sorted and carry fixed metadata, so equal inputs give
/// equal bytes.
pub fn build_archive(
    config_snapshot: &str,
    feedback: Option<&[u8]>,
    mut dyads: Vec<(String, DyadFiles)>,
) -> io::Result<Vec<u8>> {
    let mut b = tar::Builder::new(Vec::new());
    add_file(&mut b, "config.toml", config_snapshot.as_bytes())?;
    if let Some(fb) = feedback {
        add_file(&mut b, FEEDBACK_FILE, fb)?;
    }
    dyads.sort();
    for (name, mut files) in dyads {
        let mut header = tar::Header::new_ustar();
        header.set_entry_type(tar::EntryType::Directory);
        header.set_mode(0o755);
        header.set_mtime(0);
        header.set_size(0);
        b.append_data(&mut header, format!("{name}/"), io::empty())?;
        files.sort();
        for (file, bytes) in files {
            add_file(&mut b, &format!("{name}/{file}"), &bytes)?;
        }
    }
    b.into_inner()
}

pub fn read_dyad_files(dir: &Path) -> io::Result<DyadFiles> {
    [LOG_FILE, SCHEDULE_FILE, STIMULUS_FILE]
        .iter()
        .filter(|f| dir.join(f).is_file())
        .map(|f| Ok((f.to_string(), fs::read(dir.join(f))?)))
        .collect()
}

fn add_file(b: &mut tar::Builder<Vec<u8>>, path: &str, bytes: &[u8]) -> io::Result<()> {
    let mut header = tar::Header::new_ustar();
    header.set_mode(0o644);
    header.set_mtime(0);
    header.set_size(bytes.len() as u64);
    b.append_data(&mut header, path, bytes)
}
