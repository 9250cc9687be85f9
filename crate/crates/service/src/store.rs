//! On-disk layout: `<root>/models/<name>.model` and
//! `<root>/sessions/<session-id>.jsonl`.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clad_core::model::TrainedModel;

use crate::error::{ServiceError, ServiceResult};
use crate::session::Event;

const MODEL_EXT: &str = "model";
const LOG_EXT: &str = "jsonl";

#[derive(Clone, Debug)]
pub struct Store {
    root: PathBuf,
}

/// Letters, digits, `-` and `_`; 1 to 64 characters.
pub fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> ServiceResult<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("models"))?;
        fs::create_dir_all(root.join("sessions"))?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn model_path(&self, name: &str) -> PathBuf {
        self.root.join("models").join(format!("{name}.{MODEL_EXT}"))
    }

    pub fn session_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.{LOG_EXT}"))
    }

    pub fn model_names(&self) -> ServiceResult<Vec<String>> {
        list_stems(&self.root.join("models"), MODEL_EXT)
    }

    pub fn session_ids(&self) -> ServiceResult<Vec<String>> {
        list_stems(&self.root.join("sessions"), LOG_EXT)
    }

    pub fn load_model(&self, name: &str) -> ServiceResult<TrainedModel> {
        if !valid_name(name) {
            return Err(ServiceError::BadRequest(format!("invalid model name `{name}`")));
        }
        let path = self.model_path(name);
        if !path.exists() {
            return Err(ServiceError::NotFound(format!("model `{name}` not found")));
        }
        TrainedModel::load(&path).map_err(|e| ServiceError::Internal(format!("model `{name}`: {e}")))
    }

    /// Writes a model file; refuses to replace an existing one.
    pub fn save_model(&self, name: &str, model: &TrainedModel) -> ServiceResult<()> {
        let path = self.model_path(name);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => ServiceError::Conflict(format!("model `{name}` already exists")),
                _ => e.into(),
            })?;
        f.write_all(&model.to_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    /// Creates a new session log holding `first`.
    pub fn create_log(&self, id: &str, first: &Event) -> ServiceResult<SessionLog> {
        let path = self.session_path(id);
        let file = OpenOptions::new().append(true).create_new(true).open(&path)?;
        let mut log = SessionLog { file };
        log.append(first)?;
        Ok(log)
    }

    pub fn open_log(&self, id: &str) -> ServiceResult<SessionLog> {
        let file = OpenOptions::new().append(true).open(self.session_path(id))?;
        Ok(SessionLog { file })
    }

    pub fn read_log(&self, id: &str) -> ServiceResult<Vec<Event>> {
        read_events(&self.session_path(id))
    }
}

fn list_stems(dir: &Path, ext: &str) -> ServiceResult<Vec<String>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push(stem.to_string());
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Parses a session log file, one event per non-empty line.
pub fn read_events(path: &Path) -> ServiceResult<Vec<Event>> {
    let file = File::open(path)?;
    let mut events = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line)
            .map_err(|e| ServiceError::Internal(format!("{}:{}: {e}", path.display(), n + 1)))?;
        events.push(event);
    }
    Ok(events)
}

/// Append handle on one session's log.
#[derive(Debug)]
pub struct SessionLog {
    file: File,
}

impl SessionLog {
    pub fn append(&mut self, event: &Event) -> ServiceResult<()> {
        let mut line = serde_json::to_vec(event).map_err(|e| ServiceError::Internal(e.to_string()))?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        Ok(())
    }
}
