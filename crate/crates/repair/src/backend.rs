//! Text-generation backends: external process, HTTP endpoint, file replay.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable naming the backend when none is given explicitly.
pub const BACKEND_ENV: &str = "CVN_BACKEND";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generate,
    Regenerate,
    Repair,
    GoalRepair,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Generate => "generate",
            Role::Regenerate => "regenerate",
            Role::Repair => "repair",
            Role::GoalRepair => "goal_repair",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Prompt {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
}

pub trait Backend {
    /// Returns the candidate artifact text for `prompt`.
    fn complete(&mut self, prompt: &Prompt) -> Result<String, BackendError>;
}

/// Where responses come from, as given on the command line or in the environment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackendSpec {
    Http(String),
    Process(String),
    Replay(PathBuf),
}

impl BackendSpec {
    /// `http(s)://…` selects HTTP, `replay:<dir>` selects replay, anything
    /// else is a shell command.
    pub fn parse(s: &str) -> Self {
        if s.starts_with("http://") || s.starts_with("https://") {
            BackendSpec::Http(s.to_string())
        } else if let Some(dir) = s.strip_prefix("replay:") {
            BackendSpec::Replay(PathBuf::from(dir))
        } else {
            BackendSpec::Process(s.strip_prefix("cmd:").unwrap_or(s).to_string())
        }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(BACKEND_ENV).ok().filter(|s| !s.is_empty()).map(|s| Self::parse(&s))
    }

    pub fn open(&self) -> Result<Box<dyn Backend>, BackendError> {
        Ok(match self {
            BackendSpec::Http(url) => Box::new(HttpBackend { url: url.clone() }),
            BackendSpec::Process(cmd) => Box::new(ProcessBackend { command: cmd.clone() }),
            BackendSpec::Replay(dir) => Box::new(ReplayBackend::open(dir)?),
        })
    }
}

/// Runs a shell command per request: prompt on stdin, artifact on stdout.
pub struct ProcessBackend {
    pub command: String,
}

impl Backend for ProcessBackend {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, BackendError> {
        let unavailable = |e: std::io::Error| BackendError::Unavailable(format!("`{}`: {e}", self.command));
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .env("CVN_PROMPT_ROLE", prompt.role.name())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(unavailable)?;
        if let Some(mut stdin) = child.stdin.take() {
            // A backend that ignores its input may close stdin early.
            let _ = stdin.write_all(prompt.text.as_bytes());
        }
        let out = child.wait_with_output().map_err(unavailable)?;
        if !out.status.success() {
            return Err(BackendError::Unavailable(format!(
                "`{}` exited with {}: {}",
                self.command,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        String::from_utf8(out.stdout).map_err(|e| BackendError::Unavailable(format!("non-UTF-8 response: {e}")))
    }
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    prompt: &'a str,
    role: Role,
}

#[derive(Deserialize)]
struct HttpResponse {
    artifact: String,
}

/// POSTs `{prompt, role}` and expects `{artifact}` back.
pub struct HttpBackend {
    pub url: String,
}

impl Backend for HttpBackend {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, BackendError> {
        let fail = |e: ureq::Error| BackendError::Unavailable(format!("{}: {e}", self.url));
        let mut resp = ureq::post(&self.url)
            .send_json(HttpRequest {
                prompt: &prompt.text,
                role: prompt.role,
            })
            .map_err(fail)?;
        let body: HttpResponse = resp.body_mut().read_json().map_err(fail)?;
        Ok(body.artifact)
    }
}

/// Serves numbered files from a directory in ascending order.
pub struct ReplayBackend {
    files: Vec<PathBuf>,
    next: usize,
}

impl ReplayBackend {
    pub fn open(dir: &Path) -> Result<Self, BackendError> {
        let entries = std::fs::read_dir(dir)
            .map_err(|e| BackendError::Unavailable(format!("replay directory {}: {e}", dir.display())))?;
        let mut numbered: Vec<(u64, PathBuf)> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .filter_map(|p| {
                let name = p.file_name()?.to_str()?;
                let digits: String = name.chars().take_while(|c| c.is_ascii_digit()).collect();
                Some((digits.parse().ok()?, p))
            })
            .collect();
        numbered.sort();
        Ok(ReplayBackend {
            files: numbered.into_iter().map(|(_, p)| p).collect(),
            next: 0,
        })
    }

    pub fn remaining(&self) -> usize {
        self.files.len() - self.next
    }
}

impl Backend for ReplayBackend {
    fn complete(&mut self, _prompt: &Prompt) -> Result<String, BackendError> {
        let path = self
            .files
            .get(self.next)
            .ok_or_else(|| BackendError::Unavailable(format!("replay exhausted after {} responses", self.next)))?;
        self.next += 1;
        std::fs::read_to_string(path).map_err(|e| BackendError::Unavailable(format!("{}: {e}", path.display())))
    }
}

/// Drops a surrounding Markdown code fence, if any.
pub fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else { return text };
    let body = rest.split_once('\n').map(|(_, b)| b).unwrap_or("");
    body.trim_end().strip_suffix("```").unwrap_or(body)
}
