//! Output plumbing: run manifests, CSV/JSON sinks, exit-code mapping.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    /// Bad input, bad arguments, I/O trouble: exit code 2.
    Validation(String),
    /// Desk-scale budget exceeded: exit code 3.
    Size(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Size(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Size(m) => write!(f, "{m}"),
        }
    }
}

impl From<statekey::Error> for CliError {
    fn from(e: statekey::Error) -> Self {
        match e {
            statekey::Error::Size { .. } => CliError::Size(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Echoed verbatim into every output file header.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub args: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn new(
        subcommand: &str,
        args: &[String],
        inputs: &[&PathBuf],
        out: &Option<PathBuf>,
        seed: Option<u64>,
    ) -> Self {
        RunManifest {
            tool: "statekey",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            args: args.to_vec(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: out
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            seed,
        }
    }
}

fn wall_clock_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

enum Target {
    File(fs::File),
    Stdout,
}

/// Line sink for CSV outputs; writes the manifest header first.
pub struct OutputSink {
    target: Target,
    buf: String,
}

impl OutputSink {
    pub fn create(path: &Option<PathBuf>, manifest: &RunManifest) -> CliResult<Self> {
        let target = match path {
            Some(p) => Target::File(fs::File::create(p)?),
            None => Target::Stdout,
        };
        let mut sink = OutputSink {
            target,
            buf: String::new(),
        };
        sink.line(&format!(
            "# manifest: {}",
            serde_json::to_string(manifest)?
        ))?;
        sink.line(&format!("# wall_clock_unix: {}", wall_clock_unix()))?;
        Ok(sink)
    }

    pub fn line(&mut self, s: &str) -> CliResult<()> {
        self.buf.push_str(s);
        self.buf.push('\n');
        Ok(())
    }

    pub fn finish(mut self) -> CliResult<()> {
        match &mut self.target {
            Target::File(f) => {
                f.write_all(self.buf.as_bytes())?;
                f.flush()?;
            }
            Target::Stdout => {
                std::io::stdout().write_all(self.buf.as_bytes())?;
            }
        }
        Ok(())
    }
}

/// JSON outputs carry the manifest as a top-level field.
pub fn write_json<T: Serialize>(
    path: &Option<PathBuf>,
    manifest: &RunManifest,
    payload: &T,
) -> CliResult<()> {
    #[derive(Serialize)]
    struct Envelope<'a, T> {
        manifest: &'a RunManifest,
        wall_clock_unix: f64,
        #[serde(flatten)]
        payload: &'a T,
    }
    let body = serde_json::to_string_pretty(&Envelope {
        manifest,
        wall_clock_unix: wall_clock_unix(),
        payload,
    })?;
    match path {
        Some(p) => {
            fs::write(p, body + "\n")?;
        }
        None => println!("{body}"),
    }
    Ok(())
}

pub fn read_to_string(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}
