//! JSON Lines recordings: one [`Observation`] per line,
//! `{"timestamp": t, "segments": {"<id>": {"p": [x, y, z], "q": [w, x, y, z]}, ...}}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::retarget::Observation;

#[derive(Debug, Error)]
pub enum RecordingError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub fn parse_jsonl(text: &str) -> Result<Vec<Observation>, RecordingError> {
    let mut out: Vec<Observation> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let obs: Observation = serde_json::from_str(line).map_err(|e| RecordingError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if let Some(prev) = out.last() {
            if !(obs.timestamp > prev.timestamp) {
                return Err(RecordingError::Parse {
                    line: i + 1,
                    reason: format!("timestamp {} does not increase (previous {})", obs.timestamp, prev.timestamp),
                });
            }
        }
        out.push(obs);
    }
    Ok(out)
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<Observation>, RecordingError> {
    let path = path.as_ref();
    let io = |source| RecordingError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(io)?);
        text.push('\n');
    }
    parse_jsonl(&text)
}

pub fn to_jsonl(observations: &[Observation]) -> String {
    let mut s = String::new();
    for o in observations {
        s.push_str(&serde_json::to_string(o).expect("observation serializes"));
        s.push('\n');
    }
    s
}

pub fn save(path: impl AsRef<Path>, observations: &[Observation]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(to_jsonl(observations).as_bytes())?;
    w.flush()
}

/// Time-scaled playback of a recording.
#[derive(Debug, Clone)]
pub struct Replay {
    observations: Vec<Observation>,
    speed: f64,
}

impl Replay {
    pub fn new(observations: Vec<Observation>, speed: f64) -> Self {
        assert!(speed > 0.0 && speed.is_finite(), "speed factor must be positive");
        Replay { observations, speed }
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Wall-clock offset of each observation from the first one.
    pub fn schedule(&self) -> Vec<Duration> {
        let Some(t0) = self.observations.first().map(|o| o.timestamp) else {
            return Vec::new();
        };
        self.observations
            .iter()
            .map(|o| Duration::from_secs_f64((o.timestamp - t0) / self.speed))
            .collect()
    }

    /// Calls `sink` for every observation at its scheduled wall-clock time.
    /// Stops early when `sink` returns false.
    pub fn play(&self, mut sink: impl FnMut(&Observation) -> bool) {
        let start = Instant::now();
        for (obs, at) in self.observations.iter().zip(self.schedule()) {
            let now = start.elapsed();
            if at > now {
                std::thread::sleep(at - now);
            }
            if !sink(obs) {
                break;
            }
        }
    }
}
