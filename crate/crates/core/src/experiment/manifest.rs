use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::json_error_offset;
use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Pretrain,
    GanTrain,
    Unlearn,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Pretrain,
        Stage::GanTrain,
        Stage::Unlearn,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::GanTrain => "gan-train",
            Stage::Unlearn => "unlearn",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A file relative to the stage's input or output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub inputs: Vec<ArtifactRef>,
    pub outputs: Vec<ArtifactRef>,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u64,
    /// Config echo; absent only when a stage failed before reading one.
    pub config: Option<serde_json::Value>,
    pub seeds: BTreeMap<String, u64>,
    /// Completed stages in pipeline order.
    pub stages: Vec<StageRecord>,
    pub failed_stage: Option<Stage>,
    pub error: Option<String>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            format_version: MANIFEST_VERSION,
            config: None,
            seeds: BTreeMap::new(),
            stages: Vec::new(),
            failed_stage: None,
            error: None,
        }
    }
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Format {
            offset: json_error_offset(text, &e),
            message: e.to_string(),
        })?;
        if m.format_version != MANIFEST_VERSION {
            return Err(Error::Version {
                found: m.format_version,
                expected: MANIFEST_VERSION,
            });
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// The manifest in `dir`, or `None` if there is none yet.
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        match read_text(&dir.join(MANIFEST_FILE)) {
            Ok(text) => Self::from_json(&text).map(Some),
            Err(Error::MissingArtifact(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(MANIFEST_FILE), self.to_json().as_bytes())
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }

    /// Inserts or replaces the record for its stage, keeping pipeline order,
    /// and clears a failure recorded for that stage.
    pub fn record(&mut self, rec: StageRecord) {
        if self.failed_stage == Some(rec.stage) {
            self.failed_stage = None;
            self.error = None;
        }
        self.stages.retain(|r| r.stage != rec.stage);
        let at = self.stages.partition_point(|r| r.stage < rec.stage);
        self.stages.insert(at, rec);
    }

    pub fn record_failure(&mut self, stage: Stage, err: &Error) {
        self.stages.retain(|r| r.stage != stage);
        self.failed_stage = Some(stage);
        self.error = Some(err.to_string());
    }

    /// Output path to content hash across every recorded stage. This is the
    /// part of the manifest that must agree between equivalent runs.
    pub fn artifact_hashes(&self) -> BTreeMap<String, String> {
        self.stages
            .iter()
            .flat_map(|r| r.outputs.iter())
            .map(|a| (a.path.clone(), a.sha256.clone()))
            .collect()
    }
}
