//! Run records: input/config digests, chosen realizations, parameter
//! snapshots and artifact digests, plus the FAIR metadata export.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest as _, Sha256};

use crate::engine::{StageResult, StageStatus, WorkflowPlan};
use crate::model::{AbstractionLevel, PortSpec, RealizationKind};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const RUN_RECORD_FILE: &str = "run_record.json";
pub const FAIR_METADATA_FILE: &str = "fair_metadata.json";
pub const REGISTRY_FILE: &str = "registry.jsonl";

/// Lowercase hex SHA-256 digest.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Digest(String);

impl Digest {
    pub fn parse(hex: &str) -> Option<Self> {
        let ok = hex.len() == 64 && hex.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        ok.then(|| Digest(hex.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Digest {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Digest::parse(&value).ok_or_else(|| format!("not a SHA-256 hex digest: {value:?}"))
    }
}

impl From<Digest> for String {
    fn from(d: Digest) -> String {
        d.0
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// SHA-256 of the exact byte sequence.
pub fn hash_artifact(data: &[u8]) -> Digest {
    Digest(hex::encode(Sha256::digest(data)))
}

pub fn hash_file(path: &Path) -> std::io::Result<Digest> {
    Ok(hash_artifact(&std::fs::read(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub index: usize,
    pub component_id: String,
    pub version: String,
    pub level: AbstractionLevel,
    pub realization_kind: RealizationKind,
    pub locator: String,
    /// Digest of the realization's source data (tables, fetched URLs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_digest: Option<Digest>,
    pub input_ports: Vec<PortSpec>,
    pub output_ports: Vec<PortSpec>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    /// Port name to artifact path, relative to the output directory.
    pub outputs: BTreeMap<String, String>,
    /// Every file the stage wrote, relative path to digest.
    pub artifacts: BTreeMap<String, Digest>,
    pub status: StageStatus,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub tool_version: String,
    pub workflow_title: String,
    pub started: String,
    pub finished: String,
    pub input_digest: Digest,
    pub config_digest: Digest,
    pub stages: Vec<StageRecord>,
    pub status: RunStatus,
}

/// Wall-clock bounds of a run plus the digest of the effective configuration.
#[derive(Debug, Clone)]
pub struct RunMeta {
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub config_digest: Digest,
}

impl RunMeta {
    pub fn now(config_digest: Digest) -> Self {
        let t = Utc::now();
        RunMeta {
            started: t,
            finished: t,
            config_digest,
        }
    }
}

fn timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Build the provenance record of one execution.
pub fn record_run(plan: &WorkflowPlan, results: &[StageResult], meta: &RunMeta) -> RunRecord {
    let stages: Vec<StageRecord> = results
        .iter()
        .map(|res| {
            let stage = &plan.stages[res.stage_index];
            StageRecord {
                index: res.stage_index,
                component_id: stage.manifest.id.clone(),
                version: stage.manifest.version.clone(),
                level: stage.realization.level,
                realization_kind: stage.realization.kind,
                locator: stage.realization.locator.clone(),
                source_digest: res.source_digest.clone(),
                input_ports: stage.manifest.inputs.clone(),
                output_ports: stage.manifest.outputs.clone(),
                parameters: res.parameters.clone(),
                outputs: res.outputs.clone(),
                artifacts: res.artifacts.clone(),
                status: res.status,
                message: res.message.clone(),
            }
        })
        .collect();
    let all_ok = stages.len() == plan.stages.len() && stages.iter().all(|s| s.status == StageStatus::Ok);
    RunRecord {
        run_id: uuid::Uuid::new_v4().to_string(),
        tool_version: TOOL_VERSION.to_string(),
        workflow_title: plan.title.clone(),
        started: timestamp(&meta.started),
        finished: timestamp(&meta.finished),
        input_digest: hash_artifact(&plan.inputs.canonical_bytes()),
        config_digest: meta.config_digest.clone(),
        stages,
        status: if all_ok {
            RunStatus::Completed
        } else {
            RunStatus::Failed
        },
    }
}

impl RunRecord {
    /// Artifact digests in execution order; the reproducibility fingerprint.
    pub fn artifact_digests(&self) -> Vec<(String, Digest)> {
        self.stages
            .iter()
            .flat_map(|s| s.artifacts.iter().map(|(p, d)| (p.clone(), d.clone())))
            .collect()
    }

    /// Same inputs, configuration and realizations, and pairwise-equal artifact digests.
    /// Run ids and timestamps are ignored.
    pub fn reproduces(&self, other: &RunRecord) -> bool {
        let same_setup = self.input_digest == other.input_digest
            && self.config_digest == other.config_digest
            && self.stages.len() == other.stages.len()
            && self.stages.iter().zip(&other.stages).all(|(a, b)| {
                a.component_id == b.component_id
                    && a.version == b.version
                    && a.realization_kind == b.realization_kind
                    && a.locator == b.locator
            });
        same_setup && self.artifact_digests() == other.artifact_digests()
    }

    /// Pretty JSON with lexicographically sorted keys.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("run record serializes");
        let mut bytes = serde_json::to_vec_pretty(&value).expect("json value serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_json_bytes(bytes: &[u8]) -> serde_json::Result<Self> {
        serde_json::from_slice(bytes)
    }
}

fn port_json(p: &PortSpec) -> serde_json::Value {
    json!({ "name": p.name, "type": p.semantic_type, "unit": p.unit, "shape": p.shape })
}

/// FAIR metadata document of a run. Deterministic for a given record.
pub fn export_fair_metadata(rec: &RunRecord) -> Vec<u8> {
    let components: Vec<_> = rec
        .stages
        .iter()
        .map(|s| json!({ "id": s.component_id, "version": s.version }))
        .collect();
    let artifacts: Vec<_> = rec
        .stages
        .iter()
        .flat_map(|s| s.artifacts.iter())
        .map(|(path, digest)| json!({ "path": path, "sha256": digest }))
        .collect();
    let stages: Vec<_> = rec
        .stages
        .iter()
        .map(|s| {
            json!({
                "index": s.index,
                "component": { "id": s.component_id, "version": s.version },
                "realization": {
                    "level": s.level,
                    "kind": s.realization_kind,
                    "locator": s.locator,
                    "sha256": s.source_digest,
                },
                "inputs": s.input_ports.iter().map(port_json).collect::<Vec<_>>(),
                "outputs": s.output_ports.iter().map(port_json).collect::<Vec<_>>(),
                "parameters": s.parameters,
                "artifacts": s.artifacts,
                "status": s.status,
            })
        })
        .collect();
    let doc = json!({
        "findable": {
            "identifier": rec.run_id,
            "identifier_type": "UUID",
            "title": rec.workflow_title,
            "components": components,
        },
        "accessible": {
            "run_record": RUN_RECORD_FILE,
            "artifacts": artifacts,
        },
        "interoperable": {
            "digest_algorithm": "SHA-256",
            "metadata_format": "application/json",
        },
        "reusable": {
            "tool": TOOL_NAME,
            "tool_version": rec.tool_version,
            "input_digest": rec.input_digest,
            "config_digest": rec.config_digest,
            "started": rec.started,
            "finished": rec.finished,
        },
        "stages": stages,
        "status": rec.status,
    });
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("json value serializes");
    bytes.push(b'\n');
    bytes
}

#[derive(Debug, Clone)]
pub struct PersistedRecord {
    pub run_record: PathBuf,
    pub fair_metadata: PathBuf,
    pub registry: PathBuf,
}

/// Write `run_record.json` and `fair_metadata.json` and append the run to
/// `registry.jsonl`, all under `out_dir`.
pub fn persist(rec: &RunRecord, out_dir: &Path) -> std::io::Result<PersistedRecord> {
    std::fs::create_dir_all(out_dir)?;
    let record_bytes = rec.to_json_bytes();
    let run_record = out_dir.join(RUN_RECORD_FILE);
    std::fs::write(&run_record, &record_bytes)?;
    let fair_metadata = out_dir.join(FAIR_METADATA_FILE);
    std::fs::write(&fair_metadata, export_fair_metadata(rec))?;

    let registry = out_dir.join(REGISTRY_FILE);
    let line = json!({
        "run_id": rec.run_id,
        "workflow_title": rec.workflow_title,
        "status": rec.status,
        "finished": rec.finished,
        "run_record": RUN_RECORD_FILE,
        "run_record_sha256": hash_artifact(&record_bytes),
    });
    let mut file = OpenOptions::new().create(true).append(true).open(&registry)?;
    writeln!(file, "{line}")?;
    Ok(PersistedRecord {
        run_record,
        fair_metadata,
        registry,
    })
}
