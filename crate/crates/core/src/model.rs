//! Components as abstract objects: ports, abstraction levels, realizations,
//! manifests and workflow definitions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Semantic port types known to this build.
pub const SEMANTIC_TYPES: &[&str] = &[
    "scalar",
    "integer",
    "boolean",
    "string",
    "scalar-field-2d",
    "time-series",
    "table",
    "image",
];

/// One of the three redundant realization levels of a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbstractionLevel {
    MathematicalModel = 1,
    SimulationModel = 2,
    SurrogateModel = 3,
}

impl AbstractionLevel {
    pub const ALL: [AbstractionLevel; 3] = [
        AbstractionLevel::MathematicalModel,
        AbstractionLevel::SimulationModel,
        AbstractionLevel::SurrogateModel,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Self::MathematicalModel),
            2 => Some(Self::SimulationModel),
            3 => Some(Self::SurrogateModel),
            _ => None,
        }
    }
}

impl fmt::Display for AbstractionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl Serialize for AbstractionLevel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for AbstractionLevel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let n = u8::deserialize(d)?;
        AbstractionLevel::from_number(n)
            .ok_or_else(|| serde::de::Error::custom(format!("abstraction level must be 1, 2 or 3, got {n}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RealizationKind {
    #[serde(rename = "description")]
    Description,
    #[serde(rename = "solver")]
    SolverExecutable,
    #[serde(rename = "table")]
    DataTable,
    #[serde(rename = "url")]
    UrlSource,
}

impl RealizationKind {
    /// The only level a realization of this kind may sit on.
    pub fn level(self) -> AbstractionLevel {
        match self {
            RealizationKind::Description => AbstractionLevel::MathematicalModel,
            RealizationKind::SolverExecutable => AbstractionLevel::SimulationModel,
            RealizationKind::DataTable | RealizationKind::UrlSource => AbstractionLevel::SurrogateModel,
        }
    }

    pub fn is_executable(self) -> bool {
        self != RealizationKind::Description
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RealizationKind::Description => "description",
            RealizationKind::SolverExecutable => "solver",
            RealizationKind::DataTable => "table",
            RealizationKind::UrlSource => "url",
        }
    }
}

impl fmt::Display for RealizationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A typed input or output slot of a component.
///
/// `default` and `optional` extend the port contract: an input with a default
/// (or marked optional) does not need a binding or an inputs-object entry, and
/// an optional output need not be produced for a stage to succeed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub semantic_type: String,
    #[serde(default)]
    pub unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub optional: bool,
}

impl PortSpec {
    pub fn new(name: impl Into<String>, semantic_type: impl Into<String>, unit: impl Into<String>) -> Self {
        PortSpec {
            name: name.into(),
            semantic_type: semantic_type.into(),
            unit: unit.into(),
            shape: None,
            default: None,
            optional: false,
        }
    }

    pub fn with_shape(mut self, shape: Vec<u64>) -> Self {
        self.shape = Some(shape);
        self
    }

    pub fn with_default(mut self, value: serde_json::Value) -> Self {
        self.default = Some(value);
        self
    }

    pub fn optional(mut self) -> Self {
        self.optional = true;
        self
    }

    /// Whether the port can be left unbound when used as an input.
    pub fn is_satisfied_without_binding(&self) -> bool {
        self.optional || self.default.is_some()
    }
}

/// Two ports match when their semantic type, unit and shape agree. Names are
/// not compared.
pub fn ports_compatible(out: &PortSpec, input: &PortSpec) -> bool {
    out.semantic_type == input.semantic_type && out.unit == input.unit && out.shape == input.shape
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Realization {
    pub level: AbstractionLevel,
    pub kind: RealizationKind,
    pub locator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
}

impl Realization {
    pub fn new(kind: RealizationKind, locator: impl Into<String>) -> Self {
        Realization {
            level: kind.level(),
            kind,
            locator: locator.into(),
            checksum: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentManifest {
    pub id: String,
    pub version: String,
    pub title: String,
    #[serde(default)]
    pub inputs: Vec<PortSpec>,
    #[serde(default)]
    pub outputs: Vec<PortSpec>,
    pub realizations: Vec<Realization>,
    #[serde(rename = "description", default, skip_serializing_if = "Option::is_none")]
    pub description_ref: Option<String>,
    /// Directory relative locators are resolved against; set when loaded from disk.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Malformed(#[from] serde_json::Error),
}

impl ComponentManifest {
    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Load `component.json` (or any manifest file) and remember its directory.
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut manifest = Self::from_json(&text)?;
        manifest.base_dir = path.parent().map(Path::to_path_buf);
        Ok(manifest)
    }

    pub fn input(&self, name: &str) -> Option<&PortSpec> {
        self.inputs.iter().find(|p| p.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&PortSpec> {
        self.outputs.iter().find(|p| p.name == name)
    }

    /// Resolve a relative locator against the manifest's directory.
    pub fn resolve_locator(&self, locator: &str) -> PathBuf {
        let p = Path::new(locator);
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn description_path(&self) -> Option<PathBuf> {
        self.description_ref
            .as_deref()
            .or_else(|| {
                self.realizations
                    .iter()
                    .find(|r| r.kind == RealizationKind::Description)
                    .map(|r| r.locator.as_str())
            })
            .map(|l| self.resolve_locator(l))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }

    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            path: path.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, finding) in self.findings.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", finding.path, finding.message)?;
        }
        Ok(())
    }
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

fn is_digest_hex(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

fn validate_ports(report: &mut ValidationReport, direction: &str, ports: &[PortSpec]) {
    let mut seen = BTreeSet::new();
    for (i, port) in ports.iter().enumerate() {
        let path = format!("{direction}[{i}]");
        if port.name.is_empty() {
            report.push(format!("{path}.name"), "empty port name");
        } else if !is_identifier(&port.name) {
            report.push(format!("{path}.name"), format!("invalid port name {:?}", port.name));
        }
        if !seen.insert(port.name.as_str()) {
            report.push(format!("{path}.name"), format!("duplicate port {:?}", port.name));
        }
        if !SEMANTIC_TYPES.contains(&port.semantic_type.as_str()) {
            report.push(
                format!("{path}.type"),
                format!("unknown semantic type {:?}", port.semantic_type),
            );
        }
        if let Some(default) = &port.default {
            if default.is_object() || default.is_array() || default.is_null() {
                report.push(format!("{path}.default"), "default must be a scalar value");
            }
        }
    }
}

/// Check every manifest invariant. Never fails; problems become findings.
pub fn validate_manifest(manifest: &ComponentManifest) -> ValidationReport {
    let mut report = ValidationReport::default();

    if !is_identifier(&manifest.id) {
        report.push("id", format!("invalid component id {:?}", manifest.id));
    }
    if semver::Version::parse(&manifest.version).is_err() {
        report.push("version", format!("not a semantic version: {:?}", manifest.version));
    }
    validate_ports(&mut report, "inputs", &manifest.inputs);
    validate_ports(&mut report, "outputs", &manifest.outputs);

    if manifest.realizations.is_empty() {
        report.push("realizations", "at least one realization is required");
    }
    let mut seen = BTreeSet::new();
    for (i, r) in manifest.realizations.iter().enumerate() {
        let path = format!("realizations[{i}]");
        if r.level != r.kind.level() {
            report.push(
                format!("{path}.level"),
                format!(
                    "realization level/kind mismatch: kind {} requires level {}, got {}",
                    r.kind,
                    r.kind.level(),
                    r.level
                ),
            );
        }
        if r.locator.is_empty() {
            report.push(format!("{path}.locator"), "empty locator");
        }
        if let Some(sum) = &r.checksum {
            if !is_digest_hex(sum) {
                report.push(
                    format!("{path}.checksum"),
                    "checksum must be 64 lowercase hex characters",
                );
            }
        }
        if !seen.insert((r.level, r.kind.as_str(), r.locator.as_str())) {
            report.push(path, "duplicate realization");
        }
    }
    report
}

/// A stage of a workflow: which component, optionally at which level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRef {
    pub component: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<AbstractionLevel>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PortRef {
    pub stage: usize,
    pub port: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Binding {
    pub from: PortRef,
    pub to: PortRef,
}

impl Binding {
    pub fn new(from_stage: usize, from_port: &str, to_stage: usize, to_port: &str) -> Self {
        Binding {
            from: PortRef {
                stage: from_stage,
                port: from_port.to_string(),
            },
            to: PortRef {
                stage: to_stage,
                port: to_port.to_string(),
            },
        }
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "stage {}.{} -> stage {}.{}",
            self.from.stage, self.from.port, self.to.stage, self.to.port
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WorkflowDefinition {
    pub title: String,
    pub stages: Vec<StageRef>,
    #[serde(default)]
    pub bindings: Vec<Binding>,
}

impl WorkflowDefinition {
    pub fn new(title: impl Into<String>) -> Self {
        WorkflowDefinition {
            title: title.into(),
            ..Default::default()
        }
    }

    pub fn stage(mut self, component: &str, level: Option<AbstractionLevel>) -> Self {
        self.stages.push(StageRef {
            component: component.to_string(),
            level,
        });
        self
    }

    pub fn bind(mut self, from_stage: usize, from_port: &str, to_stage: usize, to_port: &str) -> Self {
        self.bindings
            .push(Binding::new(from_stage, from_port, to_stage, to_port));
        self
    }
}

/// A scalar parameter value from the inputs object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputValue {
    Bool(bool),
    Number(serde_json::Number),
    Text(String),
}

impl InputValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            InputValue::Number(n) => n.as_f64(),
            _ => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            InputValue::Bool(b) => serde_json::Value::Bool(*b),
            InputValue::Number(n) => serde_json::Value::Number(n.clone()),
            InputValue::Text(s) => serde_json::Value::String(s.clone()),
        }
    }

    /// Convert a scalar JSON value; `None` for null, arrays and objects.
    pub fn from_json(value: &serde_json::Value) -> Option<Self> {
        match value {
            serde_json::Value::Bool(b) => Some(InputValue::Bool(*b)),
            serde_json::Value::Number(n) => Some(InputValue::Number(n.clone())),
            serde_json::Value::String(s) => Some(InputValue::Text(s.clone())),
            _ => None,
        }
    }
}

impl From<f64> for InputValue {
    fn from(v: f64) -> Self {
        serde_json::Number::from_f64(v)
            .map(InputValue::Number)
            .unwrap_or_else(|| InputValue::Text(v.to_string()))
    }
}

impl From<i64> for InputValue {
    fn from(v: i64) -> Self {
        InputValue::Number(v.into())
    }
}

/// Flat name-to-scalar parameter map of one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InputsObject {
    pub entries: BTreeMap<String, InputValue>,
}

impl InputsObject {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl Into<InputValue>) -> Self {
        self.entries.insert(key.to_string(), value.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<&InputValue> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Canonical bytes (sorted keys, compact) used for digests.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("inputs object serializes")
    }
}
