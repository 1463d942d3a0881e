//! Composition, realization selection and sequential execution.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::model::{
    ports_compatible, validate_manifest, AbstractionLevel, Binding, ComponentManifest, InputValue, InputsObject,
    ManifestError, PortSpec, Realization, RealizationKind, ValidationReport, WorkflowDefinition,
};
use crate::provenance::{self, hash_artifact, Digest, RunMeta, RunRecord};

/// Default level preference: executable simulation first, then data surrogates.
pub const DEFAULT_PREFERENCE: [AbstractionLevel; 2] =
    [AbstractionLevel::SimulationModel, AbstractionLevel::SurrogateModel];

pub const ARTIFACTS_DIR: &str = "artifacts";
pub const BUILTIN_PREFIX: &str = "builtin:";

/// Known components by id.
#[derive(Debug, Clone, Default)]
pub struct ComponentRegistry {
    components: BTreeMap<String, ComponentManifest>,
}

impl ComponentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, manifest: ComponentManifest) -> Option<ComponentManifest> {
        self.components.insert(manifest.id.clone(), manifest)
    }

    pub fn get(&self, id: &str) -> Option<&ComponentManifest> {
        self.components.get(id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut ComponentManifest> {
        self.components.get_mut(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.components.keys().map(String::as_str)
    }

    /// Load every `<dir>/*/component.json`.
    pub fn load_dir(dir: &Path) -> Result<Self, ManifestError> {
        let mut registry = Self::new();
        let entries = std::fs::read_dir(dir).map_err(|source| ManifestError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(Result::ok)
            .map(|e| e.path().join("component.json"))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        for path in paths {
            registry.insert(ComponentManifest::load(&path)?);
        }
        Ok(registry)
    }
}

#[derive(Debug, Error)]
pub enum ResolveError {
    #[error("component {component} has no executable realization at the requested levels")]
    NoExecutableRealization { component: String },
}

/// Pick the realization a stage runs with.
///
/// The requested level wins when the manifest has it; otherwise the first level
/// in `preference` that has a realization. Description realizations are only
/// returned when level 1 is requested explicitly.
pub fn resolve_realization<'m>(
    manifest: &'m ComponentManifest,
    requested: Option<AbstractionLevel>,
    preference: &[AbstractionLevel],
) -> Result<&'m Realization, ResolveError> {
    let at_level = |level: AbstractionLevel| manifest.realizations.iter().find(|r| r.level == level);
    if let Some(level) = requested {
        if let Some(r) = at_level(level) {
            return Ok(r);
        }
    }
    preference
        .iter()
        .filter(|l| **l != AbstractionLevel::MathematicalModel)
        .find_map(|l| at_level(*l).filter(|r| r.kind.is_executable()))
        .ok_or_else(|| ResolveError::NoExecutableRealization {
            component: manifest.id.clone(),
        })
}

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("unknown component {0:?}")]
    UnknownComponent(String),
    #[error("component {id} failed validation: {report}")]
    InvalidManifest { id: String, report: ValidationReport },
    #[error("binding {0} references a stage that does not exist")]
    UnknownStage(Binding),
    #[error("binding {0} references a port that does not exist")]
    UnknownPort(Binding),
    #[error("incompatible ports in binding {0}")]
    IncompatiblePorts(Binding),
    #[error("input port of binding {0} is already bound")]
    DuplicateBinding(Binding),
    #[error("bindings form a cycle")]
    CyclicBindings,
    #[error("required input {port:?} of stage {stage} ({component}) is not bound and has no value")]
    UnboundRequiredInput {
        stage: usize,
        component: String,
        port: String,
    },
    #[error(transparent)]
    Resolve(#[from] ResolveError),
}

/// A stage of a resolved plan.
#[derive(Debug, Clone)]
pub struct PlannedStage {
    /// Position in the workflow definition.
    pub definition_index: usize,
    pub manifest: ComponentManifest,
    pub realization: Realization,
    /// Unbound inputs resolved from the inputs object or port defaults.
    pub parameters: BTreeMap<String, InputValue>,
    /// Input port to the (plan index, output port) feeding it.
    pub upstream: BTreeMap<String, (usize, String)>,
}

/// Executable chain. Stages are in execution order; for bindings that only
/// point forward this is exactly the definition order.
#[derive(Debug, Clone)]
pub struct WorkflowPlan {
    pub title: String,
    pub stages: Vec<PlannedStage>,
    /// Validated bindings, stage indices in plan positions.
    pub edges: Vec<Binding>,
    pub inputs: InputsObject,
}

/// Validate a workflow definition and resolve it into a plan.
pub fn compose(
    def: &WorkflowDefinition,
    registry: &ComponentRegistry,
    inputs: &InputsObject,
    preference: &[AbstractionLevel],
) -> Result<WorkflowPlan, ComposeError> {
    let n = def.stages.len();
    let mut manifests = Vec::with_capacity(n);
    for stage in &def.stages {
        let manifest = registry
            .get(&stage.component)
            .ok_or_else(|| ComposeError::UnknownComponent(stage.component.clone()))?;
        let report = validate_manifest(manifest);
        if !report.is_valid() {
            return Err(ComposeError::InvalidManifest {
                id: manifest.id.clone(),
                report,
            });
        }
        manifests.push(manifest);
    }

    let mut bound: BTreeSet<(usize, &str)> = BTreeSet::new();
    let mut successors = vec![BTreeSet::new(); n];
    let mut in_degree = vec![0usize; n];
    for b in &def.bindings {
        if b.from.stage >= n || b.to.stage >= n {
            return Err(ComposeError::UnknownStage(b.clone()));
        }
        let out = manifests[b.from.stage].output(&b.from.port);
        let input = manifests[b.to.stage].input(&b.to.port);
        let (Some(out), Some(input)) = (out, input) else {
            return Err(ComposeError::UnknownPort(b.clone()));
        };
        if !ports_compatible(out, input) {
            return Err(ComposeError::IncompatiblePorts(b.clone()));
        }
        if !bound.insert((b.to.stage, b.to.port.as_str())) {
            return Err(ComposeError::DuplicateBinding(b.clone()));
        }
        if successors[b.from.stage].insert(b.to.stage) {
            in_degree[b.to.stage] += 1;
        }
    }

    // Kahn's algorithm, always taking the lowest ready definition index.
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| in_degree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &j in &successors[i] {
            in_degree[j] -= 1;
            if in_degree[j] == 0 {
                ready.insert(j);
            }
        }
    }
    if order.len() != n {
        return Err(ComposeError::CyclicBindings);
    }
    let mut position = vec![0usize; n];
    for (pos, &def_idx) in order.iter().enumerate() {
        position[def_idx] = pos;
    }

    let edges: Vec<Binding> = def
        .bindings
        .iter()
        .map(|b| Binding::new(position[b.from.stage], &b.from.port, position[b.to.stage], &b.to.port))
        .collect();

    let mut stages = Vec::with_capacity(n);
    for &def_idx in &order {
        let manifest = manifests[def_idx];
        let mut upstream = BTreeMap::new();
        for e in edges.iter().filter(|e| e.to.stage == position[def_idx]) {
            upstream.insert(e.to.port.clone(), (e.from.stage, e.from.port.clone()));
        }
        let mut parameters = BTreeMap::new();
        for port in &manifest.inputs {
            if upstream.contains_key(&port.name) {
                continue;
            }
            if let Some(v) = inputs.get(&port.name) {
                parameters.insert(port.name.clone(), v.clone());
            } else if let Some(v) = port.default.as_ref().and_then(InputValue::from_json) {
                parameters.insert(port.name.clone(), v);
            } else if !port.optional {
                return Err(ComposeError::UnboundRequiredInput {
                    stage: def_idx,
                    component: manifest.id.clone(),
                    port: port.name.clone(),
                });
            }
        }
        let realization = resolve_realization(manifest, def.stages[def_idx].level, preference)?;
        if !realization.kind.is_executable() {
            return Err(ResolveError::NoExecutableRealization {
                component: manifest.id.clone(),
            }
            .into());
        }
        stages.push(PlannedStage {
            definition_index: def_idx,
            manifest: manifest.clone(),
            realization: realization.clone(),
            parameters,
            upstream,
        });
    }

    Ok(WorkflowPlan {
        title: def.title.clone(),
        stages,
        edges,
        inputs: inputs.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageResult {
    /// Plan position of the stage.
    pub stage_index: usize,
    pub status: StageStatus,
    /// Port name to artifact path relative to the output directory.
    pub outputs: BTreeMap<String, String>,
    /// Every file the stage wrote, relative path to digest.
    pub artifacts: BTreeMap<String, Digest>,
    /// Snapshot of the values and upstream artifacts the stage consumed.
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub source_digest: Option<Digest>,
    pub message: String,
}

/// A stage-level failure, captured in [`StageResult`].
#[derive(Debug, Error)]
#[error("{0}")]
pub struct StageError(pub String);

impl StageError {
    pub fn new(msg: impl Into<String>) -> Self {
        StageError(msg.into())
    }
}

impl From<std::io::Error> for StageError {
    fn from(e: std::io::Error) -> Self {
        StageError(format!("I/O error: {e}"))
    }
}

/// Everything a realization sees while it runs.
pub struct StageContext<'a> {
    pub stage_index: usize,
    pub manifest: &'a ComponentManifest,
    pub realization: &'a Realization,
    parameters: &'a BTreeMap<String, InputValue>,
    upstream: BTreeMap<String, PathBuf>,
    out_dir: &'a Path,
    outputs: BTreeMap<String, String>,
    files: Vec<String>,
    messages: Vec<String>,
    source_digest: Option<Digest>,
}

impl<'a> StageContext<'a> {
    /// Path of an upstream artifact bound to `port`.
    pub fn input_path(&self, port: &str) -> Option<&Path> {
        self.upstream.get(port).map(PathBuf::as_path)
    }

    /// Scalar value of an input: parameter, or the contents of a bound scalar artifact.
    pub fn value(&self, port: &str) -> Result<Option<InputValue>, StageError> {
        if let Some(v) = self.parameters.get(port) {
            return Ok(Some(v.clone()));
        }
        let Some(path) = self.upstream.get(port) else {
            return Ok(None);
        };
        let x = read_scalar(path)?;
        Ok(Some(InputValue::from(x)))
    }

    pub fn number(&self, port: &str) -> Result<Option<f64>, StageError> {
        match self.value(port)? {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| StageError::new(format!("input {port:?} is not a number"))),
        }
    }

    pub fn wants_output(&self, port: &str) -> bool {
        self.manifest.output(port).is_some()
    }

    fn relative(&self, name: &str) -> String {
        format!("{ARTIFACTS_DIR}/stage{}_{name}", self.stage_index)
    }

    fn write_relative(&mut self, rel: String, bytes: &[u8]) -> Result<PathBuf, StageError> {
        let path = self.out_dir.join(&rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        if !self.files.contains(&rel) {
            self.files.push(rel);
        }
        Ok(path)
    }

    /// Write the artifact of an output port as `stage<k>_<port>.<ext>`.
    pub fn write_output(&mut self, port: &str, ext: &str, bytes: &[u8]) -> Result<PathBuf, StageError> {
        if !self.wants_output(port) {
            return Err(StageError::new(format!("component declares no output port {port:?}")));
        }
        let rel = self.relative(&format!("{port}.{ext}"));
        let path = self.write_relative(rel.clone(), bytes)?;
        self.outputs.insert(port.to_string(), rel);
        Ok(path)
    }

    /// Write an auxiliary file under `artifacts/stage<k>_<name>`; returns its relative path.
    pub fn write_aux(&mut self, name: &str, bytes: &[u8]) -> Result<String, StageError> {
        let rel = self.relative(name);
        self.write_relative(rel.clone(), bytes)?;
        Ok(rel)
    }

    pub fn note(&mut self, message: impl Into<String>) {
        self.messages.push(message.into());
    }

    pub fn set_source_digest(&mut self, digest: Digest) {
        self.source_digest = Some(digest);
    }
}

/// Scalar artifact text: one number with 17 significant digits.
pub fn format_scalar(x: f64) -> String {
    format!("{x:.16e}\n")
}

pub fn read_scalar(path: &Path) -> Result<f64, StageError> {
    let text = std::fs::read_to_string(path)?;
    text.trim()
        .parse()
        .map_err(|_| StageError::new(format!("{} does not hold a scalar", path.display())))
}

/// An executable level-2 realization.
pub trait Solver: Send + Sync {
    fn run(&self, ctx: &mut StageContext<'_>) -> Result<(), StageError>;
}

impl<F> Solver for F
where
    F: Fn(&mut StageContext<'_>) -> Result<(), StageError> + Send + Sync,
{
    fn run(&self, ctx: &mut StageContext<'_>) -> Result<(), StageError> {
        self(ctx)
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("I/O failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Progress notification, sent once per finished stage.
pub struct StageProgress<'a> {
    pub position: usize,
    pub total: usize,
    pub stage: &'a PlannedStage,
    pub result: &'a StageResult,
}

/// Runs plans with a set of named solvers (`builtin:<name>` locators).
#[derive(Clone)]
pub struct Executor {
    solvers: BTreeMap<String, Arc<dyn Solver>>,
    config_digest: Digest,
}

impl Default for Executor {
    fn default() -> Self {
        Self::new()
    }
}

impl Executor {
    /// Executor with the built-in solvers registered.
    pub fn new() -> Self {
        let mut ex = Executor {
            solvers: BTreeMap::new(),
            config_digest: hash_artifact(b""),
        };
        ex.register("cahn-hilliard", crate::cahn_hilliard::CahnHilliardSolver);
        ex.register("time-average", crate::data::TimeAverageSolver);
        ex
    }

    pub fn register(&mut self, name: &str, solver: impl Solver + 'static) {
        self.solvers.insert(name.to_string(), Arc::new(solver));
    }

    pub fn with_config_digest(mut self, digest: Digest) -> Self {
        self.config_digest = digest;
        self
    }

    pub fn execute(&self, plan: &WorkflowPlan, out_dir: &Path) -> Result<(Vec<StageResult>, RunRecord), EngineError> {
        self.execute_with_progress(plan, out_dir, &mut |_| {})
    }

    /// Run the plan stage by stage, stopping at the first failure. The run
    /// record is written to `out_dir` in every case.
    pub fn execute_with_progress(
        &self,
        plan: &WorkflowPlan,
        out_dir: &Path,
        progress: &mut dyn FnMut(&StageProgress<'_>),
    ) -> Result<(Vec<StageResult>, RunRecord), EngineError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| EngineError::Io { path, source }
        };
        let artifacts = out_dir.join(ARTIFACTS_DIR);
        std::fs::create_dir_all(&artifacts).map_err(io(&artifacts))?;

        let mut meta = RunMeta::now(self.config_digest.clone());
        let mut results: Vec<StageResult> = Vec::with_capacity(plan.stages.len());
        for (k, stage) in plan.stages.iter().enumerate() {
            let result = self.run_stage(k, stage, &results, out_dir);
            let failed = result.status == StageStatus::Failed;
            progress(&StageProgress {
                position: k,
                total: plan.stages.len(),
                stage,
                result: &result,
            });
            results.push(result);
            if failed {
                break;
            }
        }
        meta.finished = chrono::Utc::now();
        let record = provenance::record_run(plan, &results, &meta);
        provenance::persist(&record, out_dir).map_err(io(out_dir))?;
        Ok((results, record))
    }

    fn run_stage(&self, k: usize, stage: &PlannedStage, done: &[StageResult], out_dir: &Path) -> StageResult {
        let mut snapshot: BTreeMap<String, serde_json::Value> =
            stage.parameters.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
        let mut upstream = BTreeMap::new();
        let mut missing = None;
        for (port, (producer, out_port)) in &stage.upstream {
            let produced = done.get(*producer).and_then(|r| r.outputs.get(out_port));
            match produced {
                Some(rel) => {
                    snapshot.insert(
                        port.clone(),
                        json!({ "artifact": rel, "sha256": done[*producer].artifacts.get(rel) }),
                    );
                    upstream.insert(port.clone(), out_dir.join(rel));
                }
                None => missing = Some(format!("upstream stage {producer} produced no {out_port:?}")),
            }
        }

        let mut ctx = StageContext {
            stage_index: k,
            manifest: &stage.manifest,
            realization: &stage.realization,
            parameters: &stage.parameters,
            upstream,
            out_dir,
            outputs: BTreeMap::new(),
            files: Vec::new(),
            messages: Vec::new(),
            source_digest: None,
        };
        let outcome = match missing {
            Some(msg) => Err(StageError(msg)),
            None => self.dispatch(&mut ctx),
        };
        let outcome = outcome.and_then(|()| {
            let absent: Vec<&str> = stage
                .manifest
                .outputs
                .iter()
                .filter(|p| !p.optional && !ctx.outputs.contains_key(&p.name))
                .map(|p| p.name.as_str())
                .collect();
            if absent.is_empty() {
                Ok(())
            } else {
                Err(StageError::new(format!(
                    "no artifact for output port(s) {}",
                    absent.join(", ")
                )))
            }
        });

        let mut artifacts = BTreeMap::new();
        let mut digest_error = None;
        for rel in &ctx.files {
            match provenance::hash_file(&out_dir.join(rel)) {
                Ok(d) => {
                    artifacts.insert(rel.clone(), d);
                }
                Err(e) => digest_error = Some(format!("cannot digest {rel}: {e}")),
            }
        }
        let mut messages = ctx.messages;
        let status = match (outcome, digest_error) {
            (Ok(()), None) => StageStatus::Ok,
            (Err(e), _) => {
                messages.push(e.0);
                StageStatus::Failed
            }
            (Ok(()), Some(e)) => {
                messages.push(e);
                StageStatus::Failed
            }
        };
        StageResult {
            stage_index: k,
            status,
            outputs: ctx.outputs,
            artifacts,
            parameters: snapshot,
            source_digest: ctx.source_digest,
            message: messages.join("; "),
        }
    }

    fn dispatch(&self, ctx: &mut StageContext<'_>) -> Result<(), StageError> {
        let locator = ctx.realization.locator.clone();
        match ctx.realization.kind {
            RealizationKind::SolverExecutable => {
                let name = locator.strip_prefix(BUILTIN_PREFIX).unwrap_or(&locator);
                let solver = self
                    .solvers
                    .get(name)
                    .ok_or_else(|| StageError::new(format!("no solver registered for {locator:?}")))?;
                solver.run(ctx)
            }
            RealizationKind::DataTable => {
                let path = ctx.manifest.resolve_locator(&locator);
                let bytes = std::fs::read(&path)
                    .map_err(|e| StageError::new(format!("cannot read table {}: {e}", path.display())))?;
                run_data_source(ctx, &bytes)
            }
            RealizationKind::UrlSource => {
                let (bytes, _) = crate::data::fetch_url(&locator).map_err(|e| StageError::new(e.to_string()))?;
                run_data_source(ctx, &bytes)
            }
            RealizationKind::Description => Err(StageError::new("description realizations are not executable")),
        }
    }
}

fn run_data_source(ctx: &mut StageContext<'_>, bytes: &[u8]) -> Result<(), StageError> {
    let digest = hash_artifact(bytes);
    if let Some(expected) = &ctx.realization.checksum {
        if expected != digest.as_str() {
            return Err(StageError::new(format!(
                "checksum mismatch for {}: expected {expected}, got {digest}",
                ctx.realization.locator
            )));
        }
    }
    ctx.set_source_digest(digest);
    crate::data::run_table_surrogate(ctx, bytes)
}

/// Execute a plan with the built-in solvers.
pub fn execute(plan: &WorkflowPlan, out_dir: &Path) -> Result<(Vec<StageResult>, RunRecord), EngineError> {
    Executor::new().execute(plan, out_dir)
}

/// Port list helper for synthetic manifests.
pub fn ports(specs: &[(&str, &str, &str)]) -> Vec<PortSpec> {
    specs.iter().map(|(n, t, u)| PortSpec::new(*n, *t, *u)).collect()
}
