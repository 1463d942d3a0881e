//! Command-line front end: flags and config file in, progress lines out.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::{self, CliOptions, ComponentSelector, Config, ConfigError, FLAGS};
use crate::description::{self, MarkdownDoc};
use crate::engine::{self, ComponentRegistry, Executor, StageStatus};
use crate::model::{AbstractionLevel, InputsObject, Realization, RealizationKind, WorkflowDefinition};
use crate::provenance::{self, RunStatus};

pub const BINARY_NAME: &str = "mardiflow-like";
pub const SOLVER_COMPONENT: &str = "cahn-hilliard";
pub const DATA_COMPONENT: &str = "lookup-table";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    WorkflowFailure,
    Usage,
    Environment,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::WorkflowFailure => 1,
            ExitStatus::Usage => 2,
            ExitStatus::Environment => 3,
        }
    }
}

pub fn usage() -> String {
    let mut text =
        format!("usage: {BINARY_NAME} [options]\n\nCompose and run CSE workflows from components.\n\noptions:\n");
    let width = FLAGS
        .iter()
        .map(|(name, value, _)| name.len() + value.len() + 1)
        .max()
        .unwrap_or(0);
    for (name, value, help) in FLAGS {
        let left = if value.is_empty() {
            name.to_string()
        } else {
            format!("{name} {value}")
        };
        let _ = writeln!(text, "  {left:<width$}  {help}");
    }
    text
}

struct Failure {
    status: ExitStatus,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            status: ExitStatus::Usage,
            message: message.into(),
        }
    }

    fn env(message: impl Into<String>) -> Self {
        Failure {
            status: ExitStatus::Environment,
            message: message.into(),
        }
    }
}

/// Run the tool with `args` (program name excluded).
pub fn run<S: AsRef<str>>(args: &[S], stdout: &mut dyn Write, stderr: &mut dyn Write) -> ExitStatus {
    let opts = match config::parse_cli(args) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}\n\n{}", usage());
            return ExitStatus::Usage;
        }
    };
    if opts.help {
        let _ = write!(stdout, "{}", usage());
        return ExitStatus::Success;
    }
    match run_options(&opts, stdout) {
        Ok(status) => status,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            if f.status == ExitStatus::Usage {
                let _ = writeln!(stderr, "\n{}", usage());
            }
            f.status
        }
    }
}

/// Relative paths are taken from the working directory, falling back to the
/// directory of the config file.
fn locate(path: &Path, config_dir: Option<&Path>) -> PathBuf {
    if path.is_absolute() || path.exists() {
        return path.to_path_buf();
    }
    match config_dir {
        Some(dir) if dir.join(path).exists() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

fn load_config(opts: &CliOptions) -> Result<(Config, Option<PathBuf>), Failure> {
    let Some(path) = &opts.config_path else {
        return Ok((Config::default(), None));
    };
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Failure::env(format!("config not found: {}", path.display()))
        } else {
            Failure::env(format!("cannot read config {}: {e}", path.display()))
        }
    })?;
    let cfg = config::parse_config(&bytes).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    Ok((cfg, path.parent().map(Path::to_path_buf)))
}

fn run_options(opts: &CliOptions, stdout: &mut dyn Write) -> Result<ExitStatus, Failure> {
    let (file_cfg, config_dir) = load_config(opts)?;
    let cfg = config::merge_options(opts, &file_cfg).map_err(|e: ConfigError| Failure::usage(e.to_string()))?;
    let config_dir = config_dir.as_deref();

    let wants_data =
        cfg.component_selector == ComponentSelector::MathData || cfg.get_data.is_some() || cfg.get_url_data.is_some();
    let wants_solver = cfg.component_selector == ComponentSelector::MathSolver;
    if cfg.inputmarkdown.is_none() && !wants_data && !wants_solver {
        return Err(Failure::usage(
            "nothing to do: select a component, a data source or --inputmarkdown",
        ));
    }

    if let Some(md) = &cfg.inputmarkdown {
        convert_markdown(&cfg, &locate(&md.input, config_dir), &md.output)?;
    }
    if !wants_data && !wants_solver {
        return Ok(ExitStatus::Success);
    }

    let components_dir = match &cfg.components_dir {
        Some(dir) => locate(dir, config_dir),
        None if Path::new("components").is_dir() => PathBuf::from("components"),
        None => PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../components")),
    };
    let mut registry = ComponentRegistry::load_dir(&components_dir)
        .map_err(|e| Failure::env(format!("cannot load components from {}: {e}", components_dir.display())))?;

    let inputs = match &cfg.input_path {
        None => InputsObject::new(),
        Some(p) => {
            let path = locate(p, config_dir);
            let bytes = std::fs::read(&path)
                .map_err(|e| Failure::env(format!("cannot read inputs {}: {e}", path.display())))?;
            config::parse_inputs(&bytes).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        }
    };

    let mut def = WorkflowDefinition::new(cfg.workflow_title.clone());
    if wants_data {
        override_data_source(&mut registry, &cfg, config_dir)?;
        def = def.stage(DATA_COMPONENT, Some(AbstractionLevel::SurrogateModel));
    }
    if wants_solver {
        def = def.stage(SOLVER_COMPONENT, None);
    }
    let plan = engine::compose(&def, &registry, &inputs, &engine::DEFAULT_PREFERENCE)
        .map_err(|e| Failure::usage(e.to_string()))?;

    let out_dir = cfg.output_directory.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| Failure::env(format!("cannot create {}: {e}", out_dir.display())))?;
    if cfg.display_html || cfg.display_pdf {
        for stage in &plan.stages {
            render_component_description(&cfg, &stage.manifest, &out_dir)?;
        }
    }

    let executor = Executor::new().with_config_digest(provenance::hash_artifact(cfg.to_ini().as_bytes()));
    let (_, record) = executor
        .execute_with_progress(&plan, &out_dir, &mut |p| {
            let verdict = if p.result.status == StageStatus::Ok {
                "ok"
            } else {
                "failed"
            };
            let _ = writeln!(
                stdout,
                "[{}/{}] {} (level {}) … {verdict}",
                p.position + 1,
                p.total,
                p.stage.manifest.id,
                p.stage.realization.level.number()
            );
            if p.result.status == StageStatus::Failed {
                log::error!("stage {} failed: {}", p.stage.manifest.id, p.result.message);
            }
        })
        .map_err(|e| Failure::env(e.to_string()))?;
    Ok(match record.status {
        RunStatus::Completed => ExitStatus::Success,
        RunStatus::Failed => ExitStatus::WorkflowFailure,
    })
}

/// Point the data component at the table or URL given by `--get-data` /
/// `--get-url-data`, replacing its shipped surrogate.
fn override_data_source(
    registry: &mut ComponentRegistry,
    cfg: &Config,
    config_dir: Option<&Path>,
) -> Result<(), Failure> {
    let replacement = match (&cfg.get_data, &cfg.get_url_data) {
        (Some(path), _) => {
            let path = locate(path, config_dir);
            let abs = std::path::absolute(&path).unwrap_or(path);
            Realization::new(RealizationKind::DataTable, abs.display().to_string())
        }
        (None, Some(url)) => Realization::new(RealizationKind::UrlSource, url.clone()),
        (None, None) => return Ok(()),
    };
    let manifest = registry
        .get_mut(DATA_COMPONENT)
        .ok_or_else(|| Failure::env(format!("component {DATA_COMPONENT:?} is not installed")))?;
    manifest
        .realizations
        .retain(|r| r.level != AbstractionLevel::SurrogateModel);
    manifest.realizations.push(replacement);
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| Failure::env(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| Failure::env(format!("cannot write {}: {e}", path.display())))
}

fn pdf(doc: &MarkdownDoc, cfg: &Config) -> Result<Vec<u8>, Failure> {
    description::render_pdf(doc, &cfg.workflow_title, cfg.pdf_converter.as_deref()).map_err(|e| match e {
        description::PdfError::NoConverterConfigured => Failure::usage(e.to_string()),
        description::PdfError::ConverterFailed(_) => Failure {
            status: ExitStatus::WorkflowFailure,
            message: e.to_string(),
        },
        description::PdfError::Spawn(_) => Failure::env(e.to_string()),
    })
}

/// `--inputmarkdown in:out`. HTML unless only PDF is requested; with both
/// flags the output path gets `.html` and `.pdf` siblings.
fn convert_markdown(cfg: &Config, input: &Path, output: &Path) -> Result<(), Failure> {
    let doc = MarkdownDoc::load(input).map_err(|e| Failure::env(format!("cannot read {}: {e}", input.display())))?;
    match (cfg.display_html, cfg.display_pdf) {
        (true, true) => {
            write_file(
                &output.with_extension("html"),
                description::render_markdown(&doc, &cfg.workflow_title).as_bytes(),
            )?;
            write_file(&output.with_extension("pdf"), &pdf(&doc, cfg)?)
        }
        (false, true) => write_file(output, &pdf(&doc, cfg)?),
        _ => write_file(
            output,
            description::render_markdown(&doc, &cfg.workflow_title).as_bytes(),
        ),
    }
}

fn render_component_description(
    cfg: &Config,
    manifest: &crate::model::ComponentManifest,
    out_dir: &Path,
) -> Result<(), Failure> {
    let Some(path) = manifest.description_path() else {
        return Ok(());
    };
    let doc = MarkdownDoc::load(&path).map_err(|e| Failure::env(format!("cannot read {}: {e}", path.display())))?;
    let dir = out_dir.join("description");
    if cfg.display_html {
        let html = description::render_markdown(&doc, &cfg.workflow_title);
        write_file(&dir.join(format!("{}.html", manifest.id)), html.as_bytes())?;
    }
    if cfg.display_pdf {
        write_file(&dir.join(format!("{}.pdf", manifest.id)), &pdf(&doc, cfg)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_lists_every_flag() {
        let text = usage();
        for (name, _, _) in FLAGS {
            assert!(text.contains(name), "{name} missing from usage");
        }
    }

    #[test]
    fn exit_codes() {
        let codes: Vec<i32> = [
            ExitStatus::Success,
            ExitStatus::WorkflowFailure,
            ExitStatus::Usage,
            ExitStatus::Environment,
        ]
        .iter()
        .map(|s| s.code())
        .collect();
        assert_eq!(codes, vec![0, 1, 2, 3]);
    }

    #[test]
    fn help_and_unknown_flag() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(&["--help"], &mut out, &mut err), ExitStatus::Success);
        assert!(String::from_utf8(out).unwrap().contains("--get-url-data"));

        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(&["--bogus"], &mut out, &mut err), ExitStatus::Usage);
        assert!(String::from_utf8(err).unwrap().contains("--bogus"));
    }
}
