//! Inputs object, INI configuration and command-line parsing.
//!
//! INI dialect: `[section]` headers, `key = value` lines, full-line `#` / `;`
//! comments, whitespace-trimmed values, case-sensitive keys and no line
//! continuations. Recognised keys live in `[default]`; every other section is
//! kept verbatim as user-defined entries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::model::{InputValue, InputsObject};

pub const DEFAULT_WORKFLOW_TITLE: &str = "This is a CSE workflow description under MaRDIFlow";
pub const DEFAULT_OUTPUT_DIRECTORY: &str = "Output";
pub const DEFAULT_SECTION: &str = "default";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ComponentSelector {
    MathData,
    MathSolver,
    #[default]
    Unset,
}

impl ComponentSelector {
    fn as_ini(self) -> &'static str {
        match self {
            ComponentSelector::MathData => "math-data",
            ComponentSelector::MathSolver => "math-solver",
            ComponentSelector::Unset => "",
        }
    }

    fn parse(value: &str) -> Option<Self> {
        match value.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "" => Some(ComponentSelector::Unset),
            "math-data" => Some(ComponentSelector::MathData),
            "math-solver" => Some(ComponentSelector::MathSolver),
            _ => None,
        }
    }
}

/// Markdown conversion request: source and destination paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkdownPaths {
    pub input: PathBuf,
    pub output: PathBuf,
}

impl MarkdownPaths {
    pub fn parse(value: &str) -> Option<Self> {
        let (input, output) = value.split_once(':')?;
        let (input, output) = (input.trim(), output.trim());
        if input.is_empty() || output.is_empty() {
            return None;
        }
        Some(MarkdownPaths {
            input: input.into(),
            output: output.into(),
        })
    }

    fn to_value(&self) -> String {
        format!("{}:{}", self.input.display(), self.output.display())
    }
}

/// Effective run options.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub workflow_title: String,
    pub input_path: Option<PathBuf>,
    pub output_directory: PathBuf,
    pub component_selector: ComponentSelector,
    pub display_html: bool,
    pub display_pdf: bool,
    pub inputmarkdown: Option<MarkdownPaths>,
    pub get_data: Option<PathBuf>,
    pub get_url_data: Option<String>,
    /// Shell command converting HTML on stdin to PDF on stdout.
    pub pdf_converter: Option<String>,
    pub components_dir: Option<PathBuf>,
    /// Unrecognised `[default]` keys.
    pub extra: BTreeMap<String, String>,
    /// Every section other than `[default]`.
    pub user_sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            workflow_title: DEFAULT_WORKFLOW_TITLE.to_string(),
            input_path: None,
            output_directory: PathBuf::from(DEFAULT_OUTPUT_DIRECTORY),
            component_selector: ComponentSelector::Unset,
            display_html: false,
            display_pdf: false,
            inputmarkdown: None,
            get_data: None,
            get_url_data: None,
            pdf_converter: None,
            components_dir: None,
            extra: BTreeMap::new(),
            user_sections: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    MalformedJson {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("inputs object must be a flat JSON object")]
    NotAnObject,
    #[error("nested value for key {0:?}: inputs must be scalars")]
    NestedValue(String),
    #[error("empty key in inputs object")]
    EmptyKey,
    #[error("malformed INI at line {line}: {message}")]
    MalformedIni { line: usize, message: String },
    #[error("duplicate key {key:?} in section [{section}] at line {line}")]
    DuplicateKey { section: String, key: String, line: usize },
    #[error("invalid value for {key} at line {line}: {message}")]
    InvalidValue { key: String, line: usize, message: String },
    #[error("input is not valid UTF-8")]
    NotUtf8,
    #[error("unknown flag {0}")]
    UnknownFlag(String),
    #[error("flag {0} requires a value")]
    MissingFlagValue(String),
    #[error("invalid value for flag {flag}: {value:?}")]
    InvalidFlagValue { flag: String, value: String },
    #[error("--math-data and --math-solver are mutually exclusive")]
    ConflictingSelectors,
    #[error("--get-data and --get-url-data cannot both be set")]
    ConflictingDataFlags,
}

/// Parse the flat JSON inputs object.
pub fn parse_inputs(text: &[u8]) -> Result<InputsObject, ConfigError> {
    let text = std::str::from_utf8(text).map_err(|_| ConfigError::NotUtf8)?;
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::MalformedJson {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let object = value.as_object().ok_or(ConfigError::NotAnObject)?;
    let mut inputs = InputsObject::new();
    for (key, value) in object {
        if key.is_empty() {
            return Err(ConfigError::EmptyKey);
        }
        let scalar = InputValue::from_json(value).ok_or_else(|| ConfigError::NestedValue(key.clone()))?;
        inputs.entries.insert(key.clone(), scalar);
    }
    Ok(inputs)
}

/// Booleans: `true`/`false`/`1`/`0` in any case; the empty string is false.
pub fn parse_bool(value: &str) -> Option<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "" | "false" | "0" => Some(false),
        "true" | "1" => Some(true),
        _ => None,
    }
}

fn non_empty(value: &str) -> Option<&str> {
    let v = value.trim();
    (!v.is_empty()).then_some(v)
}

type Sections = BTreeMap<String, BTreeMap<String, (String, usize)>>;

fn parse_ini_sections(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::MalformedIni {
                line: line_no,
                message: "unterminated section header".into(),
            })?;
            let name = name.trim();
            if name.is_empty() {
                return Err(ConfigError::MalformedIni {
                    line: line_no,
                    message: "empty section name".into(),
                });
            }
            sections.entry(name.to_string()).or_default();
            current = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::MalformedIni {
                line: line_no,
                message: format!("expected `key = value`, got {line:?}"),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::MalformedIni {
                line: line_no,
                message: "empty key".into(),
            });
        }
        let section = current.clone().ok_or_else(|| ConfigError::MalformedIni {
            line: line_no,
            message: "key outside of any section".into(),
        })?;
        let entries = sections.entry(section.clone()).or_default();
        if entries.contains_key(key) {
            return Err(ConfigError::DuplicateKey {
                section,
                key: key.to_string(),
                line: line_no,
            });
        }
        entries.insert(key.to_string(), (value.trim().to_string(), line_no));
    }
    Ok(sections)
}

/// Parse an INI configuration file into a [`Config`].
pub fn parse_config(text: &[u8]) -> Result<Config, ConfigError> {
    let text = std::str::from_utf8(text).map_err(|_| ConfigError::NotUtf8)?;
    let mut sections = parse_ini_sections(text)?;
    let mut cfg = Config::default();

    if let Some(defaults) = sections.remove(DEFAULT_SECTION) {
        for (key, (value, line)) in defaults {
            let invalid = |message: &str| ConfigError::InvalidValue {
                key: key.clone(),
                line,
                message: message.to_string(),
            };
            match key.as_str() {
                "workflow_title" => {
                    if let Some(v) = non_empty(&value) {
                        cfg.workflow_title = v.to_string();
                    }
                }
                "input" => cfg.input_path = non_empty(&value).map(PathBuf::from),
                "output_directory" => {
                    if let Some(v) = non_empty(&value) {
                        cfg.output_directory = PathBuf::from(v);
                    }
                }
                "component" => {
                    cfg.component_selector = ComponentSelector::parse(&value)
                        .ok_or_else(|| invalid("expected math-data, math-solver or empty"))?;
                }
                "display_html" => {
                    cfg.display_html = parse_bool(&value).ok_or_else(|| invalid("expected a boolean"))?;
                }
                "display_pdf" => {
                    cfg.display_pdf = parse_bool(&value).ok_or_else(|| invalid("expected a boolean"))?;
                }
                "inputmarkdown" => {
                    cfg.inputmarkdown = match non_empty(&value) {
                        None => None,
                        Some(v) => Some(MarkdownPaths::parse(v).ok_or_else(|| invalid("expected <input>:<output>"))?),
                    }
                }
                "get_data" => cfg.get_data = non_empty(&value).map(PathBuf::from),
                "get_url_data" => cfg.get_url_data = non_empty(&value).map(str::to_string),
                "pdf_converter" => cfg.pdf_converter = non_empty(&value).map(str::to_string),
                "components_dir" => cfg.components_dir = non_empty(&value).map(PathBuf::from),
                _ => {
                    cfg.extra.insert(key, value);
                }
            }
        }
    }
    cfg.user_sections = sections
        .into_iter()
        .map(|(name, entries)| (name, entries.into_iter().map(|(k, (v, _))| (k, v)).collect()))
        .collect();
    Ok(cfg)
}

impl Config {
    /// Serialize in the INI dialect accepted by [`parse_config`].
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        let mut kv = |key: &str, value: &str| {
            let _ = writeln!(out, "{key} = {value}");
        };
        kv("workflow_title", &self.workflow_title);
        if let Some(p) = &self.input_path {
            kv("input", &p.display().to_string());
        }
        kv("output_directory", &self.output_directory.display().to_string());
        kv("component", self.component_selector.as_ini());
        kv("display_html", if self.display_html { "true" } else { "false" });
        kv("display_pdf", if self.display_pdf { "true" } else { "false" });
        if let Some(md) = &self.inputmarkdown {
            kv("inputmarkdown", &md.to_value());
        }
        if let Some(p) = &self.get_data {
            kv("get_data", &p.display().to_string());
        }
        if let Some(u) = &self.get_url_data {
            kv("get_url_data", u);
        }
        if let Some(c) = &self.pdf_converter {
            kv("pdf_converter", c);
        }
        if let Some(d) = &self.components_dir {
            kv("components_dir", &d.display().to_string());
        }
        for (k, v) in &self.extra {
            kv(k, v);
        }
        let mut text = format!("[{DEFAULT_SECTION}]\n{out}");
        for (name, entries) in &self.user_sections {
            let _ = writeln!(text, "\n[{name}]");
            for (k, v) in entries {
                let _ = writeln!(text, "{k} = {v}");
            }
        }
        text
    }
}

/// Options given on the command line; `None` means "not given".
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CliOptions {
    pub help: bool,
    pub config_path: Option<PathBuf>,
    pub workflow_title: Option<String>,
    pub input_path: Option<PathBuf>,
    pub output_directory: Option<PathBuf>,
    pub component_selector: Option<ComponentSelector>,
    pub display_html: Option<bool>,
    pub display_pdf: Option<bool>,
    pub inputmarkdown: Option<MarkdownPaths>,
    pub get_data: Option<PathBuf>,
    pub get_url_data: Option<String>,
}

/// Every flag the command line accepts, as printed in the usage text.
pub const FLAGS: &[(&str, &str, &str)] = &[
    ("--help", "", "print this help message and exit"),
    ("--workflow-title", "<title>", "working title of the workflow"),
    (
        "--input",
        "<path>",
        "inputs object (.json) with the workflow parameters",
    ),
    (
        "--output-directory",
        "<path>",
        "directory collecting all outputs (default: Output)",
    ),
    ("--config", "<path>", "read options from an .ini configuration file"),
    ("--component", "", "select the workflow component with one of:"),
    ("--math-data", "", "  run the data (lookup table) component"),
    ("--math-solver", "", "  run the numerical model (Cahn-Hilliard solver)"),
    ("--display", "", "descriptive part of the workflow, with one of:"),
    ("--display_html", "<bool>", "  convert the markdown description to HTML"),
    ("--display_pdf", "<bool>", "  convert the markdown description to PDF"),
    (
        "--inputmarkdown",
        "<in>:<out>",
        "markdown description input and output paths",
    ),
    ("--data", "", "configure the data component with one of:"),
    ("--get-data", "<path>", "  local CSV lookup table"),
    (
        "--get-url-data",
        "<url>",
        "  lookup table fetched from an http(s) or file URL",
    ),
];

fn flag_takes_value(flag: &str) -> Option<bool> {
    FLAGS
        .iter()
        .find(|(name, _, _)| *name == flag)
        .map(|(_, value, _)| !value.is_empty())
}

/// Parse command-line arguments (without the program name).
///
/// Flags taking a value accept both `--flag value` and `--flag=value`.
pub fn parse_cli<S: AsRef<str>>(args: &[S]) -> Result<CliOptions, ConfigError> {
    let mut opts = CliOptions::default();
    let mut iter = args.iter().map(AsRef::as_ref);
    while let Some(arg) = iter.next() {
        let (flag, inline) = match arg.split_once('=') {
            Some((f, v)) if f.starts_with("--") => (f, Some(v)),
            _ => (arg, None),
        };
        let takes_value = flag_takes_value(flag).ok_or_else(|| ConfigError::UnknownFlag(arg.to_string()))?;
        if !takes_value {
            if inline.is_some() {
                return Err(ConfigError::InvalidFlagValue {
                    flag: flag.to_string(),
                    value: inline.unwrap_or_default().to_string(),
                });
            }
            match flag {
                "--help" => {
                    return Ok(CliOptions {
                        help: true,
                        ..CliOptions::default()
                    })
                }
                "--math-data" | "--math-solver" => {
                    let sel = if flag == "--math-data" {
                        ComponentSelector::MathData
                    } else {
                        ComponentSelector::MathSolver
                    };
                    if matches!(opts.component_selector, Some(prev) if prev != sel) {
                        return Err(ConfigError::ConflictingSelectors);
                    }
                    opts.component_selector = Some(sel);
                }
                // group headers
                _ => {}
            }
            continue;
        }
        let value = match inline {
            Some(v) => v.to_string(),
            None => match iter.next() {
                Some(v) if !v.starts_with("--") => v.to_string(),
                _ => return Err(ConfigError::MissingFlagValue(flag.to_string())),
            },
        };
        let invalid = || ConfigError::InvalidFlagValue {
            flag: flag.to_string(),
            value: value.clone(),
        };
        match flag {
            "--workflow-title" => opts.workflow_title = Some(value.clone()),
            "--input" => opts.input_path = Some(PathBuf::from(&value)),
            "--output-directory" => {
                if value.trim().is_empty() {
                    return Err(invalid());
                }
                opts.output_directory = Some(PathBuf::from(&value));
            }
            "--config" => opts.config_path = Some(PathBuf::from(&value)),
            "--display_html" => opts.display_html = Some(parse_bool(&value).ok_or_else(invalid)?),
            "--display_pdf" => opts.display_pdf = Some(parse_bool(&value).ok_or_else(invalid)?),
            "--inputmarkdown" => opts.inputmarkdown = Some(MarkdownPaths::parse(&value).ok_or_else(invalid)?),
            "--get-data" => opts.get_data = Some(PathBuf::from(&value)),
            "--get-url-data" => opts.get_url_data = Some(value.clone()),
            _ => unreachable!("flag table and match arms disagree on {flag}"),
        }
    }
    Ok(opts)
}

/// Overlay command-line options on a configuration. CLI wins field by field.
pub fn merge_options(cli: &CliOptions, cfg: &Config) -> Result<Config, ConfigError> {
    let mut merged = cfg.clone();
    if let Some(t) = &cli.workflow_title {
        merged.workflow_title = t.clone();
    }
    if let Some(p) = &cli.input_path {
        merged.input_path = Some(p.clone());
    }
    if let Some(p) = &cli.output_directory {
        merged.output_directory = p.clone();
    }
    if let Some(sel) = cli.component_selector {
        merged.component_selector = sel;
    }
    if let Some(b) = cli.display_html {
        merged.display_html = b;
    }
    if let Some(b) = cli.display_pdf {
        merged.display_pdf = b;
    }
    if let Some(md) = &cli.inputmarkdown {
        merged.inputmarkdown = Some(md.clone());
    }
    if let Some(p) = &cli.get_data {
        merged.get_data = Some(p.clone());
    }
    if let Some(u) = &cli.get_url_data {
        merged.get_url_data = Some(u.clone());
    }
    if merged.output_directory.as_os_str().is_empty() {
        merged.output_directory = PathBuf::from(DEFAULT_OUTPUT_DIRECTORY);
    }
    if merged.get_data.is_some() && merged.get_url_data.is_some() {
        return Err(ConfigError::ConflictingDataFlags);
    }
    Ok(merged)
}
