use std::path::Path;
use std::process::{Command, Output};

use cseflow::config::FLAGS;
use cseflow::provenance::{RunRecord, RunStatus};

const SMALL_INPUTS: &str = r#"{"nx": 16, "ny": 16, "n_steps": 40, "snapshot_interval": 20}"#;

fn tool(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mardiflow-like"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write(dir: &Path, name: &str, contents: &str) {
    let path = dir.join(name);
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, contents).unwrap();
}

#[test]
fn help_lists_every_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tool(tmp.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let usage = text(&out.stdout);
    for (flag, _, _) in FLAGS {
        assert!(usage.contains(flag), "{flag} missing");
    }
}

#[test]
fn missing_config_is_an_environment_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tool(tmp.path(), &["--config", "missing.ini"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out.stderr).contains("config not found"));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tool(tmp.path(), &["--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("--frobnicate"));
    assert!(text(&out.stderr).contains("usage:"));

    assert_eq!(
        tool(tmp.path(), &["--math-data", "--math-solver"]).status.code(),
        Some(2)
    );
    assert_eq!(tool(tmp.path(), &["--display_html", "maybe"]).status.code(), Some(2));
    assert_eq!(tool(tmp.path(), &[]).status.code(), Some(2));

    write(tmp.path(), "bad.json", "{ \"nx\": ");
    assert_eq!(
        tool(tmp.path(), &["--math-solver", "--input", "bad.json"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn shipped_config_runs_from_a_copy() {
    let tmp = tempfile::tempdir().unwrap();
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    std::fs::create_dir(tmp.path().join("configs")).unwrap();
    std::fs::copy(
        configs.join("config_CH_2D.ini"),
        tmp.path().join("configs/config_CH_2D.ini"),
    )
    .unwrap();
    // keep the debug-build test quick
    write(tmp.path(), "configs/inputs_CH_2D.json", SMALL_INPUTS);

    let out = tool(tmp.path(), &["--config", "configs/config_CH_2D.ini"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(text(&out.stdout), "[1/1] cahn-hilliard (level 2) … ok\n");

    let output = tmp.path().join("Output");
    let rec = RunRecord::from_json_bytes(&std::fs::read(output.join("run_record.json")).unwrap()).unwrap();
    assert_eq!(rec.status, RunStatus::Completed);
    assert_eq!(rec.workflow_title, "This is a CSE workflow description under MaRDIFlow");
    assert!(output.join("fair_metadata.json").is_file());
    assert!(output.join("artifacts/stage0_energy_series.csv").is_file());
    assert!(output.join("artifacts/stage0_snapshots/step_000040.pgm").is_file());
    let html = std::fs::read_to_string(output.join("description/cahn-hilliard.html")).unwrap();
    assert!(html.contains("<h1>Cahn-Hilliard phase-field model</h1>"));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "in.json", SMALL_INPUTS);
    write(
        tmp.path(),
        "run.ini",
        "[default]\nworkflow_title = from file\ninput = in.json\noutput_directory = file_out\ncomponent = math-solver\n",
    );
    let out = tool(
        tmp.path(),
        &[
            "--config",
            "run.ini",
            "--output-directory=cli_out",
            "--workflow-title",
            "from flags",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(!tmp.path().join("file_out").exists());
    let rec = RunRecord::from_json_bytes(&std::fs::read(tmp.path().join("cli_out/run_record.json")).unwrap()).unwrap();
    assert_eq!(rec.workflow_title, "from flags");
}

#[test]
fn failing_workflow_exits_1_and_still_records() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "in.json", r#"{"nx": 16, "ny": 16, "n_steps": 10, "dt": 0}"#);
    let out = tool(tmp.path(), &["--math-solver", "--input", "in.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stdout).ends_with("… failed\n"));
    let rec = RunRecord::from_json_bytes(&std::fs::read(tmp.path().join("Output/run_record.json")).unwrap()).unwrap();
    assert_eq!(rec.status, RunStatus::Failed);
}

#[test]
fn get_data_replaces_the_shipped_table() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "t.csv", "0,0\n4,8\n");
    write(tmp.path(), "x.json", r#"{"x": 1.5}"#);
    let out = tool(tmp.path(), &["--get-data", "t.csv", "--input", "x.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(text(&out.stdout), "[1/1] lookup-table (level 3) … ok\n");
    let y = std::fs::read_to_string(tmp.path().join("Output/artifacts/stage0_y.txt")).unwrap();
    assert_eq!(y.trim().parse::<f64>().unwrap(), 3.0);
    let rec = RunRecord::from_json_bytes(&std::fs::read(tmp.path().join("Output/run_record.json")).unwrap()).unwrap();
    assert_eq!(rec.stages[0].source_digest, Some(cseflow::hash_artifact(b"0,0\n4,8\n")));
}

#[test]
fn get_url_data_reads_file_urls() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "t.csv", "x,y\n0,1\n2,3\n");
    let url = format!("file://{}", tmp.path().join("t.csv").display());
    let out = tool(tmp.path(), &["--math-data", "--get-url-data", &url]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let table = std::fs::read_to_string(tmp.path().join("Output/artifacts/stage0_table.csv")).unwrap();
    assert!(table.starts_with("x,y\n"));

    let out = tool(tmp.path(), &["--get-url-data", "ftp://example.org/t.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn markdown_conversion() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "doc.md", "# Heading\n\nSome *text*.\n");
    let out = tool(
        tmp.path(),
        &["--inputmarkdown", "doc.md:out/doc.html", "--workflow-title", "T"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let html = std::fs::read_to_string(tmp.path().join("out/doc.html")).unwrap();
    assert!(html.contains("<title>T</title>"));
    assert!(html.contains("<h1>Heading</h1>"));
    assert!(html.contains("<em>text</em>"));

    // PDF without a converter is a usage error; with `cat` the bytes are the HTML
    let out = tool(
        tmp.path(),
        &["--inputmarkdown", "doc.md:doc.pdf", "--display_pdf", "TRUE"],
    );
    assert_eq!(out.status.code(), Some(2));
    write(
        tmp.path(),
        "pdf.ini",
        "[default]\npdf_converter = cat\ndisplay_pdf = true\ndisplay_html = true\n",
    );
    let out = tool(
        tmp.path(),
        &["--config", "pdf.ini", "--inputmarkdown", "doc.md:both.out"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(
        std::fs::read(tmp.path().join("both.pdf")).unwrap(),
        std::fs::read(tmp.path().join("both.html")).unwrap()
    );

    let out = tool(tmp.path(), &["--inputmarkdown", "nope.md:x.html"]);
    assert_eq!(out.status.code(), Some(3));
}
