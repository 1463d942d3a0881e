use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;

use cseflow::data::{fetch_url, interpolate, load_table, FetchError, LookupTable};
use cseflow::engine::{compose, read_scalar, ComponentRegistry, Executor, DEFAULT_PREFERENCE};
use cseflow::model::{ComponentManifest, InputsObject, PortSpec, Realization, RealizationKind, WorkflowDefinition};
use cseflow::provenance::{hash_artifact, RunStatus};

/// Serve canned responses keyed by request path; returns the base URL.
fn serve(routes: Vec<(&'static str, String)>, connections: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    thread::spawn(move || {
        for stream in listener.incoming().take(connections) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            loop {
                let mut header = String::new();
                reader.read_line(&mut header).unwrap();
                if header.trim().is_empty() {
                    break;
                }
            }
            let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
            let response = routes
                .iter()
                .find(|(p, _)| *p == path)
                .map(|(_, r)| r.clone())
                .unwrap_or_else(|| "HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\nConnection: close\r\n\r\n".into());
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    base
}

fn ok(body: &str) -> String {
    format!(
        "HTTP/1.1 200 OK\r\nContent-Type: text/csv\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
}

#[test]
fn http_fetch_returns_body_and_digest() {
    let base = serve(vec![("/t.csv", ok("0,1\n1,3\n"))], 1);
    let (bytes, digest) = fetch_url(&format!("{base}/t.csv")).unwrap();
    assert_eq!(bytes, b"0,1\n1,3\n");
    assert_eq!(digest, hash_artifact(&bytes));
}

#[test]
fn http_404_is_a_status_error() {
    let base = serve(vec![], 1);
    assert_eq!(
        fetch_url(&format!("{base}/missing.csv")),
        Err(FetchError::HttpStatus(404))
    );
}

#[test]
fn redirects_are_followed() {
    // the Location header needs the port, so this server is set up by hand
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let location = format!("{base}/new.csv");
    thread::spawn(move || {
        for (k, stream) in listener.incoming().take(2).enumerate() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line.trim().is_empty() {
                    break;
                }
            }
            let response = if k == 0 {
                format!("HTTP/1.1 302 Found\r\nLocation: {location}\r\nContent-Length: 0\r\nConnection: close\r\n\r\n")
            } else {
                ok("5,6\n7,8\n")
            };
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    let (bytes, _) = fetch_url(&format!("{base}/old.csv")).unwrap();
    assert_eq!(bytes, b"5,6\n7,8\n");
}

#[test]
fn file_urls_and_schemes() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("fixture.csv");
    std::fs::write(&path, "x,y\n0,0\n1,2\n").unwrap();
    let (bytes, digest) = fetch_url(&format!("file://{}", path.display())).unwrap();
    assert_eq!(bytes, std::fs::read(&path).unwrap());
    assert_eq!(digest, hash_artifact(b"x,y\n0,0\n1,2\n"));

    assert_eq!(
        fetch_url("ftp://example.org/t.csv"),
        Err(FetchError::UnsupportedScheme("ftp".into()))
    );
    assert!(matches!(fetch_url("not a url"), Err(FetchError::InvalidUrl(_))));
    assert!(matches!(
        fetch_url(&format!("file://{}", tmp.path().join("absent.csv").display())),
        Err(FetchError::TransportFailure(_))
    ));
}

#[test]
fn url_realization_runs_through_the_engine() {
    let base = serve(vec![("/table.csv", ok("x,y\n0,10\n10,20\n"))], 1);
    let manifest = ComponentManifest {
        id: "remote".into(),
        version: "1.0.0".into(),
        title: "remote table".into(),
        inputs: vec![PortSpec::new("x", "scalar", "")],
        outputs: vec![PortSpec::new("y", "scalar", "")],
        realizations: vec![Realization::new(
            RealizationKind::UrlSource,
            format!("{base}/table.csv"),
        )],
        description_ref: None,
        base_dir: None,
    };
    let mut registry = ComponentRegistry::new();
    registry.insert(manifest);
    let def = WorkflowDefinition::new("remote").stage("remote", None);
    let plan = compose(
        &def,
        &registry,
        &InputsObject::new().with("x", 2.5),
        &DEFAULT_PREFERENCE,
    )
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let (results, rec) = Executor::new().execute(&plan, tmp.path()).unwrap();
    assert_eq!(rec.status, RunStatus::Completed, "{}", results[0].message);
    assert_eq!(read_scalar(&tmp.path().join(&results[0].outputs["y"])).unwrap(), 12.5);
    assert_eq!(rec.stages[0].source_digest, Some(hash_artifact(b"x,y\n0,10\n10,20\n")));
}

#[test]
fn shipped_table_loads_and_interpolates() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../components/data/table.csv");
    let table: LookupTable = load_table(&path).unwrap();
    let (lo, hi) = table.range();
    assert_eq!((lo, hi), (1.0, 4.0));
    for &(x, y) in table.knots() {
        assert_eq!(interpolate(&table, x).unwrap(), y);
    }
    assert!(interpolate(&table, 4.5).is_err());
}
