//! Markdown descriptions (level-1 realizations) rendered to HTML, with PDF
//! conversion delegated to an external command.
//!
//! Supported subset: ATX headings, paragraphs, flat unordered and ordered
//! lists, fenced code blocks, inline code, emphasis, strong emphasis and
//! links. Anything else is emitted as escaped text.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkdownDoc {
    pub source: String,
    pub path: Option<PathBuf>,
}

impl MarkdownDoc {
    pub fn new(source: impl Into<String>) -> Self {
        MarkdownDoc {
            source: source.into(),
            path: None,
        }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        let source = String::from_utf8(bytes).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(MarkdownDoc {
            source,
            path: Some(path.to_path_buf()),
        })
    }
}

pub fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn find_closing(chars: &[char], from: usize, delim: &[char]) -> Option<usize> {
    let n = delim.len();
    (from..chars.len().saturating_sub(n - 1)).find(|&i| chars[i..i + n] == *delim)
}

fn render_inline(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::new();
    let mut plain = String::new();
    let mut i = 0;
    let flush = |plain: &mut String, out: &mut String| {
        out.push_str(&escape_html(plain));
        plain.clear();
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '`' {
            if let Some(end) = find_closing(&chars, i + 1, &['`']) {
                flush(&mut plain, &mut out);
                let code: String = chars[i + 1..end].iter().collect();
                out.push_str(&format!("<code>{}</code>", escape_html(&code)));
                i = end + 1;
                continue;
            }
        }
        if (c == '*' || c == '_') && chars.get(i + 1) == Some(&c) {
            if let Some(end) = find_closing(&chars, i + 2, &[c, c]) {
                if end > i + 2 {
                    flush(&mut plain, &mut out);
                    let inner: String = chars[i + 2..end].iter().collect();
                    out.push_str(&format!("<strong>{}</strong>", render_inline(&inner)));
                    i = end + 2;
                    continue;
                }
            }
        }
        if c == '*' || c == '_' {
            if let Some(end) = find_closing(&chars, i + 1, &[c]) {
                if end > i + 1 && !chars[i + 1].is_whitespace() {
                    flush(&mut plain, &mut out);
                    let inner: String = chars[i + 1..end].iter().collect();
                    out.push_str(&format!("<em>{}</em>", render_inline(&inner)));
                    i = end + 1;
                    continue;
                }
            }
        }
        if c == '[' {
            if let Some(close) = find_closing(&chars, i + 1, &[']']) {
                if chars.get(close + 1) == Some(&'(') {
                    if let Some(paren) = find_closing(&chars, close + 2, &[')']) {
                        flush(&mut plain, &mut out);
                        let label: String = chars[i + 1..close].iter().collect();
                        let href: String = chars[close + 2..paren].iter().collect();
                        out.push_str(&format!(
                            "<a href=\"{}\">{}</a>",
                            escape_html(href.trim()),
                            render_inline(&label)
                        ));
                        i = paren + 1;
                        continue;
                    }
                }
            }
        }
        plain.push(c);
        i += 1;
    }
    flush(&mut plain, &mut out);
    out
}

fn heading(line: &str) -> Option<(usize, &str)> {
    let level = line.chars().take_while(|&c| c == '#').count();
    if !(1..=6).contains(&level) {
        return None;
    }
    let rest = &line[level..];
    if !rest.is_empty() && !rest.starts_with(' ') && !rest.starts_with('\t') {
        return None;
    }
    let text = rest.trim();
    let text = text.trim_end_matches('#').trim_end();
    Some((level, text))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ListKind {
    Unordered,
    Ordered,
}

fn list_item(line: &str) -> Option<(ListKind, &str)> {
    let t = line.trim_start();
    for marker in ["- ", "* ", "+ "] {
        if let Some(rest) = t.strip_prefix(marker) {
            return Some((ListKind::Unordered, rest));
        }
    }
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 && digits <= 9 {
        let rest = &t[digits..];
        if let Some(rest) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return Some((ListKind::Ordered, rest));
        }
    }
    None
}

fn fence(line: &str) -> Option<(&str, &str)> {
    let t = line.trim_start();
    for f in ["```", "~~~"] {
        if let Some(info) = t.strip_prefix(f) {
            return Some((f, info.trim()));
        }
    }
    None
}

/// Render the body HTML of a markdown source.
pub fn render_body(source: &str) -> String {
    let lines: Vec<&str> = source.lines().collect();
    let mut out = String::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if line.trim().is_empty() {
            i += 1;
            continue;
        }
        if let Some((marker, info)) = fence(line) {
            let lang = info.split_whitespace().next().unwrap_or("");
            i += 1;
            let mut code = String::new();
            while i < lines.len() && !lines[i].trim_start().starts_with(marker) {
                code.push_str(lines[i]);
                code.push('\n');
                i += 1;
            }
            i += 1; // closing fence, if any
            if lang.is_empty() {
                out.push_str("<pre><code>");
            } else {
                out.push_str(&format!("<pre><code class=\"language-{}\">", escape_html(lang)));
            }
            out.push_str(&escape_html(&code));
            out.push_str("</code></pre>\n");
            continue;
        }
        if let Some((level, text)) = heading(line) {
            out.push_str(&format!("<h{level}>{}</h{level}>\n", render_inline(text)));
            i += 1;
            continue;
        }
        if let Some((kind, _)) = list_item(line) {
            let tag = if kind == ListKind::Ordered { "ol" } else { "ul" };
            out.push_str(&format!("<{tag}>\n"));
            let mut items: Vec<String> = Vec::new();
            while i < lines.len() {
                let l = lines[i];
                if l.trim().is_empty() || fence(l).is_some() || heading(l).is_some() {
                    break;
                }
                match list_item(l) {
                    Some((k, text)) if k == kind => items.push(text.trim().to_string()),
                    Some(_) => break,
                    // lazy continuation of the previous item
                    None => {
                        let last = items.last_mut().expect("list starts with an item");
                        last.push('\n');
                        last.push_str(l.trim());
                    }
                }
                i += 1;
            }
            for item in items {
                out.push_str(&format!("<li>{}</li>\n", render_inline(&item)));
            }
            out.push_str(&format!("</{tag}>\n"));
            continue;
        }
        let mut para: Vec<&str> = Vec::new();
        while i < lines.len() {
            let l = lines[i];
            if l.trim().is_empty() || fence(l).is_some() || heading(l).is_some() || list_item(l).is_some() {
                break;
            }
            para.push(l.trim());
            i += 1;
        }
        out.push_str(&format!("<p>{}</p>\n", render_inline(&para.join("\n"))));
    }
    out
}

/// Standalone HTML document with `title` in `<title>`.
pub fn render_markdown(doc: &MarkdownDoc, title: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n</head>\n<body>\n{}</body>\n</html>\n",
        escape_html(title),
        render_body(&doc.source)
    )
}

#[derive(Debug, Error)]
pub enum PdfError {
    #[error("no PDF converter configured (set pdf_converter in the config file)")]
    NoConverterConfigured,
    #[error("PDF converter exited with status {0}")]
    ConverterFailed(i32),
    #[error("cannot run PDF converter: {0}")]
    Spawn(#[from] std::io::Error),
}

/// Pipe the rendered HTML through `converter_cmd` (run by `sh -c`) and return
/// its standard output.
pub fn render_pdf(doc: &MarkdownDoc, title: &str, converter_cmd: Option<&str>) -> Result<Vec<u8>, PdfError> {
    let cmd = converter_cmd
        .filter(|c| !c.trim().is_empty())
        .ok_or(PdfError::NoConverterConfigured)?;
    let html = render_markdown(doc, title);
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()?;
    let mut stdin = child.stdin.take().expect("stdin is piped");
    let writer = std::thread::spawn(move || {
        // the converter may exit without reading everything
        let _ = stdin.write_all(html.as_bytes());
    });
    let output = child.wait_with_output()?;
    let _ = writer.join();
    if !output.status.success() {
        return Err(PdfError::ConverterFailed(output.status.code().unwrap_or(-1)));
    }
    Ok(output.stdout)
}
