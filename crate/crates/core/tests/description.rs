use cseflow::description::{render_markdown, MarkdownDoc};
use proptest::prelude::*;

const VOID: [&str; 1] = ["meta"];

/// Check that every opened tag is closed in order and no stray `<` or `>`
/// appears outside tags.
fn well_formed(html: &str) -> Result<(), String> {
    let body = html.strip_prefix("<!DOCTYPE html>").ok_or("missing doctype")?;
    let mut stack: Vec<String> = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find('<') {
        if rest[..open].contains('>') {
            return Err(format!("stray '>' before {:?}", &rest[open..]));
        }
        let close = rest[open..].find('>').ok_or("unterminated tag")? + open;
        let tag = &rest[open + 1..close];
        if tag.contains('<') {
            return Err(format!("'<' inside tag {tag:?}"));
        }
        if let Some(name) = tag.strip_prefix('/') {
            match stack.pop() {
                Some(top) if top == name => {}
                other => return Err(format!("</{name}> closes {other:?}")),
            }
        } else {
            let name = tag.split_whitespace().next().ok_or("empty tag")?.to_string();
            if !VOID.contains(&name.as_str()) {
                stack.push(name);
            }
        }
        rest = &rest[close + 1..];
    }
    if rest.contains('>') {
        return Err("stray '>' at end".into());
    }
    if stack.is_empty() {
        Ok(())
    } else {
        Err(format!("unclosed {stack:?}"))
    }
}

#[test]
fn checker_rejects_broken_html() {
    assert!(well_formed("<!DOCTYPE html><p><em></p></em>").is_err());
    assert!(well_formed("<!DOCTYPE html><p>").is_err());
    assert!(well_formed("<!DOCTYPE html><p>a > b</p>").is_err());
    assert!(well_formed("<!DOCTYPE html><p>ok</p>").is_ok());
}

#[test]
fn full_document_is_well_formed() {
    let md = "# Model\n\nText with `code`, **bold**, *it* and [a link](https://x.org).\n\n\
              - one\n- two\n\n1. a\n2. b\n\n```python\nif a < b: pass\n```\n\n## <script>alert(1)</script>\n";
    let html = render_markdown(&MarkdownDoc::new(md), "Title & more");
    well_formed(&html).unwrap();
    assert!(html.contains("&lt;script&gt;"));
    assert!(html.contains("<title>Title &amp; more</title>"));
}

fn markdown_line() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z <>&*_`\\[\\]()#-]{0,30}",
        "#{1,7} [a-z*_`<]{0,12}",
        "[-*+] [a-z*_`\\[\\]()]{0,15}",
        "[0-9]{1,2}[.)] [a-z_*]{0,10}",
        Just("```".to_string()),
        Just("~~~rust".to_string()),
        Just(String::new()),
    ]
}

proptest! {
    #[test]
    fn any_input_renders_well_formed(lines in prop::collection::vec(markdown_line(), 0..25), title in ".{0,20}") {
        let doc = MarkdownDoc::new(lines.join("\n"));
        let html = render_markdown(&doc, &title);
        prop_assert!(well_formed(&html).is_ok(), "{:?}\n{}", well_formed(&html), html);
        prop_assert_eq!(render_markdown(&doc, &title), html);
    }
}
