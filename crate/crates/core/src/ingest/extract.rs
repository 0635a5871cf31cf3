//! Visible-text extraction from fetched pages.

use scraper::{Html, Node};

const SKIPPED: [&str; 4] = ["script", "style", "noscript", "template"];

/// HTML bodies lose `script`/`style`/`noscript` subtrees and comments; text
/// nodes are joined with single spaces and entities decoded. Anything else is
/// decoded as UTF-8 with replacement.
pub fn extract_text(body: &[u8], content_type: &str) -> String {
    let text = String::from_utf8_lossy(body);
    if !is_html(content_type) {
        return text.into_owned();
    }
    let doc = Html::parse_document(&text);
    let mut parts: Vec<&str> = Vec::new();
    let mut stack = vec![doc.tree.root()];
    while let Some(node) = stack.pop() {
        match node.value() {
            Node::Text(t) => parts.push(t),
            Node::Element(e) if SKIPPED.contains(&e.name()) => continue,
            Node::Comment(_) => continue,
            _ => {}
        }
        // reversed so the stack pops children in document order
        let children: Vec<_> = node.children().collect();
        stack.extend(children.into_iter().rev());
    }
    parts
        .iter()
        .flat_map(|p| p.split(char::is_whitespace))
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn is_html(content_type: &str) -> bool {
    let ct = content_type.to_ascii_lowercase();
    ct.contains("html") || ct.contains("xml")
}
