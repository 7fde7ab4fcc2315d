//! Key/value message catalog shipped in `data/messages.txt`.

use std::collections::HashMap;
use std::sync::LazyLock;

const CATALOG_TEXT: &str = include_str!("../data/messages.txt");

static CATALOG: LazyLock<HashMap<&'static str, &'static str>> =
    LazyLock::new(|| parse_catalog(CATALOG_TEXT));

/// Parses `key = text` lines. Blank lines and `#` comments are skipped;
/// lines without `=` are ignored.
pub fn parse_catalog(text: &str) -> HashMap<&str, &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim(), v.trim()))
        .collect()
}

pub fn lookup(key: &str) -> Option<&'static str> {
    CATALOG.get(key).copied()
}

/// Raw catalog text, for clients that want to render identical wording.
pub fn catalog_text() -> &'static str {
    CATALOG_TEXT
}
