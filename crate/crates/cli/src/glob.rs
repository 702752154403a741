use std::path::{Component, Path, PathBuf};

use anyhow::{bail, Context, Result};
use regex::Regex;
use walkdir::WalkDir;

fn has_magic(s: &str) -> bool {
    s.contains(['*', '?', '['])
}

/// Translates a glob into an anchored regex. `**` crosses directory
/// separators, `*` and `?` do not.
pub fn glob_regex(pattern: &str) -> Result<Regex> {
    let mut re = String::from("^");
    let mut chars = pattern.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '*' if chars.peek() == Some(&'*') => {
                chars.next();
                if chars.peek() == Some(&'/') {
                    chars.next();
                    re.push_str("(?:.*/)?");
                } else {
                    re.push_str(".*");
                }
            }
            '*' => re.push_str("[^/]*"),
            '?' => re.push_str("[^/]"),
            '[' => {
                let mut class = String::from("[");
                for c in chars.by_ref() {
                    if c == ']' {
                        break;
                    }
                    class.push(if c == '!' && class.len() == 1 { '^' } else { c });
                }
                class.push(']');
                re.push_str(&class);
            }
            other => re.push_str(&regex::escape(&other.to_string())),
        }
    }
    re.push('$');
    Regex::new(&re).with_context(|| format!("invalid pattern `{pattern}`"))
}

/// Expands each argument. Plain paths pass through; patterns match files
/// under their longest literal directory prefix. Results are sorted and
/// deduplicated per pattern. A pattern that matches nothing is an error.
pub fn expand(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for pattern in patterns {
        if !has_magic(pattern) {
            out.push(PathBuf::from(pattern));
            continue;
        }
        let path = Path::new(pattern);
        let mut base = PathBuf::new();
        for comp in path.components() {
            if has_magic(&comp.as_os_str().to_string_lossy()) {
                break;
            }
            base.push(comp);
        }
        let root = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base.clone() };
        let normalized = pattern.strip_prefix("./").unwrap_or(pattern);
        let re = glob_regex(normalized)?;
        let mut matched: Vec<PathBuf> = WalkDir::new(&root)
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file())
            .map(|e| e.into_path())
            .filter(|p| {
                let rel: PathBuf = p.components().skip_while(|c| matches!(c, Component::CurDir)).collect();
                re.is_match(&rel.to_string_lossy())
            })
            .collect();
        if matched.is_empty() {
            bail!("no files match `{pattern}`");
        }
        matched.sort();
        out.extend(matched);
    }
    Ok(out)
}
