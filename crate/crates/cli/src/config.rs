//! Flat `key = value` config files for scan batches.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in config {}", path.display()))
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected key = value", n + 1);
        };
        let key = k.trim().replace('-', "_").to_ascii_lowercase();
        if key.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        out.insert(key, v.trim().trim_matches('"').to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_quotes() {
        let c =
            parse_config("# scan\ncs = II\nresolution=41  # coarse\nprotocols = \"EQ2,HR\"\n\n")
                .unwrap();
        assert_eq!(c["cs"], "II");
        assert_eq!(c["resolution"], "41");
        assert_eq!(c["protocols"], "EQ2,HR");
        assert!(parse_config("nonsense").is_err());
        assert!(parse_config(" = 3").is_err());
    }
}
