//! Plain-text graph files.
//!
//! ```text
//! # comments and blank lines are ignored
//! 4
//! symmetric: true
//! 1 2 1.0
//! 2 3 0.5
//! ```
//!
//! The first line is the agent count. Each edge line `i j w` is 1-based and
//! gives the weight `w` of the edge `j -> i` (agent `i` listens to `j`). With
//! `symmetric: true` each line also adds `i -> j`.

use std::path::Path;

use crate::config::GraphSection;
use crate::CliError;

pub fn parse(text: &str) -> Result<GraphSection, String> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (n, first) = lines.next().ok_or("empty graph file")?;
    let agents: usize = first.parse().map_err(|_| format!("line {n}: expected agent count, got `{first}`"))?;
    let mut symmetric = false;
    let mut edges = Vec::new();
    for (n, line) in lines {
        if let Some(flag) = line.strip_prefix("symmetric:") {
            symmetric = match flag.trim() {
                "true" => true,
                "false" => false,
                other => return Err(format!("line {n}: symmetric flag must be true or false, got `{other}`")),
            };
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [i, j, w] = fields[..] else {
            return Err(format!("line {n}: expected `i j w`, got `{line}`"));
        };
        let bad = |what: &str| format!("line {n}: invalid {what} in `{line}`");
        edges.push((i.parse().map_err(|_| bad("i"))?, j.parse().map_err(|_| bad("j"))?, w.parse().map_err(|_| bad("w"))?));
    }
    Ok(GraphSection { agents, symmetric, edges })
}

pub fn read(path: &Path) -> Result<GraphSection, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read graph file {}: {e}", path.display())))?;
    parse(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_symmetric_file() {
        let g = parse("# ring\n3\nsymmetric: true\n1 2 1\n2 3 0.5  # light\n\n").unwrap();
        assert_eq!(g.agents, 3);
        assert!(g.symmetric);
        assert_eq!(g.edges, vec![(1, 2, 1.0), (2, 3, 0.5)]);
    }

    #[test]
    fn reports_bad_lines() {
        assert!(parse("").is_err());
        assert!(parse("x\n").unwrap_err().contains("line 1"));
        assert!(parse("3\n1 2\n").unwrap_err().contains("line 2"));
        assert!(parse("3\nsymmetric: maybe\n").is_err());
        assert!(parse("3\n1 2 w\n").unwrap_err().contains("invalid w"));
    }
}
