//! Line-oriented text format:
//!
//! ```text
//! gridtopo v1
//! # comment
//! node 0 ref
//! node 1
//! node 2 zero
//! edge 0 1 2.5 0.1
//! ```
//!
//! Edge lines carry `i j beta g`. Output is canonical (nodes ascending,
//! edges lexicographic), so save/load/save is byte-stable.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Grid, Line, Node, NodeId};
use crate::error::{Error, Result};

const HEADER: &str = "gridtopo v1";

pub fn write_grid(grid: &Grid) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for node in grid.nodes() {
        let _ = write!(out, "node {}", node.id);
        if node.is_reference {
            out.push_str(" ref");
        }
        if !node.has_injection {
            out.push_str(" zero");
        }
        out.push('\n');
    }
    for line in grid.lines() {
        let _ = writeln!(out, "edge {} {} {} {}", line.i, line.j, line.beta, line.g);
    }
    out
}

pub fn save_grid(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_grid(grid)).map_err(|e| Error::io(path, e))
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grid(&text, &path.display().to_string())
}

/// Parses the text format; `origin` is used in error messages.
pub fn parse_grid(text: &str, origin: &str) -> Result<Grid> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };

    let mut nodes = Vec::new();
    let mut lines = Vec::new();
    let mut seen_header = false;

    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if !seen_header {
            if content != HEADER {
                return Err(err(lineno, format!("expected header `{HEADER}`")));
            }
            seen_header = true;
            continue;
        }
        let mut fields = content.split_whitespace();
        match fields.next() {
            Some("node") => {
                let id: NodeId = parse_field(fields.next(), "node id")
                    .map_err(|m| err(lineno, m))?;
                let mut node = Node::excited(id);
                for flag in fields {
                    match flag {
                        "ref" => node.is_reference = true,
                        "zero" => node.has_injection = false,
                        other => return Err(err(lineno, format!("unknown node flag `{other}`"))),
                    }
                }
                nodes.push(node);
            }
            Some("edge") => {
                let i: NodeId = parse_field(fields.next(), "edge endpoint")
                    .map_err(|m| err(lineno, m))?;
                let j: NodeId = parse_field(fields.next(), "edge endpoint")
                    .map_err(|m| err(lineno, m))?;
                let beta: f64 =
                    parse_field(fields.next(), "susceptance").map_err(|m| err(lineno, m))?;
                let g: f64 =
                    parse_field(fields.next(), "conductance").map_err(|m| err(lineno, m))?;
                if let Some(extra) = fields.next() {
                    return Err(err(lineno, format!("unexpected trailing field `{extra}`")));
                }
                if !(beta > 0.0) {
                    return Err(err(
                        lineno,
                        format!("edge ({i}, {j}) has non-positive susceptance {beta}"),
                    ));
                }
                if lines
                    .iter()
                    .any(|l: &(usize, Line)| super::Edge::new(l.1.i, l.1.j) == super::Edge::new(i, j))
                {
                    return Err(err(lineno, format!("duplicate edge ({i}, {j})")));
                }
                lines.push((lineno, Line::new(i, j, beta, g)));
            }
            Some(other) => return Err(err(lineno, format!("unknown record `{other}`"))),
            None => unreachable!(),
        }
    }
    if !seen_header {
        return Err(err(1, format!("missing header `{HEADER}`")));
    }

    Grid::new(nodes, lines.into_iter().map(|(_, l)| l).collect()).map_err(|e| Error::Parse {
        path: origin.to_string(),
        line: 0,
        message: e.to_string(),
    })
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str) -> std::result::Result<T, String> {
    let field = field.ok_or_else(|| format!("missing {what}"))?;
    field
        .parse()
        .map_err(|_| format!("invalid {what} `{field}`"))
}
