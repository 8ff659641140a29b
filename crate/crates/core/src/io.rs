//! Plain-text graph formats.
//!
//! * edges: `src dst etype sign [weight]` per line, `#` comments
//! * features: header `N d_x`, then `N` rows of `d_x` floats
//! * labels: `node_id class` per line
//! * initial assignment: `node_id r1 r2` per line, every node exactly once
//! * ground truth: `node_id class is_neutral is_irrelevant`, class `-1` for
//!   nodes outside both planted groups
//!
//! The `parse_*` functions never panic on malformed input.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, EdgeRecord, Labels, NodeId};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(idx, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((idx + 1, line.split_whitespace().collect()))
        }
    })
}

fn field<T: std::str::FromStr>(src: &str, line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse::<T>()
        .map_err(|_| Error::parse(src, line, format!("invalid {what} `{tok}`")))
}

fn finite(src: &str, line: usize, tok: &str, what: &str) -> Result<f64> {
    let v: f64 = field(src, line, tok, what)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::parse(src, line, format!("{what} `{tok}` is not finite")))
    }
}

pub fn parse_edges(text: &str) -> Result<Vec<EdgeRecord>> {
    const SRC: &str = "edges";
    let mut out = Vec::new();
    for (line, toks) in content_lines(text) {
        if !(4..=5).contains(&toks.len()) {
            return Err(Error::parse(
                SRC,
                line,
                format!("expected `src dst etype sign [weight]`, found {} fields", toks.len()),
            ));
        }
        let src: NodeId = field(SRC, line, toks[0], "source id")?;
        let dst: NodeId = field(SRC, line, toks[1], "target id")?;
        let etype = toks[2].parse().map_err(|m: String| Error::parse(SRC, line, m))?;
        let sign = toks[3].parse().map_err(|m: String| Error::parse(SRC, line, m))?;
        let weight = match toks.get(4) {
            Some(tok) => {
                let w = finite(SRC, line, tok, "weight")?;
                if w < 0.0 {
                    return Err(Error::parse(SRC, line, "weight must be non-negative"));
                }
                w
            }
            None => 1.0,
        };
        out.push(EdgeRecord { src, dst, etype, sign, weight });
    }
    Ok(out)
}

pub fn parse_features(text: &str) -> Result<Array2<f64>> {
    const SRC: &str = "features";
    let mut lines = content_lines(text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::parse(SRC, 1, "missing `N d_x` header"))?;
    if header.len() != 2 {
        return Err(Error::parse(SRC, hline, "header must be `N d_x`"));
    }
    let n: usize = field(SRC, hline, header[0], "row count")?;
    let d: usize = field(SRC, hline, header[1], "column count")?;
    let cells = n
        .checked_mul(d)
        .filter(|c| *c <= text.len())
        .ok_or_else(|| Error::parse(SRC, hline, "header dimensions exceed the file size"))?;
    let mut data = Vec::with_capacity(cells);
    let mut rows = 0usize;
    for (line, toks) in lines {
        if rows == n {
            return Err(Error::Validation(format!(
                "feature file declares {n} rows but has more (line {line})"
            )));
        }
        if toks.len() != d {
            return Err(Error::parse(
                SRC,
                line,
                format!("expected {d} values, found {}", toks.len()),
            ));
        }
        for tok in toks {
            data.push(finite(SRC, line, tok, "feature value")?);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Validation(format!(
            "feature file declares {n} rows but has {rows}"
        )));
    }
    Ok(Array2::from_shape_vec((n, d), data).expect("shape matches collected data"))
}

pub fn parse_labels(text: &str) -> Result<Labels> {
    const SRC: &str = "labels";
    let mut labels = Labels::new();
    for (line, toks) in content_lines(text) {
        if toks.len() != 2 {
            return Err(Error::parse(SRC, line, "expected `node_id class`"));
        }
        let node: NodeId = field(SRC, line, toks[0], "node id")?;
        let class: usize = field(SRC, line, toks[1], "class")?;
        if class > 1 {
            return Err(Error::parse(SRC, line, format!("class must be 0 or 1, got {class}")));
        }
        if labels.insert(node, class).is_some() {
            return Err(Error::parse(SRC, line, format!("node {node} labelled twice")));
        }
    }
    Ok(labels)
}

/// Parses an initial assignment for an `n`-node graph.
pub fn parse_r0(text: &str, n: usize) -> Result<Array2<f64>> {
    const SRC: &str = "r0";
    let mut r = Array2::from_elem((n, 2), f64::NAN);
    for (line, toks) in content_lines(text) {
        if toks.len() != 3 {
            return Err(Error::parse(SRC, line, "expected `node_id r1 r2`"));
        }
        let node: NodeId = field(SRC, line, toks[0], "node id")?;
        if node >= n {
            return Err(Error::Validation(format!("r0 line {line}: node {node} outside 0..{n}")));
        }
        if !r[[node, 0]].is_nan() {
            return Err(Error::parse(SRC, line, format!("node {node} assigned twice")));
        }
        r[[node, 0]] = finite(SRC, line, toks[1], "r1")?;
        r[[node, 1]] = finite(SRC, line, toks[2], "r2")?;
    }
    if let Some(i) = (0..n).find(|&i| r[[i, 0]].is_nan()) {
        return Err(Error::Validation(format!("r0 has no row for node {i}")));
    }
    crate::graph::validate_assignment(&r, n)?;
    Ok(r)
}

/// Planted structure emitted next to synthetic graphs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    /// `None` for neutral and irrelevant nodes.
    pub class: Vec<Option<usize>>,
    pub neutral: Vec<bool>,
    pub irrelevant: Vec<bool>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class.is_empty()
    }

    /// Class labels for every node inside a planted group.
    pub fn labels(&self) -> Labels {
        self.class
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|c| (i, c)))
            .collect()
    }
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruth> {
    const SRC: &str = "ground truth";
    let mut rows: Vec<(usize, Option<usize>, bool, bool)> = Vec::new();
    let flag = |line: usize, tok: &str| match tok {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::parse(SRC, line, format!("flag must be 0 or 1, got `{other}`"))),
    };
    for (line, toks) in content_lines(text) {
        if toks.len() != 4 {
            return Err(Error::parse(SRC, line, "expected `node_id class is_neutral is_irrelevant`"));
        }
        let node: usize = field(SRC, line, toks[0], "node id")?;
        if node != rows.len() {
            return Err(Error::parse(SRC, line, format!("expected node {}, found {node}", rows.len())));
        }
        let class = match toks[1] {
            "-1" => None,
            "0" => Some(0),
            "1" => Some(1),
            other => return Err(Error::parse(SRC, line, format!("class must be -1, 0 or 1, got `{other}`"))),
        };
        rows.push((node, class, flag(line, toks[2])?, flag(line, toks[3])?));
    }
    Ok(GroundTruth {
        class: rows.iter().map(|r| r.1).collect(),
        neutral: rows.iter().map(|r| r.2).collect(),
        irrelevant: rows.iter().map(|r| r.3).collect(),
    })
}

pub fn format_edges(g: &AttributedGraph) -> String {
    let mut s = String::from("# src dst etype sign weight\n");
    for e in g.edges() {
        let _ = writeln!(s, "{e}");
    }
    s
}

pub fn format_features(x: &Array2<f64>) -> String {
    let mut s = format!("{} {}\n", x.nrows(), x.ncols());
    for row in x.outer_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

pub fn format_labels(labels: &Labels) -> String {
    labels.iter().fold(String::new(), |mut s, (n, c)| {
        let _ = writeln!(s, "{n} {c}");
        s
    })
}

pub fn format_r0(r: &Array2<f64>) -> String {
    let mut s = String::new();
    for (i, row) in r.outer_iter().enumerate() {
        let _ = writeln!(s, "{i} {} {}", row[0], row[1]);
    }
    s
}

pub fn format_ground_truth(gt: &GroundTruth) -> String {
    let mut s = String::from("# node_id class is_neutral is_irrelevant\n");
    for i in 0..gt.len() {
        let class = gt.class[i].map_or("-1".to_string(), |c| c.to_string());
        let _ = writeln!(
            s,
            "{i} {class} {} {}",
            u8::from(gt.neutral[i]),
            u8::from(gt.irrelevant[i])
        );
    }
    s
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn tag_source(err: Error, path: &Path) -> Error {
    match err {
        Error::Parse { line, msg, .. } => Error::Parse {
            source_name: path.display().to_string(),
            line,
            msg,
        },
        other => other,
    }
}

/// Loads a graph from the edge and feature files plus optional supervision.
pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
    r0_path: Option<&Path>,
) -> Result<AttributedGraph> {
    let edges = parse_edges(&read(edge_path)?).map_err(|e| tag_source(e, edge_path))?;
    let features = parse_features(&read(feature_path)?).map_err(|e| tag_source(e, feature_path))?;
    let n = features.nrows();
    let mut g = AttributedGraph::new(n, edges, features)?;
    if let Some(p) = label_path {
        g = g.with_labels(parse_labels(&read(p)?).map_err(|e| tag_source(e, p))?)?;
    }
    if let Some(p) = r0_path {
        g = g.with_r0(parse_r0(&read(p)?, n).map_err(|e| tag_source(e, p))?)?;
    }
    Ok(g)
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    parse_ground_truth(&read(path)?).map_err(|e| tag_source(e, path))
}

/// Writes `edges` and `features` (and `labels`/`r0` when present) into `dir`
/// with the given file stem. Returns the paths written.
pub fn save_graph(g: &AttributedGraph, dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    put(format!("{stem}.edges"), format_edges(g))?;
    put(format!("{stem}.features"), format_features(g.features()))?;
    if let Some(l) = g.labels() {
        put(format!("{stem}.labels"), format_labels(l))?;
    }
    if let Some(r) = g.r0() {
        put(format!("{stem}.r0"), format_r0(r))?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeType, Sign};

    #[test]
    fn minimal_edge_file_loads() {
        let edges = parse_edges("0 1 ui + 1.0\n").unwrap();
        let x = parse_features("2 3\n1 0 0\n0 1 0\n").unwrap();
        let g = AttributedGraph::new(2, edges, x).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.edges()[0].etype, EdgeType::UserItem);
        assert_eq!(g.edges()[0].sign, Sign::Positive);
    }

    #[test]
    fn comments_and_default_weight() {
        let edges = parse_edges("# header\n\n3 4 uu 0\n").unwrap();
        assert_eq!(edges.len(), 1);
        assert_eq!(edges[0].weight, 1.0);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        match parse_edges("0 1 uu +\n0 x uu +\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_edges("0 1 zz +\n") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 1);
                assert!(msg.contains("zz"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_edges("0 1 uu + -2\n").is_err());
        assert!(parse_edges("0 1 uu + NaN\n").is_err());
    }

    #[test]
    fn feature_row_count_is_validated() {
        assert!(matches!(parse_features("3 1\n1\n2\n"), Err(Error::Validation(_))));
        assert!(matches!(parse_features("1 1\n1\n2\n"), Err(Error::Validation(_))));
        assert!(matches!(parse_features("2 2\n1 2\n3\n"), Err(Error::Parse { line: 3, .. })));
        assert!(parse_features("99999999999 99999999999\n").is_err());
    }

    #[test]
    fn r0_must_cover_every_node() {
        assert!(parse_r0("0 0.5 0.5\n", 2).is_err());
        assert!(parse_r0("0 0.5 0.5\n1 0.2 0.7\n", 2).is_err());
        let r = parse_r0("1 0.25 0.75\n0 1 0\n", 2).unwrap();
        assert_eq!(r[[1, 1]], 0.75);
    }

    #[test]
    fn labels_reject_bad_class_and_duplicates() {
        assert!(parse_labels("0 2\n").is_err());
        assert!(parse_labels("0 1\n0 0\n").is_err());
        assert_eq!(parse_labels("4 1\n2 0\n").unwrap().len(), 2);
    }

    #[test]
    fn ground_truth_roundtrip() {
        let gt = GroundTruth {
            class: vec![Some(0), Some(1), None],
            neutral: vec![false, false, true],
            irrelevant: vec![false, false, false],
        };
        assert_eq!(parse_ground_truth(&format_ground_truth(&gt)).unwrap(), gt);
    }
}
