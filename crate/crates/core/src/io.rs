//! Tabular and line-delimited artifact formats.
//!
//! Floats are written in Rust's shortest round-trip form, so a file read back
//! and written again is byte-identical.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use thiserror::Error;

use crate::argraph::{ArgGraph, GraphDocument, GraphError};
use crate::features::{Feature, UserFeatureVector};
use crate::labeling::LabeledExample;
use crate::metrics::CentralityScores;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_graphs<W: Write>(graphs: &[ArgGraph], mut out: W) -> Result<(), IoError> {
    for g in graphs {
        serde_json::to_writer(&mut out, &g.to_document())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_graphs<R: BufRead>(input: R) -> Result<Vec<ArgGraph>, IoError> {
    let mut graphs = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: GraphDocument = serde_json::from_str(&line)?;
        graphs.push(ArgGraph::from_document(&doc)?);
    }
    Ok(graphs)
}

/// One row per post: `conversation_id,node_id,betweenness,eigenvector,closeness`.
pub fn write_centralities<W: Write>(rows: &[(&ArgGraph, &CentralityScores)], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["conversation_id", "node_id", "betweenness", "eigenvector", "closeness"])?;
    for (g, c) in rows {
        for (i, node) in g.nodes.iter().enumerate() {
            w.write_record([
                g.conversation_id.as_str(),
                node.as_str(),
                &num(c.betweenness[i]),
                &num(c.eigenvector[i]),
                &num(c.closeness[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_centralities`] and lines them up with the
/// nodes of `graphs`. Every node needs exactly one row.
pub fn read_centralities<R: Read>(input: R, graphs: &[ArgGraph]) -> Result<Vec<CentralityScores>, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::MissingColumn(name.to_string()))
    };
    let (conv, node) = (col("conversation_id")?, col("node_id")?);
    let measures = [col("betweenness")?, col("eigenvector")?, col("closeness")?];
    let mut by_node: BTreeMap<(String, String), [f64; 3]> = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut v = [0.0; 3];
        for (slot, &c) in v.iter_mut().zip(&measures) {
            let s = rec.get(c).unwrap_or("");
            *slot = s.trim().parse().map_err(|_| IoError::BadRow {
                row: i + 1,
                reason: format!("`{s}` is not a number"),
            })?;
        }
        let key = (rec.get(conv).unwrap_or("").to_string(), rec.get(node).unwrap_or("").to_string());
        if by_node.insert(key, v).is_some() {
            return Err(IoError::BadRow {
                row: i + 1,
                reason: "duplicate node".into(),
            });
        }
    }
    graphs
        .iter()
        .map(|g| {
            let mut scores = CentralityScores {
                betweenness: Vec::with_capacity(g.node_count()),
                eigenvector: Vec::with_capacity(g.node_count()),
                closeness: Vec::with_capacity(g.node_count()),
                converged: true,
            };
            for n in &g.nodes {
                let [b, e, c] = by_node
                    .remove(&(g.conversation_id.clone(), n.clone()))
                    .ok_or_else(|| IoError::BadRow {
                        row: 0,
                        reason: format!("no centrality row for {}/{n}", g.conversation_id),
                    })?;
                scores.betweenness.push(b);
                scores.eigenvector.push(e);
                scores.closeness.push(c);
            }
            Ok(scores)
        })
        .collect()
}

fn feature_header(extra: Option<&str>) -> Vec<String> {
    let mut h = vec!["conversation_id".to_string(), "user_id".to_string()];
    h.extend(Feature::ALL.iter().map(|f| f.name().to_string()));
    h.extend(extra.map(str::to_string));
    h
}

fn feature_record(conversation_id: &str, v: &UserFeatureVector) -> Vec<String> {
    let mut r = vec![conversation_id.to_string(), v.user_id.clone()];
    r.extend(v.values().iter().map(|&x| num(x)));
    r
}

/// `conversation_id,user_id` followed by the nineteen features.
pub fn write_features<W: Write>(rows: &[(String, UserFeatureVector)], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(feature_header(None))?;
    for (c, v) in rows {
        w.write_record(feature_record(c, v))?;
    }
    w.flush()?;
    Ok(())
}

/// Feature rows with a trailing `is_top` column of `0`/`1`.
pub fn write_labeled<W: Write>(examples: &[LabeledExample], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(feature_header(Some("is_top")))?;
    for e in examples {
        let mut r = feature_record(&e.conversation_id, &e.features);
        r.push(if e.is_top { "1" } else { "0" }.to_string());
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

struct Columns {
    conversation: usize,
    user: usize,
    features: [usize; 19],
    label: Option<usize>,
}

fn locate(headers: &csv::StringRecord, need_label: bool) -> Result<Columns, IoError> {
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::MissingColumn(name.to_string()))
    };
    let mut features = [0usize; 19];
    for (slot, f) in features.iter_mut().zip(Feature::ALL) {
        *slot = find(f.name())?;
    }
    let label = if need_label { Some(find("is_top")?) } else { headers.iter().position(|h| h == "is_top") };
    Ok(Columns {
        conversation: find("conversation_id")?,
        user: find("user_id")?,
        features,
        label,
    })
}

fn parse_row(rec: &csv::StringRecord, cols: &Columns, row: usize) -> Result<(String, UserFeatureVector), IoError> {
    let mut values = [0.0; 19];
    for (v, &c) in values.iter_mut().zip(&cols.features) {
        let s = rec.get(c).unwrap_or("");
        *v = s.trim().parse().map_err(|_| IoError::BadRow {
            row,
            reason: format!("`{s}` is not a number"),
        })?;
    }
    let user = rec.get(cols.user).unwrap_or("").to_string();
    Ok((
        rec.get(cols.conversation).unwrap_or("").to_string(),
        UserFeatureVector::from_values(user, &values),
    ))
}

fn parse_label(s: &str, row: usize) -> Result<bool, IoError> {
    match s.trim() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(IoError::BadRow {
            row,
            reason: format!("`{other}` is not a label"),
        }),
    }
}

pub fn read_features<R: Read>(input: R) -> Result<Vec<(String, UserFeatureVector)>, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let cols = locate(r.headers()?, false)?;
    r.records()
        .enumerate()
        .map(|(i, rec)| parse_row(&rec?, &cols, i + 1))
        .collect()
}

pub fn read_labeled<R: Read>(input: R) -> Result<Vec<LabeledExample>, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let cols = locate(r.headers()?, true)?;
    let label_col = cols.label.expect("label column located");
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let (conversation_id, features) = parse_row(&rec, &cols, i + 1)?;
            Ok(LabeledExample {
                conversation_id,
                user_id: features.user_id.clone(),
                is_top: parse_label(rec.get(label_col).unwrap_or(""), i + 1)?,
                features,
            })
        })
        .collect()
}

pub fn write_json_pretty<W: Write, T: serde::Serialize>(value: &T, mut out: W) -> Result<(), IoError> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// `user_id,cumulative_approval,is_top`, sorted by user id.
pub fn write_approvals<W: Write>(
    approvals: &BTreeMap<String, crate::labeling::UserApproval>,
    top: &std::collections::BTreeSet<String>,
    out: W,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "cumulative_approval", "is_top"])?;
    for (u, a) in approvals {
        w.write_record([u.as_str(), &a.cumulative_approval.to_string(), if top.contains(u) { "1" } else { "0" }])?;
    }
    w.flush()?;
    Ok(())
}
