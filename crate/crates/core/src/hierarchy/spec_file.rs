//! Hierarchy description files.
//!
//! ```text
//! # comment
//! [cross-sectional]
//! Total: A, B, C
//! North: A, 2*B
//! [temporal]
//! orders = 24,12,8,6,4,3,2,1
//! ```
//!
//! Each cross-sectional line is `upper: bottom[, bottom...]`; a bottom may
//! carry a weight as `w*label`. Right-hand sides name bottom series only.
//! Bottom series are ordered by first appearance. Instead of rows, the
//! section may hold `matrix = weights.csv`, a CSV with header
//! `series,<bottom labels>` and one row per upper series (path relative to
//! the description file).

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::CrossSectionalStructure;

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchySpec {
    pub cs: CrossSectionalStructure,
    pub orders: Option<Vec<usize>>,
}

#[derive(PartialEq)]
enum Section {
    None,
    Cs,
    Te,
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

pub fn load_hierarchy(path: &Path) -> Result<HierarchySpec> {
    let text = std::fs::read_to_string(path)?;
    parse_hierarchy(&text, path.parent())
}

pub fn parse_hierarchy(text: &str, base_dir: Option<&Path>) -> Result<HierarchySpec> {
    let mut section = Section::None;
    let mut uppers: Vec<(String, Vec<(String, f64)>, usize)> = Vec::new();
    let mut matrix: Option<CrossSectionalStructure> = None;
    let mut orders = None;

    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = match line {
                "[cross-sectional]" => Section::Cs,
                "[temporal]" => Section::Te,
                other => return Err(perr(ln, 1, format!("unknown section {other}"))),
            };
            continue;
        }
        match section {
            Section::None => return Err(perr(ln, 1, "entry outside of a section")),
            Section::Te => {
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| perr(ln, 1, "expected `orders = k1,k2,...`"))?;
                if key.trim() != "orders" {
                    return Err(perr(ln, 1, format!("unknown key {:?}", key.trim())));
                }
                let col = raw.find('=').unwrap_or(0) + 2;
                orders = Some(parse_orders(value).map_err(|m| perr(ln, col, m))?);
            }
            Section::Cs => {
                if let Some((key, value)) = line.split_once('=') {
                    if key.trim() != "matrix" {
                        return Err(perr(ln, 1, format!("unknown key {:?}", key.trim())));
                    }
                    let p = Path::new(value.trim());
                    let full = match base_dir {
                        Some(d) if p.is_relative() => d.join(p),
                        _ => p.to_path_buf(),
                    };
                    matrix = Some(load_weight_matrix(&full)?);
                    continue;
                }
                let (upper, rhs) = line
                    .split_once(':')
                    .ok_or_else(|| perr(ln, 1, "expected `upper: bottom[, bottom...]`"))?;
                let upper = upper.trim();
                if upper.is_empty() {
                    return Err(perr(ln, 1, "empty upper label"));
                }
                let rhs_col = raw.find(':').unwrap_or(0) + 2;
                let mut terms = Vec::new();
                for term in rhs.split(',') {
                    let term = term.trim();
                    if term.is_empty() {
                        return Err(perr(ln, rhs_col, "empty bottom label"));
                    }
                    let (w, label) = match term.split_once('*') {
                        Some((w, l)) => {
                            let w: f64 = w
                                .trim()
                                .parse()
                                .map_err(|_| perr(ln, rhs_col, format!("bad weight in {term:?}")))?;
                            (w, l.trim())
                        }
                        None => (1.0, term),
                    };
                    terms.push((label.to_string(), w));
                }
                uppers.push((upper.to_string(), terms, ln));
            }
        }
    }

    let cs = match (matrix, uppers.is_empty()) {
        (Some(_), false) => {
            return Err(perr(1, 1, "both `matrix =` and aggregation rows given"));
        }
        (Some(m), true) => m,
        (None, _) => build_from_rows(&uppers)?,
    };
    Ok(HierarchySpec { cs, orders })
}

pub fn parse_orders(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad temporal order {:?}", t.trim()))
        })
        .collect()
}

fn build_from_rows(uppers: &[(String, Vec<(String, f64)>, usize)]) -> Result<CrossSectionalStructure> {
    if uppers.is_empty() {
        return Err(Error::InvalidStructure("no cross-sectional aggregation rows".into()));
    }
    let mut bottoms: Vec<String> = Vec::new();
    for (_, terms, ln) in uppers {
        for (label, _) in terms {
            if uppers.iter().any(|(u, _, _)| u == label) {
                return Err(perr(*ln, 1, format!("{label:?} is an upper series; list bottom series only")));
            }
            if !bottoms.contains(label) {
                bottoms.push(label.clone());
            }
        }
    }
    let mut agg = DMatrix::zeros(uppers.len(), bottoms.len());
    for (r, (_, terms, _)) in uppers.iter().enumerate() {
        for (label, w) in terms {
            let c = bottoms.iter().position(|b| b == label).unwrap();
            agg[(r, c)] += w;
        }
    }
    let labels = uppers.iter().map(|(u, _, _)| u.clone()).chain(bottoms).collect();
    CrossSectionalStructure::new(agg, Some(labels))
}

fn load_weight_matrix(path: &Path) -> Result<CrossSectionalStructure> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(perr(1, 1, "weight matrix needs `series` plus bottom columns"));
    }
    let bottoms: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut uppers = Vec::new();
    let mut values = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = r + 2;
        if rec.len() != header.len() {
            return Err(perr(line, rec.len() + 1, format!("expected {} fields", header.len())));
        }
        uppers.push(rec[0].to_string());
        for (c, f) in rec.iter().enumerate().skip(1) {
            values.push(
                f.parse::<f64>()
                    .map_err(|_| perr(line, c + 1, format!("bad weight {f:?}")))?,
            );
        }
    }
    let agg = DMatrix::from_row_slice(uppers.len(), bottoms.len(), &values);
    CrossSectionalStructure::new(agg, Some(uppers.into_iter().chain(bottoms).collect()))
}

/// Renders a structure in the row format accepted by [`parse_hierarchy`].
pub fn format_hierarchy(cs: &CrossSectionalStructure, orders: Option<&[usize]>) -> String {
    let mut out = String::from("[cross-sectional]\n");
    let n_u = cs.n_upper();
    for u in 0..n_u {
        let terms: Vec<String> = cs
            .agg()
            .row(u)
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(b, w)| {
                let label = &cs.labels()[n_u + b];
                if *w == 1.0 {
                    label.clone()
                } else {
                    format!("{w}*{label}")
                }
            })
            .collect();
        out.push_str(&format!("{}: {}\n", cs.labels()[u], terms.join(", ")));
    }
    if let Some(ks) = orders {
        let ks: Vec<String> = ks.iter().map(|k| k.to_string()).collect();
        out.push_str(&format!("[temporal]\norders = {}\n", ks.join(",")));
    }
    out
}
