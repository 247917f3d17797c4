//! CSV and JSON-lines input/output.
//!
//! Forecast, actual and residual files share one wide layout: a header
//! `[origin,]series,k{order}_{index},...` and one row per series (per
//! origin). Position columns may appear in any order and are matched by
//! label; rows are matched to series by label.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::covariance::ResidualSet;
use crate::error::{Error, Result};
use crate::hierarchy::CrossTemporalStructure;
use crate::reconcile::{sort_origin_ids, ForecastBlock, ReconcileReport};

fn perr(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

/// Parses a wide forecast table. `default_origin` names the single origin
/// of a table without an origin column. Blocks come back sorted by origin.
pub fn parse_blocks(text: &str, ct: &CrossTemporalStructure, default_origin: &str) -> Result<Vec<ForecastBlock>> {
    let mut rdr = csv_reader(text);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(perr(1, 1, "empty file")),
    };
    let has_origin = header.get(0) == Some("origin");
    let series_col = usize::from(has_origin);
    if header.get(series_col) != Some("series") {
        return Err(perr(1, series_col + 1, "expected a `series` column"));
    }
    let labels = ct.te().position_labels();
    let wanted: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut col_pos = Vec::new();
    let mut seen = vec![false; labels.len()];
    for (c, h) in header.iter().enumerate().skip(series_col + 1) {
        let p = *wanted
            .get(h)
            .ok_or_else(|| perr(1, c + 1, format!("unknown position column {h:?}")))?;
        if seen[p] {
            return Err(perr(1, c + 1, format!("duplicate column {h:?}")));
        }
        seen[p] = true;
        col_pos.push(p);
    }
    if let Some(p) = seen.iter().position(|s| !s) {
        return Err(perr(1, header.len() + 1, format!("missing position column {}", labels[p])));
    }

    let n = ct.n();
    let q = ct.q();
    let series_index: HashMap<&str, usize> = ct
        .cs()
        .labels()
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    // origin -> (values, filled)
    let mut origins: BTreeMap<String, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(perr(line, rec.len().min(header.len()) + 1, format!(
                "expected {} fields, found {}",
                header.len(),
                rec.len()
            )));
        }
        let origin = if has_origin { rec[0].to_string() } else { default_origin.to_string() };
        let s = &rec[series_col];
        let i = *series_index
            .get(s)
            .ok_or_else(|| perr(line, series_col + 1, format!("unknown series {s:?}")))?;
        let (vals, filled) = origins
            .entry(origin.clone())
            .or_insert_with(|| (vec![0.0; n * q], vec![false; n]));
        if filled[i] {
            return Err(perr(line, series_col + 1, format!("series {s} repeated for origin {origin}")));
        }
        filled[i] = true;
        for (c, &p) in col_pos.iter().enumerate() {
            let field = &rec[series_col + 1 + c];
            let v: f64 = field
                .parse()
                .map_err(|_| perr(line, series_col + 2 + c, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(perr(line, series_col + 2 + c, format!("non-finite value {field:?}")));
            }
            vals[i * q + p] = v;
        }
    }
    if origins.is_empty() {
        return Err(perr(2, 1, "no data rows"));
    }
    let mut blocks = Vec::with_capacity(origins.len());
    for (origin, (vals, filled)) in origins {
        let missing: Vec<&str> = filled
            .iter()
            .enumerate()
            .filter(|(_, f)| !**f)
            .map(|(i, _)| ct.cs().labels()[i].as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Invalid(format!(
                "origin {origin}: missing series {}",
                missing.join(", ")
            )));
        }
        blocks.push(ForecastBlock::new(origin, n, q, vals)?);
    }
    sort_origin_ids(&mut blocks);
    Ok(blocks)
}

/// Reads one CSV file, or every `*.csv` in a directory (one origin per
/// file, named by file stem, unless the files carry an origin column).
pub fn read_blocks(path: &Path, ct: &CrossTemporalStructure) -> Result<Vec<ForecastBlock>> {
    let annotate = |p: &Path, e: Error| match e {
        Error::Parse { line, column, message } => Error::Parse {
            line,
            column,
            message: format!("{}: {message}", p.display()),
        },
        other => other,
    };
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in files {
            let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("0").to_string();
            let text = fs::read_to_string(&f)?;
            out.extend(parse_blocks(&text, ct, &stem).map_err(|e| annotate(&f, e))?);
        }
        let mut ids: Vec<&str> = out.iter().map(|b| b.origin_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Invalid(format!("origin {} appears in several files", w[0])));
        }
        sort_origin_ids(&mut out);
        Ok(out)
    } else {
        let text = fs::read_to_string(path)?;
        parse_blocks(&text, ct, "0").map_err(|e| annotate(path, e))
    }
}

/// Wide table with an origin column, origins in the given order.
pub fn format_blocks(ct: &CrossTemporalStructure, blocks: &[ForecastBlock]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["origin".to_string(), "series".to_string()];
    header.extend(ct.te().position_labels());
    w.write_record(&header)?;
    for b in blocks {
        b.check_structure(ct)?;
        for (i, label) in ct.cs().labels().iter().enumerate() {
            let mut rec = vec![b.origin_id.clone(), label.clone()];
            rec.extend(b.series(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_blocks(path: &Path, ct: &CrossTemporalStructure, blocks: &[ForecastBlock]) -> Result<()> {
    fs::write(path, format_blocks(ct, blocks)?)?;
    Ok(())
}

/// Residuals in the forecast layout, one origin per in-sample period.
pub fn read_residuals(path: &Path, ct: &CrossTemporalStructure) -> Result<ResidualSet> {
    let blocks = read_blocks(path, ct)?;
    ResidualSet::new(ct.n(), ct.q(), blocks.into_iter().map(ForecastBlock::into_values).collect())
}

pub fn write_residuals(path: &Path, ct: &CrossTemporalStructure, res: &ResidualSet) -> Result<()> {
    let blocks: Vec<ForecastBlock> = res
        .blocks()
        .iter()
        .enumerate()
        .map(|(o, v)| ForecastBlock::for_structure(o.to_string(), ct, v.clone()))
        .collect::<Result<_>>()?;
    write_blocks(path, ct, &blocks)
}

/// Highest-frequency history of the bottom series: header
/// `origin,series,h1,...` and one row per (origin, bottom series).
pub fn parse_history(text: &str, ct: &CrossTemporalStructure) -> Result<BTreeMap<String, Vec<Vec<f64>>>> {
    let mut rdr = csv_reader(text);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(perr(1, 1, "empty history file")),
    };
    if header.get(0) != Some("origin") || header.get(1) != Some("series") {
        return Err(perr(1, 1, "history header must start with origin,series"));
    }
    let n_u = ct.cs().n_upper();
    let n_b = ct.cs().n_bottom();
    let bottoms: HashMap<&str, usize> = ct.cs().labels()[n_u..]
        .iter()
        .enumerate()
        .map(|(b, l)| (l.as_str(), b))
        .collect();
    let mut out: BTreeMap<String, Vec<Option<Vec<f64>>>> = BTreeMap::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() < 3 {
            return Err(perr(line, rec.len() + 1, "expected origin, series and values"));
        }
        let b = *bottoms
            .get(&rec[1])
            .ok_or_else(|| perr(line, 2, format!("{:?} is not a bottom series", &rec[1])))?;
        let mut vals = Vec::with_capacity(rec.len() - 2);
        for c in 2..rec.len() {
            let v: f64 = rec[c]
                .parse()
                .map_err(|_| perr(line, c + 1, format!("not a number: {:?}", &rec[c])))?;
            if !v.is_finite() {
                return Err(perr(line, c + 1, "non-finite value"));
            }
            vals.push(v);
        }
        let slot = &mut out.entry(rec[0].to_string()).or_insert_with(|| vec![None; n_b])[b];
        if slot.is_some() {
            return Err(perr(line, 2, format!("series {} repeated for origin {}", &rec[1], &rec[0])));
        }
        *slot = Some(vals);
    }
    out.into_iter()
        .map(|(o, v)| {
            let missing: Vec<&str> = v
                .iter()
                .enumerate()
                .filter(|(_, h)| h.is_none())
                .map(|(b, _)| ct.cs().labels()[n_u + b].as_str())
                .collect();
            if !missing.is_empty() {
                return Err(Error::Invalid(format!("history for origin {o}: missing series {}", missing.join(", "))));
            }
            Ok((o, v.into_iter().map(Option::unwrap).collect()))
        })
        .collect()
}

pub fn read_history(path: &Path, ct: &CrossTemporalStructure) -> Result<BTreeMap<String, Vec<Vec<f64>>>> {
    parse_history(&fs::read_to_string(path)?, ct)
}

pub fn format_history(ct: &CrossTemporalStructure, history: &[(String, Vec<Vec<f64>>)]) -> String {
    let n_u = ct.cs().n_upper();
    let width = history.first().and_then(|(_, h)| h.first()).map_or(0, Vec::len);
    let mut s = String::from("origin,series");
    for t in 1..=width {
        s.push_str(&format!(",h{t}"));
    }
    s.push('\n');
    for (o, rows) in history {
        for (b, vals) in rows.iter().enumerate() {
            s.push_str(&format!("{o},{}", ct.cs().labels()[n_u + b]));
            for v in vals {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
    }
    s
}

/// One JSON object per line, in the given order.
pub fn write_reports(path: &Path, reports: &[ReconcileReport], timing: bool) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in reports {
        writeln!(f, "{}", r.to_json_line(timing)?)?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{CrossSectionalStructure, TemporalStructure};

    fn toy() -> CrossTemporalStructure {
        CrossTemporalStructure::new(
            CrossSectionalStructure::star(2).unwrap(),
            TemporalStructure::new(&[2, 1]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_with_origin_column() {
        let ct = toy();
        let a = ForecastBlock::for_structure("2", &ct, (0..9).map(|v| v as f64 / 3.0).collect()).unwrap();
        let b = ForecastBlock::for_structure("10", &ct, (0..9).map(|v| -(v as f64)).collect()).unwrap();
        let text = format_blocks(&ct, &[a.clone(), b.clone()]).unwrap();
        assert!(text.starts_with("origin,series,k2_1,k1_1,k1_2\n"));
        assert_eq!(parse_blocks(&text, &ct, "x").unwrap(), vec![a, b]);
    }

    #[test]
    fn columns_and_rows_matched_by_label() {
        let ct = toy();
        let labels = ct.cs().labels().to_vec();
        let text = format!(
            "series,k1_2,k2_1,k1_1\n{},3,1,2\n{},6,4,5\n{},9,7,8\n",
            labels[2], labels[0], labels[1]
        );
        let b = parse_blocks(&text, &ct, "o").unwrap();
        assert_eq!(b[0].origin_id, "o");
        assert_eq!(b[0].vectorize(), &[4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn errors_name_location_and_series() {
        let ct = toy();
        let l = ct.cs().labels().to_vec();
        let bad_num = format!("series,k2_1,k1_1,k1_2\n{},1,x,3\n", l[0]);
        match parse_blocks(&bad_num, &ct, "0") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
        let missing = format!("series,k2_1,k1_1,k1_2\n{},1,2,3\n{},1,2,3\n", l[0], l[1]);
        let e = parse_blocks(&missing, &ct, "0").unwrap_err().to_string();
        assert!(e.contains(&l[2]), "{e}");
        let bad_col = "series,k3_1,k1_1,k1_2\n";
        assert!(matches!(parse_blocks(bad_col, &ct, "0"), Err(Error::Parse { line: 1, column: 2, .. })));
    }

    #[test]
    fn history_round_trip() {
        let ct = toy();
        let h = vec![("0".to_string(), vec![vec![1.0, 2.0], vec![3.0, 4.5]])];
        let text = format_history(&ct, &h);
        let back = parse_history(&text, &ct).unwrap();
        assert_eq!(back["0"], h[0].1);
    }
}
