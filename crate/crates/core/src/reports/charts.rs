//! Charts for a run directory, built from the CSV reports it contains.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::party_distance::BucketBounds;

use super::svg::{render_chart, ChartKind, ChartSpec, Series, ValueFormat};
use super::ReportError;

/// File-name-safe form of an issue or party name.
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    let out = out.trim_matches('_').to_string();
    if out.is_empty() {
        "unnamed".to_string()
    } else {
        out
    }
}

/// Distinct slugs for a list of names, in order; repeats get a numeric suffix.
pub fn unique_slugs<'a>(names: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut used = BTreeSet::new();
    names
        .into_iter()
        .map(|n| {
            let base = slug(n);
            let mut s = base.clone();
            let mut k = 2;
            while !used.insert(s.clone()) {
                s = format!("{base}_{k}");
                k += 1;
            }
            s
        })
        .collect()
}

type Table = (Vec<String>, Vec<Vec<String>>);

fn read_table(path: &Path, flexible: bool) -> Result<Table, ReportError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(flexible)
        .from_path(path)?;
    let header = rdr.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize, ReportError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| ReportError::Format(format!("{}: no `{name}` column", path.display())))
}

fn number(s: &str, path: &Path) -> Result<Option<f64>, ReportError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| ReportError::Format(format!("{}: `{s}` is not a number", path.display())))
}

fn push_unique(v: &mut Vec<String>, s: &str) -> usize {
    match v.iter().position(|x| x == s) {
        Some(i) => i,
        None => {
            v.push(s.to_string());
            v.len() - 1
        }
    }
}

/// Bars from an `issue,group,word_count,comment_count` table: categories are
/// issues, one series per group.
fn activity_chart(path: &Path, title: &str, x_label: &str) -> Result<ChartSpec, ReportError> {
    let (header, rows) = read_table(path, false)?;
    let (ci, cg, cw) = (
        column(&header, "issue", path)?,
        column(&header, "group", path)?,
        column(&header, "word_count", path)?,
    );
    let mut categories = Vec::new();
    let mut groups = Vec::new();
    let mut cells = BTreeMap::new();
    for r in &rows {
        let i = push_unique(&mut categories, &r[ci]);
        let g = push_unique(&mut groups, &r[cg]);
        cells.insert((g, i), number(&r[cw], path)?);
    }
    let mut spec = ChartSpec::new(ChartKind::Bars, title);
    spec.x_label = x_label.to_string();
    spec.y_label = "words".into();
    spec.format = ValueFormat::Integer;
    spec.series = groups
        .iter()
        .enumerate()
        .map(|(g, name)| {
            let name = if name.is_empty() { "words" } else { name };
            Series::new(
                name,
                (0..categories.len())
                    .map(|i| cells.get(&(g, i)).copied().flatten())
                    .collect(),
            )
        })
        .collect();
    spec.categories = categories;
    Ok(spec)
}

/// One line chart per issue from `distances.csv`.
fn distance_charts(path: &Path) -> Result<Vec<(String, ChartSpec)>, ReportError> {
    let (header, rows) = read_table(path, false)?;
    let (cp, ci, cper, cs, cu) = (
        column(&header, "party", path)?,
        column(&header, "issue", path)?,
        column(&header, "period", path)?,
        column(&header, "similarity", path)?,
        column(&header, "uncertainty", path)?,
    );
    let mut issues = Vec::new();
    for r in &rows {
        push_unique(&mut issues, &r[ci]);
    }
    let slugs = unique_slugs(issues.iter().map(String::as_str));
    let mut out = Vec::new();
    for (issue, s) in issues.iter().zip(slugs) {
        let mut periods = Vec::new();
        let mut parties = Vec::new();
        let mut cells = BTreeMap::new();
        for r in rows.iter().filter(|r| &r[ci] == issue) {
            let t = push_unique(&mut periods, &r[cper]);
            let p = push_unique(&mut parties, &r[cp]);
            cells.insert((p, t), (number(&r[cs], path)?, number(&r[cu], path)?));
        }
        let mut spec = ChartSpec::new(
            ChartKind::Lines,
            format!("Similarity to reference: {issue}"),
        );
        spec.x_label = "period".into();
        spec.y_label = "cosine similarity".into();
        spec.series = parties
            .iter()
            .enumerate()
            .map(|(p, name)| {
                let vals: Vec<(Option<f64>, Option<f64>)> = (0..periods.len())
                    .map(|t| cells.get(&(p, t)).copied().unwrap_or((None, None)))
                    .collect();
                Series {
                    name: name.clone(),
                    values: vals.iter().map(|v| v.0).collect(),
                    errors: Some(vals.iter().map(|v| v.0.and(v.1)).collect()),
                }
            })
            .collect();
        spec.categories = periods;
        if spec
            .series
            .iter()
            .any(|s| s.values.iter().any(Option::is_some))
        {
            out.push((format!("distance_{s}.svg"), spec));
        }
    }
    Ok(out)
}

/// Heatmap from a pairwise matrix file with its trailing `bounds` row.
fn heatmap_chart(path: &Path) -> Result<ChartSpec, ReportError> {
    let (header, rows) = read_table(path, true)?;
    let parties: Vec<String> = header.iter().skip(1).cloned().collect();
    let bounds_row = rows
        .iter()
        .find(|r| r.first().is_some_and(|c| c == "bounds"))
        .ok_or_else(|| ReportError::Format(format!("{}: no bounds row", path.display())))?;
    let mut edges = [0.0; 3];
    for (k, e) in edges.iter_mut().enumerate() {
        *e = bounds_row
            .get(k + 1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ReportError::Format(format!("{}: bad bounds row", path.display())))?;
    }
    let bounds = BucketBounds { edges };
    let mut series = Vec::new();
    let mut levels = Vec::new();
    for (i, r) in rows
        .iter()
        .filter(|r| r.first().is_some_and(|c| c != "bounds"))
        .enumerate()
    {
        let vals = r[1..]
            .iter()
            .map(|s| number(s, path))
            .collect::<Result<Vec<_>, _>>()?;
        levels.push(
            vals.iter()
                .enumerate()
                .map(|(j, v)| {
                    if i == j {
                        0
                    } else {
                        v.map_or(0, |v| bounds.level(v))
                    }
                })
                .collect(),
        );
        series.push(Series::new(r[0].clone(), vals));
    }
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("pairwise");
    let mut spec = ChartSpec::new(ChartKind::Heatmap, format!("Pairwise similarity: {stem}"));
    spec.categories = parties;
    spec.series = series;
    spec.levels = Some(levels);
    spec.legend = Some(edges);
    Ok(spec)
}

fn trace_chart(path: &Path, title: &str) -> Result<ChartSpec, ReportError> {
    let (header, rows) = read_table(path, false)?;
    let mut spec = ChartSpec::new(ChartKind::Lines, title);
    spec.x_label = "n".into();
    spec.categories = rows.iter().map(|r| r[0].clone()).collect();
    for (c, name) in header.iter().enumerate().skip(1) {
        let vals = rows
            .iter()
            .map(|r| number(&r[c], path))
            .collect::<Result<Vec<_>, _>>()?;
        spec.series.push(Series::new(name.clone(), vals));
    }
    Ok(spec)
}

fn histogram_chart(path: &Path) -> Result<ChartSpec, ReportError> {
    let (_, rows) = read_table(path, false)?;
    let mut spec = ChartSpec::new(ChartKind::Bars, "Largest-magnitude dimension per vector");
    spec.x_label = "dimension".into();
    spec.y_label = "vectors".into();
    spec.format = ValueFormat::Integer;
    spec.categories = rows.iter().map(|r| r[0].clone()).collect();
    let vals = rows
        .iter()
        .map(|r| number(&r[1], path))
        .collect::<Result<Vec<_>, _>>()?;
    spec.series = vec![Series::new("count", vals)];
    Ok(spec)
}

/// Renders every chart whose source CSV exists under `dir`. Returns
/// `(relative path, svg)` pairs in a fixed order.
pub fn render_reports(dir: &Path) -> Result<Vec<(String, String)>, ReportError> {
    let mut specs: Vec<(String, ChartSpec)> = Vec::new();
    let p = dir.join("activity_issue.csv");
    if p.exists() {
        specs.push((
            "words_per_issue.svg".into(),
            activity_chart(&p, "Words per issue", "issue")?,
        ));
    }
    let p = dir.join("activity_issue_party.csv");
    if p.exists() {
        specs.push((
            "words_per_party.svg".into(),
            activity_chart(&p, "Words per party and issue", "issue")?,
        ));
    }
    let p = dir.join("activity_issue_period.csv");
    if p.exists() {
        specs.push((
            "words_per_period.svg".into(),
            activity_chart(&p, "Words per issue and period", "issue")?,
        ));
    }
    let p = dir.join("activity_topics.csv");
    if p.exists() {
        specs.push((
            "words_per_topic.svg".into(),
            activity_chart(&p, "Words per latent issue", "topic")?,
        ));
    }
    let p = dir.join("distances.csv");
    if p.exists() {
        specs.extend(distance_charts(&p)?);
    }
    let pw = dir.join("pairwise");
    if pw.is_dir() {
        let mut files: Vec<_> = fs::read_dir(&pw)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        files.sort();
        for f in files {
            let stem = f
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("pairwise")
                .to_string();
            specs.push((format!("heatmap_{stem}.svg"), heatmap_chart(&f)?));
        }
    }
    let diag = dir.join("diagnostics");
    let p = diag.join("anisotropy.csv");
    if p.exists() {
        specs.push(("anisotropy.svg".into(), histogram_chart(&p)?));
    }
    for name in ["trace_a", "trace_b"] {
        let p = diag.join(format!("{name}.csv"));
        if p.exists() {
            specs.push((
                format!("{name}.svg"),
                trace_chart(&p, "Extreme components of word and prefix-mean vectors")?,
            ));
        }
    }
    let p = diag.join("convergence.csv");
    if p.exists() {
        specs.push((
            "convergence.svg".into(),
            trace_chart(&p, "Cosine between prefix means of two texts")?,
        ));
    }

    let mut out = Vec::new();
    for (name, spec) in specs {
        match render_chart(&spec) {
            Ok(svg) => out.push((format!("charts/{name}"), svg)),
            Err(e) => log::warn!("chart {name} skipped: {e}"),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("Natural Resources"), "natural_resources");
        assert_eq!(slug("  The South!  "), "the_south");
        assert_eq!(slug("***"), "unnamed");
        assert_eq!(unique_slugs(["A b", "a-b", "c"]), vec!["a_b", "a_b_2", "c"]);
    }
}
