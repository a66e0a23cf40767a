//! Category × model result tables with per-group averages, as CSV and as an
//! aligned text table.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::DatasetKind;
use crate::error::{Error, Result};
use crate::eval::{AucConvention, EvalResult};

pub const MVTEC_TEXTURE: [&str; 6] = ["carpet", "grid", "leather", "tile", "wood", "hazelnut"];
pub const MVTEC_NON_TEXTURE: [&str; 9] = [
    "bottle",
    "cable",
    "capsule",
    "metal_nut",
    "pill",
    "screw",
    "toothbrush",
    "transistor",
    "zipper",
];
const MODEL_ORDER: [&str; 3] = ["vae", "vae-grf", "vit-vae"];

pub const CSV_HEADER: &str = "group,category,model,mean,std,n_images,n_skipped";
pub const EMPTY_CELL: &str = "-";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Texture,
    NonTexture,
    Structure,
}

impl Group {
    pub fn of(layout: DatasetKind, category: &str) -> Group {
        match layout {
            DatasetKind::Miad => Group::Structure,
            DatasetKind::Mvtec if MVTEC_TEXTURE.contains(&category) => Group::Texture,
            DatasetKind::Mvtec => Group::NonTexture,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::Texture => "texture",
            Group::NonTexture => "non_texture",
            Group::Structure => "structure",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Group::Texture => "Texture",
            Group::NonTexture => "Non-Texture",
            Group::Structure => "Structure",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub std: f64,
    pub n_images: usize,
    pub n_skipped: usize,
}

impl Cell {
    pub fn format(&self) -> String {
        format_cell(self.mean, self.std)
    }
}

/// `"m.mm ± s.ss"`
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{mean:.2} ± {std:.2}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub group: Group,
    pub category: String,
    /// One entry per model column.
    pub cells: Vec<Option<Cell>>,
    /// Column index of the best mean, if any.
    pub best: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupAverage {
    pub group: Group,
    /// `(mean of member means, mean of member stds)` per model column.
    pub cells: Vec<Option<(f64, f64)>>,
    pub best: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub layout: DatasetKind,
    pub models: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub averages: Vec<GroupAverage>,
    pub convention: AucConvention,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub table: ReportTable,
    pub csv: String,
    pub text: String,
}

fn best_of<I: Iterator<Item = Option<f64>>>(values: I) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if let Some(v) = v {
            if best.map(|(_, b)| v > b).unwrap_or(true) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

fn category_rank(layout: DatasetKind, category: &str) -> usize {
    let known: &[&str] = match layout {
        DatasetKind::Mvtec => &[
            "carpet",
            "grid",
            "leather",
            "tile",
            "wood",
            "hazelnut",
            "bottle",
            "cable",
            "capsule",
            "metal_nut",
            "pill",
            "screw",
            "toothbrush",
            "transistor",
            "zipper",
        ],
        DatasetKind::Miad => &crate::data::MIAD_SURFACE_CATEGORIES,
    };
    known
        .iter()
        .position(|&c| c == category)
        .unwrap_or(known.len())
}

pub fn render_report(results: &[EvalResult], layout: DatasetKind) -> Result<Report> {
    if results.is_empty() {
        return Err(Error::Parameter("no results to report".into()));
    }
    let mut seen = BTreeSet::new();
    for r in results {
        if !seen.insert((r.category.clone(), r.model_id.clone())) {
            return Err(Error::DuplicateResult {
                category: r.category.clone(),
                model: r.model_id.clone(),
            });
        }
    }
    let convention = if results
        .iter()
        .all(|r| r.convention == AucConvention::Pooled)
    {
        AucConvention::Pooled
    } else {
        AucConvention::PerImage
    };

    let mut models: Vec<String> = Vec::new();
    for r in results {
        if !models.contains(&r.model_id) {
            models.push(r.model_id.clone());
        }
    }
    models.sort_by_key(|m| {
        MODEL_ORDER
            .iter()
            .position(|&o| o == m)
            .unwrap_or(MODEL_ORDER.len())
    });

    let mut categories: Vec<String> = Vec::new();
    for r in results {
        if !categories.contains(&r.category) {
            categories.push(r.category.clone());
        }
    }
    categories.sort_by_key(|c| (Group::of(layout, c), category_rank(layout, c)));

    let lookup: HashMap<(&str, &str), &EvalResult> = results
        .iter()
        .map(|r| ((r.category.as_str(), r.model_id.as_str()), r))
        .collect();

    let rows: Vec<ReportRow> = categories
        .iter()
        .map(|cat| {
            let cells: Vec<Option<Cell>> = models
                .iter()
                .map(|m| {
                    lookup.get(&(cat.as_str(), m.as_str())).map(|r| {
                        let (mean, std) = r.headline();
                        Cell {
                            mean,
                            std,
                            n_images: r.images_evaluated,
                            n_skipped: r.images_skipped,
                        }
                    })
                })
                .collect();
            let best = best_of(cells.iter().map(|c| c.map(|c| c.mean)));
            ReportRow {
                group: Group::of(layout, cat),
                category: cat.clone(),
                cells,
                best,
            }
        })
        .collect();

    let mut groups: Vec<Group> = rows.iter().map(|r| r.group).collect();
    groups.dedup();
    let averages: Vec<GroupAverage> = groups
        .into_iter()
        .map(|group| {
            let members: Vec<&ReportRow> = rows.iter().filter(|r| r.group == group).collect();
            let cells: Vec<Option<(f64, f64)>> = (0..models.len())
                .map(|col| {
                    let present: Vec<Cell> = members.iter().filter_map(|r| r.cells[col]).collect();
                    if present.is_empty() {
                        None
                    } else {
                        let n = present.len() as f64;
                        Some((
                            present.iter().map(|c| c.mean).sum::<f64>() / n,
                            present.iter().map(|c| c.std).sum::<f64>() / n,
                        ))
                    }
                })
                .collect();
            let best = best_of(cells.iter().map(|c| c.map(|(m, _)| m)));
            GroupAverage { group, cells, best }
        })
        .collect();

    let table = ReportTable {
        layout,
        models,
        rows,
        averages,
        convention,
    };
    let csv = render_csv(&table);
    let text = render_text(&table);
    Ok(Report { table, csv, text })
}

fn render_csv(table: &ReportTable) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in &table.rows {
        for (model, cell) in table.models.iter().zip(&row.cells) {
            if let Some(c) = cell {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    row.group.label(),
                    row.category,
                    model,
                    c.mean,
                    c.std,
                    c.n_images,
                    c.n_skipped
                );
            }
        }
    }
    out
}

fn render_text(table: &ReportTable) -> String {
    let mark = |s: String, best: bool| if best { format!("{s} *") } else { s };
    let mut lines: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Category".to_string()];
    header.extend(table.models.iter().cloned());
    let mut current = None;
    for row in &table.rows {
        if current != Some(row.group) {
            if let Some(g) = current {
                lines.push(average_line(table, g, &mark));
            }
            current = Some(row.group);
            lines.push(vec![format!("[{}]", row.group.title())]);
        }
        let mut line = vec![row.category.clone()];
        for (i, cell) in row.cells.iter().enumerate() {
            line.push(match cell {
                Some(c) => mark(c.format(), row.best == Some(i)),
                None => EMPTY_CELL.to_string(),
            });
        }
        lines.push(line);
    }
    if let Some(g) = current {
        lines.push(average_line(table, g, &mark));
    }

    let columns = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for line in lines.iter().filter(|l| l.len() == columns) {
        for (w, s) in widths.iter_mut().zip(line) {
            *w = (*w).max(s.chars().count());
        }
    }
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));
    let fmt_line = |line: &[String]| {
        line.iter()
            .zip(&widths)
            .map(|(s, &w)| pad(s, w))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };

    let mut out = String::new();
    let _ = writeln!(out, "{}", fmt_line(&header));
    let total: usize = widths.iter().sum::<usize>() + 2 * (columns - 1);
    let _ = writeln!(out, "{}", "-".repeat(total));
    for line in &lines {
        if line.len() == 1 {
            let _ = writeln!(out, "{}", line[0]);
        } else {
            let _ = writeln!(out, "{}", fmt_line(line));
        }
    }
    let _ = writeln!(out, "{}", "-".repeat(total));
    let _ = writeln!(
        out,
        "cells: {}; * marks the best model per row",
        table.convention.describe()
    );
    out
}

fn average_line(
    table: &ReportTable,
    group: Group,
    mark: &dyn Fn(String, bool) -> String,
) -> Vec<String> {
    let avg = table
        .averages
        .iter()
        .find(|a| a.group == group)
        .expect("every group has an average");
    let mut line = vec!["Average".to_string()];
    for (i, cell) in avg.cells.iter().enumerate() {
        line.push(match cell {
            Some((m, s)) => mark(format_cell(*m, *s), avg.best == Some(i)),
            None => EMPTY_CELL.to_string(),
        });
    }
    line
}
