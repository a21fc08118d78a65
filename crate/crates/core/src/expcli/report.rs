use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::crosslingual::CrossLingualMode;
use super::grid::CellReport;
use super::{io_err, ExpError};
use crate::scheduler::Scheme;
use crate::stats::{aggregate, relative_improvement, significant, AggregateCell, ComparisonMark, Metric, SeedRun, Side};

/// Metrics written to the aggregate CSV, in column order.
const CSV_METRICS: [Metric; 5] = [
    Metric::IntentAccuracy,
    Metric::EntityPrecision,
    Metric::EntityRecall,
    Metric::EntityF1,
    Metric::SluF1,
];

/// One line of the aggregate CSV: a (group, mode, scheme, level, metric)
/// cell over seeds. `half_width` is empty for single-seed cells;
/// `significant`/`winner` are set only on direct/curriculum pairs that both
/// have intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: String,
    pub mode: Option<CrossLingualMode>,
    pub scheme: Scheme,
    pub speech_level: f64,
    pub metric: Metric,
    pub mean: f64,
    pub half_width: Option<f64>,
    pub n: usize,
    pub significant: Option<bool>,
    pub winner: Option<Scheme>,
}

impl AggregateRow {
    pub fn cell(&self) -> AggregateCell {
        AggregateCell {
            metric: self.metric,
            mean: self.mean,
            half_width: self.half_width.unwrap_or(0.0),
            n: self.n,
        }
    }
}

fn mode_rank(m: Option<CrossLingualMode>) -> usize {
    m.map_or(0, |m| 1 + CrossLingualMode::ALL.iter().position(|x| *x == m).unwrap())
}

fn scheme_rank(s: Scheme) -> usize {
    Scheme::ALL.iter().position(|x| *x == s).unwrap()
}

fn row_order(a: &AggregateRow, b: &AggregateRow) -> Ordering {
    a.group
        .cmp(&b.group)
        .then(mode_rank(a.mode).cmp(&mode_rank(b.mode)))
        .then(a.speech_level.total_cmp(&b.speech_level))
        .then(scheme_rank(a.scheme).cmp(&scheme_rank(b.scheme)))
        .then(a.metric.cmp(&b.metric))
}

type GroupKey = (String, usize, Option<CrossLingualMode>, u64, usize, Scheme);

/// Collapse per-seed cell reports into aggregate rows, sorted.
pub(crate) fn aggregate_rows(reports: &[CellReport]) -> Result<Vec<AggregateRow>, ExpError> {
    let mut groups: BTreeMap<GroupKey, (f64, Vec<SeedRun>)> = BTreeMap::new();
    for cell in reports {
        for (group, report) in &cell.reports {
            let k = &cell.key;
            let key = (
                group.clone(),
                mode_rank(k.mode),
                k.mode,
                k.speech_level.to_bits(),
                scheme_rank(k.scheme),
                k.scheme,
            );
            groups
                .entry(key)
                .or_insert_with(|| (k.speech_level, Vec::new()))
                .1
                .push(SeedRun {
                    seed: k.seed,
                    report: *report,
                });
        }
    }
    let mut rows = Vec::new();
    for ((group, _, mode, _, _, scheme), (level, mut runs)) in groups {
        runs.sort_by_key(|r| r.seed);
        for metric in CSV_METRICS {
            let (mean, half_width) = if runs.len() >= 2 {
                let c = aggregate(&runs, metric)?;
                (c.mean, Some(c.half_width))
            } else {
                (metric.of(&runs[0].report), None)
            };
            rows.push(AggregateRow {
                group: group.clone(),
                mode,
                scheme,
                speech_level: level,
                metric,
                mean,
                half_width,
                n: runs.len(),
                significant: None,
                winner: None,
            });
        }
    }
    mark_pairs(&mut rows)?;
    rows.sort_by(row_order);
    Ok(rows)
}

/// Fill `significant`/`winner` on direct/curriculum pairs.
fn mark_pairs(rows: &mut [AggregateRow]) -> Result<(), ExpError> {
    let find = |rows: &[AggregateRow], r: &AggregateRow, scheme: Scheme| {
        rows.iter().position(|o| {
            o.group == r.group
                && o.mode == r.mode
                && o.speech_level == r.speech_level
                && o.metric == r.metric
                && o.scheme == scheme
        })
    };
    for i in 0..rows.len() {
        if rows[i].scheme != Scheme::Direct || rows[i].half_width.is_none() {
            continue;
        }
        let Some(j) = find(rows, &rows[i], Scheme::Curriculum) else { continue };
        if rows[j].half_width.is_none() {
            continue;
        }
        let mark = significant(&rows[i].cell(), &rows[j].cell())?;
        let winner = mark.winner.map(|s| match s {
            Side::A => Scheme::Direct,
            Side::B => Scheme::Curriculum,
        });
        for k in [i, j] {
            rows[k].significant = Some(mark.significant);
            rows[k].winner = winner;
        }
    }
    Ok(())
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<(), ExpError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>, ExpError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<AggregateRow>, _>>()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStyle {
    Monolingual,
    ZeroshotRelative,
    Fewshot,
}

impl ReportStyle {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "monolingual" => Some(Self::Monolingual),
            "zeroshot_relative" => Some(Self::ZeroshotRelative),
            "fewshot" => Some(Self::Fewshot),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub speech_level: f64,
    pub scheme: Scheme,
    /// One entry per table metric; `None` when the cell was not run.
    pub cells: Vec<Option<AggregateCell>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelMark {
    pub speech_level: f64,
    pub metric: Metric,
    pub mark: ComparisonMark,
    pub winner: Option<Scheme>,
}

/// A monolingual results table for one group: rows keyed by
/// (speech level, scheme), one mark per direct/curriculum pair and metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub group: String,
    pub mode: Option<CrossLingualMode>,
    pub metrics: Vec<Metric>,
    pub rows: Vec<ReportRow>,
    pub marks: Vec<LevelMark>,
}

impl ReportTable {
    /// One table per (group, mode) present in `rows`. Marks are recomputed
    /// from means and half-widths; single-seed pairs are never significant.
    pub fn from_rows(rows: &[AggregateRow]) -> Result<Vec<ReportTable>, ExpError> {
        let metrics = Metric::REPORTED.to_vec();
        let mut sorted = rows.to_vec();
        sorted.sort_by(row_order);
        let mut tables: Vec<ReportTable> = Vec::new();
        for r in sorted.iter().filter(|r| metrics.contains(&r.metric)) {
            let t = match tables.iter_mut().find(|t| t.group == r.group && t.mode == r.mode) {
                Some(t) => t,
                None => {
                    tables.push(ReportTable {
                        group: r.group.clone(),
                        mode: r.mode,
                        metrics: metrics.clone(),
                        rows: Vec::new(),
                        marks: Vec::new(),
                    });
                    tables.last_mut().unwrap()
                }
            };
            let row = match t
                .rows
                .iter_mut()
                .find(|x| x.speech_level == r.speech_level && x.scheme == r.scheme)
            {
                Some(x) => x,
                None => {
                    t.rows.push(ReportRow {
                        speech_level: r.speech_level,
                        scheme: r.scheme,
                        cells: vec![None; metrics.len()],
                    });
                    t.rows.last_mut().unwrap()
                }
            };
            let idx = metrics.iter().position(|m| *m == r.metric).unwrap();
            row.cells[idx] = Some(r.cell());
        }
        for t in &mut tables {
            let mut levels: Vec<f64> = t.rows.iter().map(|r| r.speech_level).collect();
            levels.dedup();
            for level in levels {
                let get = |s: Scheme| t.rows.iter().find(|r| r.speech_level == level && r.scheme == s);
                let (Some(d), Some(c)) = (get(Scheme::Direct), get(Scheme::Curriculum)) else { continue };
                let mut marks = Vec::new();
                for (i, &metric) in t.metrics.iter().enumerate() {
                    let mark = match (d.cells[i], c.cells[i]) {
                        (Some(a), Some(b)) if a.n >= 2 && b.n >= 2 => significant(&a, &b)?,
                        _ => ComparisonMark {
                            winner: None,
                            significant: false,
                        },
                    };
                    marks.push(LevelMark {
                        speech_level: level,
                        metric,
                        mark,
                        winner: mark.winner.map(|s| match s {
                            Side::A => Scheme::Direct,
                            Side::B => Scheme::Curriculum,
                        }),
                    });
                }
                t.marks.extend(marks);
            }
        }
        Ok(tables)
    }

    pub fn mark(&self, speech_level: f64, metric: Metric) -> Option<&LevelMark> {
        self.marks
            .iter()
            .find(|m| m.speech_level == speech_level && m.metric == metric)
    }

    /// Whether `scheme`'s cell at this level carries a dagger.
    pub fn dagger(&self, speech_level: f64, scheme: Scheme, metric: Metric) -> bool {
        self.mark(speech_level, metric)
            .is_some_and(|m| m.winner == Some(scheme))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedReport {
    pub markdown: String,
    pub csv: String,
}

pub(crate) fn level_label(p: f64) -> String {
    let pct = p * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}%", pct.round() as i64)
    } else {
        format!("{pct:.1}%")
    }
}

fn scheme_label(s: Scheme) -> &'static str {
    match s {
        Scheme::TextOnly => "Text",
        Scheme::Direct => "Direct",
        Scheme::Curriculum => "Curr.",
    }
}

fn fmt_cell(c: &AggregateCell) -> String {
    if c.n >= 2 {
        format!("{:.4} ± {:.4}", c.mean, c.half_width)
    } else {
        format!("{:.4}", c.mean)
    }
}

fn csv_string(records: Vec<Vec<String>>) -> Result<String, ExpError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| ExpError::Other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Render aggregate rows as Markdown and CSV tables.
pub fn render_report(rows: &[AggregateRow], style: ReportStyle) -> Result<RenderedReport, ExpError> {
    match style {
        ReportStyle::Monolingual => render_monolingual(rows),
        ReportStyle::ZeroshotRelative => render_relative(rows),
        ReportStyle::Fewshot => render_fewshot(rows),
    }
}

fn render_monolingual(rows: &[AggregateRow]) -> Result<RenderedReport, ExpError> {
    let tables = ReportTable::from_rows(rows)?;
    let mut md = String::new();
    let mut csv_rows = vec![vec![
        "group", "mode", "speech_level", "scheme", "metric", "mean", "half_width", "n", "dagger",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>()];
    for t in &tables {
        match t.mode {
            Some(m) => writeln!(md, "## {} ({})\n", t.group, m).unwrap(),
            None => writeln!(md, "## {}\n", t.group).unwrap(),
        }
        let titles: Vec<&str> = t.metrics.iter().map(|m| m.title()).collect();
        writeln!(md, "| Speech | Scheme | {} |", titles.join(" | ")).unwrap();
        writeln!(md, "|---|---|{}", "---|".repeat(titles.len())).unwrap();
        for r in &t.rows {
            let cells: Vec<String> = r
                .cells
                .iter()
                .zip(&t.metrics)
                .map(|(c, &metric)| match c {
                    Some(c) => {
                        let dagger = if t.dagger(r.speech_level, r.scheme, metric) { "†" } else { "" };
                        format!("{}{dagger}", fmt_cell(c))
                    }
                    None => "-".into(),
                })
                .collect();
            writeln!(
                md,
                "| {} | {} | {} |",
                level_label(r.speech_level),
                scheme_label(r.scheme),
                cells.join(" | ")
            )
            .unwrap();
            for (c, &metric) in r.cells.iter().zip(&t.metrics) {
                if let Some(c) = c {
                    csv_rows.push(vec![
                        t.group.clone(),
                        t.mode.map(|m| m.to_string()).unwrap_or_default(),
                        r.speech_level.to_string(),
                        r.scheme.as_str().into(),
                        metric.as_str().into(),
                        c.mean.to_string(),
                        opt((c.n >= 2).then_some(c.half_width)),
                        c.n.to_string(),
                        t.dagger(r.speech_level, r.scheme, metric).to_string(),
                    ]);
                }
            }
        }
        md.push('\n');
    }
    if !md.is_empty() {
        md.push_str("Values are mean ± 95% CI half-width over seeds; † marks the significant winner of direct vs curriculum (non-overlapping intervals).\n");
    }
    Ok(RenderedReport {
        markdown: md,
        csv: csv_string(csv_rows)?,
    })
}

fn groups_of(rows: &[&AggregateRow]) -> Vec<String> {
    let mut g: Vec<String> = rows.iter().map(|r| r.group.clone()).collect();
    g.sort();
    g.dedup();
    g
}

fn render_relative(rows: &[AggregateRow]) -> Result<RenderedReport, ExpError> {
    let slu: Vec<&AggregateRow> = rows.iter().filter(|r| r.metric == Metric::SluF1).collect();
    let groups = groups_of(&slu);
    if groups.is_empty() {
        return Err(ExpError::MissingBaseline("no SLU-F1 rows".into()));
    }
    let mut baselines = BTreeMap::new();
    for g in &groups {
        let base = slu
            .iter()
            .find(|r| &r.group == g && r.scheme == Scheme::TextOnly && r.speech_level == 0.0)
            .ok_or_else(|| ExpError::MissingBaseline(format!("text_only at 0% for {g}")))?;
        baselines.insert(g.clone(), base.mean);
    }
    let mut variants: Vec<(f64, Scheme)> = slu
        .iter()
        .filter(|r| !(r.scheme == Scheme::TextOnly && r.speech_level == 0.0))
        .map(|r| (r.speech_level, r.scheme))
        .collect();
    variants.sort_by(|a, b| a.0.total_cmp(&b.0).then(scheme_rank(a.1).cmp(&scheme_rank(b.1))));
    variants.dedup();

    let mut md = String::from("## Relative SLU-F1 improvement over text-only\n\n");
    writeln!(md, "| Speech | Scheme | {} | Avg |", groups.join(" | ")).unwrap();
    writeln!(md, "|---|---|{}---|", "---|".repeat(groups.len())).unwrap();
    let mut csv_rows = vec![["group", "speech_level", "scheme", "baseline", "mean", "relative_improvement"]
        .map(String::from)
        .to_vec()];
    for (level, scheme) in variants {
        let mut cells = Vec::new();
        let mut vals = Vec::new();
        for g in &groups {
            let base = baselines[g];
            match slu
                .iter()
                .find(|r| &r.group == g && r.speech_level == level && r.scheme == scheme)
            {
                Some(r) => {
                    let rel = relative_improvement(base, r.mean)?;
                    vals.push(rel);
                    cells.push(format!("{:+.2}%", rel * 100.0));
                    csv_rows.push(vec![
                        g.clone(),
                        level.to_string(),
                        scheme.as_str().into(),
                        base.to_string(),
                        r.mean.to_string(),
                        rel.to_string(),
                    ]);
                }
                None => cells.push("-".into()),
            }
        }
        let avg = if vals.is_empty() {
            "-".to_string()
        } else {
            format!("{:+.2}%", 100.0 * vals.iter().sum::<f64>() / vals.len() as f64)
        };
        writeln!(
            md,
            "| {} | {} | {} | {avg} |",
            level_label(level),
            scheme_label(scheme),
            cells.join(" | ")
        )
        .unwrap();
    }
    Ok(RenderedReport {
        markdown: md,
        csv: csv_string(csv_rows)?,
    })
}

fn block_rank(m: CrossLingualMode) -> usize {
    ["T", "T+S", "T+M", "T+S+M", "-"]
        .iter()
        .position(|l| *l == m.target_label())
        .unwrap()
}

fn render_fewshot(rows: &[AggregateRow]) -> Result<RenderedReport, ExpError> {
    let slu: Vec<&AggregateRow> = rows
        .iter()
        .filter(|r| r.metric == Metric::SluF1 && r.mode.is_some())
        .collect();
    let groups = groups_of(&slu);
    let mut keys: Vec<(CrossLingualMode, f64, Scheme)> = slu
        .iter()
        .map(|r| (r.mode.unwrap(), r.speech_level, r.scheme))
        .collect();
    keys.sort_by(|a, b| {
        block_rank(a.0)
            .cmp(&block_rank(b.0))
            .then(a.0.uses_source().cmp(&b.0.uses_source()))
            .then(a.1.total_cmp(&b.1))
            .then(scheme_rank(a.2).cmp(&scheme_rank(b.2)))
    });
    keys.dedup();

    let mut md = String::from("## Few-shot SLU-F1\n\n");
    writeln!(md, "| Source speech | Scheme | Target | {} |", groups.join(" | ")).unwrap();
    writeln!(md, "|---|---|---|{}", "---|".repeat(groups.len())).unwrap();
    let mut csv_rows = vec![["mode", "speech_level", "scheme", "group", "mean", "half_width", "n"]
        .map(String::from)
        .to_vec()];
    let mut last_block = None;
    for (mode, level, scheme) in keys {
        if last_block.is_some_and(|b| b != block_rank(mode)) {
            writeln!(md, "| | | |{}", " |".repeat(groups.len())).unwrap();
        }
        last_block = Some(block_rank(mode));
        let cells: Vec<String> = groups
            .iter()
            .map(|g| {
                match slu
                    .iter()
                    .find(|r| &r.group == g && r.mode == Some(mode) && r.speech_level == level && r.scheme == scheme)
                {
                    Some(r) => {
                        csv_rows.push(vec![
                            mode.to_string(),
                            level.to_string(),
                            scheme.as_str().into(),
                            g.clone(),
                            r.mean.to_string(),
                            opt(r.half_width),
                            r.n.to_string(),
                        ]);
                        fmt_cell(&r.cell())
                    }
                    None => "-".into(),
                }
            })
            .collect();
        let speech = if mode.uses_source() {
            level_label(level)
        } else {
            "No Source".to_string()
        };
        writeln!(
            md,
            "| {speech} | {} | {} | {} |",
            scheme_label(scheme),
            mode.target_label(),
            cells.join(" | ")
        )
        .unwrap();
    }
    Ok(RenderedReport {
        markdown: md,
        csv: csv_string(csv_rows)?,
    })
}
