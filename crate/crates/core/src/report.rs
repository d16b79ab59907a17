//! Attack reports, vulnerability heatmaps, learning curves and their files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-(node, time) counts, row `node`, column `time`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Heatmap {
    pub rows: Vec<Vec<u64>>,
}

impl Heatmap {
    pub fn zeros(n_s: usize, t: usize) -> Self {
        Heatmap { rows: vec![vec![0; t]; n_s] }
    }

    pub fn n_s(&self) -> usize {
        self.rows.len()
    }

    pub fn t(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn add(&mut self, node: usize, time: usize, count: u64) {
        self.rows[node][time] += count;
    }

    pub fn get(&self, node: usize, time: usize) -> u64 {
        self.rows[node][time]
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().flatten().sum()
    }

    pub fn max(&self) -> u64 {
        self.rows.iter().flatten().copied().max().unwrap_or(0)
    }

    /// Largest cell, lowest node-major index on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (i, row) in self.rows.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c > self.rows[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        best
    }

    fn same_dims(&self, other: &Heatmap) -> bool {
        self.n_s() == other.n_s() && self.t() == other.t()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub pool_size: usize,
    pub successes: usize,
    pub asr: f64,
    /// Mean flips over successful attacks; `None` without successes.
    pub avg_flips: Option<f64>,
    pub heatmap: Heatmap,
}

impl AttackReport {
    /// Builds a report from per-sample outcomes: the flipped action indices
    /// of each successful attack, `None` for a failure.
    pub fn from_outcomes<'a>(
        n_s: usize,
        t: usize,
        outcomes: impl IntoIterator<Item = Option<&'a [usize]>>,
    ) -> Result<Self> {
        let mut heatmap = Heatmap::zeros(n_s, t);
        let (mut pool, mut successes, mut flips) = (0usize, 0usize, 0usize);
        for o in outcomes {
            pool += 1;
            if let Some(actions) = o {
                successes += 1;
                flips += actions.len();
                for &a in actions {
                    if a >= n_s * t {
                        return Err(Error::Contract(format!("action {a} outside the {n_s}x{t} grid")));
                    }
                    heatmap.add(a / t, a % t, 1);
                }
            }
        }
        if pool == 0 {
            return Err(Error::Contract("attack pool is empty".into()));
        }
        Ok(AttackReport {
            pool_size: pool,
            successes,
            asr: successes as f64 / pool as f64,
            avg_flips: (successes > 0).then(|| flips as f64 / successes as f64),
            heatmap,
        })
    }

    /// Checks the report's internal consistency for episodes capped at `max_steps`.
    pub fn validate(&self, max_steps: usize) -> Result<()> {
        let total = self.heatmap.total();
        let ok = self.pool_size > 0
            && self.successes <= self.pool_size
            && self.asr == self.successes as f64 / self.pool_size as f64
            && total >= self.successes as u64
            && total <= (self.successes * max_steps) as u64;
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "inconsistent report: pool {}, successes {}, asr {}, heatmap total {total}",
                self.pool_size, self.successes, self.asr
            )))
        }
    }
}

/// One epoch of a training run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub loss: f64,
    pub test_accuracy: f64,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn heatmap_csv(h: &Heatmap) -> String {
    let mut out = String::new();
    for row in &h.rows {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_heatmap_csv(text: &str) -> Result<Heatmap> {
    let rows = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|c| c.trim().parse::<u64>().map_err(|_| Error::parse(i + 1, format!("bad count {c:?}"))))
                .collect::<Result<Vec<u64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(w) = rows.first().map(Vec::len) {
        if let Some(bad) = rows.iter().position(|r| r.len() != w) {
            return Err(Error::parse(bad + 1, "ragged heatmap row"));
        }
    }
    Ok(Heatmap { rows })
}

/// Grid of labeled cells, shaded linearly from white (0) to black (max count).
pub fn heatmap_svg(h: &Heatmap) -> String {
    const CELL: usize = 60;
    const LEFT: usize = 70;
    const TOP: usize = 50;
    let (n_s, t) = (h.n_s(), h.t());
    let width = LEFT + t * CELL + 20;
    let height = TOP + n_s * CELL + 20;
    let max = h.max();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="16" text-anchor="middle" font-size="14">Time</text>"#,
        LEFT + t * CELL / 2
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{y}" text-anchor="middle" font-size="14" transform="rotate(-90 16 {y})">Node</text>"#,
        y = TOP + n_s * CELL / 2
    );
    for j in 0..t {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{j}</text>"#,
            LEFT + j * CELL + CELL / 2,
            TOP - 8
        );
    }
    for (i, row) in h.rows.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="12">{i}</text>"#,
            LEFT - 8,
            TOP + i * CELL + CELL / 2 + 4
        );
        for (j, &c) in row.iter().enumerate() {
            let shade = if max == 0 { 255 } else { 255 - (255 * c / max) as u8 };
            let ink = if shade < 128 { "#ffffff" } else { "#000000" };
            let (x, y) = (LEFT + j * CELL, TOP + i * CELL);
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},{shade})" stroke="#888888"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" font-size="12" fill="{ink}">{c}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 4
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_heatmap(report: &AttackReport, csv_path: &Path, svg_path: &Path) -> Result<()> {
    write_file(csv_path, &heatmap_csv(&report.heatmap))?;
    write_file(svg_path, &heatmap_svg(&report.heatmap))
}

pub fn curves_csv(rows: &[CurveRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Contract("no curve rows to write".into()));
    }
    let mut out = String::from("epoch,loss,test_accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.epoch, r.loss, r.test_accuracy);
    }
    Ok(out)
}

pub fn parse_curves_csv(text: &str) -> Result<Vec<CurveRow>> {
    let mut lines = text.lines();
    if lines.next() != Some("epoch,loss,test_accuracy") {
        return Err(Error::parse(1, "expected header epoch,loss,test_accuracy"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::parse(i + 2, format!("bad curve row {line:?}"));
            let mut f = line.split(',');
            let row = CurveRow {
                epoch: f.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?,
                loss: f.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?,
                test_accuracy: f.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?,
            };
            if f.next().is_some() {
                return Err(bad());
            }
            Ok(row)
        })
        .collect()
}

pub fn emit_curves(rows: &[CurveRow], csv_path: &Path) -> Result<()> {
    write_file(csv_path, &curves_csv(rows)?)
}

pub fn read_curves(csv_path: &Path) -> Result<Vec<CurveRow>> {
    parse_curves_csv(&read_file(csv_path)?)
}

pub fn read_heatmap(csv_path: &Path) -> Result<Heatmap> {
    parse_heatmap_csv(&read_file(csv_path)?)
}

/// Before/after comparison of two attack reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub asr_before: f64,
    pub asr_after: f64,
    /// `asr_after / asr_before`; `None` when the first ASR is zero.
    pub ratio: Option<f64>,
    pub argmax_before: [usize; 2],
    pub argmax_after: [usize; 2],
    /// `after - before`, per cell.
    pub heatmap_delta: Vec<Vec<i64>>,
}

pub fn compare_reports(before: &AttackReport, after: &AttackReport) -> Result<DeltaSummary> {
    if !before.heatmap.same_dims(&after.heatmap) {
        return Err(Error::Dimension(format!(
            "heatmaps {}x{} and {}x{} differ",
            before.heatmap.n_s(),
            before.heatmap.t(),
            after.heatmap.n_s(),
            after.heatmap.t()
        )));
    }
    let heatmap_delta = before
        .heatmap
        .rows
        .iter()
        .zip(&after.heatmap.rows)
        .map(|(b, a)| b.iter().zip(a).map(|(&x, &y)| y as i64 - x as i64).collect())
        .collect();
    let (bn, bt) = before.heatmap.argmax();
    let (an, at) = after.heatmap.argmax();
    Ok(DeltaSummary {
        asr_before: before.asr,
        asr_after: after.asr,
        ratio: (before.asr > 0.0).then(|| after.asr / before.asr),
        argmax_before: [bn, bt],
        argmax_after: [an, at],
        heatmap_delta,
    })
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Contract(e.to_string()))?;
    write_file(path, &(text + "\n"))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_file(path)?).map_err(|e| Error::parse(e.line(), e.to_string()))
}
