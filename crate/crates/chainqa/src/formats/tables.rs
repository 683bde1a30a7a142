//! Tab-separated output tables.

use std::collections::BTreeMap;

use chainqa_core::analyze::{CurvePoint, Histogram};
use chainqa_core::chain::Difficulty;
use chainqa_core::eval::AccuracyTable;
use chainqa_core::render::RenderedQuestion;

pub const CURVE_HEADER: &str = "x_start\tcount\taccuracy";
pub const HISTOGRAM_HEADER: &str = "bin_start\tbin_end\tcount";
pub const ACCURACY_HEADER: &str = "depth\tdifficulty\tmode\tn\taccuracy";
pub const STATS_HEADER: &str = "difficulty\tdepth\tcount";

pub fn curve_tsv(points: &[CurvePoint]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for p in points {
        let acc = p.accuracy.map(|a| format!("{a:.4}")).unwrap_or_default();
        out.push_str(&format!("{:.4}\t{}\t{}\n", p.x_start, p.count, acc));
    }
    out
}

pub fn parse_curve_tsv(text: &str) -> Result<Vec<CurvePoint>, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CURVE_HEADER => {}
        _ => return Err("line 1: expected curve header".into()),
    }
    lines
        .map(|(i, l)| {
            let bad = |what: &str| format!("line {}: bad {what}", i + 1);
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 3 {
                return Err(format!("line {}: expected 3 fields", i + 1));
            }
            Ok(CurvePoint {
                x_start: f[0].parse().map_err(|_| bad("x_start"))?,
                count: f[1].parse().map_err(|_| bad("count"))?,
                accuracy: if f[2].is_empty() { None } else { Some(f[2].parse().map_err(|_| bad("accuracy"))?) },
            })
        })
        .collect()
}

pub fn histogram_tsv(h: &Histogram) -> String {
    let mut out = format!("{HISTOGRAM_HEADER}\n");
    for (i, c) in h.counts.iter().enumerate() {
        out.push_str(&format!("{:.4}\t{:.4}\t{}\n", h.bin_start(i), h.bin_start(i + 1), c));
    }
    out
}

pub fn accuracy_tsv(table: &AccuracyTable) -> String {
    let mut out = format!("{ACCURACY_HEADER}\n");
    for r in &table.rows {
        out.push_str(&format!("{}\t{}\t{}\t{}\t{:.4}\n", r.depth, r.difficulty, r.mode, r.n, r.accuracy));
    }
    out
}

/// Question counts per (difficulty, depth): easy before hard, deepest first.
pub fn bucket_counts(questions: &[RenderedQuestion]) -> Vec<(Difficulty, usize, usize)> {
    let mut counts: BTreeMap<(Difficulty, std::cmp::Reverse<usize>), usize> = BTreeMap::new();
    for q in questions {
        *counts.entry((q.difficulty, std::cmp::Reverse(q.depth))).or_default() += 1;
    }
    counts.into_iter().map(|((d, std::cmp::Reverse(depth)), n)| (d, depth, n)).collect()
}

pub fn stats_tsv(rows: &[(Difficulty, usize, usize)]) -> String {
    let mut out = format!("{STATS_HEADER}\n");
    for (d, depth, n) in rows {
        out.push_str(&format!("{d}\t{depth}\t{n}\n"));
    }
    out
}
