use std::io::{self, Write};

use crate::accel::{MemoryKind, SimReport};

use super::Cell;

pub const CSV_HEADER: &str = "label,variant,memory,latency_ms,gops,compute_cycles,memory_cycles,dram_transactions,llc_hits,llc_misses,buffer_hits,port_conflicts";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    /// `full/<variant>` or `depthwise/<variant>`.
    pub variant: String,
    pub memory: MemoryKind,
    pub report: SimReport,
}

impl ReportRow {
    pub fn new(cell: &Cell, report: SimReport) -> Self {
        let mode = if cell.spec.depthwise { "depthwise" } else { "full" };
        Self {
            label: cell.label.clone(),
            variant: format!("{mode}/{}", cell.spec.variant),
            memory: cell.memory.kind,
            report,
        }
    }

    fn fields(&self) -> [String; 12] {
        let r = &self.report;
        let c = &r.counters;
        [
            self.label.clone(),
            self.variant.clone(),
            self.memory.to_string(),
            format_sig(r.latency_ms, 6),
            format_sig(r.gops, 6),
            r.compute_cycles.to_string(),
            r.memory_cycles.to_string(),
            c.dram_transactions.to_string(),
            c.llc_hits.to_string(),
            c.llc_misses.to_string(),
            c.buffer_hits.to_string(),
            c.port_conflicts.to_string(),
        ]
    }
}

/// `v` rounded to `digits` significant digits, plain notation.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - mag).max(0) as usize;
    // log10 can land one off near powers of ten; rounding fixes the width
    let s = format!("{v:.decimals$}");
    let sig = s
        .chars()
        .filter(|c| c.is_ascii_digit())
        .skip_while(|&c| c == '0')
        .count();
    if sig > digits && decimals > 0 {
        format!("{v:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

pub fn write_csv(rows: &[ReportRow], out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.fields().join(","))?;
    }
    Ok(())
}

pub fn write_table(rows: &[ReportRow], out: &mut impl Write) -> io::Result<()> {
    let header: Vec<String> = CSV_HEADER.split(',').map(str::to_string).collect();
    let body: Vec<[String; 12]> = rows.iter().map(|r| r.fields()).collect();
    let mut width: Vec<usize> = header.iter().map(String::len).collect();
    for f in &body {
        for (w, s) in width.iter_mut().zip(f) {
            *w = (*w).max(s.len());
        }
    }
    let line = |cells: &[String]| -> String {
        cells
            .iter()
            .zip(&width)
            .enumerate()
            .map(|(i, (s, w))| if i < 3 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    writeln!(out, "{}", line(&header))?;
    for f in &body {
        writeln!(out, "{}", line(f))?;
    }
    Ok(())
}
