use std::fmt::Write as _;
use std::io::Write;

use super::grid::TrialReport;
use crate::error::Result;

/// One JSON object per line, in grid order.
pub fn write_jsonl<W: Write>(out: &mut W, reports: &[TrialReport]) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut *out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(text: &str) -> Result<Vec<TrialReport>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| std::io::Error::from(e).into()))
        .collect()
}

/// Aligned plain-text table, one row per cell.
pub fn render_table(reports: &[TrialReport]) -> String {
    let headers = ["cell", "trials", "ok", "recall", "rougeL", "tokens", "h2d_bytes", "d2h_bytes", "peak_dev", "collisions", "failed"];
    let rows: Vec<[String; 11]> = reports
        .iter()
        .map(|r| {
            [
                r.cell.clone(),
                r.trials.to_string(),
                r.successes.to_string(),
                format!("{:.2}", r.recall_rate),
                r.rouge_l.map_or("-".into(), |v| format!("{v:.2}")),
                r.context_tokens.to_string(),
                r.ledger.bytes_host_to_device.to_string(),
                r.ledger.bytes_device_to_host.to_string(),
                r.ledger.peak_device_bytes.to_string(),
                r.collisions.to_string(),
                r.failures.len().to_string(),
            ]
        })
        .collect();

    let mut widths = headers.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }

    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        for (i, (c, w)) in cells.iter().zip(widths).enumerate() {
            if i == 0 {
                let _ = write!(out, "{c:<w$}");
            } else {
                let _ = write!(out, "  {c:>w$}");
            }
        }
        out.push('\n');
    };
    line(&headers);
    for row in &rows {
        line(&row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
