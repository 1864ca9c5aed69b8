//! Per-step training metrics as CSV with a fixed column order.

use std::io::{self, Write};

pub const CSV_HEADER: &str = "step,mode,loss,mean_log_r,mean_log_pf,log_z_mean,env_calls,wall_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub mode: String,
    pub loss: f64,
    pub mean_log_r: f64,
    pub mean_log_pf: f64,
    pub log_z_mean: f64,
    pub env_calls: u64,
    pub wall_ms: u64,
}

impl MetricsRow {
    /// Floats use Rust's shortest round-trip formatting, so identical runs
    /// produce identical bytes.
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{:?},{:?},{:?},{:?},{},{}",
            self.step,
            self.mode,
            self.loss,
            self.mean_log_r,
            self.mean_log_pf,
            self.log_z_mean,
            self.env_calls,
            self.wall_ms
        )
    }
}

pub struct MetricsWriter<W: Write> {
    out: W,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{CSV_HEADER}")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, row: &MetricsRow) -> io::Result<()> {
        writeln!(self.out, "{}", row.to_csv_line())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_row() {
        let mut w = MetricsWriter::new(Vec::new()).unwrap();
        w.write(&MetricsRow {
            step: 3,
            mode: "gfn".into(),
            loss: 0.5,
            mean_log_r: -15.0,
            mean_log_pf: -3.25,
            log_z_mean: 0.0,
            env_calls: 12,
            wall_ms: 0,
        })
        .unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\n3,gfn,0.5,-15.0,-3.25,0.0,12,0\n"));
    }
}
