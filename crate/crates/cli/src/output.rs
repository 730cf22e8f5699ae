//! Output formats: aligned human tables, self-describing key=value
//! record streams, and delimited values for external plotting.

use clap::ValueEnum;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    /// Aligned key: value blocks.
    Human,
    /// One self-describing key=value record per line.
    Records,
    /// Comma-separated values with a header row.
    Csv,
}

/// Serializes a float with 17 significant digits, enough for an exact
/// f64 round trip through the record stream.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct RecordWriter {
    format: OutputFormat,
    header: Option<Vec<String>>,
    first: bool,
}

impl RecordWriter {
    pub fn new(format: OutputFormat) -> Self {
        RecordWriter {
            format,
            header: None,
            first: true,
        }
    }

    pub fn record(&mut self, fields: &[(String, String)]) {
        match self.format {
            OutputFormat::Records => {
                let line: Vec<String> = fields
                    .iter()
                    .map(|(k, v)| {
                        if v.contains(' ') || v.contains('"') {
                            format!("{k}={v:?}")
                        } else {
                            format!("{k}={v}")
                        }
                    })
                    .collect();
                println!("{}", line.join(" "));
            }
            OutputFormat::Csv => {
                let keys: Vec<String> = fields.iter().map(|(k, _)| k.clone()).collect();
                if self.header.as_ref() != Some(&keys) {
                    println!("{}", keys.join(","));
                    self.header = Some(keys);
                }
                let quote = |v: &str| {
                    if v.contains(',') || v.contains('"') {
                        format!("\"{}\"", v.replace('"', "\"\""))
                    } else {
                        v.to_string()
                    }
                };
                let row: Vec<String> = fields.iter().map(|(_, v)| quote(v)).collect();
                println!("{}", row.join(","));
            }
            OutputFormat::Human => {
                if !self.first {
                    println!();
                }
                let width = fields.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
                for (k, v) in fields {
                    println!("{k:width$}  {v}");
                }
            }
        }
        self.first = false;
    }

    pub fn finish(&mut self) {}
}
