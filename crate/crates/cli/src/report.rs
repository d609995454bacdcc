//! Output documents shared by every subcommand.

use std::io::{self, Write};

use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    /// Human-readable report.
    #[default]
    Text,
    /// `key=value` lines, rationals as `p/q`.
    Machine,
    /// Comma-separated table.
    Csv,
}

/// A report carries a human rendering, ordered key-value fields and an
/// optional table that replaces the fields in CSV output.
#[derive(Debug, Default)]
pub struct Report {
    text: String,
    fields: Vec<(String, String)>,
    table: Option<(Vec<String>, Vec<Vec<String>>)>,
}

impl Report {
    pub fn line(&mut self, s: impl AsRef<str>) {
        self.text.push_str(s.as_ref());
        self.text.push('\n');
    }

    pub fn field(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string().replace('\n', " ");
        self.fields.push((key.to_string(), value));
    }

    pub fn table(&mut self, header: &[&str], rows: Vec<Vec<String>>) {
        self.table = Some((header.iter().map(|h| h.to_string()).collect(), rows));
    }

    pub fn write(&self, format: Format, out: &mut impl Write) -> io::Result<()> {
        match format {
            Format::Text => out.write_all(self.text.as_bytes()),
            Format::Machine => {
                for (k, v) in &self.fields {
                    writeln!(out, "{k}={v}")?;
                }
                Ok(())
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                match &self.table {
                    Some((header, rows)) => {
                        w.write_record(header)?;
                        for r in rows {
                            w.write_record(r)?;
                        }
                    }
                    None => {
                        w.write_record(["key", "value"])?;
                        for (k, v) in &self.fields {
                            w.write_record([k, v])?;
                        }
                    }
                }
                w.flush()
            }
        }
    }
}

pub fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// 1-based, comma-separated stage list.
pub fn stage_list<'a>(stages: impl IntoIterator<Item = &'a usize>) -> String {
    let v: Vec<String> = stages.into_iter().map(|s| (s + 1).to_string()).collect();
    if v.is_empty() {
        "none".into()
    } else {
        v.join(",")
    }
}
