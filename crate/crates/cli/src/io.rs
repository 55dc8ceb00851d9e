//! Pulse-record ingestion and figure-data CSV emission.
//!
//! Pulse records: header `pulse,m0,m12` or `pulse,m0,m1,m2` (then
//! `m12 = m1 + m2`), integer fields, `#` comment lines. Emitted files start
//! with a `#` header block describing how they were produced.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

/// Reads `(m0, m12)` pairs from a pulse-record CSV.
pub fn read_pulses(path: &Path) -> CliResult<Vec<(u64, u64)>> {
    let file = File::open(path).map_err(|e| CliError::io(e, path))?;
    read_pulses_from(file, path)
}

pub fn read_pulses_from<R: std::io::Read>(reader: R, origin: &Path) -> CliResult<Vec<(u64, u64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let data_err = |m: String| CliError::Data(format!("{}: {m}", origin.display()));
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| data_err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let split = match headers
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .as_slice()
    {
        ["pulse", "m0", "m12"] => false,
        ["pulse", "m0", "m1", "m2"] => true,
        other => {
            return Err(data_err(format!(
                "expected header `pulse,m0,m12` or `pulse,m0,m1,m2`, found `{}`",
                other.join(",")
            )))
        }
    };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| data_err(e.to_string()))?;
        let line = rec.position().map_or(i as u64 + 2, |p| p.line());
        let field = |k: usize| -> CliResult<u64> {
            rec.get(k)
                .ok_or_else(|| data_err(format!("line {line}: missing field {}", headers[k])))?
                .parse::<u64>()
                .map_err(|e| data_err(format!("line {line}: field {}: {e}", headers[k])))
        };
        let m0 = field(1)?;
        let m12 = if split {
            field(2)?
                .checked_add(field(3)?)
                .ok_or_else(|| data_err(format!("line {line}: m1 + m2 overflows")))?
        } else {
            field(2)?
        };
        out.push((m0, m12));
    }
    if out.is_empty() {
        return Err(data_err("no pulse records".into()));
    }
    Ok(out)
}

/// Number formatting shared by every emitted file: 17 significant digits.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Key/value header block written as `# key: value` lines.
#[derive(Debug, Clone, Default)]
pub struct Header {
    lines: Vec<(String, String)>,
}

impl Header {
    pub fn new(command: &str) -> Self {
        let mut h = Header::default();
        h.push(
            "generator",
            format!("trimode {}", env!("CARGO_PKG_VERSION")),
        );
        h.push("command", command);
        h
    }

    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.lines.push((key.to_string(), value.to_string()));
        self
    }
}

/// Buffered CSV emitter; rows are written verbatim, already formatted.
pub struct CsvOut {
    path: PathBuf,
    w: BufWriter<File>,
}

impl CsvOut {
    pub fn create(dir: &Path, name: &str, header: &Header, columns: &[&str]) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(e, dir))?;
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(e, &path))?;
        let mut out = CsvOut {
            path,
            w: BufWriter::new(file),
        };
        for (k, v) in &header.lines {
            out.line(&format!("# {k}: {v}"))?;
        }
        out.line(&columns.join(","))?;
        Ok(out)
    }

    pub fn row(&mut self, fields: &[String]) -> CliResult<()> {
        self.line(&fields.join(","))
    }

    fn line(&mut self, s: &str) -> CliResult<()> {
        writeln!(self.w, "{s}").map_err(|e| CliError::io(e, &self.path))
    }

    pub fn finish(mut self) -> CliResult<PathBuf> {
        self.w.flush().map_err(|e| CliError::io(e, &self.path))?;
        Ok(self.path)
    }
}
