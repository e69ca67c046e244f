//! CSV emission: comma separation, `.` decimal point, 17 significant
//! digits, LF endings. Every file starts with `#` comment lines recording
//! the full configuration, then the header row.

use std::io::Write;
use std::path::Path;

use crate::CliError;

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Either a file or stdout.
pub fn open_sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let file = std::fs::File::create(p)
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?;
            Ok(Box::new(std::io::BufWriter::new(file)))
        }
        None => Ok(Box::new(std::io::BufWriter::new(std::io::stdout()))),
    }
}

pub fn write_table(
    sink: &mut dyn Write,
    comments: &[String],
    header: &[&str],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<(), CliError> {
    for c in comments {
        writeln!(sink, "# {c}")?;
    }
    writeln!(sink, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        writeln!(sink, "{}", line.join(","))?;
    }
    sink.flush()?;
    Ok(())
}
