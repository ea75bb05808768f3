//! Plain-text output helpers shared by the pipelines.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

/// CSV table with 17 significant digits per value.
pub fn csv_table<I>(header: &[&str], rows: I) -> String
where
    I: IntoIterator,
    I::Item: AsRef<[f64]>,
{
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let mut first = true;
        for v in row.as_ref() {
            if !first {
                s.push(',');
            }
            first = false;
            let _ = write!(s, "{v:.16e}");
        }
        s.push('\n');
    }
    s
}

pub fn write_file(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    if let Some(dir) = path.as_ref().parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_round_trip() {
        let v = [0.1 + 0.2, -1.0 / 3.0, 6.02214076e23];
        let s = csv_table(&["a", "b", "c"], [v]);
        let line = s.lines().nth(1).unwrap();
        let back: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
        assert_eq!(back, v);
    }
}
