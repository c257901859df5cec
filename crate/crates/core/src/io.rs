//! File helpers: JSON and CSV for matrices, laws and symbol sequences.
//! Every writer goes through a temporary file and a rename.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::markov::{ProbabilityLaw, SymbolSequence, TransitionMatrix};

/// Write `bytes` to `path` atomically.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

/// Rows of numbers, no header.
pub fn matrix_to_csv(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    rdr.records()
        .map(|rec| {
            rec?.iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Config(format!("`{s}` is not a number")))
                })
                .collect()
        })
        .collect()
}

pub fn transition_to_csv(q: &TransitionMatrix) -> String {
    matrix_to_csv(&q.to_rows())
}

pub fn transition_from_csv(text: &str) -> Result<TransitionMatrix> {
    TransitionMatrix::from_rows(matrix_from_csv(text)?)
}

/// A law over `Θ` as an `N × N` grid: row `i`, column `j` holds `π_ij`.
pub fn law_to_csv(pi: &ProbabilityLaw) -> String {
    let n = pi.n_states();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| pi.pair(i, j)).collect())
        .collect();
    matrix_to_csv(&rows)
}

pub fn law_from_csv(text: &str) -> Result<ProbabilityLaw> {
    let rows = matrix_from_csv(text)?;
    let n = rows.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bad.len(),
        });
    }
    ProbabilityLaw::new(rows.into_iter().flatten().collect())
}

/// One column headed `symbol`, holding 1-based flat indices `(i−1)N + j`.
pub fn sequence_to_csv(z: &SymbolSequence) -> String {
    let mut out = String::from("symbol\n");
    for s in z.to_one_based() {
        out.push_str(&s.to_string());
        out.push('\n');
    }
    out
}

pub fn sequence_from_csv(n_states: usize, text: &str) -> Result<SymbolSequence> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    if rdr.headers()?.iter().collect::<Vec<_>>() != ["symbol"] {
        return Err(Error::Config("symbol CSV must have the single header `symbol`".into()));
    }
    let symbols = rdr
        .records()
        .map(|rec| {
            let rec = rec?;
            let s = &rec[0];
            s.parse::<usize>()
                .map_err(|_| Error::Config(format!("`{s}` is not a symbol index")))
        })
        .collect::<Result<Vec<_>>>()?;
    SymbolSequence::from_one_based(n_states, &symbols)
}

pub fn read_sequence(n_states: usize, path: impl AsRef<Path>) -> Result<SymbolSequence> {
    sequence_from_csv(n_states, &read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_csv_round_trip() {
        let q = TransitionMatrix::from_rows(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let text = transition_to_csv(&q);
        assert_eq!(text, "0.7,0.3\n0.4,0.6\n");
        assert_eq!(transition_from_csv(&text).unwrap(), q);
    }

    #[test]
    fn law_csv_round_trip() {
        let pi = ProbabilityLaw::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(law_from_csv(&law_to_csv(&pi)).unwrap(), pi);
        assert!(law_from_csv("0.5,0.5\n").is_err());
    }

    #[test]
    fn sequence_csv_is_one_based() {
        let z = SymbolSequence::lift_states(2, &[0, 1, 1, 0]).unwrap();
        let text = sequence_to_csv(&z);
        assert_eq!(text, "symbol\n2\n4\n3\n");
        assert_eq!(sequence_from_csv(2, &text).unwrap(), z);
        assert!(sequence_from_csv(2, "symbol\n5\n").is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        write_json(&path, &vec![1, 2]).unwrap();
        write_json(&path, &vec![3]).unwrap();
        let back: Vec<i32> = read_json(&path).unwrap();
        assert_eq!(back, vec![3]);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn read_error_names_path() {
        let err = read_text("/no/such/file.csv").unwrap_err();
        assert!(err.to_string().contains("/no/such/file.csv"));
    }
}
