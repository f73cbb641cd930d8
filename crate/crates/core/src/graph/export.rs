//! Adjacency CSV and DOT representations of a [`Dag`].

use std::io::{Read, Write};

use super::Dag;
use crate::error::{Error, Result};

/// Writes `p` rows of comma-separated 0/1 entries, row `j` = parents of `j`.
pub fn write_adjacency_csv<W: Write>(dag: &Dag, out: W) -> Result<()> {
    write_matrix_csv(&dag.to_adjacency(), out)
}

pub fn write_matrix_csv<W: Write, T: ToString>(rows: &[Vec<T>], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a square 0/1 adjacency matrix. `source` names the input in errors.
pub fn read_adjacency_csv<R: Read>(input: R, source: &str) -> Result<Dag> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows: Vec<Vec<u8>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .map(|field| match field {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::Parse {
                    path: source.to_string(),
                    line,
                    message: format!("expected 0 or 1, found {other:?}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Dag::from_adjacency(&rows)
}

/// Graphviz rendering with one `->` line per edge.
pub fn to_dot(dag: &Dag, labels: &[String]) -> String {
    let name = |v: usize| {
        labels
            .get(v)
            .cloned()
            .unwrap_or_else(|| format!("X{}", v + 1))
    };
    let mut s = String::from("digraph G {\n");
    for v in 0..dag.p() {
        s.push_str(&format!("  \"{}\";\n", name(v)));
    }
    for (from, to) in dag.edges() {
        s.push_str(&format!("  \"{}\" -> \"{}\";\n", name(from), name(to)));
    }
    s.push_str("}\n");
    s
}
