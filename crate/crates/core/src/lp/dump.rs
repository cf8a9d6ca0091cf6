//! Plain-text sparse LP format (see `docs/lp-format.md`).

use std::io::{BufRead, BufReader, Read, Write};

use super::{LpProblem, Sense};
use crate::error::{Error, Result};

const MAGIC: &str = "sparse-lp 1";

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_lp<W: Write>(problem: &LpProblem, mut out: W) -> Result<()> {
    problem.validate()?;
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "rows {}", problem.num_rows())?;
    writeln!(out, "cols {}", problem.num_cols())?;
    writeln!(out, "nnz {}", problem.triplets.len())?;
    let senses: String = problem.senses.iter().map(|s| s.symbol().to_string()).collect::<Vec<_>>().join(" ");
    writeln!(out, "senses {senses}")?;
    writeln!(out, "rhs {}", join(&problem.rhs))?;
    writeln!(out, "objective {}", join(&problem.objective))?;
    writeln!(out, "lower {}", join(&problem.lower))?;
    writeln!(out, "upper {}", join(&problem.upper))?;
    match problem.designated_row {
        Some(r) => writeln!(out, "designated {r}")?,
        None => writeln!(out, "designated none")?,
    }
    writeln!(out, "triplets")?;
    for &(r, c, v) in &problem.triplets {
        writeln!(out, "{r} {c} {v}")?;
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<BufReader<R>>,
    line: usize,
}

impl<R: Read> Lines<R> {
    fn next_line(&mut self) -> Result<Option<String>> {
        loop {
            let Some(l) = self.inner.next() else { return Ok(None) };
            self.line += 1;
            let l = l?;
            let trimmed = l.trim();
            if !trimmed.is_empty() && !trimmed.starts_with('#') {
                return Ok(Some(trimmed.to_string()));
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.line, msg: msg.into() }
    }

    /// Reads `key v1 v2 ...` and returns the values.
    fn section(&mut self, key: &str) -> Result<Vec<String>> {
        let l = self.next_line()?.ok_or_else(|| self.err(format!("missing `{key}` line")))?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        Ok(parts.map(str::to_string).collect())
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let v = self.section(key)?;
        match v.as_slice() {
            [x] => x.parse().map_err(|_| self.err(format!("bad `{key}` count `{x}`"))),
            _ => Err(self.err(format!("`{key}` takes one value"))),
        }
    }

    fn floats(&mut self, key: &str, len: usize) -> Result<Vec<f64>> {
        let v = self.section(key)?;
        if v.len() != len {
            return Err(self.err(format!("`{key}` has {} values, expected {len}", v.len())));
        }
        v.iter()
            .map(|x| x.parse::<f64>().map_err(|_| self.err(format!("bad number `{x}` in `{key}`"))))
            .collect()
    }
}

pub fn read_lp<R: Read>(input: R) -> Result<LpProblem> {
    let mut lines = Lines { inner: BufReader::new(input).lines(), line: 0 };
    match lines.next_line()? {
        Some(l) if l == MAGIC => {}
        _ => return Err(lines.err(format!("expected `{MAGIC}` header"))),
    }
    let rows = lines.count("rows")?;
    let cols = lines.count("cols")?;
    let nnz = lines.count("nnz")?;
    let senses = lines
        .section("senses")?
        .iter()
        .map(|s| match s.as_str() {
            "L" => Ok(Sense::Le),
            "E" => Ok(Sense::Eq),
            "G" => Ok(Sense::Ge),
            other => Err(lines.err(format!("unknown sense `{other}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    if senses.len() != rows {
        return Err(lines.err(format!("{} senses for {rows} rows", senses.len())));
    }
    let rhs = lines.floats("rhs", rows)?;
    let objective = lines.floats("objective", cols)?;
    let lower = lines.floats("lower", cols)?;
    let upper = lines.floats("upper", cols)?;
    let designated_row = match lines.section("designated")?.as_slice() {
        [x] if x == "none" => None,
        [x] => Some(x.parse().map_err(|_| lines.err(format!("bad designated row `{x}`")))?),
        _ => return Err(lines.err("`designated` takes one value")),
    };
    if !lines.section("triplets")?.is_empty() {
        return Err(lines.err("`triplets` takes no values"));
    }
    let mut triplets = Vec::with_capacity(nnz);
    while let Some(l) = lines.next_line()? {
        let parts: Vec<&str> = l.split_whitespace().collect();
        let [r, c, v] = parts.as_slice() else {
            return Err(lines.err("triplet needs `row col coeff`"));
        };
        let r = r.parse().map_err(|_| lines.err(format!("bad row `{r}`")))?;
        let c = c.parse().map_err(|_| lines.err(format!("bad column `{c}`")))?;
        let v = v.parse().map_err(|_| lines.err(format!("bad coefficient `{v}`")))?;
        triplets.push((r, c, v));
    }
    if triplets.len() != nnz {
        return Err(lines.err(format!("{} triplets, header says {nnz}", triplets.len())));
    }
    let problem = LpProblem { objective, triplets, senses, rhs, lower, upper, designated_row };
    problem.validate()?;
    Ok(problem)
}
