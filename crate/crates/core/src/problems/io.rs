//! Plain-text problem files for exact reuse across runs.
//!
//! ```text
//! steptuned-regression <recipe> <N> <P> <seed>
//! <row 0 of A: P values>
//! ...
//! <row N-1 of A>
//! <b: N values>
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so reading a written
//! file reproduces the instance bit for bit.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::problems::RegressionProblem;

pub const RECIPE_VERSION: u32 = 1;
const MAGIC: &str = "steptuned-regression";

pub fn write_problem<W: Write>(problem: &RegressionProblem, mut out: W) -> Result<()> {
    let n = problem.targets().len();
    let p = problem.matrix().len() / n;
    writeln!(out, "{MAGIC} {RECIPE_VERSION} {n} {p} {}", problem.seed())?;
    for i in 0..n {
        write_row(&mut out, problem.row(i))?;
    }
    write_row(&mut out, problem.targets())?;
    out.flush()?;
    Ok(())
}

fn write_row<W: Write>(out: &mut W, values: &[f64]) -> Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            out.write_all(b" ")?;
        }
        write!(out, "{v}")?;
        first = false;
    }
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_problem<R: Read>(input: R) -> Result<RegressionProblem> {
    let mut lines = BufReader::new(input).lines();
    let bad = |msg: String| Error::Config(format!("problem file: {msg}"));

    let header = lines.next().ok_or_else(|| bad("empty file".into()))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != MAGIC {
        return Err(bad(format!("bad header `{header}`")));
    }
    let parse_u64 = |s: &str| s.parse::<u64>().map_err(|e| bad(format!("`{s}`: {e}")));
    let recipe = parse_u64(fields[1])?;
    if recipe != u64::from(RECIPE_VERSION) {
        return Err(bad(format!("unsupported recipe version {recipe}")));
    }
    let n = parse_u64(fields[2])? as usize;
    let p = parse_u64(fields[3])? as usize;
    let seed = parse_u64(fields[4])?;

    let mut read_row = |expected: usize| -> Result<Vec<f64>> {
        let line = lines.next().ok_or_else(|| bad("truncated file".into()))??;
        let row = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != expected {
            return Err(bad(format!("expected {expected} values, found {}", row.len())));
        }
        Ok(row)
    };
    let mut a = Vec::with_capacity(n * p);
    for _ in 0..n {
        a.extend(read_row(p)?);
    }
    let b = read_row(n)?;
    RegressionProblem::new(n, p, a, b, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::generate_regression;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = generate_regression(17, 40, 6).unwrap();
        let mut buf = Vec::new();
        write_problem(&p, &mut buf).unwrap();
        let back = read_problem(buf.as_slice()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_problem("nope 1 2 3 4\n".as_bytes()).is_err());
        assert!(read_problem("steptuned-regression 1 2 1 0\n1\n".as_bytes()).is_err());
        assert!(read_problem("steptuned-regression 9 1 1 0\n1\n1\n".as_bytes()).is_err());
    }
}
