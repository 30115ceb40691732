//! Dense tensors over a finite product space and their text format.
//!
//! ```text
//! # comment lines and blank lines are ignored
//! arities: 2 3
//! 1 1 0.25
//! 2 3 0.75
//! ```
//!
//! Indices are 1-based; cells that are not listed are zero.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Values on `[r_1] x ... x [r_k]`, last index varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTable {
    arities: Vec<usize>,
    values: Vec<f64>,
}

impl ProductTable {
    pub fn new(arities: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if arities.is_empty() || arities.iter().any(|&r| r == 0) {
            return Err(Error::invalid("arities must be a nonempty list of positive integers"));
        }
        let cells: usize = arities.iter().product();
        if values.len() != cells {
            return Err(Error::shape(format!(
                "table has {} values but arities {:?} need {}",
                values.len(),
                arities,
                cells
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("table contains non-finite values"));
        }
        Ok(Self { arities, values })
    }

    pub fn zeros(arities: Vec<usize>) -> Result<Self> {
        let cells = arities.iter().product();
        Self::new(arities, vec![0.0; cells])
    }

    pub fn from_fn(arities: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let cells: usize = arities.iter().product();
        let mut idx = vec![0; arities.len()];
        let mut values = Vec::with_capacity(cells);
        for flat in 0..cells {
            unravel(flat, &arities, &mut idx);
            values.push(f(&idx));
        }
        Self::new(arities, values)
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at a 0-based multi-index.
    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.flat_index(idx)]
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.arities.len());
        idx.iter()
            .zip(&self.arities)
            .fold(0, |acc, (&i, &r)| acc * r + i)
    }

    /// Iterates `(multi_index, value)` over every cell.
    pub fn cells(&self) -> Cells<'_> {
        Cells {
            table: self,
            flat: 0,
            idx: vec![0; self.arities.len()],
        }
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut arities: Option<Vec<usize>> = None;
        let mut entries: Vec<(Vec<usize>, f64, usize)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let loc = || format!("{source}:{}", lineno + 1);
            if arities.is_none() {
                let rest = line
                    .strip_prefix("arities:")
                    .ok_or_else(|| Error::parse(loc(), "expected header `arities: r1 ... rk`"))?;
                let ar = rest
                    .split_whitespace()
                    .map(|t| {
                        t.parse::<usize>()
                            .map_err(|_| Error::parse(loc(), format!("bad arity `{t}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if ar.is_empty() || ar.contains(&0) {
                    return Err(Error::parse(loc(), "arities must be positive"));
                }
                arities = Some(ar);
                continue;
            }
            let ar = arities.as_ref().unwrap();
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != ar.len() + 1 {
                return Err(Error::parse(
                    loc(),
                    format!("expected {} indices and a value", ar.len()),
                ));
            }
            let mut idx = Vec::with_capacity(ar.len());
            for (t, &r) in toks[..ar.len()].iter().zip(ar) {
                let i: usize = t
                    .parse()
                    .map_err(|_| Error::parse(loc(), format!("bad index `{t}`")))?;
                if i == 0 || i > r {
                    return Err(Error::parse(loc(), format!("index {i} outside 1..={r}")));
                }
                idx.push(i - 1);
            }
            let last = toks[ar.len()];
            let v: f64 = last
                .parse()
                .map_err(|_| Error::parse(loc(), format!("bad value `{last}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(loc(), "value must be finite"));
            }
            entries.push((idx, v, lineno + 1));
        }
        let arities =
            arities.ok_or_else(|| Error::parse(source, "missing `arities:` header"))?;
        let mut table = Self::zeros(arities)?;
        let mut seen = vec![false; table.len()];
        for (idx, v, lineno) in entries {
            let flat = table.flat_index(&idx);
            if seen[flat] {
                return Err(Error::parse(format!("{source}:{lineno}"), "duplicate cell"));
            }
            seen[flat] = true;
            table.values[flat] = v;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Text form listing the nonzero cells with round-trip precision.
    pub fn to_text(&self) -> String {
        let mut out = String::from("arities:");
        for r in &self.arities {
            write!(out, " {r}").unwrap();
        }
        out.push('\n');
        for (idx, v) in self.cells() {
            if v != 0.0 {
                for i in &idx {
                    write!(out, "{} ", i + 1).unwrap();
                }
                writeln!(out, "{v:?}").unwrap();
            }
        }
        out
    }
}

pub struct Cells<'a> {
    table: &'a ProductTable,
    flat: usize,
    idx: Vec<usize>,
}

impl Iterator for Cells<'_> {
    type Item = (Vec<usize>, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.flat >= self.table.values.len() {
            return None;
        }
        unravel(self.flat, &self.table.arities, &mut self.idx);
        let v = self.table.values[self.flat];
        self.flat += 1;
        Some((self.idx.clone(), v))
    }
}

pub(crate) fn unravel(mut flat: usize, arities: &[usize], out: &mut [usize]) {
    for (slot, &r) in out.iter_mut().zip(arities).rev() {
        *slot = flat % r;
        flat /= r;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        let text = "# demo\narities: 2 3\n1 1 0.25\n2 3 0.75 # trailing\n";
        let t = ProductTable::parse(text, "demo").unwrap();
        assert_eq!(t.arities(), &[2, 3]);
        assert_eq!(t.get(&[0, 0]), 0.25);
        assert_eq!(t.get(&[1, 2]), 0.75);
        assert_eq!(t.get(&[1, 1]), 0.0);
        let again = ProductTable::parse(&t.to_text(), "again").unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = ProductTable::parse("arities: 2 2\n3 1 0.5\n", "f").unwrap_err();
        assert!(err.to_string().contains("f:2"), "{err}");
        assert!(ProductTable::parse("1 1 0.5\n", "f").is_err());
        assert!(ProductTable::parse("arities: 2\n1 0.5\n1 0.5\n", "f").is_err());
        assert!(ProductTable::parse("arities: 2 2\n1 1\n", "f").is_err());
        assert!(ProductTable::parse("", "f").is_err());
    }

    #[test]
    fn cells_visit_in_row_major_order() {
        let t = ProductTable::from_fn(vec![2, 2], |i| (i[0] * 2 + i[1]) as f64).unwrap();
        let flat: Vec<f64> = t.cells().map(|(_, v)| v).collect();
        assert_eq!(flat, vec![0.0, 1.0, 2.0, 3.0]);
    }
}
