//! Binary match matrix `L` (samples x labeling functions) and the LF-to-class
//! mapping `T`, with their plain-text persistence formats.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse binary n x m matrix stored as sorted column lists per row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchMatrix {
    n: usize,
    m: usize,
    rows: Vec<Vec<usize>>,
}

impl MatchMatrix {
    pub fn empty(n: usize, m: usize) -> Self {
        MatchMatrix {
            n,
            m,
            rows: vec![Vec::new(); n],
        }
    }

    /// Builds a matrix from `(i, j)` pairs. Out-of-range and duplicate pairs are rejected.
    pub fn from_pairs(n: usize, m: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut rows = vec![Vec::new(); n];
        for (i, j) in pairs {
            if i >= n || j >= m {
                return Err(Error::Data(format!("match ({i}, {j}) outside {n}x{m} matrix")));
            }
            rows[i].push(j);
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            if let Some(w) = row.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::Data(format!("duplicate match ({i}, {})", w[0])));
            }
        }
        Ok(MatchMatrix { n, m, rows })
    }

    /// Builds a matrix from per-row column lists (unsorted input is fine).
    pub fn from_rows(m: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        let pairs = rows
            .into_iter()
            .enumerate()
            .flat_map(|(i, r)| r.into_iter().map(move |j| (i, j)));
        Self::from_pairs(n, m, pairs)
    }

    pub fn from_dense(dense: &[Vec<bool>], m: usize) -> Result<Self> {
        let rows = dense
            .iter()
            .map(|r| {
                if r.len() != m {
                    return Err(Error::Data(format!("dense row has width {}, expected {m}", r.len())));
                }
                Ok(r.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(m, rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Matched columns of row `i`, ascending.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn row_sum(&self, i: usize) -> usize {
        self.rows[i].len()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i].binary_search(&j).is_ok()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// All `(i, j)` pairs in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&j| (i, j)))
    }

    pub fn to_dense(&self) -> Vec<Vec<bool>> {
        self.rows
            .iter()
            .map(|r| {
                let mut d = vec![false; self.m];
                for &j in r {
                    d[j] = true;
                }
                d
            })
            .collect()
    }

    /// Keeps only the listed columns, renumbered in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> MatchMatrix {
        let mut new_index = vec![usize::MAX; self.m];
        for (new, &old) in columns.iter().enumerate() {
            new_index[old] = new;
        }
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut out: Vec<usize> = r
                    .iter()
                    .map(|&j| new_index[j])
                    .filter(|&j| j != usize::MAX)
                    .collect();
                out.sort_unstable();
                out
            })
            .collect();
        MatchMatrix {
            n: self.n,
            m: columns.len(),
            rows,
        }
    }

    /// Plain-text triplet form: header `n m`, then one `i j` line per match.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.n, self.m)?;
        for (i, j) in self.pairs() {
            writeln!(w, "{i} {j}")?;
        }
        Ok(())
    }

    pub fn to_triplet_string(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.m);
        for (i, j) in self.pairs() {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }

    pub fn read_triplets<R: BufRead>(r: R, source: &str) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (n, m) = match lines.next() {
            Some((_, line)) => {
                let line = line.map_err(|e| Error::io(source, e))?;
                parse_pair(&line).ok_or_else(|| Error::parse(source, "line 1", "expected header `n m`"))?
            }
            None => return Err(Error::parse(source, "line 1", "empty triplet file")),
        };
        let mut pairs = Vec::new();
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::io(source, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let p = parse_pair(&line)
                .ok_or_else(|| Error::parse(source, format!("line {}", idx + 1), "expected `i j`"))?;
            pairs.push(p);
        }
        Self::from_pairs(n, m, pairs).map_err(|e| Error::parse(source, "body", e))
    }
}

fn parse_pair(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_whitespace();
    let a = it.next()?.parse().ok()?;
    let b = it.next()?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some((a, b))
}

/// The m x c LF-to-class mapping, stored as the class index of each LF.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingMatrix {
    c: usize,
    class_of: Vec<usize>,
}

impl MappingMatrix {
    pub fn new(class_of: Vec<usize>, c: usize) -> Result<Self> {
        if c == 0 {
            return Err(Error::Data("mapping needs at least one class".into()));
        }
        if let Some((j, &k)) = class_of.iter().enumerate().find(|(_, &k)| k >= c) {
            return Err(Error::Data(format!("LF {j} mapped to class {k}, but there are only {c} classes")));
        }
        Ok(MappingMatrix { c, class_of })
    }

    pub fn m(&self) -> usize {
        self.class_of.len()
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn class_of(&self) -> &[usize] {
        &self.class_of
    }

    /// LF indices belonging to each class.
    pub fn lfs_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.c];
        for (j, &k) in self.class_of.iter().enumerate() {
            out[k].push(j);
        }
        out
    }

    /// Dense 0/1 form, m rows of width c.
    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        self.class_of
            .iter()
            .map(|&k| {
                let mut row = vec![0u8; self.c];
                row[k] = 1;
                row
            })
            .collect()
    }

    pub fn permuted(&self, perm: &[usize]) -> MappingMatrix {
        MappingMatrix {
            c: self.c,
            class_of: perm.iter().map(|&j| self.class_of[j]).collect(),
        }
    }

    /// Header `m c`, then one class index per line.
    pub fn write_class_of<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.m(), self.c)?;
        for k in &self.class_of {
            writeln!(w, "{k}")?;
        }
        Ok(())
    }

    pub fn read_class_of<R: BufRead>(r: R, source: &str) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(source, e))?
            .ok_or_else(|| Error::parse(source, "line 1", "empty mapping file"))?;
        let (m, c) = parse_pair(&header).ok_or_else(|| Error::parse(source, "line 1", "expected header `m c`"))?;
        let mut class_of = Vec::with_capacity(m);
        for (idx, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(source, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let k = line
                .trim()
                .parse()
                .map_err(|_| Error::parse(source, format!("line {}", idx + 2), "expected class index"))?;
            class_of.push(k);
        }
        if class_of.len() != m {
            return Err(Error::parse(source, "body", format!("header says {m} LFs, found {}", class_of.len())));
        }
        Self::new(class_of, c).map_err(|e| Error::parse(source, "body", e))
    }
}
