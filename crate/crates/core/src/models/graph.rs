//! Undirected binary graphs and their text formats.
//!
//! Two formats are supported:
//!
//! * edge list: a header line `n <count>` followed by one `i j` pair per
//!   line (0-indexed, whitespace separated, each undirected edge once);
//! * dense: `n` lines of `n` whitespace-separated `0`/`1` entries.
//!
//! Blank lines and lines starting with `#` are ignored by both readers.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    /// Row-major `n x n` 0/1 matrix.
    adj: Vec<u8>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adj: vec![0; n * n],
        }
    }

    /// Build from an undirected edge list. Self-loops are kept on the diagonal.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i}, {j}) out of range for n = {n}"
                )));
            }
            g.add_edge(i, j);
        }
        Ok(g)
    }

    /// Build from a dense 0/1 matrix, which must be symmetric.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "adjacency must be square, got {} x {}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::InvalidParameter(format!("entry ({i}, {j}) = {v} is not 0/1")));
                }
                if v != m[(j, i)] {
                    return Err(Error::InvalidParameter(format!("adjacency not symmetric at ({i}, {j})")));
                }
                g.adj[i * n + j] = v as u8;
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn add_edge(&mut self, i: usize, j: usize) {
        self.adj[i * self.n + j] = 1;
        self.adj[j * self.n + i] = 1;
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j] != 0
    }

    /// Number of edges with `i < j`.
    pub fn edge_count(&self) -> usize {
        (0..self.n)
            .map(|i| self.adj[i * self.n + i + 1..(i + 1) * self.n].iter().filter(|&&a| a != 0).count())
            .sum()
    }

    /// Edges `(i, j)` with `i <= j`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| (i..self.n).filter(move |&j| self.has_edge(i, j)).map(move |j| (i, j)))
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let row = &self.adj[i * self.n..(i + 1) * self.n];
        row.iter().enumerate().filter(|(_, &a)| a != 0).map(|(j, _)| j)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.adj[i * self.n + j] as f64)
    }

    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n {}", self.n)?;
        for (i, j) in self.edges() {
            writeln!(w, "{i} {j}")?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(r: R) -> Result<Self> {
        let mut graph: Option<Graph> = None;
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            match graph.as_mut() {
                None => {
                    if fields.len() != 2 || fields[0] != "n" {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: "expected header `n <count>`".into(),
                        });
                    }
                    let n = parse_usize(fields[1], lineno)?;
                    graph = Some(Graph::empty(n));
                }
                Some(g) => {
                    if fields.len() != 2 {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: format!("expected `i j`, got {} fields", fields.len()),
                        });
                    }
                    let i = parse_usize(fields[0], lineno)?;
                    let j = parse_usize(fields[1], lineno)?;
                    if i >= g.n || j >= g.n {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: format!("vertex out of range for n = {}", g.n),
                        });
                    }
                    g.add_edge(i, j);
                }
            }
        }
        graph.ok_or(Error::Parse {
            line: 0,
            msg: "missing `n <count>` header".into(),
        })
    }

    pub fn write_dense<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.n {
            let row: Vec<&str> = self.adj[i * self.n..(i + 1) * self.n]
                .iter()
                .map(|&a| if a != 0 { "1" } else { "0" })
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_dense<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<Vec<u8>> = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let row = trimmed
                .split_whitespace()
                .map(|t| match t {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::Parse {
                        line: idx + 1,
                        msg: format!("expected 0 or 1, got `{other}`"),
                    }),
                })
                .collect::<Result<Vec<u8>>>()?;
            rows.push(row);
        }
        let n = rows.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::Parse {
                line: bad + 1,
                msg: format!("row has {} entries, expected {n}", rows[bad].len()),
            });
        }
        let adj: Vec<u8> = rows.into_iter().flatten().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                if adj[i * n + j] != adj[j * n + i] {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("matrix not symmetric at ({i}, {j})"),
                    });
                }
            }
        }
        Ok(Self { n, adj })
    }

    /// Read either format, detecting the edge-list header.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let first = text
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('#'))
            .unwrap_or("");
        if first.starts_with('n') {
            Self::read_edge_list(text.as_bytes())
        } else {
            Self::read_dense(text.as_bytes())
        }
    }
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid index `{s}`"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_edge_list_with_comments() {
        let text = "# toy\nn 4\n0 1\n\n2 3\n1 0\n";
        let g = Graph::read_edge_list(text.as_bytes()).unwrap();
        assert_eq!(g.n(), 4);
        assert_eq!(g.edge_count(), 2);
        assert!(g.has_edge(3, 2));
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Graph::read_edge_list("0 1\n".as_bytes()).is_err());
        assert!(Graph::read_edge_list("n 2\n0 2\n".as_bytes()).is_err());
        assert!(Graph::read_dense("0 1\n0 0\n".as_bytes()).is_err());
        assert!(Graph::read_dense("0 2\n2 0\n".as_bytes()).is_err());
        assert!(Graph::read_dense("0 1 0\n1 0\n".as_bytes()).is_err());
    }

    #[test]
    fn matrix_conversion_checks_symmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(Graph::from_matrix(&m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(Graph::from_matrix(&m).unwrap().to_matrix(), m);
    }

    fn arb_graph() -> impl Strategy<Value = Graph> {
        (1usize..12).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 0..30)
                .prop_map(move |edges| Graph::from_edges(n, &edges).unwrap())
        })
    }

    proptest! {
        #[test]
        fn both_formats_round_trip(g in arb_graph()) {
            let mut buf = Vec::new();
            g.write_edge_list(&mut buf).unwrap();
            prop_assert_eq!(&Graph::read_edge_list(buf.as_slice()).unwrap(), &g);
            let mut buf = Vec::new();
            g.write_dense(&mut buf).unwrap();
            prop_assert_eq!(&Graph::read_dense(buf.as_slice()).unwrap(), &g);
        }
    }
}
