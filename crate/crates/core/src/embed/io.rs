//! Embedding CSV (`dim_1,...,dim_d`, one row per vertex) and its TOML
//! metadata sidecar.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Embedding;
use crate::models::Signature;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub signature: Signature,
    pub eigenvalues: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity_estimate: Option<f64>,
}

impl EmbeddingMeta {
    pub fn of(emb: &Embedding) -> Self {
        Self {
            signature: emb.signature,
            eigenvalues: emb.eigenvalues.clone(),
            sparsity_estimate: emb.sparsity_estimate,
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn attach(self, x: DMatrix<f64>) -> Result<Embedding> {
        if x.ncols() != self.signature.d() || self.eigenvalues.len() != self.signature.d() {
            return Err(Error::DimensionMismatch(format!(
                "metadata describes d = {} but the matrix has {} columns",
                self.signature.d(),
                x.ncols()
            )));
        }
        Ok(Embedding {
            x,
            signature: self.signature,
            eigenvalues: self.eigenvalues,
            sparsity_estimate: self.sparsity_estimate,
        })
    }
}

/// Write an `n x d` matrix with header `dim_1,...,dim_d`. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_embedding_csv<W: Write>(x: &DMatrix<f64>, mut w: W) -> Result<()> {
    let header: Vec<String> = (1..=x.ncols()).map(|k| format!("dim_{k}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in x.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn read_embedding_csv<R: BufRead>(r: R) -> Result<DMatrix<f64>> {
    let mut lines = r.lines().enumerate();
    let d = loop {
        match lines.next() {
            None => return Err(Error::Parse { line: 0, msg: "empty embedding file".into() }),
            Some((idx, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let cols: Vec<&str> = line.trim().split(',').collect();
                for (k, c) in cols.iter().enumerate() {
                    if c.trim() != format!("dim_{}", k + 1) {
                        return Err(Error::Parse {
                            line: idx + 1,
                            msg: format!("expected header dim_1..dim_d, got `{line}`"),
                        });
                    }
                }
                break cols.len();
            }
        }
    };
    let mut values = Vec::new();
    let mut n = 0;
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .trim()
            .split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: idx + 1,
                    msg: format!("invalid number `{t}`"),
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != d {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected {d} values, got {}", row.len()),
            });
        }
        values.extend(row);
        n += 1;
    }
    Ok(DMatrix::from_row_slice(n, d, &values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(n in 0usize..6, d in 1usize..4, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = crate::rng::rng_from(seed);
            let x = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>() * 1e3 - 500.0);
            let mut buf = Vec::new();
            write_embedding_csv(&x, &mut buf).unwrap();
            prop_assert_eq!(read_embedding_csv(buf.as_slice()).unwrap(), x);
        }
    }

    #[test]
    fn header_is_checked() {
        assert!(read_embedding_csv("x,y\n1,2\n".as_bytes()).is_err());
        assert!(read_embedding_csv("dim_1,dim_2\n1\n".as_bytes()).is_err());
    }

    #[test]
    fn meta_round_trip() {
        let meta = EmbeddingMeta {
            signature: Signature::new(1, 2).unwrap(),
            eigenvalues: vec![210.0, -30.5, -29.0],
            sparsity_estimate: Some(0.7),
        };
        let text = meta.to_toml_string().unwrap();
        assert_eq!(EmbeddingMeta::from_toml_str(&text).unwrap(), meta);
        assert!(meta.clone().attach(DMatrix::zeros(4, 2)).is_err());
        assert_eq!(meta.attach(DMatrix::zeros(4, 3)).unwrap().n(), 4);
    }
}
