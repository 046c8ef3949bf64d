//! Weighted undirected interaction graphs.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Symmetric weight matrix with zero diagonal, plus each player's neighbors
/// in ascending index order.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    weights: DMatrix<f64>,
    neighbor_order: Vec<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRow {
    i: usize,
    j: usize,
    w: f64,
}

impl Network {
    /// Builds a network from a dense weight matrix. The matrix must be square,
    /// finite, symmetric and have a zero diagonal.
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: weights.ncols(),
            });
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::SelfLoop(i + 1));
            }
            for j in 0..n {
                let (w_ij, w_ji) = (weights[(i, j)], weights[(j, i)]);
                if !w_ij.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "weight ({}, {}) is not finite",
                        i + 1,
                        j + 1
                    )));
                }
                if w_ij != w_ji {
                    return Err(Error::AsymmetricWeight {
                        i: i + 1,
                        j: j + 1,
                        w_ij,
                        w_ji,
                    });
                }
            }
        }
        let neighbor_order = (0..n)
            .map(|i| (0..n).filter(|&j| weights[(i, j)] != 0.0).collect())
            .collect();
        Ok(Network {
            weights,
            neighbor_order,
        })
    }

    /// `n` players and no links.
    pub fn edgeless(n: usize) -> Self {
        Network {
            weights: DMatrix::zeros(n, n),
            neighbor_order: vec![Vec::new(); n],
        }
    }

    /// Builds a network from 0-based undirected edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut weights = DMatrix::zeros(n, n);
        for &(i, j, w) in edges {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            if j >= n {
                return Err(Error::IndexOutOfRange { index: j, n });
            }
            if i == j {
                return Err(Error::SelfLoop(i + 1));
            }
            if w == 0.0 || !w.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "edge ({}, {}) must have a finite nonzero weight, got {w}",
                    i + 1,
                    j + 1
                )));
            }
            if weights[(i, j)] != 0.0 {
                return Err(Error::DuplicateEdge(i + 1, j + 1));
            }
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
        Network::from_weights(weights)
    }

    /// Ring lattice: each player is linked to its `k/2` nearest players on
    /// either side with weight `w`.
    pub fn ring_lattice(n: usize, k: usize, w: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!(
                "ring needs n >= 3, got {n}"
            )));
        }
        if k == 0 || k >= n || !k.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "ring degree k must be even with 0 < k < n, got k = {k}, n = {n}"
            )));
        }
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (1..=k / 2).map(move |d| (i, (i + d) % n, w)))
            .collect();
        Network::from_edges(n, &edges)
    }

    /// Star with player 0 at the center.
    pub fn star(n: usize, w: f64) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|j| (0, j, w)).collect();
        Network::from_edges(n, &edges)
    }

    pub fn path(n: usize, w: f64) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|j| (j - 1, j, w)).collect();
        Network::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// Neighbors of player `i`, ascending.
    pub fn neighbors(&self, i: usize) -> Result<&[usize]> {
        self.neighbor_order
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange {
                index: i,
                n: self.n(),
            })
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbor_order[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbor_order.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `1 + max_degree`: how many mechanism coordinates one player's data
    /// can touch.
    pub fn group_factor(&self) -> usize {
        1 + self.max_degree()
    }

    /// `Σ_i |N_i|`.
    pub fn total_degree(&self) -> usize {
        self.neighbor_order.iter().map(Vec::len).sum()
    }

    /// Reads an `i,j,w` edge list with 1-based indices. The player count is the
    /// largest index that appears.
    pub fn read_edge_list(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| parse_error(1, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["i", "j", "w"] {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header \"i,j,w\", found {:?}", headers),
            });
        }
        let mut seen: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut n = 0;
        for (k, row) in rdr.deserialize::<EdgeRow>().enumerate() {
            let line = k + 2;
            let EdgeRow { i, j, w } = row.map_err(|e| parse_error(line, e))?;
            if i == 0 || j == 0 {
                return Err(Error::Parse {
                    line,
                    msg: "player indices are 1-based".into(),
                });
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if w == 0.0 || !w.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("weight must be finite and nonzero, got {w}"),
                });
            }
            let key = (i.min(j), i.max(j));
            if let Some(&prev) = seen.get(&key) {
                return Err(if prev == w {
                    Error::DuplicateEdge(key.0, key.1)
                } else {
                    Error::AsymmetricWeight {
                        i: key.0,
                        j: key.1,
                        w_ij: prev,
                        w_ji: w,
                    }
                });
            }
            seen.insert(key, w);
            n = n.max(i).max(j);
        }
        let edges: Vec<_> = seen
            .into_iter()
            .map(|((i, j), w)| (i - 1, j - 1, w))
            .collect();
        Network::from_edges(n, &edges)
    }

    pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Network::read_edge_list(std::io::BufReader::new(file))
    }

    /// Writes each undirected edge once (`i < j`, 1-based). Weights use the
    /// shortest round-trip decimal form, so reading back is bit-exact.
    pub fn write_edge_list(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "i,j,w")?;
        for i in 0..self.n() {
            for &j in self.neighbor_order[i].iter().filter(|&&j| j > i) {
                writeln!(out, "{},{},{}", i + 1, j + 1, self.weights[(i, j)])?;
            }
        }
        Ok(())
    }

    pub fn save_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_edge_list(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

fn parse_error(line: usize, e: csv::Error) -> Error {
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}
