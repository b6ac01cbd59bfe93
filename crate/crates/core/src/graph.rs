//! Undirected weighted communication graph and its spectral constants.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, Mat};

/// Off-diagonal tolerance for the Laplacian eigensolver.
const EIGEN_TOL: f64 = 1e-12;
/// Threshold on `λ₂` for the spectral connectivity witness.
const CONNECTED_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Network {
    adjacency: Mat,
    laplacian: Mat,
    eigenvalues: Vec<f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

/// Both witnesses of connectivity: the spectral gap and a BFS reach count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityCertificate {
    pub lambda2: f64,
    pub bfs_reached: usize,
}

impl Network {
    /// Builds the network on `n_agents` nodes from `(i, j, weight)` edges.
    /// Repeated edges accumulate their weights.
    pub fn from_edges(n_agents: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adjacency = Mat::zeros(n_agents, n_agents);
        for &(i, j, w) in edges {
            if i >= n_agents || j >= n_agents {
                return Err(Error::NodeOutOfRange { i, j, n: n_agents });
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::NegativeWeight { i, j, weight: w });
            }
            adjacency[(i, j)] += w;
            adjacency[(j, i)] += w;
        }
        Self::from_adjacency(adjacency)
    }

    fn from_adjacency(adjacency: Mat) -> Result<Self> {
        let n = adjacency.rows();
        let mut laplacian = adjacency.scale(-1.0);
        let mut neighbors = vec![Vec::new(); n];
        for i in 0..n {
            let mut deg = 0.0;
            for j in 0..n {
                let a = adjacency[(i, j)];
                if a != 0.0 {
                    deg += a;
                    neighbors[i].push((j, a));
                }
            }
            laplacian[(i, i)] = deg;
        }
        let eigenvalues = if n == 0 {
            Vec::new()
        } else {
            jacobi_eigen(&laplacian, EIGEN_TOL * laplacian.max_abs().max(1.0))?.values
        };
        Ok(Network {
            adjacency,
            laplacian,
            eigenvalues,
            neighbors,
        })
    }

    /// Undirected ring `0 - 1 - ... - (n-1) - 0` with unit weights.
    pub fn ring(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n.saturating_sub(1)).map(|i| (i, i + 1, 1.0)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn n_agents(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn adjacency(&self) -> &Mat {
        &self.adjacency
    }

    pub fn laplacian(&self) -> &Mat {
        &self.laplacian
    }

    /// Laplacian eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Algebraic connectivity; zero for graphs with fewer than two nodes.
    pub fn lambda2(&self) -> f64 {
        self.eigenvalues.get(1).copied().unwrap_or(0.0)
    }

    /// Largest Laplacian eigenvalue.
    pub fn lambda_n(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// `(j, a_ij)` for each neighbour `j` of `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n_agents();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let a = self.adjacency[(i, j)];
                if a > 0.0 {
                    out.push((i, j, a));
                }
            }
        }
        out
    }

    /// Nodes reached by a breadth-first search from node 0.
    fn bfs_reach(&self) -> Vec<bool> {
        let n = self.n_agents();
        let mut seen = vec![false; n];
        if n == 0 {
            return seen;
        }
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &(j, _) in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    /// Passes iff `λ₂ > 1e-10` and a BFS from node 0 reaches every node.
    /// A single node is connected vacuously.
    pub fn require_connected(&self) -> Result<ConnectivityCertificate> {
        let seen = self.bfs_reach();
        let reached = seen.iter().filter(|s| **s).count();
        if self.n_agents() <= 1 {
            return Ok(ConnectivityCertificate {
                lambda2: self.lambda2(),
                bfs_reached: reached,
            });
        }
        let unreached: Vec<usize> = (0..seen.len()).filter(|&i| !seen[i]).collect();
        if !unreached.is_empty() || self.lambda2() <= CONNECTED_TOL {
            return Err(Error::Disconnected { unreached });
        }
        Ok(ConnectivityCertificate {
            lambda2: self.lambda2(),
            bfs_reached: reached,
        })
    }

    /// `L_R = Rᵀ L R`.
    pub fn reduced_laplacian(&self, basis: &ReducedBasis) -> Mat {
        basis.r.transpose().matmul(&self.laplacian).matmul(&basis.r)
    }

    /// `ℒ x` for stacked agent vectors of dimension `m` each, using the
    /// neighbour lists: `(ℒ x)_i = Σ_j a_ij (x_i − x_j)`.
    pub fn laplacian_apply(&self, x: &[f64], m: usize) -> Vec<f64> {
        let n = self.n_agents();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let xi = &x[i * m..(i + 1) * m];
            let oi = &mut out[i * m..(i + 1) * m];
            for &(j, a) in &self.neighbors[i] {
                let xj = &x[j * m..(j + 1) * m];
                for k in 0..m {
                    oi[k] += a * (xi[k] - xj[k]);
                }
            }
        }
        out
    }
}

/// `r = 1_N/√N` and an orthonormal basis `R` of its complement.
#[derive(Debug, Clone)]
pub struct ReducedBasis {
    /// Consensus direction, length `N`.
    pub ones: Vec<f64>,
    /// `N × (N−1)` matrix with orthonormal columns orthogonal to `ones`.
    pub r: Mat,
}

impl ReducedBasis {
    /// Gram–Schmidt on `e_1 … e_{N−1}` against `r`; each column's first
    /// nonzero entry is made positive.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::DegenerateSize { needed: 2, got: n });
        }
        let ones = vec![1.0 / (n as f64).sqrt(); n];
        let mut cols: Vec<Vec<f64>> = vec![ones.clone()];
        for k in 0..(n - 1) {
            let mut v = vec![0.0; n];
            v[k] = 1.0;
            // Two passes of modified Gram–Schmidt for orthogonality at 1e-15.
            for _ in 0..2 {
                for c in &cols {
                    let proj: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                    for (vi, ci) in v.iter_mut().zip(c) {
                        *vi -= proj * ci;
                    }
                }
            }
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for vi in &mut v {
                *vi /= nv;
            }
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-14) {
                if *first < 0.0 {
                    for vi in &mut v {
                        *vi = -*vi;
                    }
                }
            }
            cols.push(v);
        }
        let mut r = Mat::zeros(n, n - 1);
        for (j, c) in cols.iter().skip(1).enumerate() {
            for i in 0..n {
                r[(i, j)] = c[i];
            }
        }
        Ok(ReducedBasis { ones, r })
    }

    pub fn n(&self) -> usize {
        self.ones.len()
    }
}

pub fn build_network(n_agents: usize, edges: &[(usize, usize, f64)]) -> Result<Network> {
    Network::from_edges(n_agents, edges)
}

pub fn require_connected(net: &Network) -> Result<ConnectivityCertificate> {
    net.require_connected()
}

pub fn reduced_basis(net: &Network) -> Result<ReducedBasis> {
    ReducedBasis::new(net.n_agents())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k2_laplacian() {
        let net = Network::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(net.laplacian().to_rows(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        assert!((net.lambda2() - 2.0).abs() < 1e-14);
        assert!((net.lambda_n() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ring6_spectrum() {
        let net = Network::ring(6).unwrap();
        assert!((net.lambda2() - 1.0).abs() < 1e-12);
        assert!((net.lambda_n() - 4.0).abs() < 1e-12);
        // circulant closed form 2 − 2cos(2πk/6)
        let mut expected: Vec<f64> = (0..6)
            .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / 6.0).cos())
            .collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in net.eigenvalues().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn path3_spectrum() {
        let net = Network::path(3).unwrap();
        assert!((net.lambda2() - 1.0).abs() < 1e-12);
        assert!((net.lambda_n() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            Network::from_edges(3, &[(1, 1, 1.0)]),
            Err(Error::SelfLoop(1))
        ));
        assert!(matches!(
            Network::from_edges(3, &[(0, 1, -1.0)]),
            Err(Error::NegativeWeight { .. })
        ));
        assert!(matches!(
            Network::from_edges(3, &[(0, 1, 0.0)]),
            Err(Error::NegativeWeight { .. })
        ));
        assert!(matches!(
            Network::from_edges(2, &[(0, 5, 1.0)]),
            Err(Error::NodeOutOfRange { .. })
        ));
    }

    #[test]
    fn connectivity_witnesses() {
        assert!(Network::ring(6).unwrap().require_connected().is_ok());
        let split = Network::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        match split.require_connected() {
            Err(Error::Disconnected { unreached }) => assert_eq!(unreached, vec![2, 3]),
            other => panic!("expected Disconnected, got {other:?}"),
        }
        let single = Network::from_edges(1, &[]).unwrap();
        assert!(single.require_connected().is_ok());
    }

    #[test]
    fn basis_n2_sign_convention() {
        let b = ReducedBasis::new(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((b.r[(0, 0)] - s).abs() < 1e-15);
        assert!((b.r[(1, 0)] + s).abs() < 1e-15);
    }

    #[test]
    fn basis_orthonormality() {
        for n in [2, 3, 6, 11] {
            let b = ReducedBasis::new(n).unwrap();
            let rtr = b.r.transpose().matmul(&b.r);
            assert!(rtr.sub(&Mat::identity(n - 1)).max_abs() < 1e-12);
            let proj = b.r.matmul(&b.r.transpose());
            let ones = vec![1.0; n];
            assert!(proj.matvec(&ones).iter().all(|v| v.abs() < 1e-12));
            let rt_ones = b.r.transpose().matvec(&b.ones);
            assert!(rt_ones.iter().all(|v| v.abs() < 1e-12));
            let mut pi = Mat::identity(n);
            for i in 0..n {
                for j in 0..n {
                    pi[(i, j)] -= 1.0 / n as f64;
                }
            }
            assert!(proj.sub(&pi).max_abs() < 1e-12);
        }
        assert!(matches!(ReducedBasis::new(1), Err(Error::DegenerateSize { .. })));
    }

    #[test]
    fn reduced_laplacian_is_bracketed() {
        let net = Network::from_edges(
            5,
            &[
                (0, 1, 2.0),
                (1, 2, 0.5),
                (2, 3, 1.0),
                (3, 4, 3.0),
                (4, 0, 1.0),
                (1, 3, 0.7),
            ],
        )
        .unwrap();
        let b = reduced_basis(&net).unwrap();
        let lr = net.reduced_laplacian(&b);
        let ev = crate::linalg::sym_eigenvalues(&lr).unwrap();
        assert!(ev[0] >= net.lambda2() - 1e-10);
        assert!(*ev.last().unwrap() <= net.lambda_n() + 1e-10);
    }
}
