//! Periodic lattice geometry: minimal-image distances, Kac normalization and
//! the row-major mapping of a torus onto a chain.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lattice {
    /// Periodic chain of `n` sites.
    Ring(usize),
    /// Periodic `lx x ly` square lattice, chained row by row (rows of length
    /// `lx`).
    Torus([usize; 2]),
}

impl Lattice {
    pub fn n_sites(&self) -> usize {
        match *self {
            Lattice::Ring(n) => n,
            Lattice::Torus([lx, ly]) => lx * ly,
        }
    }

    /// Unit cell of the chained lattice: one site for a ring, one row for a
    /// torus.
    pub fn period(&self) -> usize {
        match *self {
            Lattice::Ring(_) => 1,
            Lattice::Torus([lx, _]) => lx,
        }
    }

    /// Cartesian coordinates `(column, row)` of a chain site.
    pub fn coords(&self, site: usize) -> (usize, usize) {
        match *self {
            Lattice::Ring(_) => (site, 0),
            Lattice::Torus([lx, _]) => (site % lx, site / lx),
        }
    }

    pub fn site_at(&self, col: usize, row: usize) -> usize {
        match *self {
            Lattice::Ring(n) => col % n,
            Lattice::Torus([lx, ly]) => (row % ly) * lx + col % lx,
        }
    }

    /// Euclidean distance between chain sites under minimal-image wrapping in
    /// every periodic direction.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        fn wrap(a: usize, b: usize, len: usize) -> usize {
            let d = a.abs_diff(b);
            d.min(len - d)
        }
        match *self {
            Lattice::Ring(n) => wrap(i, j, n) as f64,
            Lattice::Torus([lx, ly]) => {
                let (xi, yi) = self.coords(i);
                let (xj, yj) = self.coords(j);
                let dx = wrap(xi, xj, lx) as f64;
                let dy = wrap(yi, yj, ly) as f64;
                dx.hypot(dy)
            }
        }
    }

    /// Unordered pairs `(i, j)`, `i < j`, at distance exactly 1.
    pub fn nearest_neighbor_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_sites();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if (self.distance(i, j) - 1.0).abs() < 1e-12 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Power-law weight `d^{-α}`; `α = ∞` keeps only nearest neighbours.
pub fn power_law(distance: f64, alpha: f64) -> f64 {
    if distance <= 0.0 {
        return 0.0;
    }
    if alpha.is_infinite() {
        if (distance - 1.0).abs() < 1e-12 {
            1.0
        } else {
            0.0
        }
    } else {
        distance.powf(-alpha)
    }
}

/// Kac factor `K(α) = Σ_{j≠i} d_{ij}^{-α}`, evaluated from site 0 (the
/// lattices are translation invariant).
pub fn kac_factor(alpha: f64, lattice: &Lattice) -> f64 {
    (1..lattice.n_sites())
        .map(|j| power_law(lattice.distance(0, j), alpha))
        .sum()
}

/// Chain ordering of a periodic lattice together with the lattice distance
/// table indexed by chain position.
#[derive(Clone, Debug)]
pub struct ChainMapping {
    /// `order[k]` is the `(column, row)` of chain site `k`.
    pub order: Vec<(usize, usize)>,
    pub period: usize,
    /// Row-major `N x N` lattice distances between chain sites.
    pub distances: Vec<f64>,
}

impl ChainMapping {
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.order.len() + j]
    }
}

pub fn map_to_chain(lattice: &Lattice) -> ChainMapping {
    let n = lattice.n_sites();
    let order = (0..n).map(|k| lattice.coords(k)).collect();
    let mut distances = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            distances[i * n + j] = lattice.distance(i, j);
        }
    }
    ChainMapping {
        order,
        period: lattice.period(),
        distances,
    }
}
