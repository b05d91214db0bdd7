//! Orthonormal polynomial families, hyperbolic-cross index sets and the
//! Sobolev-orthonormal tensor basis with analytic partial derivatives.
//!
//! The Hermite family is orthonormal with respect to the standard Gaussian
//! probability measure and satisfies
//! `psi_{n+1}(t) = t/sqrt(n+1) psi_n(t) - sqrt(n/(n+1)) psi_{n-1}(t)` with
//! `psi'_n = sqrt(n) psi_{n-1}`. The Legendre family is orthonormal with
//! respect to the uniform probability measure on `[-1, 1]` (Bonnet
//! recurrence, rescaled). Tensorised basis elements are
//! `Phi_nu = prod_k psi_{nu_k}(t_k) / sqrt(1 + |nu|_1)`, which for the
//! Hermite family is orthonormal in the Gaussian-weighted `H^1` norm.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::measure::GridDomain;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("dimension must be at least 1")]
    ZeroDim,
    #[error("evaluation point is not finite: {0}")]
    NonFinitePoint(f64),
    #[error("grid dimension {0} does not match index-set dimension {1}")]
    DimMismatch(usize, usize),
    #[error("recombination matrix must be {0}x{0}, got {1}x{2}")]
    BadRecombination(usize, usize, usize),
}

/// One-dimensional orthonormal polynomial family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolyFamily {
    /// Probabilists' Hermite, orthonormal under the standard Gaussian.
    HermiteProb,
    /// Legendre, orthonormal under the uniform probability on `[-1, 1]`.
    LegendreUniform,
}

/// Values and first derivatives of `psi_0 .. psi_{n_max}` at one point.
pub fn orthonormal_poly_eval(
    family: PolyFamily,
    n_max: usize,
    theta: f64,
) -> Result<(Vec<f64>, Vec<f64>), BasisError> {
    if !theta.is_finite() {
        return Err(BasisError::NonFinitePoint(theta));
    }
    let mut vals = vec![0.0; n_max + 1];
    let mut ders = vec![0.0; n_max + 1];
    vals[0] = 1.0;
    ders[0] = 0.0;
    match family {
        PolyFamily::HermiteProb => {
            if n_max >= 1 {
                vals[1] = theta;
                ders[1] = 1.0;
            }
            for n in 1..n_max {
                let np1 = (n + 1) as f64;
                vals[n + 1] =
                    theta / np1.sqrt() * vals[n] - (n as f64 / np1).sqrt() * vals[n - 1];
                ders[n + 1] = np1.sqrt() * vals[n];
            }
        }
        PolyFamily::LegendreUniform => {
            if n_max >= 1 {
                vals[1] = 3f64.sqrt() * theta;
                ders[1] = 3f64.sqrt();
            }
            for n in 1..n_max {
                let nf = n as f64;
                let a = ((2.0 * nf + 1.0) * (2.0 * nf + 3.0)).sqrt() / (nf + 1.0);
                let b = nf / (nf + 1.0) * ((2.0 * nf + 3.0) / (2.0 * nf - 1.0)).sqrt();
                vals[n + 1] = a * theta * vals[n] - b * vals[n - 1];
                ders[n + 1] = a * (vals[n] + theta * ders[n]) - b * ders[n - 1];
            }
        }
    }
    Ok((vals, ders))
}

/// A multivariate polynomial degree, one nonnegative entry per dimension.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

/// The hyperbolic cross `S_p = { nu : prod (nu_i + 1) <= p + 1 }`, stored
/// in lexicographic order so all matrix column orders are reproducible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyperbolicCrossSet {
    pub order: usize,
    pub dim: usize,
    pub indices: Vec<MultiIndex>,
}

impl HyperbolicCrossSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn max_degree(&self) -> usize {
        self.indices
            .iter()
            .flat_map(|nu| nu.0.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

pub fn hyperbolic_cross(dim: usize, order: usize) -> Result<HyperbolicCrossSet, BasisError> {
    if dim == 0 {
        return Err(BasisError::ZeroDim);
    }
    let mut indices = Vec::new();
    let mut current = vec![0usize; dim];
    // Depth-first in increasing entry order yields lexicographic output.
    fn recurse(
        current: &mut Vec<usize>,
        pos: usize,
        budget: usize,
        out: &mut Vec<MultiIndex>,
    ) {
        if pos == current.len() {
            out.push(MultiIndex(current.clone()));
            return;
        }
        let mut v = 0usize;
        while (v + 1) <= budget {
            current[pos] = v;
            recurse(current, pos + 1, budget / (v + 1), out);
            v += 1;
        }
        current[pos] = 0;
    }
    recurse(&mut current, 0, order + 1, &mut indices);
    Ok(HyperbolicCrossSet {
        order,
        dim,
        indices,
    })
}

/// Values of every basis element and of all its partial derivatives over a
/// grid. `table(0)` holds the plain values; `table(k)` for `k >= 1` holds
/// `d/d theta_k` applied to each element. Entry `(i, j)` refers to grid
/// atom `i` and basis element `j` (lexicographic index order).
#[derive(Debug, Clone)]
pub struct BasisEvalTable {
    tables: Vec<DMatrix<f64>>,
    index_set: HyperbolicCrossSet,
    family: PolyFamily,
}

impl BasisEvalTable {
    pub fn table(&self, k: usize) -> &DMatrix<f64> {
        &self.tables[k]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.tables[0]
    }

    pub fn n_derivative_channels(&self) -> usize {
        self.tables.len()
    }

    pub fn n_basis(&self) -> usize {
        self.index_set.len()
    }

    pub fn n_atoms(&self) -> usize {
        self.tables[0].nrows()
    }

    pub fn index_set(&self) -> &HyperbolicCrossSet {
        &self.index_set
    }

    pub fn family(&self) -> PolyFamily {
        self.family
    }

    /// One row per (atom, element) pair with every derivative channel,
    /// for eyeballing tables outside the process.
    pub fn write_csv(&self, path: &std::path::Path) -> std::io::Result<()> {
        use std::io::Write as _;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(out, "atom,element")?;
        for k in 0..self.n_derivative_channels() {
            write!(out, ",d{k}")?;
        }
        writeln!(out)?;
        for i in 0..self.n_atoms() {
            for j in 0..self.n_basis() {
                write!(out, "{i},{j}")?;
                for k in 0..self.n_derivative_channels() {
                    write!(out, ",{:.17e}", self.tables[k][(i, j)])?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    /// Right-multiplies every derivative table by `m`, i.e. replaces the
    /// basis by the linear recombination `Phi * m`. Derivatives transform
    /// identically, so the result is a valid table for the recombined
    /// functions.
    pub fn recombine(&self, m: &DMatrix<f64>) -> Result<Self, BasisError> {
        let n = self.n_basis();
        if m.nrows() != n || m.ncols() != n {
            return Err(BasisError::BadRecombination(n, m.nrows(), m.ncols()));
        }
        Ok(Self {
            tables: self.tables.iter().map(|t| t * m).collect(),
            index_set: self.index_set.clone(),
            family: self.family,
        })
    }
}

/// Evaluates the Sobolev-scaled tensor basis and all first-order partials
/// over `grid`.
pub fn sobolev_tensor_basis(
    set: &HyperbolicCrossSet,
    grid: &GridDomain,
    family: PolyFamily,
) -> Result<BasisEvalTable, BasisError> {
    if grid.dim() != set.dim {
        return Err(BasisError::DimMismatch(grid.dim(), set.dim));
    }
    let d = set.dim;
    let n = set.len();
    let n_atoms = grid.len();
    let deg = set.max_degree();
    let scales: Vec<f64> = set
        .indices
        .iter()
        .map(|nu| 1.0 / ((1 + nu.total()) as f64).sqrt())
        .collect();
    let mut tables: Vec<DMatrix<f64>> = (0..=d).map(|_| DMatrix::zeros(n_atoms, n)).collect();
    let mut vals_1d = vec![vec![0.0; deg + 1]; d];
    let mut ders_1d = vec![vec![0.0; deg + 1]; d];
    for i in 0..n_atoms {
        let point = grid.point(i);
        for k in 0..d {
            let (v, dv) = orthonormal_poly_eval(family, deg, point[k])?;
            vals_1d[k] = v;
            ders_1d[k] = dv;
        }
        for (j, nu) in set.indices.iter().enumerate() {
            let mut value = scales[j];
            for k in 0..d {
                value *= vals_1d[k][nu.0[k]];
            }
            tables[0][(i, j)] = value;
            for k in 0..d {
                let mut der = scales[j] * ders_1d[k][nu.0[k]];
                for l in 0..d {
                    if l != k {
                        der *= vals_1d[l][nu.0[l]];
                    }
                }
                tables[k + 1][(i, j)] = der;
            }
        }
    }
    Ok(BasisEvalTable {
        tables,
        index_set: set.clone(),
        family,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{monte_carlo_grid, GridDist, RngSpec};
    use approx::assert_abs_diff_eq;

    /// Brute-force enumeration over the full degree box, then filter.
    fn cross_oracle(dim: usize, order: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let bound = order + 1;
        let mut idx = vec![0usize; dim];
        loop {
            let prod: usize = idx.iter().map(|v| v + 1).product();
            if prod <= bound {
                out.push(idx.clone());
            }
            let mut k = dim;
            loop {
                if k == 0 {
                    out.sort();
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] <= order {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    #[test]
    fn one_dimensional_cross_is_degree_range() {
        let s = hyperbolic_cross(1, 3).unwrap();
        let got: Vec<usize> = s.indices.iter().map(|nu| nu.0[0]).collect();
        assert_eq!(got, vec![0, 1, 2, 3]);
    }

    #[test]
    fn order_zero_cross_is_singleton() {
        let s = hyperbolic_cross(2, 0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.indices[0].0, vec![0, 0]);
    }

    #[test]
    fn cross_matches_enumeration_oracle() {
        for (d, p) in [(2, 3), (2, 7), (3, 4), (4, 3)] {
            let s = hyperbolic_cross(d, p).unwrap();
            let got: Vec<Vec<usize>> = s.indices.iter().map(|nu| nu.0.clone()).collect();
            assert_eq!(got, cross_oracle(d, p), "d={d} p={p}");
        }
        let s = hyperbolic_cross(2, 3).unwrap();
        assert_eq!(s.len(), 8);
        let expect = vec![
            vec![0, 0],
            vec![0, 1],
            vec![0, 2],
            vec![0, 3],
            vec![1, 0],
            vec![1, 1],
            vec![2, 0],
            vec![3, 0],
        ];
        let got: Vec<Vec<usize>> = s.indices.iter().map(|nu| nu.0.clone()).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn cardinality_is_monotone_in_order() {
        for d in [1, 2, 3] {
            let mut prev = 0;
            for p in 0..10 {
                let n = hyperbolic_cross(d, p).unwrap().len();
                assert!(n >= prev);
                if d == 1 {
                    assert_eq!(n, p + 1);
                }
                prev = n;
            }
        }
    }

    #[test]
    fn hermite_low_degrees() {
        for theta in [-2.0, 0.0, 0.3, 1.0] {
            let (v, _) = orthonormal_poly_eval(PolyFamily::HermiteProb, 2, theta).unwrap();
            assert_eq!(v[0], 1.0);
            assert_abs_diff_eq!(v[1], theta, epsilon = 1e-14);
            assert_abs_diff_eq!(
                v[2],
                (theta * theta - 1.0) / 2f64.sqrt(),
                epsilon = 1e-13
            );
        }
        let (v, _) = orthonormal_poly_eval(PolyFamily::HermiteProb, 2, 1.0).unwrap();
        assert_abs_diff_eq!(v[2], 0.0, epsilon = 1e-14);
        let (v, _) = orthonormal_poly_eval(PolyFamily::HermiteProb, 2, 0.0).unwrap();
        assert_abs_diff_eq!(v[2], -(0.5f64.sqrt()), epsilon = 1e-14);
    }

    #[test]
    fn hermite_derivative_recurrence() {
        let (v, dv) = orthonormal_poly_eval(PolyFamily::HermiteProb, 2, 1.0).unwrap();
        assert_abs_diff_eq!(dv[2], 2f64.sqrt() * v[1], epsilon = 1e-14);
        assert_abs_diff_eq!(dv[2], 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn hermite_cubic_closed_form() {
        let mut rng_vals = [-1.7, -0.4, 0.0, 0.9, 2.3, 3.1];
        rng_vals.reverse();
        for theta in rng_vals {
            let (v, _) = orthonormal_poly_eval(PolyFamily::HermiteProb, 3, theta).unwrap();
            let expect = (theta.powi(3) - 3.0 * theta) / 6f64.sqrt();
            assert_abs_diff_eq!(v[3], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn legendre_linear_normalisation() {
        let (v, dv) = orthonormal_poly_eval(PolyFamily::LegendreUniform, 1, 0.5).unwrap();
        assert_abs_diff_eq!(v[1], 0.86602540378443865, epsilon = 1e-14);
        assert_abs_diff_eq!(dv[1], 3f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn legendre_is_orthonormal_under_quadrature() {
        // Midpoint rule on [-1,1] with the uniform probability weight.
        let q = 20_000;
        let n = 5;
        let mut gram = vec![vec![0.0; n + 1]; n + 1];
        for i in 0..q {
            let x = -1.0 + (2.0 * i as f64 + 1.0) / q as f64;
            let (v, _) = orthonormal_poly_eval(PolyFamily::LegendreUniform, n, x).unwrap();
            for a in 0..=n {
                for b in 0..=n {
                    gram[a][b] += v[a] * v[b] / q as f64;
                }
            }
        }
        for a in 0..=n {
            for b in 0..=n {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(gram[a][b], expect, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn non_finite_point_rejected() {
        assert!(orthonormal_poly_eval(PolyFamily::HermiteProb, 3, f64::NAN).is_err());
        assert!(orthonormal_poly_eval(PolyFamily::LegendreUniform, 3, f64::INFINITY).is_err());
    }

    #[test]
    fn constant_element_and_gradient() {
        let grid = monte_carlo_grid(GridDist::Gaussian(2), 50, RngSpec::new(1)).unwrap();
        let s = hyperbolic_cross(2, 2).unwrap();
        let t = sobolev_tensor_basis(&s, &grid, PolyFamily::HermiteProb).unwrap();
        for i in 0..50 {
            assert_abs_diff_eq!(t.values()[(i, 0)], 1.0, epsilon = 1e-14);
            assert_eq!(t.table(1)[(i, 0)], 0.0);
            assert_eq!(t.table(2)[(i, 0)], 0.0);
        }
    }

    #[test]
    fn first_degree_element_matches_hand_computation() {
        // nu = (1, 0): Phi = theta_1 / sqrt(2), d1 Phi = 1/sqrt(2), d2 Phi = 0.
        let grid = monte_carlo_grid(GridDist::Gaussian(2), 20, RngSpec::new(2)).unwrap();
        let s = hyperbolic_cross(2, 1).unwrap();
        let j = s
            .indices
            .iter()
            .position(|nu| nu.0 == vec![1, 0])
            .unwrap();
        let t = sobolev_tensor_basis(&s, &grid, PolyFamily::HermiteProb).unwrap();
        let r = 0.5f64.sqrt();
        for i in 0..20 {
            let theta1 = grid.point(i)[0];
            assert_abs_diff_eq!(t.values()[(i, j)], theta1 * r, epsilon = 1e-14);
            assert_abs_diff_eq!(t.table(1)[(i, j)], r, epsilon = 1e-14);
            assert_eq!(t.table(2)[(i, j)], 0.0);
        }
    }

    fn discrete_h1_gram(t: &BasisEvalTable, weights: &[f64]) -> DMatrix<f64> {
        let n = t.n_basis();
        let mut gram = DMatrix::zeros(n, n);
        for k in 0..t.n_derivative_channels() {
            let tab = t.table(k);
            for i in 0..t.n_atoms() {
                for a in 0..n {
                    for b in 0..n {
                        gram[(a, b)] += weights[i] * tab[(i, a)] * tab[(i, b)];
                    }
                }
            }
        }
        gram
    }

    #[test]
    fn hermite_h1_gram_is_near_identity() {
        // Grid-quadrature accuracy degrades with the maximum degree (the
        // fourth moments of the high-degree elements are heavy-tailed),
        // so the entrywise tolerance is checked at the order where it is
        // statistically robust.
        let n_pts = 50_000;
        let grid = monte_carlo_grid(GridDist::Gaussian(2), n_pts, RngSpec::new(4)).unwrap();
        let s = hyperbolic_cross(2, 3).unwrap();
        assert_eq!(s.len(), 8);
        let t = sobolev_tensor_basis(&s, &grid, PolyFamily::HermiteProb).unwrap();
        let gram = discrete_h1_gram(&t, grid.base_weights());
        for a in 0..s.len() {
            for b in 0..s.len() {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (gram[(a, b)] - expect).abs() <= 0.05,
                    "entry ({a},{b}) = {}",
                    gram[(a, b)]
                );
            }
        }
    }

    #[test]
    fn gram_off_diagonals_shrink_with_grid_size() {
        let s = hyperbolic_cross(2, 4).unwrap();
        let mut medians = Vec::new();
        for n_pts in [1000, 10_000, 100_000] {
            let grid = monte_carlo_grid(GridDist::Gaussian(2), n_pts, RngSpec::new(8)).unwrap();
            let t = sobolev_tensor_basis(&s, &grid, PolyFamily::HermiteProb).unwrap();
            let gram = discrete_h1_gram(&t, grid.base_weights());
            let mut off: Vec<f64> = (0..s.len())
                .flat_map(|a| (0..s.len()).filter(move |&b| b != a).map(move |b| (a, b)))
                .map(|(a, b)| gram[(a, b)].abs())
                .collect();
            off.sort_by(f64::total_cmp);
            medians.push(off[off.len() / 2]);
        }
        assert!(medians[1] < medians[0], "{medians:?}");
        assert!(medians[2] < medians[1], "{medians:?}");
    }
}
