//! Sampling-operator descriptors: pointwise and gradient-augmented
//! evaluation of polynomial bases, Fourier partition operators over index
//! domains, and collocation channels for the adaptive solver. Also the
//! numerical verification of the two-sided nondegeneracy constants.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::measure::GridDomain;
use crate::polybasis::BasisEvalTable;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("partition blocks must cover every image index; index {0} is uncovered")]
    UncoveredIndex(usize),
    #[error("partition block {0} references out-of-range image index {1}")]
    IndexOutOfRange(usize, usize),
    #[error("partition must contain at least one block")]
    EmptyPartition,
    #[error("line partitions need dimension >= 2, got {0}")]
    LinesNeedDim2(usize),
    #[error("line axis {0} out of range for dimension {1}")]
    BadAxis(usize, usize),
    #[error("atom {0} out of range for domain of size {1}")]
    AtomOutOfRange(usize, usize),
    #[error("channel kind requires {0} data, which the supplied basis does not carry")]
    MissingBasisData(&'static str),
    #[error("basis is empty")]
    EmptyBasis,
    #[error("basis length {0} does not match domain size {1}")]
    BasisDomainMismatch(usize, usize),
}

/// A disjoint or overlapping cover of the image index set `{0, .., N-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    n_img: usize,
    overlap_counts: Vec<usize>,
}

impl Partition {
    pub fn new(blocks: Vec<Vec<usize>>, n_img: usize) -> Result<Self, OperatorError> {
        if blocks.is_empty() {
            return Err(OperatorError::EmptyPartition);
        }
        let mut counts = vec![0usize; n_img];
        for (b, block) in blocks.iter().enumerate() {
            for &j in block {
                if j >= n_img {
                    return Err(OperatorError::IndexOutOfRange(b, j));
                }
                counts[j] += 1;
            }
        }
        if let Some(j) = counts.iter().position(|&c| c == 0) {
            return Err(OperatorError::UncoveredIndex(j));
        }
        Ok(Self {
            blocks,
            n_img,
            overlap_counts: counts,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_img(&self) -> usize {
        self.n_img
    }

    pub fn block(&self, i: usize) -> &[usize] {
        &self.blocks[i]
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Number of blocks each image index appears in (`r_j`).
    pub fn overlap_counts(&self) -> &[usize] {
        &self.overlap_counts
    }

    pub fn is_disjoint(&self) -> bool {
        self.overlap_counts.iter().all(|&c| c == 1)
    }

    pub fn max_block_len(&self) -> usize {
        self.blocks.iter().map(Vec::len).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionKind {
    /// One block per frequency.
    Singletons,
    /// Lines along `axis` of the `side^dim` index grid, flattened
    /// lexicographically (first coordinate most significant).
    Lines { axis: usize },
}

pub fn build_partition(
    kind: PartitionKind,
    side: usize,
    dim: usize,
) -> Result<Partition, OperatorError> {
    let n_img = side.pow(dim as u32);
    match kind {
        PartitionKind::Singletons => {
            Partition::new((0..n_img).map(|i| vec![i]).collect(), n_img)
        }
        PartitionKind::Lines { axis } => {
            if dim < 2 {
                return Err(OperatorError::LinesNeedDim2(dim));
            }
            if axis >= dim {
                return Err(OperatorError::BadAxis(axis, dim));
            }
            let strides: Vec<usize> = (0..dim).map(|k| side.pow((dim - 1 - k) as u32)).collect();
            let mut blocks = Vec::with_capacity(n_img / side);
            // Enumerate the fixed coordinates lexicographically.
            let fixed_dims: Vec<usize> = (0..dim).filter(|&k| k != axis).collect();
            let mut fixed = vec![0usize; fixed_dims.len()];
            loop {
                let base: usize = fixed_dims
                    .iter()
                    .zip(&fixed)
                    .map(|(&k, &v)| v * strides[k])
                    .sum();
                blocks.push((0..side).map(|j| base + j * strides[axis]).collect());
                let mut k = fixed.len();
                loop {
                    if k == 0 {
                        return Partition::new(blocks, n_img);
                    }
                    k -= 1;
                    fixed[k] += 1;
                    if fixed[k] < side {
                        break;
                    }
                    fixed[k] = 0;
                }
            }
        }
    }
}

/// Linear differential operators with closed-form action on collocation
/// dictionaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffOp {
    /// `u -> -u''` in one spatial variable.
    NegSecondDeriv1D,
}

/// What one measurement process does to an object at one domain atom.
#[derive(Debug, Clone)]
pub enum ChannelKind {
    /// `f -> f(theta)`.
    PointEval,
    /// `f -> (scale_0 f(theta), d_1 f(theta), .., d_d f(theta))`.
    GradAugmented { value_scale: f64 },
    /// `f -> c0 f(theta)`, the value-only channel of the partial-gradient
    /// pairing. `c0 = 0` yields the degenerate zero operator.
    PartialGradValue { scale: f64 },
    /// `x -> sqrt(M) ((F x)_j / sqrt(r_j))_{j in block}` over a frequency
    /// partition.
    FourierPartition { partition: Arc<Partition> },
    /// `u -> (L u)(theta)` for a linear differential operator.
    CollocInterior { op: DiffOp },
    /// `u -> sqrt(lambda) u(theta)` on a boundary grid.
    CollocBoundary { lambda: f64 },
}

/// A sampling process: a kind plus the measurement domain it is queried on.
#[derive(Debug, Clone)]
pub struct ChannelOperator {
    pub kind: ChannelKind,
    pub domain: Arc<GridDomain>,
}

impl ChannelOperator {
    pub fn new(kind: ChannelKind, domain: Arc<GridDomain>) -> Self {
        Self { kind, domain }
    }

    /// Output dimension `p_c` of one measurement.
    pub fn output_dim(&self) -> usize {
        match &self.kind {
            ChannelKind::PointEval
            | ChannelKind::PartialGradValue { .. }
            | ChannelKind::CollocInterior { .. }
            | ChannelKind::CollocBoundary { .. } => 1,
            ChannelKind::GradAugmented { .. } => self.domain.dim() + 1,
            ChannelKind::FourierPartition { partition } => partition.max_block_len(),
        }
    }

    pub fn is_fourier(&self) -> bool {
        matches!(self.kind, ChannelKind::FourierPartition { .. })
    }
}

/// Per-channel basis data. Polynomial channels read a [`BasisEvalTable`];
/// Fourier channels read precomputed frequency-domain values of the object
/// basis (one column per element); collocation channels read a dictionary
/// with whatever derivative tables the differential operator needs.
pub enum ChannelBasis<'a> {
    Poly(&'a BasisEvalTable),
    Fourier(&'a DMatrix<Complex64>),
    Dictionary(DictionaryEval<'a>),
}

/// Pointwise tables of a collocation dictionary over a channel grid.
#[derive(Clone, Copy)]
pub struct DictionaryEval<'a> {
    pub values: &'a DMatrix<f64>,
    pub second_derivs: Option<&'a DMatrix<f64>>,
}

/// A `p_c x n` measurement block, real for polynomial and collocation
/// kinds, complex for Fourier kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
}

impl Block {
    pub fn expect_real(self) -> DMatrix<f64> {
        match self {
            Block::Real(m) => m,
            Block::Complex(_) => panic!("expected a real measurement block"),
        }
    }

    pub fn expect_complex(self) -> DMatrix<Complex64> {
        match self {
            Block::Real(m) => m.map(|v| Complex64::new(v, 0.0)),
            Block::Complex(m) => m,
        }
    }
}

fn single_row(m: &DMatrix<f64>, atom: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(1, m.ncols(), |_, j| scale * m[(atom, j)])
}

/// Measurement values of every basis element at one grid atom.
pub fn evaluate_block(
    op: &ChannelOperator,
    atom: usize,
    basis: &ChannelBasis,
) -> Result<Block, OperatorError> {
    if atom >= op.domain.len() {
        return Err(OperatorError::AtomOutOfRange(atom, op.domain.len()));
    }
    match (&op.kind, basis) {
        (ChannelKind::PointEval, ChannelBasis::Poly(t)) => {
            Ok(Block::Real(single_row(t.values(), atom, 1.0)))
        }
        (ChannelKind::PartialGradValue { scale }, ChannelBasis::Poly(t)) => {
            Ok(Block::Real(single_row(t.values(), atom, *scale)))
        }
        (ChannelKind::GradAugmented { value_scale }, ChannelBasis::Poly(t)) => {
            let d = op.domain.dim();
            if t.n_derivative_channels() != d + 1 {
                return Err(OperatorError::MissingBasisData("derivative"));
            }
            let n = t.n_basis();
            let mut block = DMatrix::zeros(d + 1, n);
            for j in 0..n {
                block[(0, j)] = value_scale * t.values()[(atom, j)];
                for k in 1..=d {
                    block[(k, j)] = t.table(k)[(atom, j)];
                }
            }
            Ok(Block::Real(block))
        }
        (ChannelKind::FourierPartition { partition }, ChannelBasis::Fourier(freq)) => {
            if freq.nrows() != partition.n_img() {
                return Err(OperatorError::BasisDomainMismatch(
                    freq.nrows(),
                    partition.n_img(),
                ));
            }
            let m_blocks = partition.n_blocks() as f64;
            let p = partition.max_block_len();
            let n = freq.ncols();
            let mut block = DMatrix::zeros(p, n);
            for (row, &j) in partition.block(atom).iter().enumerate() {
                let scale = m_blocks.sqrt() / (partition.overlap_counts()[j] as f64).sqrt();
                for col in 0..n {
                    block[(row, col)] = freq[(j, col)] * scale;
                }
            }
            Ok(Block::Complex(block))
        }
        (ChannelKind::CollocInterior { op: diff }, ChannelBasis::Dictionary(dict)) => match diff {
            DiffOp::NegSecondDeriv1D => {
                let second = dict
                    .second_derivs
                    .ok_or(OperatorError::MissingBasisData("second-derivative"))?;
                Ok(Block::Real(single_row(second, atom, -1.0)))
            }
        },
        (ChannelKind::CollocBoundary { lambda }, ChannelBasis::Dictionary(dict)) => {
            Ok(Block::Real(single_row(dict.values, atom, lambda.sqrt())))
        }
        (ChannelKind::PointEval, ChannelBasis::Dictionary(dict)) => {
            Ok(Block::Real(single_row(dict.values, atom, 1.0)))
        }
        _ => Err(OperatorError::MissingBasisData("matching")),
    }
}

/// Extreme eigenvalues of the channel-summed Gram: the two-sided
/// constants of the norm equivalence between the object norm and the
/// channel-integrated measurement norms, evaluated as an exact sum over
/// the grid.
#[derive(Debug, Clone, Copy)]
pub struct NondegeneracyReport {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub n_basis: usize,
}

impl NondegeneracyReport {
    pub fn is_degenerate(&self, tol: f64) -> bool {
        self.alpha_hat <= tol
    }
}

/// Computes `G = sum_c sum_atoms w_i block^H block` and returns its extreme
/// eigenvalues. All channels must measure the same object basis (equal
/// column counts).
pub fn gram_nondegeneracy(
    channels: &[(&ChannelOperator, ChannelBasis)],
) -> Result<NondegeneracyReport, OperatorError> {
    let mut gram: Option<DMatrix<Complex64>> = None;
    for (op, basis) in channels {
        // Polynomial kinds admit a whole-table accumulation; everything
        // else goes block by block.
        match (&op.kind, basis) {
            (
                ChannelKind::PointEval
                | ChannelKind::PartialGradValue { .. }
                | ChannelKind::GradAugmented { .. },
                ChannelBasis::Poly(t),
            ) => {
                if t.n_basis() == 0 {
                    return Err(OperatorError::EmptyBasis);
                }
                if t.n_atoms() != op.domain.len() {
                    return Err(OperatorError::BasisDomainMismatch(
                        t.n_atoms(),
                        op.domain.len(),
                    ));
                }
                let g = gram.get_or_insert_with(|| DMatrix::zeros(t.n_basis(), t.n_basis()));
                let tabs: Vec<(usize, f64)> = match &op.kind {
                    ChannelKind::PointEval => vec![(0, 1.0)],
                    ChannelKind::PartialGradValue { scale } => vec![(0, *scale)],
                    ChannelKind::GradAugmented { value_scale } => {
                        let mut v = vec![(0, *value_scale)];
                        v.extend((1..=op.domain.dim()).map(|k| (k, 1.0)));
                        v
                    }
                    _ => unreachable!(),
                };
                for (k, scale) in tabs {
                    let mut scaled = t.table(k).clone();
                    for i in 0..scaled.nrows() {
                        let w = (op.domain.weight(i)).sqrt() * scale;
                        scaled.row_mut(i).scale_mut(w);
                    }
                    let real = scaled.tr_mul(&scaled);
                    for a in 0..real.nrows() {
                        for b in 0..real.ncols() {
                            g[(a, b)] += Complex64::new(real[(a, b)], 0.0);
                        }
                    }
                }
            }
            _ => {
                for atom in 0..op.domain.len() {
                    let w = op.domain.weight(atom);
                    if w == 0.0 {
                        continue;
                    }
                    let block = evaluate_block(op, atom, basis)?.expect_complex();
                    if block.ncols() == 0 {
                        return Err(OperatorError::EmptyBasis);
                    }
                    let g = gram
                        .get_or_insert_with(|| DMatrix::zeros(block.ncols(), block.ncols()));
                    let contrib = block.adjoint() * &block;
                    *g += contrib * Complex64::new(w, 0.0);
                }
            }
        }
    }
    let gram = gram.ok_or(OperatorError::EmptyBasis)?;
    let n_basis = gram.nrows();
    let eig = SymmetricEigen::new(gram);
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &l in eig.eigenvalues.iter() {
        min = min.min(l);
        max = max.max(l);
    }
    Ok(NondegeneracyReport {
        alpha_hat: min.max(0.0),
        beta_hat: max.max(0.0),
        n_basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::UnitaryDft;
    use crate::measure::{monte_carlo_grid, GridDist, GridDomain, RngSpec};
    use crate::polybasis::{hyperbolic_cross, sobolev_tensor_basis, PolyFamily};
    use approx::assert_abs_diff_eq;

    fn gaussian_grid(d: usize, n: usize, seed: u64) -> Arc<GridDomain> {
        Arc::new(monte_carlo_grid(GridDist::Gaussian(d), n, RngSpec::new(seed)).unwrap())
    }

    #[test]
    fn singleton_partition_layout() {
        let p = build_partition(PartitionKind::Singletons, 4, 1).unwrap();
        assert_eq!(p.n_blocks(), 4);
        for i in 0..4 {
            assert_eq!(p.block(i), &[i]);
        }
        assert!(p.is_disjoint());
    }

    #[test]
    fn line_partition_2d_rows() {
        let p = build_partition(PartitionKind::Lines { axis: 1 }, 2, 2).unwrap();
        assert_eq!(p.n_blocks(), 2);
        assert_eq!(p.block(0), &[0, 1]);
        assert_eq!(p.block(1), &[2, 3]);
    }

    #[test]
    fn line_partition_3d_block_count() {
        let p = build_partition(PartitionKind::Lines { axis: 0 }, 2, 3).unwrap();
        assert_eq!(p.n_blocks(), 4);
        for i in 0..4 {
            assert_eq!(p.block(i).len(), 2);
        }
        assert!(p.is_disjoint());
    }

    #[test]
    fn line_partition_needs_two_dims() {
        assert!(matches!(
            build_partition(PartitionKind::Lines { axis: 0 }, 4, 1),
            Err(OperatorError::LinesNeedDim2(1))
        ));
    }

    #[test]
    fn every_index_covered_exactly_once() {
        for (kind, side, dim) in [
            (PartitionKind::Singletons, 3, 2),
            (PartitionKind::Lines { axis: 0 }, 3, 2),
            (PartitionKind::Lines { axis: 1 }, 3, 3),
            (PartitionKind::Lines { axis: 2 }, 2, 3),
        ] {
            let p = build_partition(kind, side, dim).unwrap();
            assert!(p.overlap_counts().iter().all(|&c| c == 1));
            let total: usize = p.blocks().iter().map(Vec::len).sum();
            assert_eq!(total, p.n_img());
        }
    }

    #[test]
    fn point_eval_on_constant_basis() {
        let grid = gaussian_grid(1, 5, 1);
        let s = hyperbolic_cross(1, 0).unwrap();
        let t = sobolev_tensor_basis(&s, &grid, PolyFamily::HermiteProb).unwrap();
        let op = ChannelOperator::new(ChannelKind::PointEval, grid);
        let b = evaluate_block(&op, 2, &ChannelBasis::Poly(&t))
            .unwrap()
            .expect_real();
        assert_eq!(b.nrows(), 1);
        assert_eq!(b.ncols(), 1);
        assert_abs_diff_eq!(b[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn grad_augmented_block_1d() {
        let grid = gaussian_grid(1, 8, 3);
        let s = hyperbolic_cross(1, 1).unwrap();
        let t = sobolev_tensor_basis(&s, &grid, PolyFamily::HermiteProb).unwrap();
        let op = ChannelOperator::new(ChannelKind::GradAugmented { value_scale: 1.0 }, grid.clone());
        let atom = 5;
        let theta = grid.point(atom)[0];
        let b = evaluate_block(&op, atom, &ChannelBasis::Poly(&t))
            .unwrap()
            .expect_real();
        let r = 0.5f64.sqrt();
        assert_abs_diff_eq!(b[(0, 0)], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b[(0, 1)], theta * r, epsilon = 1e-14);
        assert_abs_diff_eq!(b[(1, 0)], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b[(1, 1)], r, epsilon = 1e-14);
    }

    #[test]
    fn fourier_singleton_block_is_scaled_delta() {
        // Object basis F^H e_j has frequency-domain values e_j, so the
        // block of singleton i is sqrt(N) delta_{ij}.
        let n = 8;
        let dft = UnitaryDft::new(n, 1).unwrap();
        let part = Arc::new(build_partition(PartitionKind::Singletons, n, 1).unwrap());
        let domain = Arc::new(GridDomain::indexed(n, 1.0 / n as f64).unwrap());
        let op = ChannelOperator::new(
            ChannelKind::FourierPartition {
                partition: part.clone(),
            },
            domain,
        );
        let mut freq = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[j] = Complex64::new(1.0, 0.0);
            let img = dft.inverse(&e).unwrap();
            let back = dft.forward(&img).unwrap();
            for (i, v) in back.iter().enumerate() {
                freq[(i, j)] = *v;
            }
        }
        for i in 0..n {
            let b = evaluate_block(&op, i, &ChannelBasis::Fourier(&freq))
                .unwrap()
                .expect_complex();
            for j in 0..n {
                let expect = if i == j { (n as f64).sqrt() } else { 0.0 };
                assert_abs_diff_eq!(b[(0, j)].re, expect, epsilon = 1e-10);
                assert_abs_diff_eq!(b[(0, j)].im, 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn block_evaluation_is_linear() {
        let grid = gaussian_grid(2, 30, 7);
        let s = hyperbolic_cross(2, 3).unwrap();
        let t = sobolev_tensor_basis(&s, &grid, PolyFamily::HermiteProb).unwrap();
        let op = ChannelOperator::new(ChannelKind::GradAugmented { value_scale: 1.0 }, grid);
        let n = s.len();
        let mut mix = DMatrix::identity(n, n);
        let mut state = 88172645463325252u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for a in 0..n {
            for b in 0..n {
                mix[(a, b)] = next();
            }
        }
        let recombined = t.recombine(&mix).unwrap();
        for atom in [0, 13, 29] {
            let b0 = evaluate_block(&op, atom, &ChannelBasis::Poly(&t))
                .unwrap()
                .expect_real();
            let b1 = evaluate_block(&op, atom, &ChannelBasis::Poly(&recombined))
                .unwrap()
                .expect_real();
            let expect = &b0 * &mix;
            assert!((&b1 - &expect).abs().max() < 1e-12);
        }
    }

    #[test]
    fn full_disjoint_fourier_cover_is_isometric() {
        let n = 16;
        let dft = UnitaryDft::new(n, 1).unwrap();
        let part = Arc::new(build_partition(PartitionKind::Singletons, n, 1).unwrap());
        let domain = Arc::new(GridDomain::indexed(n, 1.0 / n as f64).unwrap());
        let op = ChannelOperator::new(ChannelKind::FourierPartition { partition: part }, domain);
        // Full standard basis in image space.
        let mut freq = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[j] = Complex64::new(1.0, 0.0);
            let f = dft.forward(&e).unwrap();
            for (i, v) in f.iter().enumerate() {
                freq[(i, j)] = *v;
            }
        }
        let rep = gram_nondegeneracy(&[(&op, ChannelBasis::Fourier(&freq))]).unwrap();
        assert_abs_diff_eq!(rep.alpha_hat, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.beta_hat, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn overlapping_cover_restores_isometry_with_scaling() {
        // Blocks {0,1}, {1,2}, {2,3}, {3,0} over 4 indices: r_j = 2 for all.
        let n = 4;
        let dft = UnitaryDft::new(n, 1).unwrap();
        let part = Arc::new(
            Partition::new(vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 0]], n).unwrap(),
        );
        assert!(!part.is_disjoint());
        let domain = Arc::new(GridDomain::indexed(4, 0.25).unwrap());
        let op = ChannelOperator::new(ChannelKind::FourierPartition { partition: part }, domain);
        let mut freq = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[j] = Complex64::new(1.0, 0.0);
            let f = dft.forward(&e).unwrap();
            for (i, v) in f.iter().enumerate() {
                freq[(i, j)] = *v;
            }
        }
        let rep = gram_nondegeneracy(&[(&op, ChannelBasis::Fourier(&freq))]).unwrap();
        assert_abs_diff_eq!(rep.alpha_hat, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.beta_hat, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_operator_reports_violation() {
        let grid = gaussian_grid(1, 20, 9);
        let s = hyperbolic_cross(1, 2).unwrap();
        let t = sobolev_tensor_basis(&s, &grid, PolyFamily::HermiteProb).unwrap();
        let op = ChannelOperator::new(ChannelKind::PartialGradValue { scale: 0.0 }, grid);
        let rep = gram_nondegeneracy(&[(&op, ChannelBasis::Poly(&t))]).unwrap();
        assert_eq!(rep.alpha_hat, 0.0);
        assert!(rep.is_degenerate(1e-12));
    }

    #[test]
    fn grad_augmented_hermite_gram_near_identity() {
        let grid = gaussian_grid(2, 50_000, 21);
        let s = hyperbolic_cross(2, 4).unwrap();
        assert_eq!(s.len(), 10);
        let t = sobolev_tensor_basis(&s, &grid, PolyFamily::HermiteProb).unwrap();
        let op = ChannelOperator::new(ChannelKind::GradAugmented { value_scale: 1.0 }, grid);
        let rep = gram_nondegeneracy(&[(&op, ChannelBasis::Poly(&t))]).unwrap();
        assert!(rep.alpha_hat > 0.9 && rep.alpha_hat < 1.1, "{rep:?}");
        assert!(rep.beta_hat > 0.9 && rep.beta_hat < 1.1, "{rep:?}");
    }

    #[test]
    fn partial_gradient_pair_sums_to_unit_gram() {
        // Value channel scaled by 1/sqrt(2) plus grad-augmented channel
        // whose value row carries the same 1/sqrt(2): together they
        // reproduce the full Sobolev norm.
        let grid = gaussian_grid(1, 40_000, 33);
        let s = hyperbolic_cross(1, 3).unwrap();
        let t = sobolev_tensor_basis(&s, &grid, PolyFamily::HermiteProb).unwrap();
        let c0 = 0.5f64.sqrt();
        let value = ChannelOperator::new(ChannelKind::PartialGradValue { scale: c0 }, grid.clone());
        let grad = ChannelOperator::new(ChannelKind::GradAugmented { value_scale: c0 }, grid);
        let rep = gram_nondegeneracy(&[
            (&value, ChannelBasis::Poly(&t)),
            (&grad, ChannelBasis::Poly(&t)),
        ])
        .unwrap();
        assert!(rep.alpha_hat > 0.9 && rep.beta_hat < 1.1, "{rep:?}");
    }
}
