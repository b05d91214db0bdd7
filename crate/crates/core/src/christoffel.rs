//! Generalized Christoffel functions over finite grids.
//!
//! For a subspace spanned by basis elements measured through a channel
//! operator, the profile is computed by orthonormalising the stacked,
//! weight-scaled measurement table (QR for full-rank bases, truncated SVD
//! for redundant dictionaries) and summing squared orthonormal values per
//! atom. For scalar channels this is the Christoffel function exactly; for
//! vector channels it is the standard upper surrogate, which is what the
//! sampling constructions use. Also provides the running-max empirical
//! surrogate for forward-only generative models, the max-of-squares sparse
//! surrogate, hierarchical per-element measures and matrix leverage
//! scores.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::imaging::{GenerativeModel, UnitaryDft};
use crate::measure::{DiscreteMeasure, GridDomain, MeasureError, RngSpec};
use crate::operators::{ChannelOperator, ChannelKind, OperatorError, Partition};
use crate::polybasis::BasisEvalTable;

#[derive(Debug, Error)]
pub enum ChristoffelError {
    #[error("stacked block matrix has {0} rows, expected atoms x rows_per_atom = {1}")]
    BadStackShape(usize, usize),
    #[error("input is rank deficient; QR orthonormalisation needs full column rank")]
    RankDeficient,
    #[error(
        "model class is degenerate for this operator: no element has a nonzero measurement"
    )]
    DegenerateClass,
    #[error("profile integrates to {0}; optimal measure needs kappa > 0")]
    ZeroKappa(f64),
    #[error("matrix must have full column rank for leverage scores")]
    LeverageRankDeficient,
    #[error("empirical surrogate needs at least one iteration")]
    NoIterations,
    #[error("profile length {0} does not match domain size {1}")]
    ProfileDomainMismatch(usize, usize),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Imaging(#[from] crate::imaging::ImagingError),
}

/// How to orthonormalise the stacked measurement table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrthoMode {
    /// Householder QR; errors on rank deficiency.
    Qr,
    /// Truncated SVD dropping singular values with `s_i / s_1 <= delta_tol`.
    Svd { delta_tol: f64 },
}

/// Default SVD truncation threshold for numerically redundant dictionaries.
pub const DEFAULT_DELTA_TOL: f64 = 1e-6;

/// Columns orthonormal in the weighted discrete inner product, stacked
/// k-major: row `i + k * n_atoms` holds component `k` of atom `i`.
#[derive(Debug, Clone)]
pub struct OrthonormalFrame<T: ComplexField<RealField = f64>> {
    q: DMatrix<T>,
    rank: usize,
    singular_values: Vec<f64>,
    domain: Arc<GridDomain>,
    rows_per_atom: usize,
}

impl<T: ComplexField<RealField = f64>> OrthonormalFrame<T> {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn q(&self) -> &DMatrix<T> {
        &self.q
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn rows_per_atom(&self) -> usize {
        self.rows_per_atom
    }
}

/// Orthonormalises pre-scaled stacked blocks (rows already multiplied by
/// the square root of the atom's base weight, k-major layout).
pub fn orthonormalize_on_grid<T: ComplexField<RealField = f64>>(
    blocks: DMatrix<T>,
    domain: Arc<GridDomain>,
    rows_per_atom: usize,
    mode: OrthoMode,
) -> Result<OrthonormalFrame<T>, ChristoffelError> {
    let expected = domain.len() * rows_per_atom;
    if blocks.nrows() != expected {
        return Err(ChristoffelError::BadStackShape(blocks.nrows(), expected));
    }
    let n = blocks.ncols();
    let qr = blocks.qr();
    let (q, r) = (qr.q(), qr.r());
    match mode {
        OrthoMode::Qr => {
            let k = r.nrows().min(r.ncols());
            let mut dmin = f64::INFINITY;
            let mut dmax: f64 = 0.0;
            for i in 0..k {
                let v = r[(i, i)].clone().modulus();
                dmin = dmin.min(v);
                dmax = dmax.max(v);
            }
            if k < n || dmin <= dmax * 1e-12 || dmax == 0.0 {
                return Err(ChristoffelError::RankDeficient);
            }
            Ok(OrthonormalFrame {
                q,
                rank: n,
                singular_values: Vec::new(),
                domain,
                rows_per_atom,
            })
        }
        OrthoMode::Svd { delta_tol } => {
            let svd = r.svd(true, false);
            let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
            let s1 = sigma.first().copied().unwrap_or(0.0);
            let rank = if s1 == 0.0 {
                0
            } else {
                sigma.iter().filter(|&&s| s / s1 > delta_tol).count()
            };
            let u_r = svd.u.expect("svd with u requested");
            let q_trunc = &q * u_r.columns(0, rank).clone_owned();
            Ok(OrthonormalFrame {
                q: q_trunc,
                rank,
                singular_values: sigma,
                domain,
                rows_per_atom,
            })
        }
    }
}

/// Stacks the weight-scaled measurement table of a polynomial channel,
/// k-major, ready for [`orthonormalize_on_grid`].
pub fn stack_poly_channel(
    op: &ChannelOperator,
    table: &BasisEvalTable,
) -> Result<DMatrix<f64>, ChristoffelError> {
    let domain = &op.domain;
    if table.n_atoms() != domain.len() {
        return Err(ChristoffelError::BadStackShape(table.n_atoms(), domain.len()));
    }
    let n_atoms = domain.len();
    let n = table.n_basis();
    let channels: Vec<(usize, f64)> = match &op.kind {
        ChannelKind::PointEval => vec![(0, 1.0)],
        ChannelKind::PartialGradValue { scale } => vec![(0, *scale)],
        ChannelKind::GradAugmented { value_scale } => {
            if table.n_derivative_channels() != domain.dim() + 1 {
                return Err(ChristoffelError::Operator(OperatorError::MissingBasisData(
                    "derivative",
                )));
            }
            let mut v = vec![(0, *value_scale)];
            v.extend((1..=domain.dim()).map(|k| (k, 1.0)));
            v
        }
        _ => {
            return Err(ChristoffelError::Operator(OperatorError::MissingBasisData(
                "polynomial",
            )))
        }
    };
    let mut stacked = DMatrix::zeros(channels.len() * n_atoms, n);
    for (slot, (k, scale)) in channels.iter().enumerate() {
        let tab = table.table(*k);
        for i in 0..n_atoms {
            let w = domain.weight(i).sqrt() * scale;
            for j in 0..n {
                stacked[(slot * n_atoms + i, j)] = w * tab[(i, j)];
            }
        }
    }
    Ok(stacked)
}

/// Frame of a polynomial channel over its grid.
pub fn frame_from_poly_channel(
    op: &ChannelOperator,
    table: &BasisEvalTable,
    mode: OrthoMode,
) -> Result<OrthonormalFrame<f64>, ChristoffelError> {
    let stacked = stack_poly_channel(op, table)?;
    let rows_per_atom = stacked.nrows() / op.domain.len();
    orthonormalize_on_grid(stacked, op.domain.clone(), rows_per_atom, mode)
}

/// Frame of a Fourier partition channel. `freq_basis` holds the
/// frequency-domain values of the object basis, one column per element.
pub fn frame_from_fourier_channel(
    op: &ChannelOperator,
    freq_basis: &DMatrix<Complex64>,
    mode: OrthoMode,
) -> Result<OrthonormalFrame<Complex64>, ChristoffelError> {
    let partition = match &op.kind {
        ChannelKind::FourierPartition { partition } => partition,
        _ => {
            return Err(ChristoffelError::Operator(OperatorError::MissingBasisData(
                "fourier",
            )))
        }
    };
    let n_atoms = op.domain.len();
    let p = partition.max_block_len();
    let n = freq_basis.ncols();
    let m_blocks = partition.n_blocks() as f64;
    let mut stacked: DMatrix<Complex64> = DMatrix::zeros(p * n_atoms, n);
    for i in 0..n_atoms {
        let w = op.domain.weight(i).sqrt();
        for (row, &j) in partition.block(i).iter().enumerate() {
            let scale = w * m_blocks.sqrt() / (partition.overlap_counts()[j] as f64).sqrt();
            for col in 0..n {
                stacked[(row * n_atoms + i, col)] = freq_basis[(j, col)] * scale;
            }
        }
    }
    orthonormalize_on_grid(stacked, op.domain.clone(), p, mode)
}

/// Frame of pointwise dictionary values over a grid (the surrogate that
/// forgets any differential operator).
pub fn frame_from_dictionary(
    values: &DMatrix<f64>,
    domain: Arc<GridDomain>,
    mode: OrthoMode,
) -> Result<OrthonormalFrame<f64>, ChristoffelError> {
    if values.nrows() != domain.len() {
        return Err(ChristoffelError::BadStackShape(values.nrows(), domain.len()));
    }
    let mut scaled = values.clone();
    for i in 0..scaled.nrows() {
        let w = domain.weight(i).sqrt();
        scaled.row_mut(i).scale_mut(w);
    }
    orthonormalize_on_grid(scaled, domain, 1, mode)
}

/// Where a profile's values came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileSource {
    ExactSubspace,
    UpperSurrogate,
    Empirical,
    Sparse,
}

/// The values `K(theta)` over a grid together with `kappa = int K d rho`.
#[derive(Debug, Clone)]
pub struct ChristoffelProfile {
    domain: Arc<GridDomain>,
    k: Vec<f64>,
    kappa: f64,
    source: ProfileSource,
}

impl ChristoffelProfile {
    pub fn from_values(
        domain: Arc<GridDomain>,
        k: Vec<f64>,
        source: ProfileSource,
    ) -> Result<Self, ChristoffelError> {
        if k.len() != domain.len() {
            return Err(ChristoffelError::ProfileDomainMismatch(k.len(), domain.len()));
        }
        let kappa = k
            .iter()
            .zip(domain.base_weights())
            .map(|(ki, wi)| ki * wi)
            .sum();
        Ok(Self {
            domain,
            k,
            kappa,
            source,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.k
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn source(&self) -> ProfileSource {
        self.source
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn max_value(&self) -> f64 {
        self.k.iter().copied().fold(0.0, f64::max)
    }

    /// One row per atom: `atom, x_1.., K, pmf` where pmf is the optimal
    /// sampling mass `K w / kappa`.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(out, "atom")?;
        for k in 0..self.domain.dim() {
            write!(out, ",x{}", k + 1)?;
        }
        writeln!(out, ",K,pmf")?;
        for i in 0..self.k.len() {
            write!(out, "{i}")?;
            for v in self.domain.point(i) {
                write!(out, ",{v:.17e}")?;
            }
            let pmf = self.k[i] * self.domain.weight(i) / self.kappa;
            writeln!(out, ",{:.17e},{:.17e}", self.k[i], pmf)?;
        }
        Ok(())
    }
}

/// Per-atom squared mass of the orthonormal frame divided by the base
/// weight; exact for scalar channels, the standard upper surrogate
/// otherwise.
pub fn christoffel_from_frame<T: ComplexField<RealField = f64>>(
    frame: &OrthonormalFrame<T>,
) -> Result<ChristoffelProfile, ChristoffelError> {
    if frame.rank == 0 {
        return Err(ChristoffelError::DegenerateClass);
    }
    let n_atoms = frame.domain.len();
    let mut k = vec![0.0; n_atoms];
    for i in 0..n_atoms {
        let w = frame.domain.weight(i);
        if w == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for slot in 0..frame.rows_per_atom {
            let row = slot * n_atoms + i;
            for j in 0..frame.rank {
                acc += frame.q[(row, j)].clone().modulus_squared();
            }
        }
        k[i] = acc / w;
    }
    let source = if frame.rows_per_atom == 1 {
        ProfileSource::ExactSubspace
    } else {
        ProfileSource::UpperSurrogate
    };
    ChristoffelProfile::from_values(frame.domain.clone(), k, source)
}

/// The Christoffel sampling measure: mass proportional to `K` against the
/// base measure.
pub fn optimal_measure(profile: &ChristoffelProfile) -> Result<DiscreteMeasure, ChristoffelError> {
    if !(profile.kappa > 0.0) {
        return Err(ChristoffelError::ZeroKappa(profile.kappa));
    }
    let masses: Vec<f64> = profile
        .k
        .iter()
        .zip(profile.domain.base_weights())
        .map(|(ki, wi)| ki * wi)
        .collect();
    Ok(DiscreteMeasure::from_masses(
        profile.domain.clone(),
        &masses,
    )?)
}

/// The running-max empirical surrogate together with its per-iteration
/// snapshots.
#[derive(Debug, Clone)]
pub struct EmpiricalChristoffel {
    pub profile: ChristoffelProfile,
    pub snapshots: Vec<Vec<f64>>,
    pub skipped_zero_draws: usize,
}

impl EmpiricalChristoffel {
    /// Relative l2 distance of each snapshot to the final surrogate.
    pub fn relative_l2_convergence(&self) -> Vec<f64> {
        let last = self.snapshots.last().expect("at least one iteration");
        let norm: f64 = last.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.snapshots
            .iter()
            .map(|snap| {
                let diff: f64 = snap
                    .iter()
                    .zip(last)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if norm == 0.0 {
                    0.0
                } else {
                    diff / norm
                }
            })
            .collect()
    }
}

/// Runs the iterative difference-draw surrogate for a forward-only
/// generative model: each iteration draws two latent samples, pushes the
/// difference of their images through the partition operator and keeps the
/// per-block running maximum of the squared-norm ratio. Zero differences
/// are skipped.
pub fn empirical_christoffel(
    gen: &GenerativeModel,
    t: usize,
    partition: &Arc<Partition>,
    dft: &UnitaryDft,
    rng_spec: RngSpec,
) -> Result<EmpiricalChristoffel, ChristoffelError> {
    if t == 0 {
        return Err(ChristoffelError::NoIterations);
    }
    let m_blocks = partition.n_blocks();
    let domain = Arc::new(GridDomain::indexed(m_blocks, 1.0 / m_blocks as f64)?);
    let mut k = vec![0.0; m_blocks];
    let mut snapshots = Vec::with_capacity(t);
    let mut skipped = 0usize;
    let mut rng = rng_spec.rng();
    for _ in 0..t {
        let f1 = gen.forward_random(&mut rng)?;
        let f2 = gen.forward_random(&mut rng)?;
        let g: DVector<f64> = f1 - f2;
        let norm_sq = g.norm_squared();
        if norm_sq == 0.0 {
            skipped += 1;
            snapshots.push(k.clone());
            continue;
        }
        let freq = dft.forward_real(g.as_slice())?;
        for (i, block) in partition.blocks().iter().enumerate() {
            let mut acc = 0.0;
            for &j in block {
                acc += freq[j].norm_sqr() / partition.overlap_counts()[j] as f64;
            }
            let a_i = m_blocks as f64 * acc / norm_sq;
            if a_i > k[i] {
                k[i] = a_i;
            }
        }
        snapshots.push(k.clone());
    }
    let profile = ChristoffelProfile::from_values(domain, k, ProfileSource::Empirical)?;
    Ok(EmpiricalChristoffel {
        profile,
        snapshots,
        skipped_zero_draws: skipped,
    })
}

/// Max-of-squares surrogate `K(theta) = max_i |phi_i(theta)|^2`.
pub fn sparse_surrogate<T: ComplexField<RealField = f64>>(
    values: &DMatrix<T>,
    domain: Arc<GridDomain>,
) -> Result<ChristoffelProfile, ChristoffelError> {
    if values.ncols() == 0 {
        return Err(ChristoffelError::DegenerateClass);
    }
    if values.nrows() != domain.len() {
        return Err(ChristoffelError::ProfileDomainMismatch(
            values.nrows(),
            domain.len(),
        ));
    }
    let k: Vec<f64> = (0..values.nrows())
        .map(|i| {
            (0..values.ncols())
                .map(|j| values[(i, j)].clone().modulus_squared())
                .fold(0.0, f64::max)
        })
        .collect();
    ChristoffelProfile::from_values(domain, k, ProfileSource::Sparse)
}

/// One sampling measure per basis element, the i-th with density
/// proportional to the element's channel energy. Their densities sum to
/// the frame surrogate when the basis is orthonormal on the grid.
pub fn hierarchical_measures(
    op: &ChannelOperator,
    table: &BasisEvalTable,
) -> Result<Vec<DiscreteMeasure>, ChristoffelError> {
    let stacked = stack_poly_channel(op, table)?;
    let n_atoms = op.domain.len();
    let rows_per_atom = stacked.nrows() / n_atoms;
    let mut out = Vec::with_capacity(table.n_basis());
    for j in 0..table.n_basis() {
        // Rows are already scaled by sqrt(w), so the squared column slice
        // is exactly nu_j(z) w(z).
        let mut masses = vec![0.0; n_atoms];
        for slot in 0..rows_per_atom {
            for i in 0..n_atoms {
                let v = stacked[(slot * n_atoms + i, j)];
                masses[i] += v * v;
            }
        }
        out.push(DiscreteMeasure::from_masses(op.domain.clone(), &masses)?);
    }
    Ok(out)
}

/// Diagonal of the hat matrix via the quadratic-form formula
/// `tau_i = a_i^T (A^T A)^{-1} a_i`.
pub fn matrix_leverage_scores(a: &DMatrix<f64>) -> Result<Vec<f64>, ChristoffelError> {
    let gram = a.tr_mul(a);
    let chol = gram
        .clone()
        .cholesky()
        .ok_or(ChristoffelError::LeverageRankDeficient)?;
    // Guard against semi-definite inputs that slip through Cholesky.
    let n = gram.nrows();
    let mut dmax: f64 = 0.0;
    for i in 0..n {
        dmax = dmax.max(chol.l_dirty()[(i, i)].abs());
    }
    for i in 0..n {
        if chol.l_dirty()[(i, i)].abs() <= dmax * 1e-10 {
            return Err(ChristoffelError::LeverageRankDeficient);
        }
    }
    let mut tau = Vec::with_capacity(a.nrows());
    for i in 0..a.nrows() {
        let row = a.row(i).transpose();
        let solved = chol.solve(&row);
        tau.push(row.dot(&solved));
    }
    Ok(tau)
}
