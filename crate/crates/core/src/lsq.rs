//! Assembly and solution of the weighted empirical least-squares problem.
//!
//! Each sampled atom of channel `c` contributes a `p_c x n` row block
//! `(1 / sqrt(nu_c(theta) m_c)) L_c(theta)(Phi_j)` and the matching scaled
//! measurement on the right-hand side, so the squared residual of the
//! stacked system equals the weighted empirical risk. The solver always
//! reports the extreme singular values, which are the empirical
//! nondegeneracy constants of the draw.

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::measure::{DiscreteMeasure, RngSpec};
use crate::operators::{evaluate_block, ChannelBasis, ChannelKind, ChannelOperator, OperatorError};

#[derive(Debug, Error)]
pub enum LsqError {
    #[error("sampled atom {0} has zero sampling density")]
    ZeroDensityAtom(usize),
    #[error("system is empty")]
    EmptySystem,
    #[error("system contains non-finite entries")]
    NonFinite,
    #[error("target data does not provide {0}")]
    MissingTarget(&'static str),
    #[error("channel produced a complex block; assemble Fourier systems via the imaging module")]
    ComplexBlock,
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Target data for one channel.
pub enum TargetData<'a> {
    /// Raw derivative tables of the target over the channel grid, column
    /// `k` holding `d_k f*`; the channel's measurement map is applied
    /// during assembly.
    Derivatives(&'a DMatrix<f64>),
    /// Raw scalar observable per grid atom for `p_c = 1` kinds; any scalar
    /// factor the channel applies (`c_0`, `sqrt(lambda)`) is applied
    /// during assembly.
    PointValues(&'a DVector<f64>),
}

/// Additive measurement noise: i.i.d. Gaussian per component with the
/// given standard deviation, drawn from a dedicated stream so a zero level
/// reproduces the noiseless path exactly.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub level: f64,
    pub rng: RngSpec,
}

pub struct AssemblyChannel<'a> {
    pub op: &'a ChannelOperator,
    pub basis: ChannelBasis<'a>,
    pub measure: &'a DiscreteMeasure,
    pub atoms: &'a [usize],
    pub target: TargetData<'a>,
    pub noise: Option<NoiseSpec>,
}

/// Per-channel record of what was sampled and with which densities.
#[derive(Debug, Clone)]
pub struct ChannelSampleRecord {
    pub atoms: Vec<usize>,
    pub nus: Vec<f64>,
    pub output_dim: usize,
}

/// The stacked, weight-scaled design matrix and right-hand side.
#[derive(Debug, Clone)]
pub struct WeightedLsqSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub samples: Vec<ChannelSampleRecord>,
}

impl WeightedLsqSystem {
    pub fn from_parts(a: DMatrix<f64>, b: DVector<f64>, samples: Vec<ChannelSampleRecord>) -> Self {
        Self { a, b, samples }
    }
}

/// The measurement `L(theta)(f*)` of the target at one atom, before the
/// `1/sqrt(nu m)` weighting.
fn measurement_of_target(
    op: &ChannelOperator,
    target: &TargetData,
    atom: usize,
) -> Result<DVector<f64>, LsqError> {
    match (&op.kind, target) {
        (ChannelKind::PointEval, TargetData::Derivatives(t)) => Ok(DVector::from_element(1, t[(atom, 0)])),
        (ChannelKind::PointEval, TargetData::PointValues(v)) => Ok(DVector::from_element(1, v[atom])),
        (ChannelKind::PartialGradValue { scale }, TargetData::Derivatives(t)) => {
            Ok(DVector::from_element(1, scale * t[(atom, 0)]))
        }
        (ChannelKind::PartialGradValue { scale }, TargetData::PointValues(v)) => {
            Ok(DVector::from_element(1, scale * v[atom]))
        }
        (ChannelKind::GradAugmented { value_scale }, TargetData::Derivatives(t)) => {
            let d = op.domain.dim();
            let mut y = DVector::zeros(d + 1);
            y[0] = value_scale * t[(atom, 0)];
            for k in 1..=d {
                y[k] = t[(atom, k)];
            }
            Ok(y)
        }
        (ChannelKind::CollocInterior { .. }, TargetData::PointValues(v)) => {
            Ok(DVector::from_element(1, v[atom]))
        }
        (ChannelKind::CollocBoundary { lambda }, TargetData::PointValues(v)) => {
            Ok(DVector::from_element(1, lambda.sqrt() * v[atom]))
        }
        _ => Err(LsqError::MissingTarget("a compatible data layout")),
    }
}

/// Builds the stacked weighted system from per-channel samples.
pub fn assemble_system(channels: &[AssemblyChannel]) -> Result<WeightedLsqSystem, LsqError> {
    let mut n_cols = 0usize;
    let mut n_rows = 0usize;
    for ch in channels {
        n_rows += ch.atoms.len() * ch.op.output_dim();
    }
    if n_rows == 0 {
        return Err(LsqError::EmptySystem);
    }
    let mut a: Option<DMatrix<f64>> = None;
    let mut b = DVector::zeros(n_rows);
    let mut records = Vec::with_capacity(channels.len());
    let mut row0 = 0usize;
    for ch in channels {
        let m_c = ch.atoms.len();
        let p_c = ch.op.output_dim();
        let mut noise_rng = ch.noise.map(|nz| nz.rng.rng());
        let mut nus = Vec::with_capacity(m_c);
        for &atom in ch.atoms {
            let nu = ch.measure.nu_at(atom);
            if nu <= 0.0 {
                return Err(LsqError::ZeroDensityAtom(atom));
            }
            nus.push(nu);
            let u = 1.0 / (nu * m_c as f64).sqrt();
            let block = match evaluate_block(ch.op, atom, &ch.basis)? {
                crate::operators::Block::Real(m) => m,
                crate::operators::Block::Complex(_) => return Err(LsqError::ComplexBlock),
            };
            if a.is_none() {
                n_cols = block.ncols();
                a = Some(DMatrix::zeros(n_rows, n_cols));
            }
            let a_mut = a.as_mut().unwrap();
            let mut y = measurement_of_target(ch.op, &ch.target, atom)?;
            if let (Some(rng), Some(nz)) = (noise_rng.as_mut(), ch.noise) {
                if nz.level > 0.0 {
                    use rand::Rng as _;
                    for k in 0..p_c {
                        let e: f64 = rng.sample(StandardNormal);
                        y[k] += nz.level * e;
                    }
                }
            }
            for k in 0..p_c {
                for j in 0..n_cols {
                    a_mut[(row0 + k, j)] = u * block[(k, j)];
                }
                b[row0 + k] = u * y[k];
            }
            row0 += p_c;
        }
        records.push(ChannelSampleRecord {
            atoms: ch.atoms.to_vec(),
            nus,
            output_dim: p_c,
        });
    }
    Ok(WeightedLsqSystem {
        a: a.ok_or(LsqError::EmptySystem)?,
        b,
        samples: records,
    })
}

/// Minimum-norm least-squares fit with its empirical nondegeneracy
/// constants (`alpha' = sigma_min(A)`, `beta' = sigma_max(A)`).
#[derive(Debug, Clone)]
pub struct FitResult {
    pub coeffs: DVector<f64>,
    pub residual: f64,
    pub alpha_prime: f64,
    pub beta_prime: f64,
    pub numerical_rank: usize,
    /// Gap to the true minimum of the objective; zero for the exact solves
    /// performed here.
    pub objective_gap: f64,
}

impl FitResult {
    pub fn cond(&self) -> f64 {
        if self.alpha_prime > 0.0 {
            self.beta_prime / self.alpha_prime
        } else {
            f64::INFINITY
        }
    }
}

/// Relative cutoff below which singular values are treated as zero when
/// forming the pseudo-inverse.
const PINV_RCOND: f64 = 1e-12;

pub fn solve_system(sys: &WeightedLsqSystem) -> Result<FitResult, LsqError> {
    if sys.a.nrows() == 0 || sys.a.ncols() == 0 {
        return Err(LsqError::EmptySystem);
    }
    if sys.a.iter().any(|v| !v.is_finite()) || sys.b.iter().any(|v| !v.is_finite()) {
        return Err(LsqError::NonFinite);
    }
    // Householder QR first, then SVD of the small triangular factor; the
    // singular values agree with those of A.
    let qr = sys.a.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let svd = r.svd(true, true);
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let s1 = sigma.first().copied().unwrap_or(0.0);
    let rank = if s1 == 0.0 {
        0
    } else {
        sigma.iter().filter(|&&s| s / s1 > PINV_RCOND).count()
    };
    let qtb = q.tr_mul(&sys.b);
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let utb = u.tr_mul(&qtb);
    let mut scaled = DVector::zeros(sigma.len());
    for i in 0..rank {
        scaled[i] = utb[i] / sigma[i];
    }
    let coeffs = vt.tr_mul(&scaled);
    let residual = (&sys.a * &coeffs - &sys.b).norm();
    Ok(FitResult {
        coeffs,
        residual,
        alpha_prime: sigma.last().copied().unwrap_or(0.0),
        beta_prime: s1,
        numerical_rank: rank,
        objective_gap: 0.0,
    })
}

/// Radial projection onto the ball of the given norm: identity inside,
/// rescaling outside.
pub fn shrink(coeffs: &DVector<f64>, sigma: f64) -> DVector<f64> {
    assert!(sigma > 0.0, "shrinkage bound must be positive");
    let norm = coeffs.norm();
    if norm <= sigma {
        coeffs.clone()
    } else {
        coeffs * (sigma / norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::christoffel::{
        christoffel_from_frame, frame_from_poly_channel, optimal_measure, OrthoMode,
    };
    use crate::measure::{monte_carlo_grid, sample_atoms, DiscreteMeasure, GridDist, GridDomain};
    use crate::operators::{ChannelKind, ChannelOperator};
    use crate::polybasis::{hyperbolic_cross, sobolev_tensor_basis, BasisEvalTable, PolyFamily};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn hermite_setup(
        d: usize,
        order: usize,
        n_pts: usize,
        seed: u64,
    ) -> (Arc<GridDomain>, BasisEvalTable, ChannelOperator) {
        let grid = Arc::new(
            monte_carlo_grid(GridDist::Gaussian(d), n_pts, RngSpec::new(seed)).unwrap(),
        );
        let set = hyperbolic_cross(d, order).unwrap();
        let table = sobolev_tensor_basis(&set, &grid, PolyFamily::HermiteProb).unwrap();
        let op = ChannelOperator::new(ChannelKind::GradAugmented { value_scale: 1.0 }, grid.clone());
        (grid, table, op)
    }

    /// Derivative tables (columns k = 0..d) of a target in the basis span.
    fn target_from_coeffs(table: &BasisEvalTable, coeffs: &DVector<f64>) -> DMatrix<f64> {
        let n_atoms = table.n_atoms();
        let d1 = table.n_derivative_channels();
        let mut t = DMatrix::zeros(n_atoms, d1);
        for k in 0..d1 {
            let col = table.table(k) * coeffs;
            t.set_column(k, &col);
        }
        t
    }

    #[test]
    fn constant_basis_mcs_system_layout() {
        let (grid, table, op) = hermite_setup(1, 0, 16, 1);
        let mu = DiscreteMeasure::base_measure(grid.clone()).unwrap();
        let coeffs = DVector::from_element(1, 1.0);
        let target = target_from_coeffs(&table, &coeffs);
        // nu = 1 here only because the base weights sum to one.
        let sys = assemble_system(&[AssemblyChannel {
            op: &op,
            basis: ChannelBasis::Poly(&table),
            measure: &mu,
            atoms: &[3, 8],
            target: TargetData::Derivatives(&target),
            noise: None,
        }])
        .unwrap();
        let r = 0.5f64.sqrt();
        assert_eq!(sys.a.nrows(), 4);
        assert_eq!(sys.a.ncols(), 1);
        assert_abs_diff_eq!(sys.a[(0, 0)], r, epsilon = 1e-14);
        assert_abs_diff_eq!(sys.a[(1, 0)], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sys.a[(2, 0)], r, epsilon = 1e-14);
        assert_abs_diff_eq!(sys.a[(3, 0)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn in_span_target_gives_consistent_rhs() {
        let (grid, table, op) = hermite_setup(2, 3, 400, 2);
        let mu = DiscreteMeasure::base_measure(grid.clone()).unwrap();
        let n = table.n_basis();
        let coeffs = DVector::from_fn(n, |i, _| (i as f64 * 0.7).sin());
        let target = target_from_coeffs(&table, &coeffs);
        let atoms = sample_atoms(&mu, 50, RngSpec::new(3));
        let sys = assemble_system(&[AssemblyChannel {
            op: &op,
            basis: ChannelBasis::Poly(&table),
            measure: &mu,
            atoms: &atoms,
            target: TargetData::Derivatives(&target),
            noise: None,
        }])
        .unwrap();
        let expect = &sys.a * &coeffs;
        assert!((expect - &sys.b).norm() < 1e-12);
    }

    #[test]
    fn noise_enters_rows_with_the_sampling_weight() {
        let (grid, table, op) = hermite_setup(1, 2, 64, 4);
        let mu = DiscreteMeasure::base_measure(grid.clone()).unwrap();
        let coeffs = DVector::from_fn(3, |i, _| i as f64 + 1.0);
        let target = target_from_coeffs(&table, &coeffs);
        let atoms = vec![0usize, 5, 9];
        let noise = NoiseSpec {
            level: 0.3,
            rng: RngSpec::with_stream(10, 2),
        };
        let clean = assemble_system(&[AssemblyChannel {
            op: &op,
            basis: ChannelBasis::Poly(&table),
            measure: &mu,
            atoms: &atoms,
            target: TargetData::Derivatives(&target),
            noise: None,
        }])
        .unwrap();
        let noisy = assemble_system(&[AssemblyChannel {
            op: &op,
            basis: ChannelBasis::Poly(&table),
            measure: &mu,
            atoms: &atoms,
            target: TargetData::Derivatives(&target),
            noise: Some(noise),
        }])
        .unwrap();
        assert_eq!(clean.a, noisy.a);
        // Reconstruct the raw noise sequence and compare rowwise.
        let mut rng = noise.rng.rng();
        use rand::Rng as _;
        let m = atoms.len() as f64;
        let mut row = 0usize;
        for &atom in &atoms {
            let nu = mu.nu_at(atom);
            let u = 1.0 / (nu * m).sqrt();
            for _ in 0..2 {
                let e: f64 = rng.sample(StandardNormal);
                assert_abs_diff_eq!(
                    noisy.b[row],
                    clean.b[row] + u * 0.3 * e,
                    epsilon = 1e-13
                );
                row += 1;
            }
        }
        // Zero level reproduces the clean path bit for bit.
        let zero = assemble_system(&[AssemblyChannel {
            op: &op,
            basis: ChannelBasis::Poly(&table),
            measure: &mu,
            atoms: &atoms,
            target: TargetData::Derivatives(&target),
            noise: Some(NoiseSpec {
                level: 0.0,
                rng: noise.rng,
            }),
        }])
        .unwrap();
        assert_eq!(zero.b, clean.b);
    }

    #[test]
    fn identity_system_solves_exactly() {
        let sys = WeightedLsqSystem::from_parts(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![3.0, 4.0]),
            vec![],
        );
        let fit = solve_system(&sys).unwrap();
        assert_abs_diff_eq!(fit.coeffs[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fit.coeffs[1], 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fit.residual, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fit.cond(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn consistent_overdetermined_residual_vanishes() {
        let mut rng = RngSpec::new(6).rng();
        use rand::Rng as _;
        let a = DMatrix::from_fn(40, 7, |_, _| rng.random_range(-1.0..1.0));
        let x = DVector::from_fn(7, |i, _| (i as f64) - 3.0);
        let b = &a * &x;
        let bnorm = b.norm();
        let fit = solve_system(&WeightedLsqSystem::from_parts(a, b, vec![])).unwrap();
        assert!(fit.residual <= 1e-10 * bnorm);
        assert!((fit.coeffs - x).norm() < 1e-10);
    }

    #[test]
    fn matches_normal_equations_oracle() {
        let mut rng = RngSpec::new(7).rng();
        use rand::Rng as _;
        let a = DMatrix::from_fn(100, 10, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(100, |_, _| rng.random_range(-1.0..1.0));
        let fit = solve_system(&WeightedLsqSystem::from_parts(a.clone(), b.clone(), vec![])).unwrap();
        let gram = a.tr_mul(&a);
        let rhs = a.tr_mul(&b);
        let oracle = gram.cholesky().unwrap().solve(&rhs);
        assert!((fit.coeffs - oracle).norm() < 1e-8);
    }

    #[test]
    fn rank_deficient_takes_minimum_norm_solution() {
        // Two identical columns: solutions form a line; min-norm splits
        // the weight evenly.
        let a = DMatrix::from_fn(5, 2, |i, _| 1.0 + i as f64);
        let x_true = DVector::from_vec(vec![2.0, 0.0]);
        let b = &a * &x_true;
        let fit = solve_system(&WeightedLsqSystem::from_parts(a, b, vec![])).unwrap();
        assert_eq!(fit.numerical_rank, 1);
        assert_abs_diff_eq!(fit.coeffs[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coeffs[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn shrink_rescales_only_outside_the_ball() {
        let f = DVector::from_vec(vec![2.0, 0.0]);
        let shrunk = shrink(&f, 1.0);
        assert_abs_diff_eq!(shrunk[0], 1.0, epsilon = 1e-14);
        let g = DVector::from_vec(vec![0.3, 0.4]);
        assert_eq!(shrink(&g, 1.0), g);
    }

    #[test]
    fn shrink_is_a_contraction() {
        let mut rng = RngSpec::new(8).rng();
        use rand::Rng as _;
        for _ in 0..200 {
            let f = DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
            let g = DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
            let sigma = rng.random_range(0.1..2.0);
            let lhs = (shrink(&f, sigma) - shrink(&g, sigma)).norm();
            let rhs = (&f - &g).norm();
            assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn exact_recovery_for_in_space_targets() {
        let (_grid, table, op) = hermite_setup(2, 4, 3000, 9);
        let frame = frame_from_poly_channel(&op, &table, OrthoMode::Qr).unwrap();
        let profile = christoffel_from_frame(&frame).unwrap();
        let mu = optimal_measure(&profile).unwrap();
        let n = table.n_basis();
        let coeffs = DVector::from_fn(n, |i, _| ((i * i) as f64 * 0.13).cos());
        let target = target_from_coeffs(&table, &coeffs);
        let m = 4 * n;
        let atoms = sample_atoms(&mu, m, RngSpec::new(10));
        let sys = assemble_system(&[AssemblyChannel {
            op: &op,
            basis: ChannelBasis::Poly(&table),
            measure: &mu,
            atoms: &atoms,
            target: TargetData::Derivatives(&target),
            noise: None,
        }])
        .unwrap();
        let fit = solve_system(&sys).unwrap();
        assert!(fit.cond() < 1e6, "cond {}", fit.cond());
        assert!((fit.coeffs - coeffs).norm() < 1e-8);
    }

    #[test]
    fn weight_rescaling_leaves_fit_unchanged() {
        let (grid, table, op) = hermite_setup(1, 3, 500, 11);
        let scaled_grid = Arc::new(grid.rescaled(7.5).unwrap());
        let set = table.index_set().clone();
        let scaled_table =
            sobolev_tensor_basis(&set, &scaled_grid, PolyFamily::HermiteProb).unwrap();
        let scaled_op = ChannelOperator::new(
            ChannelKind::GradAugmented { value_scale: 1.0 },
            scaled_grid.clone(),
        );
        let coeffs = DVector::from_fn(4, |i, _| 1.0 / (i + 1) as f64);
        let target = target_from_coeffs(&table, &coeffs);
        let atoms: Vec<usize> = vec![1, 17, 33, 100, 256, 401];

        let fit_of = |op: &ChannelOperator, table: &BasisEvalTable, grid: &Arc<GridDomain>| {
            let frame = frame_from_poly_channel(op, table, OrthoMode::Qr).unwrap();
            let profile = christoffel_from_frame(&frame).unwrap();
            let mu = optimal_measure(&profile).unwrap();
            let _ = grid;
            let sys = assemble_system(&[AssemblyChannel {
                op,
                basis: ChannelBasis::Poly(table),
                measure: &mu,
                atoms: &atoms,
                target: TargetData::Derivatives(&target),
                noise: None,
            }])
            .unwrap();
            solve_system(&sys).unwrap()
        };
        let base = fit_of(&op, &table, &grid);
        let scaled = fit_of(&scaled_op, &scaled_table, &scaled_grid);
        assert!((base.coeffs - scaled.coeffs).norm() < 1e-10);
    }

    #[test]
    fn empirical_nondegeneracy_bracket_mostly_holds() {
        // Theory-scale sample counts with the optimal measure keep the
        // squared extreme singular values inside [(1-e)a, (1+e)b] with
        // e = 1/2 in at least 95% of trials.
        let (_grid, table, op) = hermite_setup(1, 4, 2000, 12);
        let n = table.n_basis();
        let frame = frame_from_poly_channel(&op, &table, OrthoMode::Qr).unwrap();
        let profile = christoffel_from_frame(&frame).unwrap();
        let mu = optimal_measure(&profile).unwrap();
        let rep = crate::operators::gram_nondegeneracy(&[(
            &op,
            ChannelBasis::Poly(&table),
        )])
        .unwrap();
        let delta: f64 = 0.05;
        let c_quarter = ((1.25f64.ln() * 1.25) - 0.25).recip();
        let m = (c_quarter * profile.kappa() * (2.0 * n as f64 / delta).ln()).ceil() as usize;
        let coeffs = DVector::zeros(n);
        let target = target_from_coeffs(&table, &coeffs);
        let trials = 40;
        let mut ok = 0;
        for t in 0..trials {
            let atoms = sample_atoms(&mu, m, RngSpec::with_stream(13, t));
            let sys = assemble_system(&[AssemblyChannel {
                op: &op,
                basis: ChannelBasis::Poly(&table),
                measure: &mu,
                atoms: &atoms,
                target: TargetData::Derivatives(&target),
                noise: None,
            }])
            .unwrap();
            let fit = solve_system(&sys).unwrap();
            let lo = fit.alpha_prime.powi(2) >= 0.5 * rep.alpha_hat;
            let hi = fit.beta_prime.powi(2) <= 1.5 * rep.beta_hat;
            if lo && hi {
                ok += 1;
            }
        }
        assert!(
            ok * 100 >= trials * 95,
            "bracket held in only {ok}/{trials} trials"
        );
    }
}
