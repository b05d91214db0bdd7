//! Christoffel adaptive sampling: alternate between extracting the
//! subspace spanned by a trainable model's feature dictionary, sampling
//! new collocation points from that subspace's Christoffel measure, and
//! retraining warm-started on the enlarged nested sample set.
//!
//! The sampling measures use the pointwise surrogate that forgets the
//! differential operator: per channel, the dictionary values over the
//! channel grid are orthonormalised by a truncated SVD (dictionaries are
//! often numerically redundant) and the per-atom squared mass gives the
//! profile. The concrete instantiation is a 1-D Poisson collocation
//! problem `-u'' = f` on `(-1, 1)` with a tanh feature dictionary whose
//! derivatives are available in closed form.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use thiserror::Error;

use crate::christoffel::{
    christoffel_from_frame, frame_from_dictionary, optimal_measure, ChristoffelError,
    ChristoffelProfile, OrthoMode,
};
use crate::lsq::{
    assemble_system, solve_system, AssemblyChannel, FitResult, LsqError, TargetData,
};
use crate::measure::{
    sample_atoms, DiscreteMeasure, GridDomain, MeasureError, RngSpec,
};
use crate::operators::{ChannelBasis, ChannelKind, ChannelOperator, DictionaryEval, DiffOp};

#[derive(Debug, Error)]
pub enum CasError {
    #[error("schedule for channel {0} must be strictly increasing and start above zero")]
    BadSchedule(usize),
    #[error("schedule has {0} entries but the run asks for {1} iterations")]
    ScheduleTooShort(usize, usize),
    #[error("model has {0} channels but the schedule describes {1}")]
    ChannelCountMismatch(usize, usize),
    #[error("dictionary is numerically rank zero at iteration {iteration}, channel {channel}")]
    DegenerateDictionary { iteration: usize, channel: usize },
    #[error("retained sample at atom {0} has zero density under the current measure")]
    StaleSampleDensity(usize),
    #[error(transparent)]
    Christoffel(#[from] ChristoffelError),
    #[error(transparent)]
    Lsq(#[from] LsqError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Per-channel sample growth across iterations.
#[derive(Debug, Clone)]
pub enum ChannelSchedule {
    /// Cumulative counts `m^(1) < m^(2) < ..`, nested draws.
    Growing(Vec<usize>),
    /// Every grid atom, every iteration (deterministic full sampling with
    /// base-measure weights).
    Full,
}

#[derive(Debug, Clone)]
pub struct CasSchedule {
    pub per_channel: Vec<ChannelSchedule>,
    pub iterations: usize,
}

impl CasSchedule {
    pub fn validate(&self) -> Result<(), CasError> {
        for (c, ch) in self.per_channel.iter().enumerate() {
            if let ChannelSchedule::Growing(counts) = ch {
                if counts.len() < self.iterations {
                    return Err(CasError::ScheduleTooShort(counts.len(), self.iterations));
                }
                let mut prev = 0usize;
                for &m in counts {
                    if m <= prev {
                        return Err(CasError::BadSchedule(c));
                    }
                    prev = m;
                }
            }
        }
        Ok(())
    }
}

/// Samples handed to the model's training step: the retained atoms of one
/// channel and the measure whose density weights them this iteration.
pub struct ChannelSamples<'a> {
    pub atoms: &'a [usize],
    pub measure: &'a DiscreteMeasure,
}

/// The two capabilities the adaptive loop needs from a model: read the
/// current feature dictionary per channel, and retrain warm-started on
/// weighted samples.
pub trait TrainableModel {
    fn n_channels(&self) -> usize;
    fn channel_grid(&self, channel: usize) -> &Arc<GridDomain>;
    /// Pointwise values of the dictionary over the channel grid,
    /// `n_atoms x n_features`.
    fn dictionary_values(&self, channel: usize) -> DMatrix<f64>;
    fn n_features(&self) -> usize;
    fn train(&mut self, samples: &[ChannelSamples]) -> Result<FitResult, CasError>;
    /// Prediction at 1-D points (the fixture is univariate).
    fn predict(&self, points: &[f64]) -> DVector<f64>;
}

/// Held-out evaluation data for the trace.
pub struct TestSpec {
    pub points: Vec<f64>,
    pub truth: Vec<f64>,
}

impl TestSpec {
    fn relative_error(&self, prediction: &DVector<f64>) -> f64 {
        let num: f64 = prediction
            .iter()
            .zip(&self.truth)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = self.truth.iter().map(|v| v * v).sum::<f64>().sqrt();
        num / den
    }
}

#[derive(Debug, Clone)]
pub struct CasIterationRecord {
    pub sample_atoms: Vec<Vec<usize>>,
    pub measures: Vec<DiscreteMeasure>,
    pub ranks: Vec<usize>,
    pub test_error: f64,
    pub fit_residual: f64,
    pub fit_cond: f64,
}

#[derive(Debug, Clone, Default)]
pub struct CasTrace {
    pub iterations: Vec<CasIterationRecord>,
}

/// Pointwise-surrogate profiles of a dictionary over each channel grid.
pub fn surrogate_channel_profiles(
    dictionaries: &[(&DMatrix<f64>, &Arc<GridDomain>)],
    delta_tol: f64,
) -> Result<Vec<ChristoffelProfile>, ChristoffelError> {
    dictionaries
        .iter()
        .map(|(values, grid)| {
            let frame = frame_from_dictionary(
                values,
                (*grid).clone(),
                OrthoMode::Svd { delta_tol },
            )?;
            christoffel_from_frame(&frame)
        })
        .collect()
}

/// Runs the adaptive loop. Measures are constructed from the model state
/// entering each iteration; per-channel draws are nested; retained samples
/// are reweighted by the current iteration's density.
pub fn cas_run<M: TrainableModel>(
    model: &mut M,
    schedule: &CasSchedule,
    delta_tol: f64,
    rng: RngSpec,
    test: &TestSpec,
) -> Result<CasTrace, CasError> {
    schedule.validate()?;
    if model.n_channels() != schedule.per_channel.len() {
        return Err(CasError::ChannelCountMismatch(
            model.n_channels(),
            schedule.per_channel.len(),
        ));
    }
    let n_ch = model.n_channels();
    let mut retained: Vec<Vec<usize>> = vec![Vec::new(); n_ch];
    let mut trace = CasTrace::default();
    for l in 1..=schedule.iterations {
        let mut measures = Vec::with_capacity(n_ch);
        let mut ranks = Vec::with_capacity(n_ch);
        for c in 0..n_ch {
            let grid = model.channel_grid(c).clone();
            let dict = model.dictionary_values(c);
            let frame =
                frame_from_dictionary(&dict, grid.clone(), OrthoMode::Svd { delta_tol })?;
            if frame.rank() == 0 {
                return Err(CasError::DegenerateDictionary {
                    iteration: l,
                    channel: c,
                });
            }
            ranks.push(frame.rank());
            let measure = match &schedule.per_channel[c] {
                ChannelSchedule::Growing(counts) => {
                    let profile = christoffel_from_frame(&frame)?;
                    let mu = optimal_measure(&profile)?;
                    let target = counts[l - 1];
                    let new = target.saturating_sub(retained[c].len());
                    let draws =
                        sample_atoms(&mu, new, rng.substream(&[l as u64, c as u64]));
                    retained[c].extend(draws);
                    mu
                }
                ChannelSchedule::Full => {
                    if retained[c].is_empty() {
                        retained[c] = (0..grid.len()).collect();
                    }
                    DiscreteMeasure::base_measure(grid.clone())?
                }
            };
            for &atom in &retained[c] {
                if measure.nu_at(atom) <= 0.0 {
                    return Err(CasError::StaleSampleDensity(atom));
                }
            }
            measures.push(measure);
        }
        let batches: Vec<ChannelSamples> = (0..n_ch)
            .map(|c| ChannelSamples {
                atoms: &retained[c],
                measure: &measures[c],
            })
            .collect();
        let fit = model.train(&batches)?;
        let prediction = model.predict(&test.points);
        trace.iterations.push(CasIterationRecord {
            sample_atoms: retained.clone(),
            measures,
            ranks,
            test_error: test.relative_error(&prediction),
            fit_residual: fit.residual,
            fit_cond: fit.cond(),
        });
    }
    Ok(trace)
}

/// A tanh feature set `h_j(x) = tanh(w_j x + b_j)`.
#[derive(Debug, Clone)]
pub struct TanhFeatures {
    pub w: DVector<f64>,
    pub b: DVector<f64>,
}

/// Values, first and second derivatives of each feature over a point set.
#[derive(Debug, Clone)]
pub struct FeatureTables {
    pub values: DMatrix<f64>,
    pub first: DMatrix<f64>,
    pub second: DMatrix<f64>,
}

impl TanhFeatures {
    pub fn random(n_feat: usize, w_scale: f64, rng: RngSpec) -> Self {
        let mut r = rng.rng();
        Self {
            w: DVector::from_fn(n_feat, |_, _| r.random_range(-w_scale..w_scale)),
            b: DVector::from_fn(n_feat, |_, _| r.random_range(-1.0..1.0)),
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn eval(&self, points: &[f64]) -> FeatureTables {
        let n = self.len();
        let mut values = DMatrix::zeros(points.len(), n);
        let mut first = DMatrix::zeros(points.len(), n);
        let mut second = DMatrix::zeros(points.len(), n);
        for (i, &x) in points.iter().enumerate() {
            for j in 0..n {
                let (w, b) = (self.w[j], self.b[j]);
                let t = (w * x + b).tanh();
                let s = 1.0 - t * t;
                values[(i, j)] = t;
                first[(i, j)] = s * w;
                second[(i, j)] = -2.0 * t * s * w * w;
            }
        }
        FeatureTables {
            values,
            first,
            second,
        }
    }
}

/// Feature tables over a 1-D grid's atoms.
pub fn poisson_feature_dictionary(features: &TanhFeatures, grid: &GridDomain) -> FeatureTables {
    let points: Vec<f64> = (0..grid.len()).map(|i| grid.point(i)[0]).collect();
    features.eval(&points)
}

/// Manufactured Poisson targets on `(-1, 1)` with zero boundary values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoissonTarget {
    /// `u(x) = 1 - x^2`, so `-u'' = 2`.
    Quadratic,
    /// `u(x) = sin(pi x)`, so `-u'' = pi^2 sin(pi x)`.
    SinePi,
}

impl PoissonTarget {
    pub fn solution(&self, x: f64) -> f64 {
        match self {
            PoissonTarget::Quadratic => 1.0 - x * x,
            PoissonTarget::SinePi => (std::f64::consts::PI * x).sin(),
        }
    }

    pub fn rhs(&self, x: f64) -> f64 {
        match self {
            PoissonTarget::Quadratic => 2.0,
            PoissonTarget::SinePi => {
                std::f64::consts::PI.powi(2) * (std::f64::consts::PI * x).sin()
            }
        }
    }
}

/// How many closed-form gradient steps to take on the feature parameters
/// after each coefficient solve; zero freezes the dictionary.
#[derive(Debug, Clone, Copy)]
pub struct AdaptConfig {
    pub steps: usize,
    pub step_size: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            step_size: 1e-2,
        }
    }
}

/// Single-hidden-layer collocation model for `-u'' = f`, `u(+-1) = 0`:
/// channel 0 is the interior collocation operator, channel 1 the
/// two-atom boundary channel (always fully sampled by the default
/// schedule).
pub struct PoissonCollocationModel {
    features: TanhFeatures,
    coeffs: DVector<f64>,
    grids: [Arc<GridDomain>; 2],
    tables: [FeatureTables; 2],
    rhs: DVector<f64>,
    boundary_values: DVector<f64>,
    lambda: f64,
    adapt: AdaptConfig,
}

impl PoissonCollocationModel {
    pub fn new(
        features: TanhFeatures,
        interior: Arc<GridDomain>,
        target: PoissonTarget,
        lambda: f64,
        adapt: AdaptConfig,
    ) -> Result<Self, CasError> {
        let boundary = Arc::new(GridDomain::new(vec![-1.0, 1.0], 1, vec![0.5, 0.5])?);
        let rhs = DVector::from_fn(interior.len(), |i, _| target.rhs(interior.point(i)[0]));
        let boundary_values =
            DVector::from_fn(2, |i, _| target.solution(boundary.point(i)[0]));
        let tables = [
            poisson_feature_dictionary(&features, &interior),
            poisson_feature_dictionary(&features, &boundary),
        ];
        let n = features.len();
        Ok(Self {
            features,
            coeffs: DVector::zeros(n),
            grids: [interior, boundary],
            tables,
            rhs,
            boundary_values,
            lambda,
            adapt,
        })
    }

    pub fn features(&self) -> &TanhFeatures {
        &self.features
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn interior_rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    fn channel_ops(&self) -> [ChannelOperator; 2] {
        [
            ChannelOperator::new(
                ChannelKind::CollocInterior {
                    op: DiffOp::NegSecondDeriv1D,
                },
                self.grids[0].clone(),
            ),
            ChannelOperator::new(
                ChannelKind::CollocBoundary {
                    lambda: self.lambda,
                },
                self.grids[1].clone(),
            ),
        ]
    }

    fn refresh_tables(&mut self) {
        self.tables = [
            poisson_feature_dictionary(&self.features, &self.grids[0]),
            poisson_feature_dictionary(&self.features, &self.grids[1]),
        ];
    }

    fn solve_coeffs(&mut self, samples: &[ChannelSamples]) -> Result<FitResult, CasError> {
        let ops = self.channel_ops();
        let channels = [
            AssemblyChannel {
                op: &ops[0],
                basis: ChannelBasis::Dictionary(DictionaryEval {
                    values: &self.tables[0].values,
                    second_derivs: Some(&self.tables[0].second),
                }),
                measure: samples[0].measure,
                atoms: samples[0].atoms,
                target: TargetData::PointValues(&self.rhs),
                noise: None,
            },
            AssemblyChannel {
                op: &ops[1],
                basis: ChannelBasis::Dictionary(DictionaryEval {
                    values: &self.tables[1].values,
                    second_derivs: Some(&self.tables[1].second),
                }),
                measure: samples[1].measure,
                atoms: samples[1].atoms,
                target: TargetData::PointValues(&self.boundary_values),
                noise: None,
            },
        ];
        let sys = assemble_system(&channels)?;
        let fit = solve_system(&sys)?;
        self.coeffs = fit.coeffs.clone();
        Ok(fit)
    }

    /// One gradient step on `(w, b)` of the weighted collocation
    /// objective with the output coefficients held fixed.
    fn adapt_features(&mut self, samples: &[ChannelSamples]) {
        let n = self.features.len();
        let mut grad_w = DVector::zeros(n);
        let mut grad_b = DVector::zeros(n);
        for (c, batch) in samples.iter().enumerate() {
            let m_c = batch.atoms.len() as f64;
            let grid = &self.grids[c];
            let root_lambda = self.lambda.sqrt();
            for &atom in batch.atoms {
                let x = grid.point(atom)[0];
                let omega = 1.0 / (m_c * batch.measure.nu_at(atom));
                // Residual and parameter sensitivities of the channel row.
                let mut r = 0.0;
                let mut da_dw = DVector::zeros(n);
                let mut da_db = DVector::zeros(n);
                for j in 0..n {
                    let (w, b) = (self.features.w[j], self.features.b[j]);
                    let t = (w * x + b).tanh();
                    let s = 1.0 - t * t;
                    if c == 0 {
                        let a = 2.0 * t * s * w * w;
                        r += self.coeffs[j] * a;
                        let dd = s * (s - 2.0 * t * t);
                        da_dw[j] = 2.0 * (x * w * w * dd + 2.0 * w * t * s);
                        da_db[j] = 2.0 * w * w * dd;
                    } else {
                        let a = root_lambda * t;
                        r += self.coeffs[j] * a;
                        da_dw[j] = root_lambda * s * x;
                        da_db[j] = root_lambda * s;
                    }
                }
                let y = if c == 0 {
                    self.rhs[atom]
                } else {
                    root_lambda * self.boundary_values[atom]
                };
                r -= y;
                for j in 0..n {
                    grad_w[j] += 2.0 * omega * r * self.coeffs[j] * da_dw[j];
                    grad_b[j] += 2.0 * omega * r * self.coeffs[j] * da_db[j];
                }
            }
        }
        self.features.w -= grad_w * self.adapt.step_size;
        self.features.b -= grad_b * self.adapt.step_size;
        self.refresh_tables();
    }
}

impl TrainableModel for PoissonCollocationModel {
    fn n_channels(&self) -> usize {
        2
    }

    fn channel_grid(&self, channel: usize) -> &Arc<GridDomain> {
        &self.grids[channel]
    }

    fn dictionary_values(&self, channel: usize) -> DMatrix<f64> {
        self.tables[channel].values.clone()
    }

    fn n_features(&self) -> usize {
        self.features.len()
    }

    fn train(&mut self, samples: &[ChannelSamples]) -> Result<FitResult, CasError> {
        let mut fit = self.solve_coeffs(samples)?;
        for _ in 0..self.adapt.steps {
            self.adapt_features(samples);
            fit = self.solve_coeffs(samples)?;
        }
        Ok(fit)
    }

    fn predict(&self, points: &[f64]) -> DVector<f64> {
        let tables = self.features.eval(points);
        &tables.values * &self.coeffs
    }
}
