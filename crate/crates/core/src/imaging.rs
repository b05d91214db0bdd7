//! Discrete Fourier machinery, synthetic generative models and the
//! subsampled-Fourier recovery experiment.
//!
//! The transform is unitary (`F^H F = I`), implemented as radix-2 FFTs
//! along each axis with a `1/sqrt(N)` scaling. Generative models are
//! forward-only maps from a standard-normal latent space: a full-rank
//! linear map (recovery reduces to a weighted linear least-squares in the
//! latent coordinates) and a fixed-weight ReLU network whose range is
//! genuinely nonlinear.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::christoffel::{ChristoffelProfile, ProfileSource};
use crate::lsq::{solve_system, FitResult, LsqError, WeightedLsqSystem};
use crate::measure::{DiscreteMeasure, GridDomain, MeasureError, RngSpec};
use crate::operators::Partition;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("image side must be a power of two, got {0}")]
    SideNotPowerOfTwo(usize),
    #[error("image dimension must be 1, 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("vector length {0} does not match transform length {1}")]
    LengthMismatch(usize, usize),
    #[error("latent vector length {0} does not match model latent dimension {1}")]
    LatentMismatch(usize, usize),
    #[error("generative model output length {0} does not match {1}")]
    OutputMismatch(usize, usize),
    #[error("operation requires a linear generative model")]
    NotLinear,
    #[error("linear model matrix is rank deficient")]
    ModelRankDeficient,
    #[error("partition covers {0} indices but the image has {1}")]
    PartitionMismatch(usize, usize),
    #[error("max_val must be positive")]
    BadMaxVal,
    #[error(transparent)]
    Lsq(#[from] LsqError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Unitary d-dimensional DFT on a `side^dim` lattice, `side` a power of
/// two, flattened lexicographically (first coordinate most significant).
pub struct UnitaryDft {
    side: usize,
    dim: usize,
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl UnitaryDft {
    pub fn new(side: usize, dim: usize) -> Result<Self, ImagingError> {
        if !side.is_power_of_two() {
            return Err(ImagingError::SideNotPowerOfTwo(side));
        }
        if dim == 0 || dim > 3 {
            return Err(ImagingError::BadDimension(dim));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            side,
            dim,
            len: side.pow(dim as u32),
            fwd: planner.plan_fft_forward(side),
            inv: planner.plan_fft_inverse(side),
        })
    }

    /// Total transform length `side^dim`.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn transform(&self, x: &[Complex64], inverse: bool) -> Result<Vec<Complex64>, ImagingError> {
        if x.len() != self.len {
            return Err(ImagingError::LengthMismatch(x.len(), self.len));
        }
        let mut data = x.to_vec();
        let plan = if inverse { &self.inv } else { &self.fwd };
        let mut line = vec![Complex64::new(0.0, 0.0); self.side];
        for axis in 0..self.dim {
            let stride = self.side.pow((self.dim - 1 - axis) as u32);
            let groups = self.len / (self.side * stride);
            for g in 0..groups {
                for offset in 0..stride {
                    let base = g * self.side * stride + offset;
                    for t in 0..self.side {
                        line[t] = data[base + t * stride];
                    }
                    plan.process(&mut line);
                    for t in 0..self.side {
                        data[base + t * stride] = line[t];
                    }
                }
            }
        }
        let scale = 1.0 / (self.len as f64).sqrt();
        for v in data.iter_mut() {
            *v *= scale;
        }
        Ok(data)
    }

    pub fn forward(&self, x: &[Complex64]) -> Result<Vec<Complex64>, ImagingError> {
        self.transform(x, false)
    }

    pub fn inverse(&self, y: &[Complex64]) -> Result<Vec<Complex64>, ImagingError> {
        self.transform(y, true)
    }

    pub fn forward_real(&self, x: &[f64]) -> Result<Vec<Complex64>, ImagingError> {
        let cx: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&cx)
    }

    /// Frequency-domain values of each column of a real matrix.
    pub fn forward_columns(&self, a: &DMatrix<f64>) -> Result<DMatrix<Complex64>, ImagingError> {
        let mut out = DMatrix::zeros(a.nrows(), a.ncols());
        for j in 0..a.ncols() {
            let col: Vec<f64> = a.column(j).iter().copied().collect();
            let f = self.forward_real(&col)?;
            for (i, v) in f.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }
}

/// Forward-only generative model with standard-normal latent distribution.
#[derive(Debug, Clone)]
pub enum GenerativeModel {
    Linear { a: DMatrix<f64> },
    ReluMlp {
        weights: Vec<DMatrix<f64>>,
        biases: Vec<DVector<f64>>,
    },
}

impl GenerativeModel {
    /// Full-rank linear model with i.i.d. Gaussian entries.
    pub fn linear_gaussian(n_img: usize, p: usize, rng_spec: RngSpec) -> Result<Self, ImagingError> {
        let mut rng = rng_spec.rng();
        let scale = 1.0 / (n_img as f64).sqrt();
        let a = DMatrix::from_fn(n_img, p, |_, _| {
            let g: f64 = rng.sample(StandardNormal);
            g * scale
        });
        Ok(GenerativeModel::Linear { a })
    }

    /// Linear model whose columns have a power-law frequency decay, so the
    /// subspace energy concentrates at low frequencies the way natural
    /// images do.
    pub fn linear_smooth(
        dft: &UnitaryDft,
        p: usize,
        decay: f64,
        rng_spec: RngSpec,
    ) -> Result<Self, ImagingError> {
        let n_img = dft.len();
        let side = dft.side();
        let dim = dft.dim();
        let mut rng = rng_spec.rng();
        let mut a = DMatrix::zeros(n_img, p);
        for j in 0..p {
            let mut freq = vec![Complex64::new(0.0, 0.0); n_img];
            for (k, f) in freq.iter_mut().enumerate() {
                // Centred frequency distance per axis.
                let mut rest = k;
                let mut dist2 = 0.0;
                for axis in 0..dim {
                    let stride = side.pow((dim - 1 - axis) as u32);
                    let idx = (rest / stride) % side;
                    rest %= stride;
                    let c = idx.min(side - idx) as f64;
                    dist2 += c * c;
                }
                let w = (1.0 + dist2.sqrt()).powf(-decay);
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *f = Complex64::new(re * w, im * w);
            }
            let img = dft.inverse(&freq)?;
            let mut col: Vec<f64> = img.iter().map(|v| v.re).collect();
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in col.iter_mut() {
                    *v /= norm;
                }
            }
            for (i, v) in col.into_iter().enumerate() {
                a[(i, j)] = v;
            }
        }
        Ok(GenerativeModel::Linear { a })
    }

    /// Fixed random-weight ReLU network, hidden layers activated, linear
    /// output layer without bias.
    pub fn relu_mlp_random(widths: &[usize], rng_spec: RngSpec) -> Result<Self, ImagingError> {
        assert!(widths.len() >= 2, "need at least input and output widths");
        let mut rng = rng_spec.rng();
        let std = 0.1f64.sqrt();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            weights.push(DMatrix::from_fn(fan_out, fan_in, |_, _| {
                let g: f64 = rng.sample(StandardNormal);
                g * std
            }));
            let last = l == widths.len() - 2;
            biases.push(if last {
                DVector::zeros(fan_out)
            } else {
                DVector::from_fn(fan_out, |_, _| {
                    let g: f64 = rng.sample(StandardNormal);
                    g * std
                })
            });
        }
        Ok(GenerativeModel::ReluMlp { weights, biases })
    }

    pub fn from_matrix(a: DMatrix<f64>) -> Self {
        GenerativeModel::Linear { a }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            GenerativeModel::Linear { a } => a.ncols(),
            GenerativeModel::ReluMlp { weights, .. } => weights[0].ncols(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            GenerativeModel::Linear { a } => a.nrows(),
            GenerativeModel::ReluMlp { weights, .. } => weights.last().unwrap().nrows(),
        }
    }

    pub fn matrix(&self) -> Result<&DMatrix<f64>, ImagingError> {
        match self {
            GenerativeModel::Linear { a } => Ok(a),
            _ => Err(ImagingError::NotLinear),
        }
    }

    /// Deterministic forward evaluation.
    pub fn forward(&self, z: &DVector<f64>) -> Result<DVector<f64>, ImagingError> {
        if z.len() != self.latent_dim() {
            return Err(ImagingError::LatentMismatch(z.len(), self.latent_dim()));
        }
        match self {
            GenerativeModel::Linear { a } => Ok(a * z),
            GenerativeModel::ReluMlp { weights, biases } => {
                let mut h = z.clone();
                let last = weights.len() - 1;
                for (l, (w, b)) in weights.iter().zip(biases).enumerate() {
                    h = w * h + b;
                    if l < last {
                        h.apply(|v| *v = v.max(0.0));
                    }
                }
                Ok(h)
            }
        }
    }

    /// Draws `z` from the standard normal latent distribution and pushes
    /// it forward.
    pub fn forward_random(&self, rng: &mut ChaCha12Rng) -> Result<DVector<f64>, ImagingError> {
        let z = DVector::from_fn(self.latent_dim(), |_, _| rng.sample(StandardNormal));
        self.forward(&z)
    }
}

/// `20 log10(max_val / sqrt(MSE))`, with `+inf` as the zero-error
/// sentinel.
pub fn psnr(reference: &[f64], estimate: &[f64], max_val: f64) -> Result<f64, ImagingError> {
    if reference.len() != estimate.len() {
        return Err(ImagingError::LengthMismatch(estimate.len(), reference.len()));
    }
    if !(max_val > 0.0) {
        return Err(ImagingError::BadMaxVal);
    }
    let mse: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (max_val / mse.sqrt()).log10())
}

/// The exact subspace profile of a linear model's range through a Fourier
/// partition operator: per block, the squared spectral norm of the block
/// restricted to an orthonormal basis of the range.
pub fn exact_partition_profile(
    gen: &GenerativeModel,
    partition: &Arc<Partition>,
    dft: &UnitaryDft,
) -> Result<ChristoffelProfile, ImagingError> {
    let a = gen.matrix()?;
    if a.nrows() != dft.len() || partition.n_img() != dft.len() {
        return Err(ImagingError::PartitionMismatch(partition.n_img(), a.nrows()));
    }
    let qr = a.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let p = a.ncols();
    let mut dmax: f64 = 0.0;
    for i in 0..p {
        dmax = dmax.max(r[(i, i)].abs());
    }
    for i in 0..p {
        if r[(i, i)].abs() <= dmax * 1e-12 {
            return Err(ImagingError::ModelRankDeficient);
        }
    }
    let freq_q = dft.forward_columns(&q)?;
    let m_blocks = partition.n_blocks();
    let mut k = Vec::with_capacity(m_blocks);
    for block in partition.blocks() {
        let mut sub = DMatrix::zeros(block.len(), p);
        for (row, &j) in block.iter().enumerate() {
            let scale = (m_blocks as f64).sqrt()
                / (partition.overlap_counts()[j] as f64).sqrt();
            for col in 0..p {
                sub[(row, col)] = freq_q[(j, col)] * scale;
            }
        }
        let smax = sub.svd(false, false).singular_values[0];
        k.push(smax * smax);
    }
    let domain = Arc::new(GridDomain::indexed(m_blocks, 1.0 / m_blocks as f64)?);
    Ok(ChristoffelProfile::from_values(domain, k, ProfileSource::ExactSubspace)
        .expect("length matches"))
}

/// Outcome of one Fourier recovery.
#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub estimate: DVector<f64>,
    pub latent: DVector<f64>,
    pub fit: FitResult,
    pub psnr_db: f64,
}

/// Precomputed pieces of the latent-coordinate recovery problem for one
/// linear model and partition.
pub struct FourierRecovery {
    a: DMatrix<f64>,
    freq_model: DMatrix<Complex64>,
    partition: Arc<Partition>,
}

impl FourierRecovery {
    pub fn new(
        gen: &GenerativeModel,
        partition: Arc<Partition>,
        dft: &UnitaryDft,
    ) -> Result<Self, ImagingError> {
        let a = gen.matrix()?.clone();
        if partition.n_img() != a.nrows() {
            return Err(ImagingError::PartitionMismatch(partition.n_img(), a.nrows()));
        }
        let freq_model = dft.forward_columns(&a)?;
        Ok(Self {
            a,
            freq_model,
            partition,
        })
    }

    /// Draws a ground-truth latent vector and its image.
    pub fn ground_truth(&self, rng_spec: RngSpec) -> (DVector<f64>, DVector<f64>) {
        let mut rng = rng_spec.rng();
        let z = DVector::from_fn(self.a.ncols(), |_, _| rng.sample(StandardNormal));
        let img = &self.a * &z;
        (z, img)
    }

    /// Recovers from the given sampled blocks. Noise is complex Gaussian
    /// per frequency component with standard deviation
    /// `noise_level x RMS` of the clean block components.
    pub fn recover_blocks(
        &self,
        truth: &DVector<f64>,
        dft: &UnitaryDft,
        measure: &DiscreteMeasure,
        blocks: &[usize],
        noise_level: f64,
        noise_rng: RngSpec,
    ) -> Result<RecoveryResult, ImagingError> {
        let truth_slice: Vec<f64> = truth.iter().copied().collect();
        let freq_truth = dft.forward_real(&truth_slice)?;
        let m = blocks.len();
        let m_blocks = self.partition.n_blocks() as f64;
        let root_m = m_blocks.sqrt();
        // RMS of the clean components over the whole frequency domain,
        // used as the noise scale reference.
        let rms = {
            let total: f64 = (0..self.partition.n_img())
                .map(|j| {
                    m_blocks * freq_truth[j].norm_sqr()
                        / self.partition.overlap_counts()[j] as f64
                })
                .sum();
            (total / self.partition.n_img() as f64).sqrt()
        };
        let p = self.a.ncols();
        let total_rows: usize = blocks.iter().map(|&i| self.partition.block(i).len()).sum();
        let mut a_real = DMatrix::zeros(2 * total_rows, p);
        let mut b_real = DVector::zeros(2 * total_rows);
        let mut noise = noise_rng.rng();
        let mut row = 0usize;
        for &i in blocks {
            let nu = measure.nu_at(i);
            if nu <= 0.0 {
                return Err(ImagingError::Lsq(LsqError::ZeroDensityAtom(i)));
            }
            let u = 1.0 / (nu * m as f64).sqrt();
            for &j in self.partition.block(i) {
                let scale = u * root_m / (self.partition.overlap_counts()[j] as f64).sqrt();
                let mut y = freq_truth[j]
                    * (root_m / (self.partition.overlap_counts()[j] as f64).sqrt());
                if noise_level > 0.0 {
                    let re: f64 = noise.sample(StandardNormal);
                    let im: f64 = noise.sample(StandardNormal);
                    y += Complex64::new(re, im) * (noise_level * rms / 2f64.sqrt());
                }
                for col in 0..p {
                    let entry = self.freq_model[(j, col)] * scale;
                    a_real[(row, col)] = entry.re;
                    a_real[(row + total_rows, col)] = entry.im;
                }
                b_real[row] = u * y.re;
                b_real[row + total_rows] = u * y.im;
                row += 1;
            }
        }
        let sys = WeightedLsqSystem::from_parts(a_real, b_real, vec![]);
        let fit = solve_system(&sys)?;
        let estimate = &self.a * &fit.coeffs;
        let max_val = truth.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        let est_slice: Vec<f64> = estimate.iter().copied().collect();
        let psnr_db = psnr(&truth_slice, &est_slice, max_val.max(f64::MIN_POSITIVE))?;
        Ok(RecoveryResult {
            estimate,
            latent: fit.coeffs.clone(),
            fit,
            psnr_db,
        })
    }
}

/// Convenience wrapper: draws a ground truth and `m` blocks from the
/// measure, then recovers.
pub fn recover_linear_gen(
    gen: &GenerativeModel,
    partition: Arc<Partition>,
    dft: &UnitaryDft,
    measure: &DiscreteMeasure,
    m: usize,
    noise_level: f64,
    rng_spec: RngSpec,
) -> Result<(RecoveryResult, DVector<f64>), ImagingError> {
    let rec = FourierRecovery::new(gen, partition, dft)?;
    let (_, truth) = rec.ground_truth(rng_spec.substream(&[1]));
    let blocks = crate::measure::sample_atoms(measure, m, rng_spec.substream(&[2]));
    let out = rec.recover_blocks(
        &truth,
        dft,
        measure,
        &blocks,
        noise_level,
        rng_spec.substream(&[3]),
    )?;
    Ok((out, truth))
}
