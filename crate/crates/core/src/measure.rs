//! Finite measurement domains, discrete probability measures on them and
//! deterministic seeded sampling.
//!
//! A [`GridDomain`] is a finite set of atoms standing in for a measurement
//! domain, each atom carrying a nonnegative base weight. The empirical grid
//! used by the polynomial experiments puts weight `1/N` on each of `N`
//! i.i.d. draws from the underlying distribution; discrete index domains
//! (Fourier partitions, matrix rows) use uniform or unit weights.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Atoms with probability mass below this are clamped to zero and removed
/// from the support, so `1/nu` weights stay finite.
pub const PMF_CLAMP: f64 = 1e-300;

/// Tolerance for the total-mass normalisation checks.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("grid must contain at least one point")]
    EmptyGrid,
    #[error("base weights must be nonnegative and finite, got {0} at atom {1}")]
    InvalidWeight(f64, usize),
    #[error("total mass must be positive")]
    ZeroMass,
    #[error("pmf must be nonnegative and finite, got {0} at atom {1}")]
    InvalidPmf(f64, usize),
    #[error("pmf sums to {0}, expected 1 within {MASS_TOL}")]
    Unnormalised(f64),
    #[error("pmf length {0} does not match grid size {1}")]
    LengthMismatch(usize, usize),
    #[error("measure has empty support")]
    EmptySupport,
    #[error("sample count must be at least 1")]
    EmptySample,
}

/// Deterministic RNG descriptor: a 64-bit seed plus a stream id.
///
/// Identical `(seed, stream)` pairs yield identical sample sequences on
/// every platform and regardless of how many other streams run
/// concurrently. Experiment code derives one stream per (trial, phase,
/// channel) so reordering or parallelising trials cannot change results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Derives a sub-stream by mixing labelled components into the stream
    /// id (splitmix64 finaliser per component).
    pub fn substream(&self, labels: &[u64]) -> Self {
        let mut s = self.stream;
        for &l in labels {
            let mut z = s ^ l.wrapping_mul(0x9e37_79b9_7f4a_7c15);
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            s = z ^ (z >> 31);
        }
        Self {
            seed: self.seed,
            stream: s,
        }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Distributions the Monte Carlo grid generator knows how to draw from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridDist {
    /// Standard Gaussian on `R^d`.
    Gaussian(usize),
    /// Uniform on the cube `[-1, 1]^d`.
    UniformCube(usize),
    /// Uniform on the interval `[-1, 1]`.
    UniformInterval,
}

impl GridDist {
    pub fn dim(&self) -> usize {
        match self {
            GridDist::Gaussian(d) | GridDist::UniformCube(d) => *d,
            GridDist::UniformInterval => 1,
        }
    }
}

/// A finite point set with base-measure weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    coords: Vec<f64>,
    dim: usize,
    base_weights: Vec<f64>,
    total_mass: f64,
}

impl GridDomain {
    /// Builds a grid from row-major coordinates and per-atom weights.
    pub fn new(coords: Vec<f64>, dim: usize, base_weights: Vec<f64>) -> Result<Self, MeasureError> {
        if base_weights.is_empty() || dim == 0 {
            return Err(MeasureError::EmptyGrid);
        }
        if coords.len() != base_weights.len() * dim {
            return Err(MeasureError::LengthMismatch(
                coords.len(),
                base_weights.len() * dim,
            ));
        }
        for (i, &w) in base_weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(MeasureError::InvalidWeight(w, i));
            }
        }
        let total_mass: f64 = base_weights.iter().sum();
        if total_mass <= 0.0 {
            return Err(MeasureError::ZeroMass);
        }
        Ok(Self {
            coords,
            dim,
            base_weights,
            total_mass,
        })
    }

    /// Grid whose points are given explicitly, all carrying weight `1/N`.
    pub fn empirical(points: Vec<f64>, dim: usize) -> Result<Self, MeasureError> {
        if dim == 0 || points.is_empty() {
            return Err(MeasureError::EmptyGrid);
        }
        let n = points.len() / dim;
        Self::new(points, dim, vec![1.0 / n as f64; n])
    }

    /// Discrete index domain `{0, .., n-1}` with the same weight per atom.
    /// Fourier partition domains use `weight = 1/n`; the matrix
    /// leverage-score embedding uses `weight = 1` (uniform measure, not a
    /// probability measure).
    pub fn indexed(n: usize, weight: f64) -> Result<Self, MeasureError> {
        let coords: Vec<f64> = (0..n).map(|i| i as f64).collect();
        Self::new(coords, 1, vec![weight; n])
    }

    pub fn len(&self) -> usize {
        self.base_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base_weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn base_weights(&self) -> &[f64] {
        &self.base_weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.base_weights[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Returns a copy with every base weight multiplied by `s`.
    pub fn rescaled(&self, s: f64) -> Result<Self, MeasureError> {
        Self::new(
            self.coords.clone(),
            self.dim,
            self.base_weights.iter().map(|w| w * s).collect(),
        )
    }

    /// One point per row: `atom, x_1, .., x_d, base_weight`.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(out, "atom")?;
        for k in 0..self.dim {
            write!(out, ",x{}", k + 1)?;
        }
        writeln!(out, ",base_weight")?;
        for i in 0..self.len() {
            write!(out, "{i}")?;
            for v in self.point(i) {
                write!(out, ",{v:.17e}")?;
            }
            writeln!(out, ",{:.17e}", self.base_weights[i])?;
        }
        Ok(())
    }
}

/// Draws `n` i.i.d. points from `dist` and wraps them as an empirical grid
/// with weights `1/n`.
pub fn monte_carlo_grid(
    dist: GridDist,
    n: usize,
    rng_spec: RngSpec,
) -> Result<GridDomain, MeasureError> {
    if n == 0 {
        return Err(MeasureError::EmptyGrid);
    }
    let d = dist.dim();
    let mut rng = rng_spec.rng();
    let mut coords = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        let v: f64 = match dist {
            GridDist::Gaussian(_) => rng.sample(StandardNormal),
            GridDist::UniformCube(_) | GridDist::UniformInterval => rng.random_range(-1.0..1.0),
        };
        coords.push(v);
    }
    GridDomain::empirical(coords, d)
}

/// A probability mass function over the atoms of a [`GridDomain`], stored
/// together with its Radon-Nikodym weights against the base measure.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    domain: Arc<GridDomain>,
    pmf: Vec<f64>,
    nu: Vec<f64>,
    /// Support atoms in increasing order and the cumulative pmf over them.
    /// The cumulative array is strictly increasing, which makes inverse-CDF
    /// sampling exact and reproducible.
    support: Vec<usize>,
    cumulative: Vec<f64>,
}

impl DiscreteMeasure {
    /// Normalises `masses` into a pmf over `domain`. Masses below
    /// [`PMF_CLAMP`] (after normalisation) are dropped from the support.
    pub fn from_masses(domain: Arc<GridDomain>, masses: &[f64]) -> Result<Self, MeasureError> {
        if masses.len() != domain.len() {
            return Err(MeasureError::LengthMismatch(masses.len(), domain.len()));
        }
        for (i, &p) in masses.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(MeasureError::InvalidPmf(p, i));
            }
        }
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(MeasureError::EmptySupport);
        }
        let mut pmf: Vec<f64> = masses.iter().map(|p| p / total).collect();
        for p in pmf.iter_mut() {
            if *p < PMF_CLAMP {
                *p = 0.0;
            }
        }
        // Renormalise exactly after clamping so downstream sampling sees a
        // true pmf despite float rounding.
        let total: f64 = pmf.iter().sum();
        if total <= 0.0 {
            return Err(MeasureError::EmptySupport);
        }
        for p in pmf.iter_mut() {
            *p /= total;
        }
        let mut nu = vec![0.0; pmf.len()];
        let mut support = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (i, &p) in pmf.iter().enumerate() {
            if p > 0.0 {
                let w = domain.weight(i);
                if w <= 0.0 {
                    return Err(MeasureError::InvalidWeight(w, i));
                }
                nu[i] = p / w;
                acc += p;
                support.push(i);
                cumulative.push(acc);
            }
        }
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(Self {
            domain,
            pmf,
            nu,
            support,
            cumulative,
        })
    }

    /// Validates an already-normalised pmf (sum within [`MASS_TOL`] of 1).
    pub fn from_pmf(domain: Arc<GridDomain>, pmf: &[f64]) -> Result<Self, MeasureError> {
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(MeasureError::Unnormalised(total));
        }
        Self::from_masses(domain, pmf)
    }

    /// The base measure itself, normalised to a probability (MCS, `nu = 1`
    /// when the base measure already has mass 1).
    pub fn base_measure(domain: Arc<GridDomain>) -> Result<Self, MeasureError> {
        let masses = domain.base_weights().to_vec();
        Self::from_masses(domain, &masses)
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn nu_at(&self, atom: usize) -> f64 {
        self.nu[atom]
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Total-variation distance to another measure on the same domain.
    pub fn total_variation(&self, other: &DiscreteMeasure) -> f64 {
        0.5 * self
            .pmf
            .iter()
            .zip(&other.pmf)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Draws `m` i.i.d. atoms from `mu` by inverse-CDF lookup over the support.
/// Ties resolve to the lowest index; atoms with zero mass are never
/// returned.
pub fn sample_atoms(mu: &DiscreteMeasure, m: usize, rng_spec: RngSpec) -> Vec<usize> {
    let mut rng = rng_spec.rng();
    sample_atoms_with(mu, m, &mut rng)
}

/// As [`sample_atoms`] but drawing from a live RNG, for callers that chain
/// several draws on one stream.
pub fn sample_atoms_with(mu: &DiscreteMeasure, m: usize, rng: &mut ChaCha12Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let u: f64 = rng.random_range(0.0..1.0);
        let j = mu.cumulative.partition_point(|&c| c <= u);
        let j = j.min(mu.support.len() - 1);
        out.push(mu.support[j]);
    }
    out
}
