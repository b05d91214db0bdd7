//! Randomised property suite for the Christoffel machinery: the
//! union-max identity, the sum-space factor-2 bound, invariance under
//! basis recombination, the 1/p bracket between the exact profile and the
//! frame surrogate, and the two-sided bounds on summed channel masses.
//!
//! Instances use a small Euclidean ambient space with one random linear
//! measurement block per grid atom; the object norm is the discrete
//! channel-summed norm, under which the exact profile of a subspace at an
//! atom is the squared spectral norm of the measured orthonormalised
//! basis block, computable by dense SVD.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::christoffel::{christoffel_from_frame, orthonormalize_on_grid, OrthoMode};
use crate::measure::{GridDomain, RngSpec};
use crate::operators::{ChannelBasis, ChannelKind, ChannelOperator};
use crate::polybasis::{hyperbolic_cross, sobolev_tensor_basis, PolyFamily};

#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub property: String,
    pub instances: usize,
    pub violations: usize,
    pub worst_discrepancy: f64,
}

impl PropertyReport {
    fn new(property: &str) -> Self {
        Self {
            property: property.into(),
            instances: 0,
            violations: 0,
            worst_discrepancy: 0.0,
        }
    }

    fn record(&mut self, violated: bool, discrepancy: f64) {
        if violated {
            self.violations += 1;
        }
        if discrepancy > self.worst_discrepancy {
            self.worst_discrepancy = discrepancy;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// One random measurement setup: `n_atoms` random `p x q` blocks over a
/// weighted discrete domain.
struct RandomOperator {
    blocks: Vec<DMatrix<f64>>,
    weights: Vec<f64>,
    p: usize,
}

impl RandomOperator {
    fn generate(rng: &mut rand_chacha::ChaCha12Rng, q: usize, p: usize, n_atoms: usize) -> Self {
        let blocks = (0..n_atoms)
            .map(|_| DMatrix::from_fn(p, q, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let raw: Vec<f64> = (0..n_atoms).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.into_iter().map(|w| w / total).collect();
        Self { blocks, weights, p }
    }

    fn n_atoms(&self) -> usize {
        self.blocks.len()
    }

    /// Squared object norm: the channel-summed discrete norm.
    fn norm_sq(&self, f: &DVector<f64>) -> f64 {
        self.blocks
            .iter()
            .zip(&self.weights)
            .map(|(l, w)| w * (l * f).norm_squared())
            .sum()
    }

    /// Orthonormalises subspace basis columns against the object norm.
    fn orthonormalise(&self, basis: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let n = basis.ncols();
        let mut gram = DMatrix::zeros(n, n);
        for (l, w) in self.blocks.iter().zip(&self.weights) {
            let lb = l * basis;
            gram.gemm_tr(*w, &lb, &lb, 1.0);
        }
        let chol = gram.cholesky()?;
        let r_inv_t = chol.l().try_inverse()?;
        Some(basis * r_inv_t.transpose())
    }

    /// Object-norm inner products between the columns of two bases.
    fn cross_gram(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut gram = DMatrix::zeros(a.ncols(), b.ncols());
        for (l, w) in self.blocks.iter().zip(&self.weights) {
            let la = l * a;
            let lb = l * b;
            gram.gemm_tr(*w, &la, &lb, 1.0);
        }
        gram
    }

    /// Exact profile of the subspace at every atom: squared spectral norm
    /// of the measured orthonormal block.
    fn exact_profile(&self, ortho: &DMatrix<f64>) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|l| {
                let lb = l * ortho;
                let s = lb.svd(false, false).singular_values[0];
                s * s
            })
            .collect()
    }

    /// Frame-surrogate profile via the stacked-block orthonormalisation.
    fn frame_profile(&self, basis: &DMatrix<f64>) -> Result<Vec<f64>, HarnessError> {
        let n_atoms = self.n_atoms();
        let n = basis.ncols();
        let mut stacked = DMatrix::zeros(self.p * n_atoms, n);
        for (i, (l, w)) in self.blocks.iter().zip(&self.weights).enumerate() {
            let lb = l * basis;
            for slot in 0..self.p {
                for j in 0..n {
                    stacked[(slot * n_atoms + i, j)] = w.sqrt() * lb[(slot, j)];
                }
            }
        }
        let domain = Arc::new(
            GridDomain::new(
                (0..n_atoms).map(|i| i as f64).collect(),
                1,
                self.weights.clone(),
            )
            .unwrap(),
        );
        let frame = orthonormalize_on_grid(stacked, domain, self.p, OrthoMode::Qr)?;
        Ok(christoffel_from_frame(&frame)?.values().to_vec())
    }

    /// Measurement-to-object ratio of one element at one atom, computed
    /// from the raw data only.
    fn ratio(&self, f: &DVector<f64>, atom: usize) -> f64 {
        let num = (&self.blocks[atom] * f).norm_squared();
        num / self.norm_sq(f)
    }
}

fn random_basis(rng: &mut rand_chacha::ChaCha12Rng, q: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(q, n, |_, _| rng.random_range(-1.0..1.0))
}

/// Top right-singular vector of the measured block: the coefficient
/// vector of the element attaining the exact profile at the atom.
fn argmax_coeffs(l: &DMatrix<f64>, ortho: &DMatrix<f64>) -> DVector<f64> {
    let lb = l * ortho;
    let svd = lb.svd(false, true);
    svd.v_t.unwrap().row(0).transpose()
}

pub fn lemma_properties_suite(
    instances: usize,
    seed: u64,
) -> Result<Vec<PropertyReport>, HarnessError> {
    let mut union_max = PropertyReport::new("union_max");
    let mut sum_bound = PropertyReport::new("sum_factor_two_bound");
    let mut recombination = PropertyReport::new("recombination_invariance");
    let mut bracket = PropertyReport::new("one_over_p_bracket");
    let mut scalar_exact = PropertyReport::new("scalar_channel_exactness");
    let mut rng = RngSpec::new(seed).rng();
    let mut done = 0usize;
    while done < instances {
        let q = rng.random_range(4..=8usize);
        let p = rng.random_range(1..=3usize);
        let n1 = rng.random_range(1..=(q / 2).min(5));
        let n2 = rng.random_range(1..=(q - n1).min(5));
        let n_atoms = rng.random_range(20..=200usize);
        let op = RandomOperator::generate(&mut rng, q, p, n_atoms);
        let b1 = random_basis(&mut rng, q, n1);
        let o1 = match op.orthonormalise(&b1) {
            Some(o) => o,
            None => continue,
        };
        // The factor-2 sum bound requires subspaces whose internal
        // decomposition is orthogonal, so the second space is drawn
        // inside the object-norm orthogonal complement of the first.
        let b2_raw = random_basis(&mut rng, q, n2);
        let b2 = &b2_raw - &o1 * op.cross_gram(&o1, &b2_raw);
        let mut b12 = DMatrix::zeros(q, n1 + n2);
        b12.view_mut((0, 0), (q, n1)).copy_from(&b1);
        b12.view_mut((0, n1), (q, n2)).copy_from(&b2);
        let (o2, o12) = match (op.orthonormalise(&b2), op.orthonormalise(&b12)) {
            (Some(b), Some(c)) => (b, c),
            _ => continue,
        };
        done += 1;
        let k1 = op.exact_profile(&o1);
        let k2 = op.exact_profile(&o2);
        let k12 = op.exact_profile(&o12);
        let f1_frame = op.frame_profile(&b1)?;

        // Union-max: attained candidates from either subspace reach the
        // max of the two exact profiles; random draws never exceed it.
        for atom in 0..n_atoms {
            let expect = k1[atom].max(k2[atom]);
            let c1 = argmax_coeffs(&op.blocks[atom], &o1);
            let c2 = argmax_coeffs(&op.blocks[atom], &o2);
            let mut attained: f64 = 0.0;
            attained = attained.max(op.ratio(&(&o1 * &c1), atom));
            attained = attained.max(op.ratio(&(&o2 * &c2), atom));
            let mut exceeded: f64 = 0.0;
            for _ in 0..4 {
                let r1 = DVector::from_fn(n1, |_, _| rng.random_range(-1.0..1.0));
                let r2 = DVector::from_fn(n2, |_, _| rng.random_range(-1.0..1.0));
                exceeded = exceeded.max(op.ratio(&(&o1 * r1), atom));
                exceeded = exceeded.max(op.ratio(&(&o2 * r2), atom));
            }
            let tol = 1e-6 * expect.max(1.0);
            let disc = (attained - expect).abs().max((exceeded - expect).max(0.0));
            union_max.record(
                (attained - expect).abs() > tol || exceeded > expect + tol,
                disc,
            );
        }

        // Sum space bounded by twice the sum of the parts.
        for atom in 0..n_atoms {
            let bound = 2.0 * (k1[atom] + k2[atom]);
            let tol = 1e-9 * bound.max(1.0);
            sum_bound.record(k12[atom] > bound + tol, (k12[atom] - bound).max(0.0));
        }

        // Frame surrogate depends only on the span.
        {
            let mut mix = DMatrix::identity(n1, n1);
            for a in 0..n1 {
                for b in 0..n1 {
                    mix[(a, b)] += 0.5 * rng.random_range(-1.0..1.0);
                }
            }
            let recombined = &b1 * &mix;
            if let Ok(f_re) = op.frame_profile(&recombined) {
                for atom in 0..n_atoms {
                    let tol = 1e-8 * f1_frame[atom].max(1.0);
                    let diff = (f1_frame[atom] - f_re[atom]).abs();
                    recombination.record(diff > tol, diff);
                }
            }
        }

        // Bracket between the exact profile and the frame surrogate, with
        // equality for scalar channels.
        for atom in 0..n_atoms {
            let surrogate = f1_frame[atom];
            let tol = 1e-9 * surrogate.max(1.0);
            let below = k1[atom] < surrogate / p as f64 - tol;
            let above = k1[atom] > surrogate + tol;
            let disc = (surrogate / p as f64 - k1[atom])
                .max(k1[atom] - surrogate)
                .max(0.0);
            bracket.record(below || above, disc);
            if p == 1 {
                let tol = 1e-10 * surrogate.max(1.0);
                let diff = (k1[atom] - surrogate).abs();
                scalar_exact.record(diff > tol, diff);
            }
        }

        union_max.instances += 1;
        sum_bound.instances += 1;
        recombination.instances += 1;
        bracket.instances += 1;
        if p == 1 {
            scalar_exact.instances += 1;
        }
    }
    Ok(vec![union_max, sum_bound, recombination, bracket, scalar_exact])
}

/// Two-sided bounds on the summed per-channel masses of a multimodal
/// setup: `alpha n / p_max <= sum_c kappa_c <= beta n` for subspaces,
/// with the per-channel profiles read off a jointly orthonormalised
/// frame.
pub fn kappa_sum_bounds(instances: usize, seed: u64) -> Result<PropertyReport, HarnessError> {
    let mut report = PropertyReport::new("kappa_sum_two_sided");
    for k in 0..instances {
        let root = RngSpec::with_stream(seed, 100 + k as u64);
        let d = 1 + (k % 2);
        let grid = Arc::new(crate::measure::monte_carlo_grid(
            crate::measure::GridDist::Gaussian(d),
            600,
            root,
        )?);
        let set = hyperbolic_cross(d, 3 + (k % 3))?;
        let n = set.len();
        let table = sobolev_tensor_basis(&set, &grid, PolyFamily::HermiteProb)?;
        let c0 = 0.5f64.sqrt();
        let value_op =
            ChannelOperator::new(ChannelKind::PartialGradValue { scale: c0 }, grid.clone());
        let grad_op =
            ChannelOperator::new(ChannelKind::GradAugmented { value_scale: c0 }, grid.clone());
        let rep = crate::operators::gram_nondegeneracy(&[
            (&value_op, ChannelBasis::Poly(&table)),
            (&grad_op, ChannelBasis::Poly(&table)),
        ])?;
        // Joint frame: both channels stacked over the shared grid.
        let s1 = crate::christoffel::stack_poly_channel(&value_op, &table)?;
        let s2 = crate::christoffel::stack_poly_channel(&grad_op, &table)?;
        let n_atoms = grid.len();
        let slots1 = s1.nrows() / n_atoms;
        let slots2 = s2.nrows() / n_atoms;
        let mut stacked = DMatrix::zeros(s1.nrows() + s2.nrows(), n);
        stacked.view_mut((0, 0), (s1.nrows(), n)).copy_from(&s1);
        stacked.view_mut((s1.nrows(), 0), (s2.nrows(), n)).copy_from(&s2);
        let frame = orthonormalize_on_grid(
            stacked,
            grid.clone(),
            slots1 + slots2,
            OrthoMode::Qr,
        )?;
        // Per-channel kappa: the channel's share of the orthonormal mass.
        let q = frame.q();
        let mut kappa = [0.0f64; 2];
        for j in 0..frame.rank() {
            for i in 0..s1.nrows() {
                kappa[0] += q[(i, j)] * q[(i, j)];
            }
            for i in 0..s2.nrows() {
                kappa[1] += q[(s1.nrows() + i, j)] * q[(s1.nrows() + i, j)];
            }
        }
        let total = kappa[0] + kappa[1];
        let p_max = (d + 1).max(1) as f64;
        let upper = rep.beta_hat * n as f64;
        let lower = rep.alpha_hat * n as f64 / p_max;
        let tol = 1e-9 * n as f64;
        let violated = total > upper + tol || total < lower - tol;
        let disc = (total - upper).max(lower - total).max(0.0);
        report.record(violated, disc);
        report.instances += 1;
    }
    Ok(report)
}

pub fn run_props(cfg: &ExperimentConfig) -> Result<Vec<PropertyReport>, HarnessError> {
    let mut reports = lemma_properties_suite(cfg.prop_instances, cfg.seed)?;
    reports.push(kappa_sum_bounds(8, cfg.seed)?);
    Ok(reports)
}

pub fn write_outputs(
    cfg: &ExperimentConfig,
    reports: &[PropertyReport],
    dir: &Path,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join("props.csv"))?);
    writeln!(out, "property,instances,violations,worst_discrepancy")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{:.6e}",
            r.property, r.instances, r.violations, r.worst_discrepancy
        )?;
    }
    drop(out);
    let trace = serde_json::json!({
        "experiment": "props",
        "config": cfg,
        "reports": reports,
    });
    std::fs::write(dir.join("trace.json"), serde_json::to_string_pretty(&trace)?)?;
    Ok(())
}
