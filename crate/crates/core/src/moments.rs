//! Sample moments of the transformed outputs.
//!
//! Moments are accumulated one sample at a time with a Welford-style update
//! and combined with the pairwise (Chan) merge. The sampling driver splits
//! the index range into fixed blocks, evaluates blocks in parallel and
//! merges them in a fixed binary tree, so results are bit-identical for any
//! thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{DrawSource, StochasticSystem};
use crate::transforms::TransformSet;

/// Samples per block of the fixed merge tree.
pub const BLOCK_SIZE: u64 = 4096;

/// Number of contiguous sample batches kept for the bootstrap.
pub const BATCH_COUNT: usize = 16;

/// Fraction of samples that may be skipped under [`InvalidSamplePolicy::Skip`].
pub const MAX_SKIP_FRACTION: f64 = 1e-6;

/// Streaming mean and co-moment of a vector statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    count: u64,
    mean: Vec<f64>,
    // Row-major L x L; only the upper triangle is maintained.
    comoment: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Adds one observation of `phi(z)`.
    pub fn accumulate(&mut self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.dim() {
            return Err(Error::Validation(format!(
                "statistic has length {}, accumulator expects {}",
                phi.len(),
                self.dim()
            )));
        }
        if let Some(bad) = phi.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidSample(format!(
                "non-finite statistic component {bad}"
            )));
        }
        self.push(phi);
        Ok(())
    }

    #[inline]
    fn push(&mut self, phi: &[f64]) {
        let dim = self.dim();
        self.count += 1;
        let n = self.count as f64;
        let shrink = (n - 1.0) / n;
        for i in 0..dim {
            let di = (phi[i] - self.mean[i]) * shrink;
            let row = &mut self.comoment[i * dim..(i + 1) * dim];
            for j in i..dim {
                row[j] += di * (phi[j] - self.mean[j]);
            }
        }
        for (m, x) in self.mean.iter_mut().zip(phi) {
            *m += (x - *m) / n;
        }
    }

    /// Folds `other` into `self` as if its samples had been accumulated here.
    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::Validation(format!(
                "cannot merge accumulators of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            self.clone_from(other);
            return Ok(());
        }
        let dim = self.dim();
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let weight = na * nb / n;
        let delta: Vec<f64> = other
            .mean
            .iter()
            .zip(&self.mean)
            .map(|(b, a)| b - a)
            .collect();
        for i in 0..dim {
            for j in i..dim {
                let k = i * dim + j;
                self.comoment[k] += other.comoment[k] + weight * delta[i] * delta[j];
            }
        }
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d * nb / n;
        }
        self.count += other.count;
        Ok(())
    }

    /// Mean and population (1/N) covariance.
    pub fn finalize(&self, theta: f64) -> Result<MomentSummary> {
        if self.count < 2 {
            return Err(Error::InsufficientData {
                count: self.count,
                required: 2,
            });
        }
        let dim = self.dim();
        let n = self.count as f64;
        let cov = DMatrix::from_fn(dim, dim, |i, j| {
            let (r, c) = if i <= j { (i, j) } else { (j, i) };
            self.comoment[r * dim + c] / n
        });
        Ok(MomentSummary {
            theta,
            n: self.count,
            mean: DVector::from_column_slice(&self.mean),
            cov,
        })
    }
}

/// Estimated `mu_phi(theta)` and `R_phi(theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub theta: f64,
    pub n: u64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl MomentSummary {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Moments of the first `len` statistics.
    pub fn prefix(&self, len: usize) -> MomentSummary {
        MomentSummary {
            theta: self.theta,
            n: self.n,
            mean: self.mean.rows(0, len).into_owned(),
            cov: self.cov.view((0, 0), (len, len)).into_owned(),
        }
    }

    /// Audit row: `theta,n,mean_1..mean_L,cov_11,cov_12,..,cov_LL` (upper triangle).
    pub fn to_csv_row(&self) -> String {
        let mut fields = vec![format!("{}", self.theta), self.n.to_string()];
        fields.extend(self.mean.iter().map(|m| format!("{m:e}")));
        for i in 0..self.dim() {
            for j in i..self.dim() {
                fields.push(format!("{:e}", self.cov[(i, j)]));
            }
        }
        fields.join(",")
    }
}

/// Moments at `theta - h`, `theta` and `theta + h` from shared draws.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTriple {
    pub at_minus: MomentSummary,
    pub at_center: MomentSummary,
    pub at_plus: MomentSummary,
    pub h: f64,
}

impl MomentTriple {
    pub fn theta(&self) -> f64 {
        self.at_center.theta
    }

    pub fn prefix(&self, len: usize) -> MomentTriple {
        MomentTriple {
            at_minus: self.at_minus.prefix(len),
            at_center: self.at_center.prefix(len),
            at_plus: self.at_plus.prefix(len),
            h: self.h,
        }
    }
}

/// Accumulators for the three stencil points over one index range.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleAccumulator {
    pub minus: MomentAccumulator,
    pub center: MomentAccumulator,
    pub plus: MomentAccumulator,
    pub skipped: u64,
}

impl TripleAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            minus: MomentAccumulator::new(dim),
            center: MomentAccumulator::new(dim),
            plus: MomentAccumulator::new(dim),
            skipped: 0,
        }
    }

    pub fn count(&self) -> u64 {
        self.center.count()
    }

    pub fn merge(&mut self, other: &TripleAccumulator) -> Result<()> {
        self.minus.merge(&other.minus)?;
        self.center.merge(&other.center)?;
        self.plus.merge(&other.plus)?;
        self.skipped += other.skipped;
        Ok(())
    }

    pub fn finalize(&self, theta: f64, h: f64) -> Result<MomentTriple> {
        Ok(MomentTriple {
            at_minus: self.minus.finalize(theta - h)?,
            at_center: self.center.finalize(theta)?,
            at_plus: self.plus.finalize(theta + h)?,
            h,
        })
    }
}

/// What to do with a sample whose output or statistic is not finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InvalidSamplePolicy {
    #[default]
    Abort,
    /// Drop the sample index at all three stencil points; at most
    /// [`MAX_SKIP_FRACTION`] of the samples may be dropped.
    Skip,
}

/// A triple estimate together with its per-batch accumulators.
#[derive(Debug, Clone)]
pub struct BatchedTriple {
    pub triple: MomentTriple,
    pub batches: Vec<TripleAccumulator>,
    pub skipped: u64,
}

impl BatchedTriple {
    /// Batch bootstrap of a scalar statistic of the triple.
    ///
    /// Each replicate resamples the batches with replacement, merges them and
    /// evaluates `stat`. Returns the standard deviation over the replicates
    /// that evaluated successfully, or `None` when fewer than half did.
    pub fn bootstrap_sd<F>(&self, replicates: usize, seed: u64, stat: F) -> Option<f64>
    where
        F: Fn(&MomentTriple) -> Result<f64> + Sync,
    {
        let nonempty: Vec<&TripleAccumulator> =
            self.batches.iter().filter(|b| b.count() >= 2).collect();
        if nonempty.len() < 2 || replicates < 2 {
            return None;
        }
        let theta = self.triple.theta();
        let h = self.triple.h;
        let values: Vec<f64> = (0..replicates as u64)
            .into_par_iter()
            .filter_map(|r| {
                let mut draws = DrawSource::new(seed, r).stream();
                let mut acc = TripleAccumulator::new(self.triple.at_center.dim());
                for _ in 0..nonempty.len() {
                    let pick = ((draws.next_uniform() * nonempty.len() as f64) as usize)
                        .min(nonempty.len() - 1);
                    acc.merge(nonempty[pick]).ok()?;
                }
                let value = stat(&acc.finalize(theta, h).ok()?).ok()?;
                value.is_finite().then_some(value)
            })
            .collect();
        if values.len() * 2 < replicates {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Some(var.sqrt())
    }
}

fn tree_merge(mut items: Vec<TripleAccumulator>) -> Result<Option<TripleAccumulator>> {
    // Pairwise left-to-right rounds: a fixed shape that depends only on the
    // number of leaves.
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(mut left) = it.next() {
            if let Some(right) = it.next() {
                left.merge(&right)?;
            }
            next.push(left);
        }
        items = next;
    }
    Ok(items.pop())
}

fn accumulate_block<M: StochasticSystem + ?Sized>(
    model: &M,
    set: &TransformSet,
    thetas: [f64; 3],
    range: std::ops::Range<u64>,
    seed: u64,
    policy: InvalidSamplePolicy,
) -> Result<TripleAccumulator> {
    let dim = set.len();
    let mut acc = TripleAccumulator::new(dim);
    let mut phi = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
    for index in range {
        let source = DrawSource::new(seed, index);
        let mut ok = true;
        for (slot, &theta) in phi.iter_mut().zip(&thetas) {
            let z = model.sample_unchecked(theta, &mut source.stream());
            let evaluated =
                set.evaluate_into(z, slot).is_ok() && slot.iter().all(|x| x.is_finite());
            if !evaluated {
                match policy {
                    InvalidSamplePolicy::Abort => {
                        return Err(Error::InvalidSample(format!(
                            "model `{}` produced z = {z} at theta = {theta}, sample index {index}",
                            model.name()
                        )))
                    }
                    InvalidSamplePolicy::Skip => {
                        ok = false;
                        break;
                    }
                }
            }
        }
        if ok {
            acc.minus.push(&phi[0]);
            acc.center.push(&phi[1]);
            acc.plus.push(&phi[2]);
        } else {
            acc.skipped += 1;
        }
    }
    Ok(acc)
}

/// Estimates the stencil moments with common random numbers: sample index
/// `i` uses the draw stream `(seed, i)` at all three parameter values.
pub fn estimate_triple<M: StochasticSystem + ?Sized>(
    model: &M,
    set: &TransformSet,
    theta: f64,
    h: f64,
    n: u64,
    seed: u64,
) -> Result<MomentTriple> {
    estimate_triple_batched(model, set, theta, h, n, seed, InvalidSamplePolicy::Abort)
        .map(|b| b.triple)
}

/// Like [`estimate_triple`], also returning the [`BATCH_COUNT`] batch
/// accumulators used for bootstrap error estimates.
pub fn estimate_triple_batched<M: StochasticSystem + ?Sized>(
    model: &M,
    set: &TransformSet,
    theta: f64,
    h: f64,
    n: u64,
    seed: u64,
    policy: InvalidSamplePolicy,
) -> Result<BatchedTriple> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Validation(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    if n < 2 {
        return Err(Error::InsufficientData {
            count: n,
            required: 2,
        });
    }
    model.check_theta(theta - h)?;
    model.check_theta(theta)?;
    model.check_theta(theta + h)?;

    let thetas = [theta - h, theta, theta + h];
    let blocks = n.div_ceil(BLOCK_SIZE);
    let block_accs = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let range = b * BLOCK_SIZE..((b + 1) * BLOCK_SIZE).min(n);
            accumulate_block(model, set, thetas, range, seed, policy)
        })
        .collect::<Result<Vec<_>>>()?;

    let nb = block_accs.len();
    let mut batches = Vec::with_capacity(BATCH_COUNT);
    let mut iter = block_accs.into_iter();
    for j in 0..BATCH_COUNT {
        let take = (nb * (j + 1)) / BATCH_COUNT - (nb * j) / BATCH_COUNT;
        let group: Vec<_> = iter.by_ref().take(take).collect();
        if let Some(batch) = tree_merge(group)? {
            batches.push(batch);
        }
    }
    let total = tree_merge(batches.clone())?.expect("at least one block");
    let cap = (MAX_SKIP_FRACTION * n as f64).floor() as u64;
    if total.skipped > cap {
        return Err(Error::InvalidSample(format!(
            "{} of {n} samples skipped, limit is {cap}",
            total.skipped
        )));
    }
    Ok(BatchedTriple {
        triple: total.finalize(theta, h)?,
        skipped: total.skipped,
        batches,
    })
}
