//! Dirichlet process mixture machinery for the error distribution.
//!
//! The random measure itself is never instantiated; observations are
//! allocated through the Polya urn (Escobar–West draws (a) and (b)), and the
//! concentration is resampled on a grid given the number of clusters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::PerObsErrorParams;
use crate::dist::{
    ln_gamma, ln_normal_pdf, ln_student_t_pdf, log_add_exp, sample_log_weights, scaled_inv_chi_squared,
    std_normal,
};
use crate::error::{Error, Result};
use crate::prior::{AlphaPrior, BaselineG0};

/// Error-component parameters `(mu, sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub mu: f64,
    pub sigma: f64,
}

/// Distribution of the number of clusters `I` among `n` draws from a
/// Dirichlet process with concentration `alpha`:
/// `P(I | alpha, n) = |s(n, I)| alpha^I Γ(alpha) / Γ(alpha + n)`.
///
/// Holds `log |s(n, k)|` for `k = 0..=n`, computed with the recurrence
/// `|s(j+1, k)| = j |s(j, k)| + |s(j, k-1)|` on the log scale.
#[derive(Debug, Clone)]
pub struct ClusterCountModel {
    n: usize,
    log_stirling: Vec<f64>,
}

impl ClusterCountModel {
    pub fn new(n: usize) -> Self {
        let mut row = vec![f64::NEG_INFINITY; n + 1];
        row[0] = 0.0;
        for j in 0..n {
            // row holds |s(j, ·)|; update in place from the top down
            let ln_j = (j as f64).ln();
            for k in (1..=j + 1).rev() {
                let stay = if k <= j { ln_j + row[k] } else { f64::NEG_INFINITY };
                row[k] = log_add_exp(stay, row[k - 1]);
            }
            row[0] = f64::NEG_INFINITY;
        }
        if n == 0 {
            row[0] = 0.0;
        }
        Self { n, log_stirling: row }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `log |s(n, k)|`.
    pub fn log_stirling(&self, k: usize) -> f64 {
        self.log_stirling[k]
    }

    pub fn log_prob(&self, i_unique: usize, alpha: f64) -> Result<f64> {
        if i_unique < 1 || i_unique > self.n {
            return Err(Error::InvalidArgument(format!(
                "cluster count {} outside 1..={}",
                i_unique, self.n
            )));
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {}", alpha)));
        }
        Ok(self.log_stirling[i_unique] + i_unique as f64 * alpha.ln() + ln_gamma(alpha)
            - ln_gamma(alpha + self.n as f64))
    }

    /// Most probable cluster count; ties resolve to the smaller count.
    pub fn mode(&self, alpha: f64) -> usize {
        let la = alpha.ln();
        let mut best = (1, f64::NEG_INFINITY);
        for k in 1..=self.n {
            let v = self.log_stirling[k] + k as f64 * la;
            if v > best.1 {
                best = (k, v);
            }
        }
        best.0
    }
}

/// `log P(I | alpha, n)`.
pub fn log_p_clusters_given_alpha(i_unique: usize, n: usize, alpha: f64) -> Result<f64> {
    ClusterCountModel::new(n).log_prob(i_unique, alpha)
}

/// Grid posterior of `alpha` given the cluster count, normalised.
pub fn alpha_posterior_weights(i_unique: usize, prior: &AlphaPrior, model: &ClusterCountModel) -> Result<Vec<f64>> {
    let logw = alpha_log_weights(i_unique, prior, model)?;
    let norm = crate::dist::log_sum_exp(&logw);
    if !norm.is_finite() {
        return Err(Error::Invariant("alpha grid weights all vanish".into()));
    }
    Ok(logw.iter().map(|w| (w - norm).exp()).collect())
}

fn alpha_log_weights(i_unique: usize, prior: &AlphaPrior, model: &ClusterCountModel) -> Result<Vec<f64>> {
    prior
        .grid
        .iter()
        .zip(&prior.weights)
        .map(|(&a, &w)| Ok(model.log_prob(i_unique, a)? + w.ln()))
        .collect()
}

/// Draws `alpha` from its grid posterior `∝ P(I | alpha, n) p(alpha)`.
pub fn draw_alpha<R: Rng + ?Sized>(
    i_unique: usize,
    prior: &AlphaPrior,
    model: &ClusterCountModel,
    rng: &mut R,
) -> Result<f64> {
    let logw = alpha_log_weights(i_unique, prior, model)?;
    let k = sample_log_weights(rng, &logw).ok_or_else(|| Error::Invariant("alpha grid weights all vanish".into()))?;
    Ok(prior.grid[k])
}

/// Summary statistics of the residuals allocated to one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualStats {
    pub count: usize,
    pub mean: f64,
    /// Sum of squared deviations from `mean`.
    pub ss: f64,
}

impl ResidualStats {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Self {
            count: values.len(),
            mean,
            ss: values.iter().map(|v| (v - mean).powi(2)).sum(),
        }
    }
}

/// Conjugate update of the normal / inverse chi-square baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalInvChisqPosterior {
    pub nu_n: f64,
    pub lambda_n: f64,
    pub mu_n: f64,
    pub k_n: f64,
}

impl NormalInvChisqPosterior {
    pub fn update(g0: &BaselineG0, stats: &ResidualStats) -> Self {
        let c = stats.count as f64;
        let k_n = g0.k0 + c;
        let nu_n = g0.nu + c;
        if stats.count == 0 {
            return Self {
                nu_n,
                lambda_n: g0.lambda,
                mu_n: g0.mu0,
                k_n,
            };
        }
        let mu_n = (g0.k0 * g0.mu0 + c * stats.mean) / k_n;
        let d = stats.mean - g0.mu0;
        let lambda_n = (g0.nu * g0.lambda + stats.ss + g0.k0 * c / k_n * d * d) / nu_n;
        Self { nu_n, lambda_n, mu_n, k_n }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Theta {
        let var = scaled_inv_chi_squared(rng, self.nu_n, self.lambda_n);
        let sigma = var.sqrt();
        Theta {
            mu: self.mu_n + sigma / self.k_n.sqrt() * std_normal(rng),
            sigma,
        }
    }
}

/// Baseline distribution of the mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Baseline {
    NormalInvChisq(BaselineG0),
    /// Degenerate baseline at a single `(mu, sigma)`; the mixture then
    /// collapses to iid `N(mu, sigma^2)` errors.
    PointMass(Theta),
}

impl Baseline {
    /// `log ∫ N(e | mu, sigma^2) dG0(mu, sigma)`.
    pub fn ln_marginal_density(&self, e: f64) -> f64 {
        match self {
            Baseline::NormalInvChisq(g0) => ln_marginal_g0_density(e, g0),
            Baseline::PointMass(t) => ln_normal_pdf(e, t.mu, t.sigma),
        }
    }

    pub fn posterior_draw<R: Rng + ?Sized>(&self, stats: &ResidualStats, rng: &mut R) -> Theta {
        match self {
            Baseline::NormalInvChisq(g0) => NormalInvChisqPosterior::update(g0, stats).draw(rng),
            Baseline::PointMass(t) => *t,
        }
    }
}

/// Marginal density of one error under the baseline, the location-scale
/// `t_nu` with center `mu0` and scale `sqrt(lambda (1 + 1/k0))`.
pub fn marginal_g0_density(e: f64, g0: &BaselineG0) -> f64 {
    ln_marginal_g0_density(e, g0).exp()
}

pub fn ln_marginal_g0_density(e: f64, g0: &BaselineG0) -> f64 {
    let scale = (g0.lambda * (1.0 + 1.0 / g0.k0)).sqrt();
    ln_student_t_pdf(e, g0.nu, g0.mu0, scale)
}

/// Cluster labels plus unique parameters.
///
/// Between sweeps there are no empty clusters and labels are dense in
/// `0..i_unique()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    labels: Vec<usize>,
    thetas: Vec<Theta>,
    counts: Vec<usize>,
}

/// Cluster parameters and sizes without the labels, as kept per draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSnapshot {
    pub thetas: Vec<Theta>,
    pub counts: Vec<usize>,
}

impl ClusterSnapshot {
    pub fn n(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Polya-urn predictive density of a new error:
    /// `sum_c n_c/(n+alpha) N(e|theta_c) + alpha/(n+alpha) g0(e)`.
    pub fn predictive_density(&self, e: f64, alpha: f64, baseline: &Baseline) -> f64 {
        let total = self.n() as f64 + alpha;
        let mixture: f64 = self
            .thetas
            .iter()
            .zip(&self.counts)
            .map(|(t, &c)| c as f64 * ln_normal_pdf(e, t.mu, t.sigma).exp())
            .sum();
        (mixture + alpha * baseline.ln_marginal_density(e).exp()) / total
    }
}

impl ClusterState {
    /// Every observation in one cluster.
    pub fn single(n: usize, theta: Theta) -> Self {
        Self {
            labels: vec![0; n],
            thetas: vec![theta],
            counts: vec![n],
        }
    }

    pub fn from_parts(labels: Vec<usize>, thetas: Vec<Theta>) -> Result<Self> {
        let mut counts = vec![0; thetas.len()];
        for &l in &labels {
            *counts.get_mut(l).ok_or_else(|| Error::InvalidArgument(format!("label {} has no cluster", l)))? += 1;
        }
        let state = Self { labels, thetas, counts };
        state.check()?;
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn i_unique(&self) -> usize {
        self.thetas.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn thetas(&self) -> &[Theta] {
        &self.thetas
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn theta_of(&self, i: usize) -> Theta {
        self.thetas[self.labels[i]]
    }

    pub fn snapshot(&self) -> ClusterSnapshot {
        ClusterSnapshot {
            thetas: self.thetas.clone(),
            counts: self.counts.clone(),
        }
    }

    pub fn per_obs(&self) -> PerObsErrorParams {
        PerObsErrorParams {
            mu: self.labels.iter().map(|&l| self.thetas[l].mu).collect(),
            sigma: self.labels.iter().map(|&l| self.thetas[l].sigma).collect(),
        }
    }

    /// Verifies the bookkeeping invariants.
    pub fn check(&self) -> Result<()> {
        if self.thetas.len() != self.counts.len() {
            return Err(Error::Invariant("thetas and counts lengths differ".into()));
        }
        let mut seen = vec![0usize; self.thetas.len()];
        for &l in &self.labels {
            if l >= seen.len() {
                return Err(Error::Invariant(format!("label {} references no cluster", l)));
            }
            seen[l] += 1;
        }
        if seen != self.counts {
            return Err(Error::Invariant("cluster counts out of sync with labels".into()));
        }
        if self.counts.contains(&0) {
            return Err(Error::Invariant("empty cluster retained".into()));
        }
        if self.counts.iter().sum::<usize>() != self.labels.len() {
            return Err(Error::Invariant("counts do not sum to n".into()));
        }
        Ok(())
    }

    /// Drops empty clusters and relabels densely, preserving cluster order.
    fn compact(&mut self) {
        let mut remap = vec![usize::MAX; self.thetas.len()];
        let mut next = 0;
        for (c, &count) in self.counts.iter().enumerate() {
            if count > 0 {
                remap[c] = next;
                next += 1;
            }
        }
        if next == self.thetas.len() {
            return;
        }
        let mut k = 0;
        self.thetas.retain(|_| {
            k += 1;
            self.counts[k - 1] > 0
        });
        self.counts.retain(|&c| c > 0);
        for l in self.labels.iter_mut() {
            *l = remap[*l];
        }
    }
}

/// Unnormalised log allocation weights of one residual against the other
/// clusters: `log(count_c) + log N(e | theta_c)` for each cluster, then
/// `log(alpha) + log g0(e)` for a new cluster as the last entry. Clusters
/// with zero count get `-inf`.
pub fn allocation_log_weights(e: f64, thetas: &[Theta], counts: &[usize], alpha: f64, baseline: &Baseline) -> Vec<f64> {
    let mut w: Vec<f64> = thetas
        .iter()
        .zip(counts)
        .map(|(t, &c)| {
            if c == 0 {
                f64::NEG_INFINITY
            } else {
                (c as f64).ln() + ln_normal_pdf(e, t.mu, t.sigma)
            }
        })
        .collect();
    w.push(alpha.ln() + baseline.ln_marginal_density(e));
    w
}

/// Escobar–West draw (a): reallocates each `theta_i` in turn given all the
/// others, either to an existing cluster or to a fresh draw from the
/// baseline posterior given `e_i` alone.
pub fn ew_draw_a<R: Rng + ?Sized>(
    residuals: &[f64],
    state: &mut ClusterState,
    alpha: f64,
    baseline: &Baseline,
    rng: &mut R,
) -> Result<()> {
    if residuals.len() != state.n() {
        return Err(Error::InvalidArgument("residual length does not match cluster state".into()));
    }
    let mut logw = Vec::with_capacity(state.thetas.len() + 1);
    // empty slots are kept until the end of the sweep and reused for new clusters
    let mut empty: Vec<usize> = Vec::new();
    for (i, &e) in residuals.iter().enumerate() {
        let old = state.labels[i];
        state.counts[old] -= 1;
        if state.counts[old] == 0 {
            empty.push(old);
        }
        logw.clear();
        logw.extend(state.thetas.iter().zip(&state.counts).map(|(t, &c)| {
            if c == 0 {
                f64::NEG_INFINITY
            } else {
                (c as f64).ln() + ln_normal_pdf(e, t.mu, t.sigma)
            }
        }));
        logw.push(alpha.ln() + baseline.ln_marginal_density(e));
        let k = sample_log_weights(rng, &logw)
            .ok_or_else(|| Error::Invariant(format!("allocation weights vanish for residual {}", e)))?;
        let target = if k == state.thetas.len() {
            let theta = baseline.posterior_draw(&ResidualStats::from_values(&[e]), rng);
            match empty.pop() {
                Some(slot) => {
                    state.thetas[slot] = theta;
                    slot
                }
                None => {
                    state.thetas.push(theta);
                    state.counts.push(0);
                    state.thetas.len() - 1
                }
            }
        } else {
            k
        };
        if state.counts[target] == 0 {
            empty.retain(|&s| s != target);
        }
        state.counts[target] += 1;
        state.labels[i] = target;
    }
    state.compact();
    Ok(())
}

/// Escobar–West draw (b): redraws each cluster's `theta` from the baseline
/// posterior given its members. Labels are unchanged.
pub fn ew_draw_b<R: Rng + ?Sized>(
    residuals: &[f64],
    state: &mut ClusterState,
    baseline: &Baseline,
    rng: &mut R,
) -> Result<()> {
    if residuals.len() != state.n() {
        return Err(Error::InvalidArgument("residual length does not match cluster state".into()));
    }
    let k = state.thetas.len();
    let mut sums = vec![0.0; k];
    for (&l, &e) in state.labels.iter().zip(residuals) {
        sums[l] += e;
    }
    let means: Vec<f64> = sums.iter().zip(&state.counts).map(|(s, &c)| s / c as f64).collect();
    let mut ss = vec![0.0; k];
    for (&l, &e) in state.labels.iter().zip(residuals) {
        ss[l] += (e - means[l]).powi(2);
    }
    for c in 0..k {
        let stats = ResidualStats {
            count: state.counts[c],
            mean: means[c],
            ss: ss[c],
        };
        state.thetas[c] = baseline.posterior_draw(&stats, rng);
    }
    Ok(())
}

/// Kept output of a stand-alone density-estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpmDraw {
    pub clusters: ClusterSnapshot,
    pub alpha: f64,
}

/// Runs only the mixture blocks on fixed data: draws (a), (b), then alpha.
pub fn run_density_estimation<R: Rng + ?Sized>(
    values: &[f64],
    baseline: &Baseline,
    alpha_prior: &AlphaPrior,
    n_iter: usize,
    n_burn: usize,
    initial: Theta,
    rng: &mut R,
) -> Result<Vec<DpmDraw>> {
    let model = ClusterCountModel::new(values.len());
    let mut state = ClusterState::single(values.len(), initial);
    let mut alpha = alpha_prior.prior_mean();
    let mut out = Vec::with_capacity(n_iter.saturating_sub(n_burn));
    for it in 0..n_iter {
        ew_draw_a(values, &mut state, alpha, baseline, rng)?;
        ew_draw_b(values, &mut state, baseline, rng)?;
        alpha = draw_alpha(state.i_unique(), alpha_prior, &model, rng)?;
        if it >= n_burn {
            out.push(DpmDraw {
                clusters: state.snapshot(),
                alpha,
            });
        }
    }
    Ok(out)
}
