//! Tree-specific quantitative laws: avalanche clusters, expected toppling
//! numbers against the exact Laplacian inverse, Green's function decay,
//! truncated correlations, and the transfer-matrix eigenvalue bound.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::engine::{add_grain, HeightConfig};
use crate::error::{Error, Result};
use crate::measure::{
    EmpiricalEstimate, EstimateMethod, LocalObservable, SampleMethod, UniformSampler,
};
use crate::topology::{build_tree_volume, toppling_matrix, SiteId, ToppleMatrix, VolumeGraph};

/// The nearest-neighbor connected cluster of maximal-height sites
/// containing `x` (empty when `x` is not at maximal height). On the
/// binary tree the maximal height is 3 and this is the avalanche support.
#[derive(Clone, Debug, Serialize)]
pub struct ClusterResult {
    pub sites: Vec<SiteId>,
    pub touched_boundary: bool,
}

impl ClusterResult {
    pub fn size(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

pub fn cluster3(c: &HeightConfig, x: SiteId, v: &VolumeGraph) -> ClusterResult {
    let full = v.full_degree() as u64;
    if c.height(x) != full {
        return ClusterResult {
            sites: Vec::new(),
            touched_boundary: false,
        };
    }
    let mut seen = vec![false; v.site_count()];
    let mut queue = std::collections::VecDeque::from([x]);
    seen[x] = true;
    let mut sites = Vec::new();
    let mut touched = false;
    while let Some(s) = queue.pop_front() {
        sites.push(s);
        touched |= v.is_boundary(s);
        for &y in v.neighbors(s) {
            if !seen[y] && c.height(y) == full {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    sites.sort_unstable();
    ClusterResult {
        sites,
        touched_boundary: touched,
    }
}

/// Checks, over stationary samples, that the support of the toppling
/// ledger from one addition at `x` is exactly the maximal-height cluster.
#[derive(Clone, Debug, Serialize)]
pub struct AvalancheClusterReport {
    pub samples: u64,
    pub additions_at_max_height: u64,
    pub violations: u64,
}

pub fn avalanche_equals_cluster_check(
    v: &VolumeGraph,
    m: &ToppleMatrix,
    x: SiteId,
    n_samples: u64,
    seed: u64,
) -> Result<AvalancheClusterReport> {
    let mut sampler = UniformSampler::mcmc_default(v, m, seed)?;
    let mut at_max = 0u64;
    let mut violations = 0u64;
    for _ in 0..n_samples {
        let c = sampler.draw_ref()?;
        let cluster = cluster3(c, x, v);
        if !cluster.is_empty() {
            at_max += 1;
        }
        let (_, ledger) = add_grain(c, x, m)?;
        if ledger.support() != cluster.sites {
            violations += 1;
        }
    }
    Ok(AvalancheClusterReport {
        samples: n_samples,
        additions_at_max_height: at_max,
        violations,
    })
}

/// One histogram row: cluster size, non-boundary count, boundary-touching
/// (censored) count.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ClusterHistogramRow {
    pub size: u64,
    pub count: u64,
    pub censored: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClusterStats {
    pub n_samples: u64,
    /// Samples where the origin was not at maximal height (empty cluster).
    pub zero_count: u64,
    /// Mean cluster size over all samples (empty clusters count as zero).
    /// Grows with the volume; the infinite-volume mean is not finite.
    pub mean_size: f64,
    pub histogram: Vec<ClusterHistogramRow>,
    pub fit: Option<TailFit>,
}

/// Log-binned weighted least-squares fit of the cluster-size tail.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TailFit {
    /// Magnitude of the power-law exponent (the decay is size^-exponent).
    pub exponent: f64,
    pub stderr: f64,
    pub k_min: u64,
    pub k_max: u64,
    pub bins_used: usize,
    pub reliable: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct TailFitConfig {
    pub k_min: u64,
    /// Sizes with fewer raw counts than this end the fit range.
    pub min_count: u64,
    pub bin_ratio: f64,
}

impl Default for TailFitConfig {
    fn default() -> Self {
        TailFitConfig {
            k_min: 8,
            min_count: 50,
            bin_ratio: 1.3,
        }
    }
}

/// Fit counts[size] ~ C size^-a over [k_min, k_max] where k_max is the
/// largest size still backed by `min_count` raw counts. Weights are the
/// bin counts, matching the Poisson variance of a log density.
pub fn fit_power_law_tail(
    counts: &BTreeMap<u64, u64>,
    n_samples: u64,
    cfg: &TailFitConfig,
) -> Option<TailFit> {
    let k_max = counts
        .iter()
        .filter(|&(_, &c)| c >= cfg.min_count)
        .map(|(&k, _)| k)
        .max()?;
    if k_max < 2 * cfg.k_min {
        return None;
    }
    let mut points = Vec::new();
    let mut lo = cfg.k_min;
    while lo <= k_max {
        let hi = ((lo as f64 * cfg.bin_ratio).ceil() as u64).max(lo + 1).min(k_max + 1);
        let total: u64 = counts.range(lo..hi).map(|(_, &c)| c).sum();
        if total > 0 {
            let width = (hi - lo) as f64;
            let center = ((lo as f64) * ((hi - 1) as f64)).sqrt();
            let density = total as f64 / (width * n_samples as f64);
            points.push((center.ln(), density.ln(), total as f64));
        }
        lo = hi;
    }
    if points.len() < 3 {
        return None;
    }
    let wsum: f64 = points.iter().map(|p| p.2).sum();
    let xbar: f64 = points.iter().map(|p| p.0 * p.2).sum::<f64>() / wsum;
    let ybar: f64 = points.iter().map(|p| p.1 * p.2).sum::<f64>() / wsum;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - xbar).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| p.2 * (p.0 - xbar) * (p.1 - ybar))
        .sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(TailFit {
        exponent: -slope,
        stderr: (1.0 / sxx).sqrt(),
        k_min: cfg.k_min,
        k_max,
        bins_used: points.len(),
        reliable: points.len() >= 4,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct ClusterSampleConfig {
    pub n_samples: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
}

/// Histogram of the origin cluster size under stationary sampling, with
/// boundary-touching clusters censored out of the tail fit: finite volume
/// truncates exactly the large avalanches the fit is about.
pub fn cluster_size_distribution(
    v: &VolumeGraph,
    m: &ToppleMatrix,
    cfg: &ClusterSampleConfig,
    fit_cfg: &TailFitConfig,
) -> Result<ClusterStats> {
    let mut sampler = UniformSampler::new(
        v,
        m,
        SampleMethod::Mcmc {
            burn_in: cfg.burn_in,
            thinning: cfg.thinning,
        },
        cfg.seed,
    )?;
    let origin = v.origin();
    let full = v.full_degree() as u64;
    let mut zero = 0u64;
    let mut hist: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    // stamped BFS scratch: reset costs nothing between samples
    let mut stamp = vec![0u32; v.site_count()];
    let mut current = 0u32;
    let mut frontier: Vec<SiteId> = Vec::new();
    for _ in 0..cfg.n_samples {
        let c = sampler.draw_ref()?;
        if c.height(origin) != full {
            zero += 1;
            continue;
        }
        current += 1;
        frontier.clear();
        frontier.push(origin);
        stamp[origin] = current;
        let mut head = 0;
        let mut touched = false;
        while head < frontier.len() {
            let s = frontier[head];
            head += 1;
            touched |= v.is_boundary(s);
            for &y in v.neighbors(s) {
                if stamp[y] != current && c.height(y) == full {
                    stamp[y] = current;
                    frontier.push(y);
                }
            }
        }
        let entry = hist.entry(frontier.len() as u64).or_insert((0, 0));
        if touched {
            entry.1 += 1;
        } else {
            entry.0 += 1;
        }
    }
    let uncensored: BTreeMap<u64, u64> = hist.iter().map(|(&k, &(c, _))| (k, c)).collect();
    let fit = fit_power_law_tail(&uncensored, cfg.n_samples, fit_cfg);
    let total_mass: u64 = hist.iter().map(|(&k, &(c, x))| k * (c + x)).sum();
    Ok(ClusterStats {
        n_samples: cfg.n_samples,
        zero_count: zero,
        mean_size: total_mass as f64 / cfg.n_samples as f64,
        histogram: hist
            .into_iter()
            .map(|(size, (count, censored))| ClusterHistogramRow {
                size,
                count,
                censored,
            })
            .collect(),
        fit,
    })
}

/// Monte Carlo estimate of the expected toppling count at `y` per grain
/// added at `x` under the stationary measure, one estimate per pair, all
/// pairs sharing the same stationary samples.
pub fn expected_topplings_mc(
    v: &VolumeGraph,
    m: &ToppleMatrix,
    pairs: &[(SiteId, SiteId)],
    n_samples: u64,
    seed: u64,
) -> Result<Vec<EmpiricalEstimate>> {
    let mut sampler = UniformSampler::mcmc_default(v, m, seed)?;
    let mut sources: Vec<SiteId> = pairs.iter().map(|&(x, _)| x).collect();
    sources.sort_unstable();
    sources.dedup();
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(n_samples as usize); pairs.len()];
    for _ in 0..n_samples {
        let c = sampler.draw_ref()?;
        for &x in &sources {
            let (_, ledger) = add_grain(c, x, m)?;
            for (slot, &(px, py)) in values.iter_mut().zip(pairs) {
                if px == x {
                    slot.push(ledger.count(py) as f64);
                }
            }
        }
    }
    Ok(values
        .iter()
        .map(|vals| EmpiricalEstimate::from_samples(vals, EstimateMethod::Mcmc))
        .collect())
}

/// Exact Green's function G = inverse of the toppling matrix.
#[derive(Clone, Debug)]
pub struct GreensMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl GreensMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, x: SiteId, y: SiteId) -> f64 {
        self.data[x * self.dim + y]
    }

    /// Largest deviation of sum_z Delta_{x,z} G(z,y) from the identity.
    pub fn identity_residual(&self, m: &ToppleMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for x in 0..self.dim {
            for y in 0..self.dim {
                let mut acc = m.diag(x) as f64 * self.get(x, y);
                for (z, coeff) in m.off_diag(x) {
                    acc += coeff as f64 * self.get(z, y);
                }
                let target = f64::from(x == y);
                worst = worst.max((acc - target).abs());
            }
        }
        worst
    }
}

/// Elimination from the leaves inward: on trees the Laplacian factors
/// with no fill-in, so each column solve is linear time.
struct TreeSolver {
    order: Vec<SiteId>,
    parent: Vec<usize>,
    eff_diag: Vec<f64>,
}

impl TreeSolver {
    fn new(v: &VolumeGraph, m: &ToppleMatrix) -> Result<Self> {
        let n = v.site_count();
        if (0..n).any(|x| m.off_diag(x).any(|(_, c)| c != -1)) {
            return Err(Error::SolveFailed(
                "tree solver requires unit off-diagonal couplings".into(),
            ));
        }
        let mut order = Vec::with_capacity(n);
        let mut parent = vec![usize::MAX; n];
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([v.origin()]);
        seen[v.origin()] = true;
        while let Some(x) = queue.pop_front() {
            order.push(x);
            for &y in v.neighbors(x) {
                if !seen[y] {
                    seen[y] = true;
                    parent[y] = x;
                    queue.push_back(y);
                }
            }
        }
        if order.len() != n {
            return Err(Error::SolveFailed("volume is not connected".into()));
        }
        let mut eff_diag = vec![0.0; n];
        for &x in order.iter().rev() {
            let mut d = m.diag(x) as f64;
            for &y in v.neighbors(x) {
                if parent[y] == x {
                    d -= 1.0 / eff_diag[y];
                }
            }
            if d <= 0.0 {
                return Err(Error::SolveFailed("matrix is not positive definite".into()));
            }
            eff_diag[x] = d;
        }
        Ok(TreeSolver {
            order,
            parent,
            eff_diag,
        })
    }

    fn solve(&self, v: &VolumeGraph, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut bp = b.to_vec();
        for &x in self.order.iter().rev() {
            for &y in v.neighbors(x) {
                if self.parent[y] == x {
                    let carry = bp[y] / self.eff_diag[y];
                    bp[x] += carry;
                }
            }
        }
        let mut u = vec![0.0; n];
        for &x in self.order.iter() {
            let up = if self.parent[x] == usize::MAX {
                0.0
            } else {
                u[self.parent[x]]
            };
            u[x] = (bp[x] + up) / self.eff_diag[x];
        }
        u
    }
}

const GREENS_DENSE_CAP: usize = 2000;

/// One column of the Green's function: G(., y).
pub fn greens_column(v: &VolumeGraph, m: &ToppleMatrix, y: SiteId) -> Result<Vec<f64>> {
    let n = m.dim();
    let mut b = vec![0.0; n];
    b[y] = 1.0;
    if v.is_tree() {
        let solver = TreeSolver::new(v, m)?;
        Ok(solver.solve(v, &b))
    } else {
        dense_solve_columns(m, &[y]).map(|mut cols| cols.pop().unwrap())
    }
}

fn dense_solve_columns(m: &ToppleMatrix, ys: &[SiteId]) -> Result<Vec<Vec<f64>>> {
    let n = m.dim();
    if n > GREENS_DENSE_CAP {
        return Err(Error::InvalidParameter(format!(
            "dense solve limited to {GREENS_DENSE_CAP} sites, got {n}"
        )));
    }
    let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| m.entry(i, j) as f64);
    let chol = dense
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SolveFailed("toppling matrix is not positive definite".into()))?;
    Ok(ys
        .iter()
        .map(|&y| {
            let mut e = nalgebra::DVector::zeros(n);
            e[y] = 1.0;
            chol.solve(&e).iter().copied().collect()
        })
        .collect())
}

/// The full inverse; prefer [`greens_column`] for large volumes.
pub fn greens_exact(v: &VolumeGraph, m: &ToppleMatrix) -> Result<GreensMatrix> {
    let n = m.dim();
    if n > GREENS_DENSE_CAP {
        return Err(Error::InvalidParameter(format!(
            "full Green's matrix limited to {GREENS_DENSE_CAP} sites, got {n}"
        )));
    }
    let mut data = vec![0.0; n * n];
    if v.is_tree() {
        let solver = TreeSolver::new(v, m)?;
        let mut b = vec![0.0; n];
        for y in 0..n {
            b[y] = 1.0;
            let col = solver.solve(v, &b);
            b[y] = 0.0;
            for x in 0..n {
                data[x * n + y] = col[x];
            }
        }
    } else {
        let cols = dense_solve_columns(m, &(0..n).collect::<Vec<_>>())?;
        for (y, col) in cols.iter().enumerate() {
            for x in 0..n {
                data[x * n + y] = col[x];
            }
        }
    }
    Ok(GreensMatrix { dim: n, data })
}

#[derive(Clone, Debug, Serialize)]
pub struct GreensDecayEntry {
    pub n_gen: u32,
    /// G(0, x) for one representative x per generation 0..=n_gen.
    pub greens_by_generation: Vec<f64>,
    /// G(0, x) * 2^|x|; flat in |x| when the decay is exactly half per step.
    pub normalized: Vec<f64>,
    /// Largest relative discrepancy of G(0, x) across sites of one generation.
    pub same_generation_max_rel_dev: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GreensDecayReport {
    pub entries: Vec<GreensDecayEntry>,
    /// G_V(0, x) grows with the volume at every fixed x.
    pub monotone_in_volume: bool,
    /// max/min - 1 of the normalized values over generations 1..=5 on the
    /// largest scheduled volume (when it has that many generations).
    pub normalized_spread_gen1_to_5: Option<f64>,
}

/// Exact origin-column solves on a schedule of tree balls; reports the
/// per-generation decay of the Green's function.
pub fn greens_decay_check(d: u32, n_gens: &[u32]) -> Result<GreensDecayReport> {
    if n_gens.is_empty() || !n_gens.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidParameter(
            "need a strictly increasing nonempty list of radii".into(),
        ));
    }
    let mut entries = Vec::new();
    let mut monotone = true;
    let mut prev: Option<Vec<f64>> = None;
    for &n in n_gens {
        let v = build_tree_volume(d, n)?;
        let m = toppling_matrix(&v);
        let col = greens_column(&v, &m, v.origin())?;
        let mut by_gen = vec![f64::NAN; n as usize + 1];
        let mut max_rel_dev: f64 = 0.0;
        for x in 0..v.site_count() {
            let g = v.generation(x) as usize;
            if by_gen[g].is_nan() {
                by_gen[g] = col[x];
            } else {
                let rel = (col[x] - by_gen[g]).abs() / by_gen[g].abs().max(f64::MIN_POSITIVE);
                max_rel_dev = max_rel_dev.max(rel);
            }
        }
        let normalized: Vec<f64> = by_gen
            .iter()
            .enumerate()
            .map(|(g, &val)| val * 2f64.powi(g as i32))
            .collect();
        if let Some(prev_vals) = &prev {
            for (g, &val) in prev_vals.iter().enumerate() {
                if by_gen[g] < val - 1e-13 {
                    monotone = false;
                }
            }
        }
        prev = Some(by_gen.clone());
        entries.push(GreensDecayEntry {
            n_gen: n,
            greens_by_generation: by_gen,
            normalized,
            same_generation_max_rel_dev: max_rel_dev,
        });
    }
    let spread = entries.last().and_then(|e| {
        if e.n_gen >= 7 {
            let vals = &e.normalized[1..=5];
            let max = vals.iter().cloned().fold(f64::MIN, f64::max);
            let min = vals.iter().cloned().fold(f64::MAX, f64::min);
            Some(max / min - 1.0)
        } else {
            None
        }
    });
    Ok(GreensDecayReport {
        entries,
        monotone_in_volume: monotone,
        normalized_spread_gen1_to_5: spread,
    })
}

/// Covariance of two local observables under the stationary measure, with
/// a leave-one-out jackknife standard error.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CorrelationEstimate {
    pub covariance: f64,
    pub stderr: f64,
    pub n_samples: u64,
}

pub fn truncated_correlation(
    f: &LocalObservable,
    g: &LocalObservable,
    v: &VolumeGraph,
    m: &ToppleMatrix,
    n_samples: u64,
    seed: u64,
) -> Result<CorrelationEstimate> {
    f.check_inside(v.site_count())?;
    g.check_inside(v.site_count())?;
    if n_samples < 4 {
        return Err(Error::InvalidParameter(
            "need at least 4 samples for a jackknife".into(),
        ));
    }
    let mut sampler = UniformSampler::mcmc_default(v, m, seed)?;
    let n = n_samples as usize;
    let mut fs = Vec::with_capacity(n);
    let mut gs = Vec::with_capacity(n);
    for _ in 0..n {
        let c = sampler.draw_ref()?;
        fs.push(f.eval_config(c));
        gs.push(g.eval_config(c));
    }
    let nf = n as f64;
    let sf: f64 = fs.iter().sum();
    let sg: f64 = gs.iter().sum();
    let sfg: f64 = fs.iter().zip(&gs).map(|(a, b)| a * b).sum();
    let cov = (sfg - sf * sg / nf) / (nf - 1.0);

    // leave-one-out replicates in one pass
    let mut reps = Vec::with_capacity(n);
    let nl = nf - 1.0;
    for i in 0..n {
        let sf_i = sf - fs[i];
        let sg_i = sg - gs[i];
        let sfg_i = sfg - fs[i] * gs[i];
        reps.push((sfg_i - sf_i * sg_i / nl) / (nl - 1.0));
    }
    let rep_mean: f64 = reps.iter().sum::<f64>() / nf;
    let var = reps.iter().map(|r| (r - rep_mean).powi(2)).sum::<f64>() * (nl / nf);
    Ok(CorrelationEstimate {
        covariance: cov,
        stderr: var.sqrt(),
        n_samples,
    })
}

/// Product of the 2x2 transfer matrices [[1+g, 1+g], [1, 2+g]] and the
/// determinant-over-trace-squared bound (4/9)^n.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TransferMatrixBound {
    pub n: usize,
    pub product: [[f64; 2]; 2],
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub eigenvalue_ratio: f64,
    pub det_over_trace_sq: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn transfer_matrix_bound(gammas: &[f64]) -> Result<TransferMatrixBound> {
    if gammas.is_empty() {
        return Err(Error::InvalidParameter("need at least one factor".into()));
    }
    if gammas.iter().any(|&g| !(0.0..=1.0).contains(&g)) {
        return Err(Error::InvalidParameter(
            "transfer-matrix parameters must lie in [0, 1]".into(),
        ));
    }
    let mut p = [[1.0, 0.0], [0.0, 1.0]];
    let mut det = 1.0;
    for &g in gammas {
        let f = [[1.0 + g, 1.0 + g], [1.0, 2.0 + g]];
        p = [
            [
                p[0][0] * f[0][0] + p[0][1] * f[1][0],
                p[0][0] * f[0][1] + p[0][1] * f[1][1],
            ],
            [
                p[1][0] * f[0][0] + p[1][1] * f[1][0],
                p[1][0] * f[0][1] + p[1][1] * f[1][1],
            ],
        ];
        // determinant of the product as the product of factor
        // determinants (1+g)^2; the entry formula ad - bc cancels
        // catastrophically on long products
        det *= (1.0 + g) * (1.0 + g);
    }
    let trace = p[0][0] + p[1][1];
    let disc = (trace * trace - 4.0 * det).max(0.0).sqrt();
    let lambda_max = (trace + disc) / 2.0;
    // the subtractive eigenvalue formula cancels once det << trace^2
    let lambda_min = det / lambda_max;
    let ratio = det / (trace * trace);
    let bound = (4f64 / 9.0).powi(gammas.len() as i32);
    Ok(TransferMatrixBound {
        n: gammas.len(),
        product: p,
        lambda_min,
        lambda_max,
        eigenvalue_ratio: lambda_min / lambda_max,
        det_over_trace_sq: ratio,
        bound,
        holds: ratio <= bound,
    })
}
