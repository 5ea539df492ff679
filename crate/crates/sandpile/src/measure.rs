//! The uniform stationary measure on the recurrent configurations: exact
//! and sampled expectations, the boundary-height identity, and the
//! thermodynamic-limit convergence diagnostic.

use num_bigint::BigInt;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::engine::{add_grain_in_workspace, add_grains_in_place, AvalancheWorkspace, HeightConfig};
use crate::error::{Error, Result};
use crate::recurrence::{determinant_exact, enumerate_recurrent, DEFAULT_ENUMERATION_CAP};
use crate::rng::{poisson_count, substream};
use crate::topology::{
    prefix_volume, toppling_matrix, volumes_equal, SiteId, ToppleMatrix, VolumeGraph,
    VolumeSchedule,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    Exact,
    Mcmc,
    IidEnumeration,
}

/// A point estimate with its standard error; stderr is zero exactly for
/// the exact method.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EmpiricalEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub method: EstimateMethod,
}

impl EmpiricalEstimate {
    pub fn exact(mean: f64) -> Self {
        EmpiricalEstimate {
            mean,
            stderr: 0.0,
            n_samples: 0,
            method: EstimateMethod::Exact,
        }
    }

    pub fn from_samples(values: &[f64], method: EstimateMethod) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stderr = if method == EstimateMethod::Mcmc && values.len() >= 1000 {
            // batch means: chain draws are autocorrelated, so the naive
            // iid formula would understate the error
            let batches = 50;
            let len = values.len() / batches;
            let bmeans: Vec<f64> = (0..batches)
                .map(|b| values[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64)
                .collect();
            let bmean = bmeans.iter().sum::<f64>() / batches as f64;
            let bvar = bmeans.iter().map(|v| (v - bmean).powi(2)).sum::<f64>()
                / (batches as f64 - 1.0);
            (bvar / batches as f64).sqrt()
        } else if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        EmpiricalEstimate {
            mean,
            stderr,
            n_samples: values.len() as u64,
            method,
        }
    }

    pub fn within_sigmas(&self, target: f64, sigmas: f64) -> bool {
        (self.mean - target).abs() <= sigmas * self.stderr
    }
}

/// How to draw from the uniform measure on the recurrent set.
#[derive(Clone, Copy, Debug)]
pub enum SampleMethod {
    /// Exact uniform draws from the enumerated recurrent set (small volumes).
    Enumeration,
    /// State of the uniform-addition chain started from the maximal
    /// configuration, after `burn_in` additions, sampled every `thinning`
    /// additions (plus a random parity step, see below).
    Mcmc { burn_in: u64, thinning: u64 },
}

enum SamplerMode {
    Enumeration(Vec<HeightConfig>),
    Mcmc { state: HeightConfig, thinning: u64 },
}

/// Draws approximately (or exactly) uniform recurrent configurations.
pub struct UniformSampler<'a> {
    v: &'a VolumeGraph,
    m: &'a ToppleMatrix,
    mode: SamplerMode,
    rng: ChaCha12Rng,
    workspace: AvalancheWorkspace,
    /// Set when an MCMC sampler was requested with no burn-in at all.
    pub zero_burn_in: bool,
}

impl<'a> UniformSampler<'a> {
    pub fn new(
        v: &'a VolumeGraph,
        m: &'a ToppleMatrix,
        method: SampleMethod,
        seed: u64,
    ) -> Result<Self> {
        let rng = substream(seed, 0x5a3713, 1);
        let workspace = AvalancheWorkspace::new(v.site_count());
        match method {
            SampleMethod::Enumeration => {
                let configs = enumerate_recurrent(v)?;
                Ok(UniformSampler {
                    v,
                    m,
                    mode: SamplerMode::Enumeration(configs),
                    rng,
                    workspace,
                    zero_burn_in: false,
                })
            }
            SampleMethod::Mcmc { burn_in, thinning } => {
                let mut sampler = UniformSampler {
                    v,
                    m,
                    mode: SamplerMode::Mcmc {
                        state: HeightConfig::max_stable(m),
                        thinning: thinning.max(1),
                    },
                    rng,
                    workspace,
                    zero_burn_in: burn_in == 0,
                };
                for _ in 0..burn_in {
                    sampler.chain_step()?;
                }
                Ok(sampler)
            }
        }
    }

    /// MCMC with the default burn-in of 10 |V| additions and thinning 4.
    pub fn mcmc_default(v: &'a VolumeGraph, m: &'a ToppleMatrix, seed: u64) -> Result<Self> {
        let burn_in = 10 * v.site_count() as u64;
        UniformSampler::new(v, m, SampleMethod::Mcmc { burn_in, thinning: 4 }, seed)
    }

    fn chain_step(&mut self) -> Result<()> {
        let n = self.v.site_count();
        let x = self.rng.gen_range(0..n);
        if let SamplerMode::Mcmc { state, .. } = &mut self.mode {
            add_grain_in_workspace(state, x, self.m, &mut self.workspace)?;
        }
        Ok(())
    }

    /// Advance (for MCMC) and return a view of one configuration; the hot
    /// path, no copy.
    pub fn draw_ref(&mut self) -> Result<&HeightConfig> {
        match &self.mode {
            SamplerMode::Enumeration(_) => {
                let i = match &self.mode {
                    SamplerMode::Enumeration(configs) => self.rng.gen_range(0..configs.len()),
                    _ => unreachable!(),
                };
                match &self.mode {
                    SamplerMode::Enumeration(configs) => Ok(&configs[i]),
                    _ => unreachable!(),
                }
            }
            SamplerMode::Mcmc { thinning, .. } => {
                // an extra random parity step: on small volumes the group
                // walk can be periodic, and a fixed stride would lock the
                // draws onto one coset
                let steps = *thinning + self.rng.gen_range(0..2u64);
                for _ in 0..steps {
                    self.chain_step()?;
                }
                match &self.mode {
                    SamplerMode::Mcmc { state, .. } => Ok(state),
                    _ => unreachable!(),
                }
            }
        }
    }

    /// Advance (for MCMC) and return one configuration.
    pub fn draw(&mut self) -> Result<HeightConfig> {
        self.draw_ref().map(Clone::clone)
    }

    pub fn method(&self) -> EstimateMethod {
        match self.mode {
            SamplerMode::Enumeration(_) => EstimateMethod::IidEnumeration,
            SamplerMode::Mcmc { .. } => EstimateMethod::Mcmc,
        }
    }
}

/// A function of finitely many heights, carried together with its
/// dependence set so volume checks stay honest.
pub struct LocalObservable {
    label: String,
    sites: Vec<SiteId>,
    eval: Box<dyn Fn(&[u64]) -> f64 + Send + Sync>,
}

impl LocalObservable {
    pub fn new(
        label: impl Into<String>,
        sites: Vec<SiteId>,
        eval: impl Fn(&[u64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        LocalObservable {
            label: label.into(),
            sites,
            eval: Box::new(eval),
        }
    }

    pub fn height_at(x: SiteId) -> Self {
        LocalObservable::new(format!("height({x})"), vec![x], |h| h[0] as f64)
    }

    pub fn height_indicator(x: SiteId, value: u64) -> Self {
        LocalObservable::new(
            format!("indicator(height({x}) == {value})"),
            vec![x],
            move |h| f64::from(h[0] == value),
        )
    }

    pub fn constant(value: f64) -> Self {
        LocalObservable::new(format!("constant({value})"), Vec::new(), move |_| value)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn sites(&self) -> &[SiteId] {
        &self.sites
    }

    /// Error unless the dependence set lies inside a volume of `n` sites.
    pub fn check_inside(&self, n_sites: usize) -> Result<()> {
        match self.sites.iter().max() {
            Some(&max) if max >= n_sites => Err(Error::DimensionMismatch(format!(
                "observable {} depends on site {max}, volume has {n_sites} sites",
                self.label
            ))),
            _ => Ok(()),
        }
    }

    pub fn eval_config(&self, c: &HeightConfig) -> f64 {
        let restricted: Vec<u64> = self.sites.iter().map(|&x| c.height(x)).collect();
        (self.eval)(&restricted)
    }
}

/// How to compute an expectation under the uniform recurrent measure.
#[derive(Clone, Copy, Debug)]
pub enum ExpectationMethod {
    /// Exact average over the enumerated recurrent set.
    Exact,
    /// Monte Carlo with the given sampler.
    Sampled { method: SampleMethod, n_samples: u64 },
}

pub fn expectation(
    f: &LocalObservable,
    v: &VolumeGraph,
    m: &ToppleMatrix,
    method: ExpectationMethod,
    seed: u64,
) -> Result<EmpiricalEstimate> {
    f.check_inside(v.site_count())?;
    match method {
        ExpectationMethod::Exact => {
            let configs = enumerate_recurrent(v)?;
            let total: f64 = configs.iter().map(|c| f.eval_config(c)).sum();
            Ok(EmpiricalEstimate::exact(total / configs.len() as f64))
        }
        ExpectationMethod::Sampled { method, n_samples } => {
            if n_samples == 0 {
                return Err(Error::InvalidParameter("n_samples must be > 0".into()));
            }
            let mut sampler = UniformSampler::new(v, m, method, seed)?;
            let mut values = Vec::with_capacity(n_samples as usize);
            for _ in 0..n_samples {
                let c = sampler.draw()?;
                values.push(f.eval_config(&c));
            }
            Ok(EmpiricalEstimate::from_samples(&values, sampler.method()))
        }
    }
}

/// Exact and sampled sides of the boundary-height identity: adding one
/// site to a volume, the probability that the new site carries maximal
/// height equals the ratio of recurrent counts.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryHeightReport {
    pub new_site: SiteId,
    pub small_determinant: String,
    pub big_determinant: String,
    pub det_ratio: f64,
    /// Exact rational equality (counting vs determinants), when the big
    /// volume is enumerable.
    pub exact_equality: Option<bool>,
    pub empirical: Option<EmpiricalEstimate>,
    pub empirical_within_3_sigma: Option<bool>,
}

pub fn boundary_height_identity(
    v_small: &VolumeGraph,
    v_big: &VolumeGraph,
    n_samples: u64,
    seed: u64,
) -> Result<BoundaryHeightReport> {
    let n = v_small.site_count();
    if v_big.site_count() != n + 1 || !volumes_equal(v_small, &prefix_volume(v_big, n)?) {
        return Err(Error::InvalidParameter(
            "the big volume must extend the small one by exactly one site".into(),
        ));
    }
    let new_site = n;
    let m_small = toppling_matrix(v_small);
    let m_big = toppling_matrix(v_big);
    let det_small = determinant_exact(&m_small);
    let det_big = determinant_exact(&m_big);
    let ratio = big_ratio_f64(&det_small, &det_big);
    let full_height = m_big.diag(new_site) as u64;

    let exact_equality = if v_big.site_count() <= DEFAULT_ENUMERATION_CAP {
        let configs = enumerate_recurrent(v_big)?;
        let with_full = configs
            .iter()
            .filter(|c| c.height(new_site) == full_height)
            .count();
        Some(
            BigInt::from(with_full) == det_small && BigInt::from(configs.len()) == det_big,
        )
    } else {
        None
    };

    let empirical = if n_samples > 0 {
        let f = LocalObservable::height_indicator(new_site, full_height);
        Some(expectation(
            &f,
            v_big,
            &m_big,
            ExpectationMethod::Sampled {
                method: SampleMethod::Mcmc {
                    burn_in: 10 * v_big.site_count() as u64,
                    thinning: 4,
                },
                n_samples,
            },
            seed,
        )?)
    } else {
        None
    };
    let within = empirical.map(|e| e.within_sigmas(ratio, 3.0));

    Ok(BoundaryHeightReport {
        new_site,
        small_determinant: det_small.to_string(),
        big_determinant: det_big.to_string(),
        det_ratio: ratio,
        exact_equality,
        empirical,
        empirical_within_3_sigma: within,
    })
}

fn big_ratio_f64(num: &BigInt, den: &BigInt) -> f64 {
    // scale down in tandem so huge determinants still give a clean ratio
    let num_bits = num.bits();
    let den_bits = den.bits();
    let shift = num_bits.max(den_bits).saturating_sub(52);
    let n = (num >> shift).to_string().parse::<f64>().unwrap_or(f64::NAN);
    let d = (den >> shift).to_string().parse::<f64>().unwrap_or(f64::NAN);
    n / d
}

/// Successive-volume differences of a local expectation along a schedule.
///
/// All volumes share one family of per-(run, site) Poisson addition
/// counts (common random numbers), so the paired differences have far
/// smaller variance than independent chains would give.
#[derive(Clone, Debug, Serialize)]
pub struct CauchyNetReport {
    pub observable: String,
    pub volume_sites: Vec<usize>,
    pub means: Vec<f64>,
    /// |E_k f - E_{k+1} f| with the paired standard error.
    pub diffs: Vec<EmpiricalEstimate>,
    /// No successive difference grows by more than twice the combined
    /// standard error.
    pub decreasing_beyond_noise: bool,
}

pub fn cauchy_net_diagnostic(
    f: &LocalObservable,
    schedule: &VolumeSchedule,
    n_runs: u64,
    horizon: f64,
    seed: u64,
) -> Result<CauchyNetReport> {
    if schedule.len() < 2 {
        return Err(Error::InvalidParameter(
            "schedule needs at least two volumes".into(),
        ));
    }
    if n_runs == 0 {
        return Err(Error::InvalidParameter("n_runs must be > 0".into()));
    }
    f.check_inside(schedule.volume(0).site_count())?;

    let k = schedule.len();
    let largest = schedule.volume(k - 1).site_count();
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(n_runs as usize); k];
    let mut counts_buf = vec![0u64; largest];
    for run in 0..n_runs {
        let run_seed = crate::rng::derive_seed(seed, run, 0xca0c);
        for (x, slot) in counts_buf.iter_mut().enumerate() {
            let mut site_rng = substream(run_seed, x as u64, 0xadd);
            *slot = poisson_count(&mut site_rng, horizon);
        }
        for i in 0..k {
            let v = schedule.volume(i);
            let m = schedule.matrix(i);
            let mut config = HeightConfig::max_stable(m);
            let additions: Vec<(SiteId, u64)> = (0..v.site_count())
                .filter(|&x| counts_buf[x] > 0)
                .map(|x| (x, counts_buf[x]))
                .collect();
            add_grains_in_place(&mut config, &additions, m)?;
            values[i].push(f.eval_config(&config));
        }
    }

    let means: Vec<f64> = values
        .iter()
        .map(|vals| vals.iter().sum::<f64>() / n_runs as f64)
        .collect();
    let mut diffs = Vec::with_capacity(k - 1);
    for i in 0..k - 1 {
        let paired: Vec<f64> = values[i]
            .iter()
            .zip(&values[i + 1])
            .map(|(a, b)| a - b)
            .collect();
        let est = EmpiricalEstimate::from_samples(&paired, EstimateMethod::Mcmc);
        diffs.push(EmpiricalEstimate {
            mean: est.mean.abs(),
            ..est
        });
    }
    let decreasing = diffs.windows(2).all(|w| {
        let band = 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        w[1].mean <= w[0].mean + band
    });

    Ok(CauchyNetReport {
        observable: f.label().to_string(),
        volume_sites: (0..k).map(|i| schedule.volume(i).site_count()).collect(),
        means,
        diffs,
        decreasing_beyond_noise: decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recurrence::is_recurrent;
    use crate::topology::{build_tree_volume, prefix_volume};

    fn two_site_tree() -> VolumeGraph {
        prefix_volume(&build_tree_volume(2, 1).unwrap(), 2).unwrap()
    }

    #[test]
    fn enumeration_sampler_is_uniform() {
        let v = build_tree_volume(2, 0).unwrap();
        let m = toppling_matrix(&v);
        let mut sampler = UniformSampler::new(&v, &m, SampleMethod::Enumeration, 11).unwrap();
        let mut counts = [0u64; 3];
        let n = 10_000;
        for _ in 0..n {
            let c = sampler.draw().unwrap();
            counts[(c.height(0) - 1) as usize] += 1;
        }
        // chi-squared against uniform on {1,2,3}; 13.8 is the 0.1% cut for 2 dof
        let expected = n as f64 / 3.0;
        let chi2: f64 = counts
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 13.8, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn mcmc_sampler_total_variation() {
        let v = two_site_tree();
        let m = toppling_matrix(&v);
        let configs = enumerate_recurrent(&v).unwrap();
        assert_eq!(configs.len(), 8);
        let mut sampler = UniformSampler::new(
            &v,
            &m,
            SampleMethod::Mcmc {
                burn_in: 1000,
                thinning: 4,
            },
            5,
        )
        .unwrap();
        let mut counts = std::collections::HashMap::new();
        let n = 100_000;
        for _ in 0..n {
            let c = sampler.draw().unwrap();
            assert!(is_recurrent(&c, &v));
            *counts.entry(c.heights().to_vec()).or_insert(0u64) += 1;
        }
        let tv: f64 = configs
            .iter()
            .map(|c| {
                let p = *counts.get(c.heights()).unwrap_or(&0) as f64 / n as f64;
                (p - 1.0 / 8.0).abs()
            })
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "tv = {tv}");
    }

    #[test]
    fn zero_burn_in_is_flagged() {
        let v = two_site_tree();
        let m = toppling_matrix(&v);
        let sampler = UniformSampler::new(
            &v,
            &m,
            SampleMethod::Mcmc {
                burn_in: 0,
                thinning: 1,
            },
            1,
        )
        .unwrap();
        assert!(sampler.zero_burn_in);
    }

    #[test]
    fn total_variation_shrinks_with_burn_in() {
        // distribution of the first draw over many independent chains:
        // one step out of the maximal configuration is visibly biased,
        // a real burn-in is not
        let v = two_site_tree();
        let m = toppling_matrix(&v);
        let tv_of_first_draw = |burn_in: u64| -> f64 {
            let n = 4000;
            let mut counts = std::collections::HashMap::new();
            for seed in 0..n {
                let mut sampler = UniformSampler::new(
                    &v,
                    &m,
                    SampleMethod::Mcmc {
                        burn_in,
                        thinning: 1,
                    },
                    seed,
                )
                .unwrap();
                let c = sampler.draw().unwrap();
                *counts.entry(c.heights().to_vec()).or_insert(0u64) += 1;
            }
            enumerate_recurrent(&v)
                .unwrap()
                .iter()
                .map(|c| {
                    let p = *counts.get(c.heights()).unwrap_or(&0) as f64 / n as f64;
                    (p - 1.0 / 8.0).abs()
                })
                .sum::<f64>()
                / 2.0
        };
        let biased = tv_of_first_draw(0);
        let burned = tv_of_first_draw(200);
        assert!(
            burned < biased / 2.0,
            "tv with burn-in {burned} vs without {biased}"
        );
    }

    #[test]
    fn equal_depth_sites_have_equal_marginals() {
        // two interior sites of the same generation are automorphic, so
        // their height marginals agree; tested as 3-sigma consistency of
        // independent estimates
        let v = build_tree_volume(2, 6).unwrap();
        let m = toppling_matrix(&v);
        let sites = [4usize, 7]; // two generation-2 sites, deep inside
        assert_eq!(v.generation(sites[0]), 2);
        assert_eq!(v.generation(sites[1]), 2);
        let estimates: Vec<EmpiricalEstimate> = sites
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                expectation(
                    &LocalObservable::height_indicator(x, 3),
                    &v,
                    &m,
                    ExpectationMethod::Sampled {
                        method: SampleMethod::Mcmc {
                            burn_in: 10 * v.site_count() as u64,
                            thinning: 4,
                        },
                        n_samples: 40_000,
                    },
                    100 + i as u64,
                )
                .unwrap()
            })
            .collect();
        let diff = (estimates[0].mean - estimates[1].mean).abs();
        let band = 3.0 * (estimates[0].stderr.powi(2) + estimates[1].stderr.powi(2)).sqrt();
        assert!(diff <= band, "marginals differ: {estimates:?}");
    }

    #[test]
    fn exact_expectations() {
        let single = build_tree_volume(2, 0).unwrap();
        let m = toppling_matrix(&single);
        let e = expectation(
            &LocalObservable::height_at(0),
            &single,
            &m,
            ExpectationMethod::Exact,
            0,
        )
        .unwrap();
        assert_eq!(e.mean, 2.0); // (1 + 2 + 3) / 3
        assert_eq!(e.stderr, 0.0);

        let v = two_site_tree();
        let m = toppling_matrix(&v);
        let e = expectation(
            &LocalObservable::height_indicator(0, 3),
            &v,
            &m,
            ExpectationMethod::Exact,
            0,
        )
        .unwrap();
        assert_eq!(e.mean, 3.0 / 8.0);

        let e = expectation(
            &LocalObservable::constant(1.0),
            &v,
            &m,
            ExpectationMethod::Exact,
            0,
        )
        .unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn observable_dependence_checked() {
        let v = build_tree_volume(2, 0).unwrap();
        let m = toppling_matrix(&v);
        let f = LocalObservable::height_at(5);
        assert!(expectation(&f, &v, &m, ExpectationMethod::Exact, 0).is_err());
    }

    #[test]
    fn boundary_identity_exact_pairs() {
        let b1 = build_tree_volume(2, 1).unwrap();
        let single = prefix_volume(&b1, 1).unwrap();
        let pair = prefix_volume(&b1, 2).unwrap();
        let report = boundary_height_identity(&single, &pair, 0, 0).unwrap();
        assert_eq!(report.det_ratio, 3.0 / 8.0);
        assert_eq!(report.exact_equality, Some(true));

        let star = prefix_volume(&b1, 3).unwrap();
        let report = boundary_height_identity(&pair, &star, 0, 0).unwrap();
        assert_eq!(report.det_ratio, 8.0 / 21.0);
        assert_eq!(report.exact_equality, Some(true));
    }

    #[test]
    fn boundary_identity_rejects_bad_pair() {
        let b1 = build_tree_volume(2, 1).unwrap();
        let single = prefix_volume(&b1, 1).unwrap();
        assert!(boundary_height_identity(&single, &b1, 0, 0).is_err());
    }

    #[test]
    fn cauchy_constant_observable_has_zero_diffs() {
        let schedule = VolumeSchedule::tree_balls(2, &[1, 2, 3]).unwrap();
        let report = cauchy_net_diagnostic(
            &LocalObservable::constant(2.5),
            &schedule,
            200,
            5.0,
            7,
        )
        .unwrap();
        for d in &report.diffs {
            assert_eq!(d.mean, 0.0);
            assert_eq!(d.stderr, 0.0);
        }
        assert!(report.decreasing_beyond_noise);
    }
}
