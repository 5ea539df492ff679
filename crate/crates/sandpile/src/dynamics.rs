//! Truncated Poisson-representation simulation of the infinite-volume
//! dynamics: addition-rate functions with a decidable summability check,
//! coupled truncations over a volume schedule, window-stabilization
//! detection, monotone starts, and the toppling-rate bound.

use serde::{Deserialize, Serialize};

use crate::engine::{add_grains_in_place, HeightConfig, ToppleLedger};
use crate::error::{Error, Result};
use crate::measure::{EmpiricalEstimate, EstimateMethod, UniformSampler};
use crate::observables::greens_column;
use crate::rng::{derive_seed, poisson_count, substream};
use crate::topology::{SiteId, ToppleMatrix, VolumeGraph, VolumeKind, VolumeSchedule};

const EVENT_STREAM: u64 = 0xEE37;

/// Symbolic addition-rate function, evaluated per site through its
/// generation number, so summability is decidable from the spec alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RateSpec {
    Constant { value: f64 },
    /// rate(x) = base^|x|.
    Geometric { base: f64 },
    /// Explicit per-generation rates; zero beyond the listed generations.
    Table { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFunction {
    spec: RateSpec,
}

impl RateFunction {
    pub fn new(spec: RateSpec) -> Result<Self> {
        match &spec {
            RateSpec::Constant { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return Err(Error::InvalidParameter(
                        "constant rate must be positive and finite".into(),
                    ));
                }
            }
            RateSpec::Geometric { base } => {
                if !(base.is_finite() && *base > 0.0) {
                    return Err(Error::InvalidParameter(
                        "geometric base must be positive and finite".into(),
                    ));
                }
            }
            RateSpec::Table { values } => {
                if values.is_empty()
                    || values.iter().any(|v| !v.is_finite() || *v < 0.0)
                    || values.iter().all(|&v| v == 0.0)
                {
                    return Err(Error::InvalidParameter(
                        "table rates must be finite, nonnegative, not all zero".into(),
                    ));
                }
            }
        }
        Ok(RateFunction { spec })
    }

    pub fn constant(value: f64) -> Result<Self> {
        RateFunction::new(RateSpec::Constant { value })
    }

    pub fn geometric(base: f64) -> Result<Self> {
        RateFunction::new(RateSpec::Geometric { base })
    }

    pub fn table(values: Vec<f64>) -> Result<Self> {
        RateFunction::new(RateSpec::Table { values })
    }

    pub fn spec(&self) -> &RateSpec {
        &self.spec
    }

    pub fn rate(&self, generation: u32) -> f64 {
        match &self.spec {
            RateSpec::Constant { value } => *value,
            RateSpec::Geometric { base } => base.powi(generation as i32),
            RateSpec::Table { values } => values.get(generation as usize).copied().unwrap_or(0.0),
        }
    }

    /// Per-site rates in site-id order.
    pub fn rates_on(&self, v: &VolumeGraph) -> Vec<f64> {
        (0..v.site_count())
            .map(|x| self.rate(v.generation(x)))
            .collect()
    }
}

/// Result of the summability check sum_x rate(x) 2^-|x| over the infinite
/// tree with d-fold branching (generation k holds (d+1) d^(k-1) sites).
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Summability {
    Convergent { value: f64 },
    Divergent { diagnosis: String },
}

impl Summability {
    pub fn is_convergent(&self) -> bool {
        matches!(self, Summability::Convergent { .. })
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Summability::Convergent { value } => Some(*value),
            Summability::Divergent { .. } => None,
        }
    }
}

/// Closed-form geometric-series evaluation where the rate spec permits,
/// a divergence diagnosis otherwise.
pub fn summability_check(phi: &RateFunction, d: u32) -> Summability {
    let d = d as f64;
    let shells = (d + 1.0) / d; // (d+1) d^(k-1) 2^-k = ((d+1)/d) (d/2)^k
    match phi.spec() {
        RateSpec::Constant { value } => Summability::Divergent {
            diagnosis: format!(
                "per-generation term {value} * ((d+1)/d) * (d/2)^k with d = {d} does not vanish"
            ),
        },
        RateSpec::Geometric { base } => {
            let q = d * base / 2.0;
            if q < 1.0 {
                Summability::Convergent {
                    value: 1.0 + shells * q / (1.0 - q),
                }
            } else {
                Summability::Divergent {
                    diagnosis: format!(
                        "geometric ratio d*base/2 = {q} >= 1; the shell series diverges"
                    ),
                }
            }
        }
        RateSpec::Table { values } => {
            let mut total = 0.0;
            for (k, &rate) in values.iter().enumerate() {
                let shell_sites = if k == 0 {
                    1.0
                } else {
                    (d + 1.0) * d.powi(k as i32 - 1)
                };
                total += rate * shell_sites * 0.5f64.powi(k as i32);
            }
            Summability::Convergent { value: total }
        }
    }
}

/// Per-site Poisson addition events on one volume over a horizon.
///
/// Counts and times come from one independent substream per (seed, site),
/// so the events on a prefix volume are identical to the events on the
/// same sites of any larger volume under the same seed.
#[derive(Clone, Debug)]
pub struct PoissonEventLog {
    pub t: f64,
    pub counts: Vec<u64>,
    pub times: Vec<Vec<f64>>,
}

impl PoissonEventLog {
    pub fn total_events(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn additions(&self) -> Vec<(SiteId, u64)> {
        (0..self.counts.len())
            .filter(|&x| self.counts[x] > 0)
            .map(|x| (x, self.counts[x]))
            .collect()
    }
}

pub fn generate_events(
    phi: &RateFunction,
    v: &VolumeGraph,
    t: f64,
    seed: u64,
) -> Result<PoissonEventLog> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidParameter(
            "horizon t must be finite and >= 0".into(),
        ));
    }
    let n = v.site_count();
    let mut counts = Vec::with_capacity(n);
    let mut times = Vec::with_capacity(n);
    for x in 0..n {
        let mut rng = substream(seed, x as u64, EVENT_STREAM);
        let mean = phi.rate(v.generation(x)) * t;
        let k = poisson_count(&mut rng, mean);
        let mut site_times: Vec<f64> = (0..k).map(|_| rand::Rng::gen::<f64>(&mut rng) * t).collect();
        site_times.sort_by(f64::total_cmp);
        counts.push(k);
        times.push(site_times);
    }
    Ok(PoissonEventLog { t, counts, times })
}

/// Apply every event addition at once and stabilize; by the abelian
/// property this equals any sequential replay of the events.
pub fn truncated_product(
    c: &HeightConfig,
    events: &PoissonEventLog,
    m: &ToppleMatrix,
) -> Result<(HeightConfig, ToppleLedger)> {
    if c.len() != m.dim() || events.counts.len() != m.dim() {
        return Err(Error::DimensionMismatch(format!(
            "config {} sites, events {} sites, matrix {}",
            c.len(),
            events.counts.len(),
            m.dim()
        )));
    }
    let mut out = c.clone();
    let ledger = add_grains_in_place(&mut out, &events.additions(), m)?;
    Ok((out, ledger))
}

fn tree_branching(v: &VolumeGraph) -> Result<u32> {
    match v.kind() {
        VolumeKind::Tree { d } => Ok(d),
        VolumeKind::Grid { .. } => Err(Error::InvalidParameter(
            "the truncated-dynamics runs are defined on tree volumes".into(),
        )),
    }
}

fn check_summable(phi: &RateFunction, d: u32, allow_nonsummable: bool) -> Result<()> {
    match summability_check(phi, d) {
        Summability::Convergent { .. } => Ok(()),
        Summability::Divergent { diagnosis } => {
            if allow_nonsummable {
                Ok(())
            } else {
                Err(Error::NonSummableRate(diagnosis))
            }
        }
    }
}

/// One coupled-truncation run: the same per-site events applied on every
/// volume of the schedule, watching a window of sites.
#[derive(Clone, Debug, Serialize)]
pub struct WindowRunReport {
    pub window: Vec<SiteId>,
    /// Window heights after the truncated product on each scheduled volume.
    pub snapshots: Vec<Vec<u64>>,
    /// First index i >= 1 whose snapshot equals the previous one.
    pub stabilized_at: Option<usize>,
    pub changed_at_last_step: bool,
    pub final_window: Vec<u64>,
}

pub fn stabilized_window_run(
    initial_on_largest: &HeightConfig,
    phi: &RateFunction,
    t: f64,
    window: &[SiteId],
    schedule: &VolumeSchedule,
    seed: u64,
    allow_nonsummable: bool,
) -> Result<WindowRunReport> {
    let (largest, _) = schedule.largest();
    check_summable(phi, tree_branching(largest)?, allow_nonsummable)?;
    if initial_on_largest.len() != largest.site_count() {
        return Err(Error::DimensionMismatch(format!(
            "initial configuration has {} sites, largest volume {}",
            initial_on_largest.len(),
            largest.site_count()
        )));
    }
    let first = schedule.volume(0).site_count();
    if window.iter().any(|&x| x >= first) {
        return Err(Error::InvalidParameter(
            "window must lie inside the first scheduled volume".into(),
        ));
    }
    let events = generate_events(phi, largest, t, seed)?;
    let mut snapshots = Vec::with_capacity(schedule.len());
    for i in 0..schedule.len() {
        let n = schedule.volume(i).site_count();
        let mut config = initial_on_largest.restrict(n);
        let additions: Vec<(SiteId, u64)> = (0..n)
            .filter(|&x| events.counts[x] > 0)
            .map(|x| (x, events.counts[x]))
            .collect();
        add_grains_in_place(&mut config, &additions, schedule.matrix(i))?;
        snapshots.push(window.iter().map(|&x| config.height(x)).collect::<Vec<_>>());
    }
    let stabilized_at = (1..snapshots.len()).find(|&i| snapshots[i] == snapshots[i - 1]);
    let changed_at_last_step = snapshots.len() >= 2
        && snapshots[snapshots.len() - 1] != snapshots[snapshots.len() - 2];
    Ok(WindowRunReport {
        window: window.to_vec(),
        final_window: snapshots.last().cloned().unwrap_or_default(),
        snapshots,
        stabilized_at,
        changed_at_last_step,
    })
}

/// A coupled pair of runs from ordered initial configurations with the
/// identical events; toppling counts from the lower start can never
/// exceed the upper start's, site by site, on any volume.
#[derive(Clone, Debug, Serialize)]
pub struct MonotoneRunReport {
    pub window_lower: Vec<u64>,
    pub window_upper: Vec<u64>,
    pub per_volume_ledger_ok: Vec<bool>,
    pub coupling_violations: u64,
}

#[allow(clippy::too_many_arguments)]
pub fn monotone_coupled_run(
    lower_on_largest: &HeightConfig,
    upper_on_largest: &HeightConfig,
    phi: &RateFunction,
    t: f64,
    window: &[SiteId],
    schedule: &VolumeSchedule,
    seed: u64,
    allow_nonsummable: bool,
) -> Result<MonotoneRunReport> {
    if !lower_on_largest.le(upper_on_largest) {
        return Err(Error::InvalidParameter(
            "the lower start must sit componentwise below the upper start".into(),
        ));
    }
    let (largest, _) = schedule.largest();
    check_summable(phi, tree_branching(largest)?, allow_nonsummable)?;
    let first = schedule.volume(0).site_count();
    if window.iter().any(|&x| x >= first) {
        return Err(Error::InvalidParameter(
            "window must lie inside the first scheduled volume".into(),
        ));
    }
    let events = generate_events(phi, largest, t, seed)?;
    let mut per_volume_ok = Vec::with_capacity(schedule.len());
    let mut violations = 0u64;
    let mut window_lower = Vec::new();
    let mut window_upper = Vec::new();
    for i in 0..schedule.len() {
        let n = schedule.volume(i).site_count();
        let m = schedule.matrix(i);
        let additions: Vec<(SiteId, u64)> = (0..n)
            .filter(|&x| events.counts[x] > 0)
            .map(|x| (x, events.counts[x]))
            .collect();
        let mut lo = lower_on_largest.restrict(n);
        let lo_ledger = add_grains_in_place(&mut lo, &additions, m)?;
        let mut hi = upper_on_largest.restrict(n);
        let hi_ledger = add_grains_in_place(&mut hi, &additions, m)?;
        let ok = lo_ledger.le(&hi_ledger);
        if !ok {
            violations += 1;
        }
        per_volume_ok.push(ok);
        if i == schedule.len() - 1 {
            window_lower = window.iter().map(|&x| lo.height(x)).collect();
            window_upper = window.iter().map(|&x| hi.height(x)).collect();
        }
    }
    Ok(MonotoneRunReport {
        window_lower,
        window_upper,
        per_volume_ledger_ok: per_volume_ok,
        coupling_violations: violations,
    })
}

/// Empirical toppling rate at a site against the Green's-function bound
/// sum_x rate(x) (delta_{x,site} + 3 G(x,site)).
#[derive(Clone, Debug, Serialize)]
pub struct TopplingBoundReport {
    pub site: SiteId,
    pub horizon: f64,
    pub n_runs: u64,
    pub empirical_rate: EmpiricalEstimate,
    pub bound_rate: f64,
    pub satisfied_within_3_sigma: bool,
}

pub fn toppling_bound_check(
    phi: &RateFunction,
    v: &VolumeGraph,
    m: &ToppleMatrix,
    t: f64,
    n_runs: u64,
    seed: u64,
) -> Result<TopplingBoundReport> {
    if n_runs == 0 {
        return Err(Error::InvalidParameter("n_runs must be > 0".into()));
    }
    let site = v.origin();
    let greens = greens_column(v, m, site)?;
    let bound_rate: f64 = (0..v.site_count())
        .map(|x| phi.rate(v.generation(x)) * (f64::from(x == site) + 3.0 * greens[x]))
        .sum();
    let mut sampler = UniformSampler::mcmc_default(v, m, derive_seed(seed, 0, 0x1417))?;
    let mut rates = Vec::with_capacity(n_runs as usize);
    for run in 0..n_runs {
        let initial = sampler.draw()?;
        let events = generate_events(phi, v, t, derive_seed(seed, run, 0x70b))?;
        let (_, ledger) = truncated_product(&initial, &events, m)?;
        let rate = if t > 0.0 {
            ledger.count(site) as f64 / t
        } else {
            0.0
        };
        rates.push(rate);
    }
    let empirical = EmpiricalEstimate::from_samples(&rates, EstimateMethod::Mcmc);
    Ok(TopplingBoundReport {
        site,
        horizon: t,
        n_runs,
        satisfied_within_3_sigma: empirical.mean <= bound_rate + 3.0 * empirical.stderr,
        empirical_rate: empirical,
        bound_rate,
    })
}
