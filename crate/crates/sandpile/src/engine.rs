//! Height configurations, the toppling rule, stabilization, addition
//! operators and the finite-volume Markov dynamics.
//!
//! Stabilization runs a FIFO work queue of unstable sites; the abelian
//! property makes the result schedule-independent, the queue makes the
//! cost proportional to topplings times degree.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::topology::{SiteId, ToppleMatrix};

/// Safety cap: a stabilization performing more topplings than this aborts
/// with a distinct error instead of spinning on a malformed matrix.
pub const DEFAULT_TOPPLE_CAP: u64 = 1_000_000_000_000;

/// Grains per site; heights are always >= 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HeightConfig {
    heights: Vec<u64>,
}

impl HeightConfig {
    pub fn from_heights(heights: Vec<u64>) -> Result<Self> {
        for (site, &value) in heights.iter().enumerate() {
            if value == 0 {
                return Err(Error::InvalidHeight { site, value });
            }
        }
        Ok(HeightConfig { heights })
    }

    pub fn constant(n_sites: usize, height: u64) -> Result<Self> {
        HeightConfig::from_heights(vec![height; n_sites])
    }

    /// The maximal stable configuration: height Delta_xx at every site.
    pub fn max_stable(m: &ToppleMatrix) -> Self {
        HeightConfig {
            heights: (0..m.dim()).map(|x| m.diag(x) as u64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn height(&self, x: SiteId) -> u64 {
        self.heights[x]
    }

    pub fn heights(&self) -> &[u64] {
        &self.heights
    }

    /// Componentwise partial order.
    pub fn le(&self, other: &HeightConfig) -> bool {
        self.len() == other.len()
            && self
                .heights
                .iter()
                .zip(&other.heights)
                .all(|(a, b)| a <= b)
    }

    /// Restriction to the first `n` sites (volumes nest as id prefixes).
    pub fn restrict(&self, n: usize) -> HeightConfig {
        HeightConfig {
            heights: self.heights[..n].to_vec(),
        }
    }

}

/// Per-site toppling counts accumulated by one stabilization or one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToppleLedger {
    counts: Vec<u64>,
    total: u64,
}

impl ToppleLedger {
    pub fn zero(n_sites: usize) -> Self {
        ToppleLedger {
            counts: vec![0; n_sites],
            total: 0,
        }
    }

    pub fn count(&self, x: SiteId) -> u64 {
        self.counts[x]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_zero(&self) -> bool {
        self.total == 0
    }

    /// Sites that toppled at least once.
    pub fn support(&self) -> Vec<SiteId> {
        (0..self.counts.len())
            .filter(|&x| self.counts[x] > 0)
            .collect()
    }

    pub fn merge(&mut self, other: &ToppleLedger) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    /// Componentwise comparison; the basis of the monotone coupling checks.
    pub fn le(&self, other: &ToppleLedger) -> bool {
        self.counts.len() == other.counts.len()
            && self.counts.iter().zip(&other.counts).all(|(a, b)| a <= b)
    }
}

pub fn is_stable(c: &HeightConfig, m: &ToppleMatrix) -> bool {
    c.heights
        .iter()
        .enumerate()
        .all(|(x, &h)| h <= m.diag(x) as u64)
}

/// One application of the toppling rule at `x`: a no-op unless `x` is
/// unstable, otherwise every height moves by -Delta_{x,y}.
pub fn topple_site(c: &HeightConfig, x: SiteId, m: &ToppleMatrix) -> HeightConfig {
    let mut out = c.clone();
    let diag = m.diag(x) as u64;
    if out.heights[x] > diag {
        out.heights[x] -= diag;
        for (y, coeff) in m.off_diag(x) {
            out.heights[y] += (-coeff) as u64;
        }
    }
    out
}

/// Reusable queue state for stabilizations. The flags are clean whenever
/// the queue is empty, so one workspace serves any number of avalanches
/// on the same volume without per-call clearing.
#[derive(Clone, Debug)]
pub struct AvalancheWorkspace {
    queue: VecDeque<SiteId>,
    queued: Vec<bool>,
}

impl AvalancheWorkspace {
    pub fn new(n_sites: usize) -> Self {
        AvalancheWorkspace {
            queue: VecDeque::new(),
            queued: vec![false; n_sites],
        }
    }
}

/// Stabilize starting from the given seed sites; only they (and sites
/// reached by the avalanche) can be unstable. The hot path behind
/// `add_grain`, which seeds a single site. Returns the total topplings;
/// per-site counts land in `ledger` when one is supplied.
fn stabilize_core<I: IntoIterator<Item = SiteId>>(
    c: &mut HeightConfig,
    m: &ToppleMatrix,
    seeds: I,
    cap: u64,
    ws: &mut AvalancheWorkspace,
    mut ledger: Option<&mut ToppleLedger>,
) -> Result<u64> {
    if !m.is_valid() {
        return Err(Error::InvalidMatrix(
            "refusing to stabilize against a matrix violating the toppling conditions".into(),
        ));
    }
    let n = m.dim();
    if c.len() != n || ws.queued.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "configuration has {} sites, matrix has {n}",
            c.len()
        )));
    }
    for x in seeds {
        if !ws.queued[x] && c.heights[x] > m.diag(x) as u64 {
            ws.queued[x] = true;
            ws.queue.push_back(x);
        }
    }
    let mut total = 0u64;
    while let Some(x) = ws.queue.pop_front() {
        ws.queued[x] = false;
        let diag = m.diag(x) as u64;
        let h = c.heights[x];
        if h <= diag {
            continue;
        }
        // topple in bulk: k applications of the rule at once
        let k = (h - diag).div_ceil(diag);
        c.heights[x] = h - k * diag;
        total = match total.checked_add(k) {
            Some(t) if t <= cap => t,
            _ => {
                ws.queue.clear();
                ws.queued.iter_mut().for_each(|q| *q = false);
                return Err(Error::ToppleCapExceeded { cap });
            }
        };
        if let Some(ledger) = ledger.as_deref_mut() {
            ledger.counts[x] += k;
            ledger.total += k;
        }
        for (y, coeff) in m.off_diag(x) {
            c.heights[y] += k * (-coeff) as u64;
            if !ws.queued[y] && c.heights[y] > m.diag(y) as u64 {
                ws.queued[y] = true;
                ws.queue.push_back(y);
            }
        }
    }
    Ok(total)
}

fn stabilize_seeded<I: IntoIterator<Item = SiteId>>(
    c: &mut HeightConfig,
    m: &ToppleMatrix,
    seeds: I,
    cap: u64,
) -> Result<ToppleLedger> {
    let mut ledger = ToppleLedger::zero(m.dim());
    let mut ws = AvalancheWorkspace::new(m.dim());
    stabilize_core(c, m, seeds, cap, &mut ws, Some(&mut ledger))?;
    Ok(ledger)
}

/// Ledger-free single addition against a reusable workspace; returns the
/// number of topplings. This is what the Monte Carlo chains run on.
pub fn add_grain_in_workspace(
    c: &mut HeightConfig,
    x: SiteId,
    m: &ToppleMatrix,
    ws: &mut AvalancheWorkspace,
) -> Result<u64> {
    c.heights[x] += 1;
    stabilize_core(c, m, std::iter::once(x), DEFAULT_TOPPLE_CAP, ws, None)
}

/// Topple until stable, in place. The result and the ledger do not depend
/// on the internal schedule.
pub fn stabilize_in_place(c: &mut HeightConfig, m: &ToppleMatrix) -> Result<ToppleLedger> {
    stabilize_seeded(c, m, 0..m.dim(), DEFAULT_TOPPLE_CAP)
}

pub fn stabilize_in_place_capped(
    c: &mut HeightConfig,
    m: &ToppleMatrix,
    cap: u64,
) -> Result<ToppleLedger> {
    stabilize_seeded(c, m, 0..m.dim(), cap)
}

pub fn stabilize(c: &HeightConfig, m: &ToppleMatrix) -> Result<(HeightConfig, ToppleLedger)> {
    let mut out = c.clone();
    let ledger = stabilize_in_place(&mut out, m)?;
    Ok((out, ledger))
}

/// Add one grain at `x` to a stable configuration and stabilize.
pub fn add_grain(
    c: &HeightConfig,
    x: SiteId,
    m: &ToppleMatrix,
) -> Result<(HeightConfig, ToppleLedger)> {
    let mut out = c.clone();
    let ledger = add_grain_in_place(&mut out, x, m)?;
    Ok((out, ledger))
}

pub fn add_grain_in_place(
    c: &mut HeightConfig,
    x: SiteId,
    m: &ToppleMatrix,
) -> Result<ToppleLedger> {
    c.heights[x] += 1;
    stabilize_seeded(c, m, std::iter::once(x), DEFAULT_TOPPLE_CAP)
}

/// Add `count` grains at several sites at once, then stabilize. By the
/// abelian property this equals any sequential order of single additions.
pub fn add_grains_in_place(
    c: &mut HeightConfig,
    additions: &[(SiteId, u64)],
    m: &ToppleMatrix,
) -> Result<ToppleLedger> {
    for &(x, k) in additions {
        c.heights[x] += k;
    }
    stabilize_seeded(c, m, additions.iter().map(|&(x, _)| x), DEFAULT_TOPPLE_CAP)
}

fn validate_probabilities(p: &[f64], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::InvalidProbability(format!(
            "expected {n} entries, got {}",
            p.len()
        )));
    }
    if !p.iter().all(|&q| q.is_finite() && q > 0.0) {
        return Err(Error::InvalidProbability(
            "entries must be strictly positive".into(),
        ));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidProbability(format!("entries sum to {sum}")));
    }
    Ok(())
}

/// One step of the discrete-time addition chain: draw a site from `p`,
/// add a grain there and stabilize. Returns the chosen site and ledger.
pub fn discrete_step<R: Rng + ?Sized>(
    c: &mut HeightConfig,
    p: &[f64],
    m: &ToppleMatrix,
    rng: &mut R,
) -> Result<(SiteId, ToppleLedger)> {
    validate_probabilities(p, m.dim())?;
    let u: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    let mut site = m.dim() - 1;
    for (x, &q) in p.iter().enumerate() {
        acc += q;
        if u < acc {
            site = x;
            break;
        }
    }
    let ledger = add_grain_in_place(c, site, m)?;
    Ok((site, ledger))
}

/// A continuous-time trajectory: merged addition events over [0, t].
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub events: Vec<(f64, SiteId)>,
}

/// Run the continuous-time dynamics with per-site addition rates over a
/// horizon `t`. Events come from a single superposed clock of total rate
/// sum(rates); each event picks its site with probability proportional to
/// its rate, which is equivalent in law to independent per-site clocks.
pub fn continuous_run<R: Rng + ?Sized>(
    c: &HeightConfig,
    rates: &[f64],
    m: &ToppleMatrix,
    t: f64,
    rng: &mut R,
) -> Result<(Trajectory, HeightConfig, ToppleLedger)> {
    if rates.len() != m.dim() {
        return Err(Error::DimensionMismatch(format!(
            "rates cover {} sites, matrix has {}",
            rates.len(),
            m.dim()
        )));
    }
    if !rates.iter().all(|&r| r.is_finite() && r >= 0.0) {
        return Err(Error::InvalidParameter(
            "addition rates must be finite and nonnegative".into(),
        ));
    }
    if t < 0.0 {
        return Err(Error::InvalidParameter("horizon t must be >= 0".into()));
    }
    let total: f64 = rates.iter().sum();
    let mut cum = Vec::with_capacity(rates.len());
    let mut acc = 0.0;
    for &r in rates {
        acc += r;
        cum.push(acc);
    }
    let mut events = Vec::new();
    let mut config = c.clone();
    let mut ledger = ToppleLedger::zero(m.dim());
    if total > 0.0 {
        let mut time = 0.0;
        loop {
            let u: f64 = rng.gen::<f64>();
            // u == 0 gives an infinite gap and ends the run
            time += -u.ln() / total;
            if time > t {
                break;
            }
            let target = rng.gen::<f64>() * total;
            let site = cum.partition_point(|&s| s <= target).min(rates.len() - 1);
            events.push((time, site));
            let step = add_grain_in_place(&mut config, site, m)?;
            ledger.merge(&step);
        }
    }
    Ok((Trajectory { events }, config, ledger))
}
