//! Burning algorithm, recurrence testing, exact counting via determinants,
//! and verification of the group structure of the addition operators.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::engine::{add_grain, HeightConfig};
use crate::error::{Error, Result};
use crate::topology::{toppling_matrix, SiteId, ToppleMatrix, VolumeGraph};

/// Exhaustive enumeration is exponential in the site count.
pub const DEFAULT_ENUMERATION_CAP: usize = 12;

/// Beyond this dimension the exact integer determinant falls back to a
/// floating log-determinant.
pub const DEFAULT_EXACT_DET_CAP: usize = 2000;

/// Outcome of the burning algorithm: which sites burned in which round,
/// and the residual set (the maximal forbidden subconfiguration support).
#[derive(Clone, Debug, Serialize)]
pub struct BurnReport {
    pub rounds: Vec<Vec<SiteId>>,
    pub residual: Vec<SiteId>,
}

impl BurnReport {
    /// Empty residual means the configuration is allowed (recurrent).
    pub fn is_allowed(&self) -> bool {
        self.residual.is_empty()
    }
}

/// Iteratively erase every site whose height strictly exceeds its number
/// of unburned in-volume neighbors, in synchronous rounds, until nothing
/// changes. Neighbor counts are maintained decrementally.
pub fn burn(c: &HeightConfig, v: &VolumeGraph) -> BurnReport {
    let n = v.site_count();
    debug_assert_eq!(c.len(), n);
    let mut alive = vec![true; n];
    let mut live_nbrs: Vec<u64> = (0..n).map(|x| v.degree(x) as u64).collect();
    let mut rounds = Vec::new();
    let mut candidates: Vec<SiteId> = (0..n).collect();
    let mut stamp = vec![usize::MAX; n];
    let mut round = 0usize;
    while !candidates.is_empty() {
        // decide the whole round against pre-round neighbor counts
        let erase: Vec<SiteId> = candidates
            .iter()
            .copied()
            .filter(|&x| alive[x] && c.height(x) > live_nbrs[x])
            .collect();
        if erase.is_empty() {
            break;
        }
        let mut next = Vec::new();
        for &x in &erase {
            alive[x] = false;
        }
        for &x in &erase {
            for &y in v.neighbors(x) {
                if alive[y] {
                    live_nbrs[y] -= 1;
                    if stamp[y] != round {
                        stamp[y] = round;
                        next.push(y);
                    }
                }
            }
        }
        rounds.push(erase);
        candidates = next;
        round += 1;
    }
    let residual = (0..n).filter(|&x| alive[x]).collect();
    BurnReport { rounds, residual }
}

/// A stable configuration is recurrent iff it burns completely.
pub fn is_recurrent(c: &HeightConfig, v: &VolumeGraph) -> bool {
    burn(c, v).is_allowed()
}

/// Fraction-free Gaussian elimination; exact over the integers.
pub fn determinant_exact(m: &ToppleMatrix) -> BigInt {
    let n = m.dim();
    let mut a: Vec<Vec<BigInt>> = (0..n)
        .map(|i| (0..n).map(|j| BigInt::from(m.entry(i, j))).collect())
        .collect();
    let mut sign = 1i64;
    let mut prev = BigInt::from(1);
    for k in 0..n.saturating_sub(1) {
        if a[k][k].is_zero() {
            let Some(pivot) = (k + 1..n).find(|&i| !a[i][k].is_zero()) else {
                return BigInt::zero();
            };
            a.swap(k, pivot);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let num = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                a[i][j] = num / &prev;
            }
            a[i][k] = BigInt::zero();
        }
        prev = a[k][k].clone();
    }
    &a[n - 1][n - 1] * sign
}

/// Floating log-determinant via dense LU; used past the exact cap.
fn log_determinant_f64(m: &ToppleMatrix) -> Result<f64> {
    let n = m.dim();
    if n > 4000 {
        return Err(Error::InvalidParameter(format!(
            "dense log-determinant limited to 4000 sites, got {n}"
        )));
    }
    let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| m.entry(i, j) as f64);
    let lu = dense.lu();
    let mut log = 0.0;
    for i in 0..n {
        let u = lu.u()[(i, i)];
        if u == 0.0 {
            return Err(Error::SolveFailed("singular toppling matrix".into()));
        }
        log += u.abs().ln();
    }
    Ok(log)
}

/// The number of recurrent configurations, exact when the volume is small
/// enough for integer arithmetic and otherwise approximated by a floating
/// log-determinant with a warning flag.
#[derive(Clone, Debug, Serialize)]
pub enum RecurrentCount {
    Exact {
        #[serde(serialize_with = "serialize_bigint")]
        count: BigInt,
    },
    /// Natural log of det Delta; the count itself typically overflows f64.
    Approximate { log_count: f64 },
}

fn serialize_bigint<S: serde::Serializer>(b: &BigInt, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&b.to_string())
}

impl RecurrentCount {
    pub fn is_exact(&self) -> bool {
        matches!(self, RecurrentCount::Exact { .. })
    }

    pub fn log_value(&self) -> f64 {
        match self {
            RecurrentCount::Exact { count } => bigint_log(count),
            RecurrentCount::Approximate { log_count } => *log_count,
        }
    }

    pub fn exact(&self) -> Option<&BigInt> {
        match self {
            RecurrentCount::Exact { count } => Some(count),
            RecurrentCount::Approximate { .. } => None,
        }
    }
}

fn bigint_log(b: &BigInt) -> f64 {
    let (_, digits) = b.to_u64_digits();
    match digits.len() {
        0 => f64::NEG_INFINITY,
        1 => (digits[0] as f64).ln(),
        _ => {
            // leading 128 bits are plenty for a log
            let hi = digits[digits.len() - 1] as f64;
            let lo = digits[digits.len() - 2] as f64;
            let lead = hi * 2f64.powi(64) + lo;
            lead.ln() + (digits.len() - 2) as f64 * 64.0 * 2f64.ln()
        }
    }
}

pub fn count_recurrent(v: &VolumeGraph) -> Result<RecurrentCount> {
    count_recurrent_capped(v, DEFAULT_EXACT_DET_CAP)
}

pub fn count_recurrent_capped(v: &VolumeGraph, exact_cap: usize) -> Result<RecurrentCount> {
    let m = toppling_matrix(v);
    if v.site_count() <= exact_cap {
        Ok(RecurrentCount::Exact {
            count: determinant_exact(&m),
        })
    } else {
        Ok(RecurrentCount::Approximate {
            log_count: log_determinant_f64(&m)?,
        })
    }
}

/// All stable configurations in odometer order, filtered by the burning
/// test. Exponential in the site count, hence capped.
pub fn enumerate_recurrent(v: &VolumeGraph) -> Result<Vec<HeightConfig>> {
    enumerate_recurrent_capped(v, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_recurrent_capped(v: &VolumeGraph, cap: usize) -> Result<Vec<HeightConfig>> {
    let n = v.site_count();
    if n > cap {
        return Err(Error::EnumerationCapExceeded { sites: n, cap });
    }
    let m = toppling_matrix(v);
    let mut heights = vec![1u64; n];
    let mut out = Vec::new();
    loop {
        let c = HeightConfig::from_heights(heights.clone()).expect("heights >= 1");
        if is_recurrent(&c, v) {
            out.push(c);
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(out);
            }
            if heights[pos] < m.diag(pos) as u64 {
                heights[pos] += 1;
                break;
            }
            heights[pos] = 1;
            pos += 1;
        }
    }
}

/// Exhaustive verification of the group structure of the addition
/// operators acting on the recurrent configurations.
#[derive(Clone, Debug, Serialize)]
pub struct GroupAxiomReport {
    pub sites: usize,
    pub recurrent_count: usize,
    pub determinant: String,
    pub count_matches_determinant: bool,
    pub all_bijective: bool,
    pub all_pairs_commute: bool,
    pub closure_relation_holds: bool,
    pub uniform_measure_invariant: bool,
    /// Order n_x of each addition operator: a_x^{n_x} = identity.
    pub per_site_order: Vec<u64>,
    pub violations: Vec<String>,
}

impl GroupAxiomReport {
    pub fn passes(&self) -> bool {
        self.count_matches_determinant
            && self.all_bijective
            && self.all_pairs_commute
            && self.closure_relation_holds
            && self.uniform_measure_invariant
            && self.violations.is_empty()
    }
}

fn compose(outer: &[usize], inner: &[usize]) -> Vec<usize> {
    inner.iter().map(|&i| outer[i]).collect()
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; perm.len()];
    for (i, &j) in perm.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

fn is_identity(perm: &[usize]) -> bool {
    perm.iter().enumerate().all(|(i, &j)| i == j)
}

pub fn verify_group_axioms(v: &VolumeGraph) -> Result<GroupAxiomReport> {
    verify_group_axioms_capped(v, DEFAULT_ENUMERATION_CAP)
}

pub fn verify_group_axioms_capped(v: &VolumeGraph, cap: usize) -> Result<GroupAxiomReport> {
    let m = toppling_matrix(v);
    let configs = enumerate_recurrent_capped(v, cap)?;
    let det = determinant_exact(&m);
    let count_matches = BigInt::from(configs.len()) == det;
    let index: HashMap<&[u64], usize> = configs
        .iter()
        .enumerate()
        .map(|(i, c)| (c.heights(), i))
        .collect();
    let n_sites = v.site_count();
    let size = configs.len();
    let mut violations = Vec::new();

    // the permutation each addition operator induces on the recurrent set
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(n_sites);
    let mut all_bijective = true;
    for x in 0..n_sites {
        let mut perm = vec![usize::MAX; size];
        let mut hit = vec![false; size];
        for (i, c) in configs.iter().enumerate() {
            let (image, _) = add_grain(c, x, &m)?;
            match index.get(image.heights()) {
                Some(&j) => {
                    perm[i] = j;
                    if hit[j] {
                        all_bijective = false;
                        violations.push(format!(
                            "a_{x} is not injective: two preimages reach state {j}"
                        ));
                    }
                    hit[j] = true;
                }
                None => {
                    all_bijective = false;
                    violations.push(format!(
                        "a_{x} leaves the recurrent set from state {i} ({:?})",
                        c.heights()
                    ));
                    perm[i] = i;
                }
            }
        }
        perms.push(perm);
    }

    // uniform invariance: pushing the uniform measure through a_x is a
    // permutation of the atoms
    let uniform_invariant = all_bijective
        && perms.iter().all(|p| {
            let mut mass = vec![0u64; size];
            for &j in p {
                mass[j] += 1;
            }
            mass.iter().all(|&k| k == 1)
        });

    // per-site order: the action is free, so every cycle of a_x has the
    // same length, which is the order of a_x
    let mut per_site_order = Vec::with_capacity(n_sites);
    for (x, perm) in perms.iter().enumerate() {
        let mut seen = vec![false; size];
        let mut order = 0u64;
        let mut regular = true;
        for start in 0..size {
            if seen[start] {
                continue;
            }
            let mut len = 0u64;
            let mut cur = start;
            while !seen[cur] {
                seen[cur] = true;
                cur = perm[cur];
                len += 1;
            }
            if order == 0 {
                order = len;
            } else if order != len {
                regular = false;
                order = num_integer_lcm(order, len);
            }
        }
        if !regular {
            violations.push(format!(
                "a_{x} acts with unequal cycle lengths; the action is not free"
            ));
        }
        per_site_order.push(order);
    }

    // commutativity of all pairs
    let mut all_commute = true;
    'pairs: for x in 0..n_sites {
        for y in x + 1..n_sites {
            if compose(&perms[x], &perms[y]) != compose(&perms[y], &perms[x]) {
                all_commute = false;
                violations.push(format!("a_{x} and a_{y} do not commute"));
                break 'pairs;
            }
        }
    }

    // closure: prod_y a_y^{Delta_{x,y}} = e for every x, with negative
    // exponents via the inverse permutation
    let inverses: Vec<Vec<usize>> = perms.iter().map(|p| invert(p)).collect();
    let mut closure_holds = true;
    for x in 0..n_sites {
        let mut net: Vec<usize> = (0..size).collect();
        for _ in 0..m.diag(x) {
            net = compose(&perms[x], &net);
        }
        for (y, coeff) in m.off_diag(x) {
            let (perm, reps) = if coeff < 0 {
                (&inverses[y], (-coeff) as u64)
            } else {
                (&perms[y], coeff as u64)
            };
            for _ in 0..reps {
                net = compose(perm, &net);
            }
        }
        if !is_identity(&net) {
            closure_holds = false;
            let witness = net.iter().position(|&j| j != 0).unwrap_or(0);
            violations.push(format!(
                "closure relation fails at x={x}, witness state {witness}"
            ));
        }
    }

    Ok(GroupAxiomReport {
        sites: n_sites,
        recurrent_count: size,
        determinant: det.to_string(),
        count_matches_determinant: count_matches,
        all_bijective,
        all_pairs_commute: all_commute,
        closure_relation_holds: closure_holds,
        uniform_measure_invariant: uniform_invariant,
        per_site_order,
        violations,
    })
}

fn num_integer_lcm(a: u64, b: u64) -> u64 {
    fn gcd(mut a: u64, mut b: u64) -> u64 {
        while b != 0 {
            let t = a % b;
            a = b;
            b = t;
        }
        a
    }
    a / gcd(a, b) * b
}

/// The unique recurrent configuration c' with add_grain(c', x) = c,
/// found by following the orbit of a_x through c back around.
pub fn inverse_addition(c: &HeightConfig, x: SiteId, v: &VolumeGraph) -> Result<HeightConfig> {
    if !is_recurrent(c, v) {
        return Err(Error::NotRecurrent);
    }
    let m = toppling_matrix(v);
    let cap = determinant_exact(&m)
        .abs()
        .to_u64()
        .unwrap_or(u64::MAX);
    let mut prev = c.clone();
    let mut cur = add_grain(c, x, &m)?.0;
    let mut steps = 1u64;
    while &cur != c {
        if steps >= cap {
            return Err(Error::InvalidParameter(format!(
                "orbit of a_{x} did not close within det = {cap} iterations"
            )));
        }
        prev = cur.clone();
        cur = add_grain(&cur, x, &m)?.0;
        steps += 1;
    }
    Ok(prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::is_stable;
    use crate::topology::{build_grid_volume, build_tree_volume, prefix_volume};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn two_site_tree() -> VolumeGraph {
        prefix_volume(&build_tree_volume(2, 1).unwrap(), 2).unwrap()
    }

    fn star() -> VolumeGraph {
        prefix_volume(&build_tree_volume(2, 1).unwrap(), 3).unwrap()
    }

    #[test]
    fn burn_examples() {
        let v = two_site_tree();
        let report = burn(&HeightConfig::from_heights(vec![1, 1]).unwrap(), &v);
        assert_eq!(report.residual, vec![0, 1]);
        assert!(!report.is_allowed());

        let report = burn(&HeightConfig::from_heights(vec![3, 3]).unwrap(), &v);
        assert!(report.is_allowed());
        assert_eq!(report.rounds, vec![vec![0, 1]]);

        let report = burn(&HeightConfig::from_heights(vec![2, 1]).unwrap(), &v);
        assert!(report.is_allowed());
        assert_eq!(report.rounds, vec![vec![0], vec![1]]);
    }

    #[test]
    fn recurrence_examples() {
        for v in [
            two_site_tree(),
            star(),
            build_tree_volume(2, 2).unwrap(),
        ] {
            let n = v.site_count();
            assert!(is_recurrent(&HeightConfig::constant(n, 2).unwrap(), &v));
            let m = toppling_matrix(&v);
            assert!(is_recurrent(&HeightConfig::max_stable(&m), &v));
        }
        let v = two_site_tree();
        assert!(!is_recurrent(
            &HeightConfig::from_heights(vec![1, 1]).unwrap(),
            &v
        ));
    }

    #[test]
    fn determinant_examples() {
        let single = build_tree_volume(2, 0).unwrap();
        assert_eq!(
            count_recurrent(&single).unwrap().exact().unwrap(),
            &BigInt::from(3)
        );
        assert_eq!(
            count_recurrent(&two_site_tree()).unwrap().exact().unwrap(),
            &BigInt::from(8)
        );
        assert_eq!(
            count_recurrent(&star()).unwrap().exact().unwrap(),
            &BigInt::from(21)
        );
        // tridiagonal (2,-1) determinant is n+1
        for n in 1..=6u32 {
            let path = build_grid_volume(1, n).unwrap();
            assert_eq!(
                count_recurrent(&path).unwrap().exact().unwrap(),
                &BigInt::from(n + 1)
            );
        }
    }

    #[test]
    fn approximate_count_past_cap() {
        let v = build_tree_volume(2, 2).unwrap();
        let exact = count_recurrent(&v).unwrap();
        let approx = count_recurrent_capped(&v, 4).unwrap();
        assert!(!approx.is_exact());
        assert!((approx.log_value() - exact.log_value()).abs() < 1e-9);
    }

    #[test]
    fn enumeration_examples() {
        let single = build_tree_volume(2, 0).unwrap();
        let all = enumerate_recurrent(&single).unwrap();
        let heights: Vec<u64> = all.iter().map(|c| c.height(0)).collect();
        assert_eq!(heights, vec![1, 2, 3]);

        let pair = enumerate_recurrent(&two_site_tree()).unwrap();
        assert_eq!(pair.len(), 8); // 3^2 stable minus the forbidden (1,1)

        let too_big = build_tree_volume(2, 3).unwrap(); // 22 sites
        assert!(matches!(
            enumerate_recurrent(&too_big),
            Err(Error::EnumerationCapExceeded { .. })
        ));
    }

    #[test]
    fn enumeration_matches_determinant() {
        for v in [
            build_tree_volume(2, 0).unwrap(),
            two_site_tree(),
            star(),
            build_tree_volume(2, 1).unwrap(),
            build_grid_volume(2, 2).unwrap(),
            build_grid_volume(1, 4).unwrap(),
        ] {
            let count = enumerate_recurrent(&v).unwrap().len();
            let det = count_recurrent(&v).unwrap();
            assert_eq!(&BigInt::from(count), det.exact().unwrap());
        }
    }

    #[test]
    fn group_axioms_single_site() {
        let v = build_tree_volume(2, 0).unwrap();
        let report = verify_group_axioms(&v).unwrap();
        assert!(report.passes(), "{:?}", report.violations);
        assert_eq!(report.recurrent_count, 3);
        assert_eq!(report.per_site_order, vec![3]); // the 3-cycle 1 -> 2 -> 3 -> 1
    }

    #[test]
    fn group_axioms_small_volumes() {
        for v in [two_site_tree(), star(), build_grid_volume(2, 2).unwrap()] {
            let report = verify_group_axioms(&v).unwrap();
            assert!(report.passes(), "{:?}", report.violations);
        }
        let star_report = verify_group_axioms(&star()).unwrap();
        assert_eq!(star_report.recurrent_count, 21);
        assert!(star_report.all_pairs_commute);
    }

    #[test]
    fn inverse_addition_examples() {
        let single = build_tree_volume(2, 0).unwrap();
        let inv = inverse_addition(
            &HeightConfig::from_heights(vec![1]).unwrap(),
            0,
            &single,
        )
        .unwrap();
        assert_eq!(inv.heights(), &[3]);

        // inverse then add, and add then inverse, are the identity
        let m = toppling_matrix(&two_site_tree());
        for c in enumerate_recurrent(&two_site_tree()).unwrap() {
            for x in 0..2 {
                let inv = inverse_addition(&c, x, &two_site_tree()).unwrap();
                assert_eq!(add_grain(&inv, x, &m).unwrap().0, c);
            }
        }
        let v = star();
        let m = toppling_matrix(&v);
        for c in enumerate_recurrent(&v).unwrap() {
            for x in 0..3 {
                let (added, _) = add_grain(&c, x, &m).unwrap();
                assert_eq!(inverse_addition(&added, x, &v).unwrap(), c);
            }
        }
    }

    #[test]
    fn inverse_addition_requires_recurrence() {
        let v = two_site_tree();
        let c = HeightConfig::from_heights(vec![1, 1]).unwrap();
        assert!(matches!(
            inverse_addition(&c, 0, &v),
            Err(Error::NotRecurrent)
        ));
    }

    #[test]
    fn addition_preserves_recurrence() {
        let v = build_tree_volume(2, 2).unwrap();
        let m = toppling_matrix(&v);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut c = HeightConfig::max_stable(&m);
        for _ in 0..300 {
            let x = rng.gen_range(0..v.site_count());
            let (next, _) = add_grain(&c, x, &m).unwrap();
            assert!(is_stable(&next, &m));
            assert!(is_recurrent(&next, &v));
            c = next;
        }
    }

    #[test]
    fn restriction_consistency() {
        // recurrent on the larger volume implies recurrent restriction
        let big = prefix_volume(&build_tree_volume(2, 2).unwrap(), 8).unwrap();
        let small = prefix_volume(&big, 5).unwrap();
        for c in enumerate_recurrent(&big).unwrap() {
            let restricted = c.restrict(5);
            assert!(is_recurrent(&restricted, &small));
        }
    }
}
