//! Finite volumes of the rootless (d+1)-regular tree and of Z^d boxes,
//! together with their toppling matrices (lattice Laplacians with open
//! boundary) and the generation-ordered site enumeration.

use serde::Serialize;

use crate::error::{Error, Result};

pub type SiteId = usize;

/// Hard cap on sites per volume; deep tree balls blow up exponentially.
pub const DEFAULT_SITE_CAP: usize = 10_000_000;

/// The infinite graph a volume was carved from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VolumeKind {
    /// Rootless regular tree of degree d+1 (Bethe lattice; d = 2 is binary branching).
    Tree { d: u32 },
    /// Z^d box with nearest-neighbor edges.
    Grid { d: u32 },
}

impl VolumeKind {
    /// Degree of a bulk site on the infinite graph; also the Laplacian diagonal.
    pub fn full_degree(&self) -> usize {
        match *self {
            VolumeKind::Tree { d } => d as usize + 1,
            VolumeKind::Grid { d } => 2 * d as usize,
        }
    }
}

/// A finite connected, simply connected set of sites with its adjacency
/// and per-site generation numbers (graph distance to the origin).
///
/// Immutable after construction; shareable across threads.
#[derive(Clone, Debug)]
pub struct VolumeGraph {
    kind: VolumeKind,
    offsets: Vec<usize>,
    neighbors: Vec<SiteId>,
    generation: Vec<u32>,
    origin: SiteId,
}

impl VolumeGraph {
    pub fn site_count(&self) -> usize {
        self.generation.len()
    }

    pub fn neighbors(&self, x: SiteId) -> &[SiteId] {
        &self.neighbors[self.offsets[x]..self.offsets[x + 1]]
    }

    pub fn degree(&self, x: SiteId) -> usize {
        self.offsets[x + 1] - self.offsets[x]
    }

    /// Generation number |x|: graph distance from the origin.
    pub fn generation(&self, x: SiteId) -> u32 {
        self.generation[x]
    }

    pub fn origin(&self) -> SiteId {
        self.origin
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    pub fn full_degree(&self) -> usize {
        self.kind.full_degree()
    }

    /// A site is on the boundary when it has fewer in-volume neighbors than
    /// the full degree; those are exactly the dissipative sites.
    pub fn is_boundary(&self, x: SiteId) -> bool {
        self.degree(x) < self.full_degree()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn is_tree(&self) -> bool {
        matches!(self.kind, VolumeKind::Tree { .. })
    }

    fn from_adjacency(
        kind: VolumeKind,
        adjacency: Vec<Vec<SiteId>>,
        generation: Vec<u32>,
        origin: SiteId,
    ) -> Self {
        let mut offsets = Vec::with_capacity(adjacency.len() + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for row in &adjacency {
            neighbors.extend_from_slice(row);
            offsets.push(neighbors.len());
        }
        VolumeGraph {
            kind,
            offsets,
            neighbors,
            generation,
            origin,
        }
    }
}

/// Number of sites in the radius-`n_gen` ball of the (d+1)-regular tree,
/// or an error when it exceeds `cap`.
fn tree_ball_site_count(d: u32, n_gen: u32, cap: usize) -> Result<usize> {
    let d = d as u128;
    let mut total: u128 = 1;
    let mut shell: u128 = d + 1; // generation 1
    for _ in 1..=n_gen {
        total += shell;
        if total > cap as u128 {
            return Err(Error::SiteCapExceeded {
                requested: total,
                cap,
            });
        }
        shell *= d;
    }
    Ok(total as usize)
}

/// Ball of radius `n_gen` around a distinguished origin in the rootless
/// (d+1)-regular tree. Site ids are dense integers in BFS creation order,
/// so the ball of radius n is an id-for-id prefix of the ball of radius m
/// for n <= m.
pub fn build_tree_volume(d: u32, n_gen: u32) -> Result<VolumeGraph> {
    build_tree_volume_capped(d, n_gen, DEFAULT_SITE_CAP)
}

pub fn build_tree_volume_capped(d: u32, n_gen: u32, cap: usize) -> Result<VolumeGraph> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!(
            "tree branching parameter d must be >= 2, got {d}"
        )));
    }
    let count = tree_ball_site_count(d, n_gen, cap)?;
    let mut adjacency: Vec<Vec<SiteId>> = Vec::with_capacity(count);
    let mut generation: Vec<u32> = Vec::with_capacity(count);
    adjacency.push(Vec::new());
    generation.push(0);
    let mut frontier: Vec<SiteId> = vec![0];
    for gen in 1..=n_gen {
        let mut next = Vec::new();
        for &site in &frontier {
            let children = if site == 0 { d + 1 } else { d };
            for _ in 0..children {
                let child = adjacency.len();
                adjacency.push(vec![site]);
                generation.push(gen);
                adjacency[site].push(child);
                next.push(child);
            }
        }
        frontier = next;
    }
    debug_assert_eq!(adjacency.len(), count);
    Ok(VolumeGraph::from_adjacency(
        VolumeKind::Tree { d },
        adjacency,
        generation,
        0,
    ))
}

/// d-dimensional box of side^d sites with nearest-neighbor adjacency and
/// open boundary. The origin is the central site (coordinates
/// (side-1)/2 in every direction, rounded down).
pub fn build_grid_volume(d: u32, side: u32) -> Result<VolumeGraph> {
    build_grid_volume_capped(d, side, DEFAULT_SITE_CAP)
}

pub fn build_grid_volume_capped(d: u32, side: u32, cap: usize) -> Result<VolumeGraph> {
    if d < 1 {
        return Err(Error::InvalidParameter(
            "grid dimension d must be >= 1".into(),
        ));
    }
    if side < 1 {
        return Err(Error::InvalidParameter("grid side must be >= 1".into()));
    }
    let count = (side as u128)
        .checked_pow(d)
        .filter(|&c| c <= cap as u128)
        .ok_or(Error::SiteCapExceeded {
            requested: (side as u128).saturating_pow(d),
            cap,
        })? as usize;

    let side = side as usize;
    let dims = d as usize;
    let coords = |id: usize| -> Vec<usize> {
        let mut c = Vec::with_capacity(dims);
        let mut rest = id;
        for _ in 0..dims {
            c.push(rest % side);
            rest /= side;
        }
        c
    };
    let center = (side - 1) / 2;
    let mut origin = 0;
    let mut stride = 1;
    for _ in 0..dims {
        origin += center * stride;
        stride *= side;
    }

    let mut adjacency: Vec<Vec<SiteId>> = vec![Vec::with_capacity(2 * dims); count];
    let mut generation: Vec<u32> = vec![0; count];
    for id in 0..count {
        let c = coords(id);
        let mut stride = 1;
        for axis in 0..dims {
            if c[axis] > 0 {
                adjacency[id].push(id - stride);
            }
            if c[axis] + 1 < side {
                adjacency[id].push(id + stride);
            }
            stride *= side;
        }
        adjacency[id].sort_unstable();
        generation[id] = c.iter().map(|&x| x.abs_diff(center) as u32).sum();
    }
    Ok(VolumeGraph::from_adjacency(
        VolumeKind::Grid { d },
        adjacency,
        generation,
        origin,
    ))
}

/// The toppling matrix Delta of a volume: symmetric, integer, with
/// nonpositive off-diagonal entries. Constructors emit the lattice
/// Laplacian with open boundary; arbitrary matrices can be wrapped for
/// validation via [`ToppleMatrix::from_dense`].
#[derive(Clone, Debug)]
pub struct ToppleMatrix {
    diag: Vec<i64>,
    off_offsets: Vec<usize>,
    off_sites: Vec<SiteId>,
    off_coeffs: Vec<i64>,
    validation: MatrixValidation,
}

impl ToppleMatrix {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self, x: SiteId) -> i64 {
        self.diag[x]
    }

    /// Off-diagonal entries of row x as (site, coefficient) pairs.
    pub fn off_diag(&self, x: SiteId) -> impl Iterator<Item = (SiteId, i64)> + '_ {
        let range = self.off_offsets[x]..self.off_offsets[x + 1];
        self.off_sites[range.clone()]
            .iter()
            .copied()
            .zip(self.off_coeffs[range].iter().copied())
    }

    pub fn entry(&self, x: SiteId, y: SiteId) -> i64 {
        if x == y {
            return self.diag[x];
        }
        self.off_diag(x)
            .find(|&(site, _)| site == y)
            .map(|(_, c)| c)
            .unwrap_or(0)
    }

    pub fn row_sum(&self, x: SiteId) -> i64 {
        self.diag[x] + self.off_diag(x).map(|(_, c)| c).sum::<i64>()
    }

    /// Validation result computed at construction time.
    pub fn validation(&self) -> &MatrixValidation {
        &self.validation
    }

    pub fn is_valid(&self) -> bool {
        self.validation.passes()
    }

    fn finish(diag: Vec<i64>, rows: Vec<Vec<(SiteId, i64)>>) -> Self {
        let mut off_offsets = Vec::with_capacity(diag.len() + 1);
        let mut off_sites = Vec::new();
        let mut off_coeffs = Vec::new();
        off_offsets.push(0);
        for row in &rows {
            for &(y, c) in row {
                off_sites.push(y);
                off_coeffs.push(c);
            }
            off_offsets.push(off_sites.len());
        }
        let mut m = ToppleMatrix {
            diag,
            off_offsets,
            off_sites,
            off_coeffs,
            validation: MatrixValidation::default(),
        };
        m.validation = validate_toppling_matrix(&m);
        m
    }

    /// Wrap a dense square integer matrix (rows of equal length).
    pub fn from_dense(rows: &[Vec<i64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(
                "toppling matrix must be square".into(),
            ));
        }
        let diag = (0..n).map(|i| rows[i][i]).collect();
        let off = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && rows[i][j] != 0)
                    .map(|j| (j, rows[i][j]))
                    .collect()
            })
            .collect();
        Ok(ToppleMatrix::finish(diag, off))
    }
}

/// The lattice Laplacian with open boundary conditions: diagonal d+1 on
/// trees and 2d on grids at every site, -1 exactly on the edges of `v`.
pub fn toppling_matrix(v: &VolumeGraph) -> ToppleMatrix {
    let n = v.site_count();
    let full = v.full_degree() as i64;
    let diag = vec![full; n];
    let rows = (0..n)
        .map(|x| v.neighbors(x).iter().map(|&y| (y, -1)).collect())
        .collect();
    ToppleMatrix::finish(diag, rows)
}

/// Per-condition report for the four toppling-matrix conditions:
/// symmetric nonpositive off-diagonal, diagonal >= 1, nonnegative row
/// sums, strictly positive total sum. Dissipative sites are those with a
/// strictly positive row sum.
#[derive(Clone, Debug, Default, Serialize)]
pub struct MatrixValidation {
    pub offdiag_symmetric_nonpositive: bool,
    pub diagonal_positive: bool,
    pub row_sums_nonnegative: bool,
    pub total_sum_positive: bool,
    pub dissipative_sites: Vec<SiteId>,
}

impl MatrixValidation {
    pub fn passes(&self) -> bool {
        self.offdiag_symmetric_nonpositive
            && self.diagonal_positive
            && self.row_sums_nonnegative
            && self.total_sum_positive
    }
}

pub fn validate_toppling_matrix(m: &ToppleMatrix) -> MatrixValidation {
    let n = m.dim();
    let mut cond1 = true;
    for x in 0..n {
        for (y, c) in m.off_diag(x) {
            if c > 0 || m.entry(y, x) != c {
                cond1 = false;
            }
        }
    }
    let cond2 = (0..n).all(|x| m.diag(x) >= 1);
    let row_sums: Vec<i64> = (0..n).map(|x| m.row_sum(x)).collect();
    let cond3 = row_sums.iter().all(|&s| s >= 0);
    let cond4 = row_sums.iter().sum::<i64>() > 0;
    let dissipative = (0..n).filter(|&x| row_sums[x] > 0).collect();
    MatrixValidation {
        offdiag_symmetric_nonpositive: cond1,
        diagonal_positive: cond2,
        row_sums_nonnegative: cond3,
        total_sum_positive: cond4,
        dissipative_sites: dissipative,
    }
}

/// Sites listed with nondecreasing generation numbers, origin first.
#[derive(Clone, Debug)]
pub struct SiteEnumeration {
    order: Vec<SiteId>,
}

impl SiteEnumeration {
    pub fn order(&self) -> &[SiteId] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// BFS order from the origin, neighbors visited in ascending-id order,
/// so the result is deterministic for a given volume.
pub fn enumerate_sites(v: &VolumeGraph) -> SiteEnumeration {
    let n = v.site_count();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(v.origin());
    seen[v.origin()] = true;
    while let Some(x) = queue.pop_front() {
        order.push(x);
        for &y in v.neighbors(x) {
            if !seen[y] {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    debug_assert_eq!(order.len(), n);
    SiteEnumeration { order }
}

/// Induced subgraph on the first `n_sites` sites of the BFS enumeration,
/// relabeled by enumeration rank. BFS prefixes are connected and contain
/// the origin, and for tree volumes the prefix of a larger ball matches
/// the smaller ball id for id.
pub fn prefix_volume(v: &VolumeGraph, n_sites: usize) -> Result<VolumeGraph> {
    if n_sites == 0 || n_sites > v.site_count() {
        return Err(Error::InvalidParameter(format!(
            "prefix size {n_sites} out of range 1..={}",
            v.site_count()
        )));
    }
    let enumeration = enumerate_sites(v);
    let chosen = &enumeration.order()[..n_sites];
    let mut rank = vec![usize::MAX; v.site_count()];
    for (r, &site) in chosen.iter().enumerate() {
        rank[site] = r;
    }
    let mut adjacency = vec![Vec::new(); n_sites];
    let mut generation = vec![0u32; n_sites];
    for (r, &site) in chosen.iter().enumerate() {
        generation[r] = v.generation(site);
        for &y in v.neighbors(site) {
            if rank[y] != usize::MAX {
                adjacency[r].push(rank[y]);
            }
        }
        adjacency[r].sort_unstable();
    }
    Ok(VolumeGraph::from_adjacency(
        v.kind(),
        adjacency,
        generation,
        0,
    ))
}

/// Structural equality of two volumes (kind, adjacency, generations, origin).
pub fn volumes_equal(a: &VolumeGraph, b: &VolumeGraph) -> bool {
    a.kind == b.kind
        && a.origin == b.origin
        && a.generation == b.generation
        && a.offsets == b.offsets
        && a.neighbors == b.neighbors
}

/// An increasing chain of volumes, each an id-for-id prefix of the next,
/// with their toppling matrices. Coupled-truncation runs and convergence
/// diagnostics iterate over these.
#[derive(Clone, Debug)]
pub struct VolumeSchedule {
    volumes: Vec<VolumeGraph>,
    matrices: Vec<ToppleMatrix>,
}

impl VolumeSchedule {
    /// Balls of the (d+1)-regular tree at strictly increasing radii.
    pub fn tree_balls(d: u32, n_gens: &[u32]) -> Result<Self> {
        if n_gens.is_empty() {
            return Err(Error::InvalidParameter("empty volume schedule".into()));
        }
        if !n_gens.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(
                "schedule radii must be strictly increasing".into(),
            ));
        }
        let volumes: Vec<VolumeGraph> = n_gens
            .iter()
            .map(|&n| build_tree_volume(d, n))
            .collect::<Result<_>>()?;
        Self::from_volumes(volumes)
    }

    /// Any strictly growing chain where each volume is a prefix of the next.
    pub fn from_volumes(volumes: Vec<VolumeGraph>) -> Result<Self> {
        if volumes.is_empty() {
            return Err(Error::InvalidParameter("empty volume schedule".into()));
        }
        for pair in volumes.windows(2) {
            if pair[0].site_count() >= pair[1].site_count()
                || !volumes_equal(&pair[0], &prefix_volume(&pair[1], pair[0].site_count())?)
            {
                return Err(Error::InvalidParameter(
                    "schedule volumes must nest as id prefixes".into(),
                ));
            }
        }
        let matrices = volumes.iter().map(toppling_matrix).collect();
        Ok(VolumeSchedule { volumes, matrices })
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn volume(&self, i: usize) -> &VolumeGraph {
        &self.volumes[i]
    }

    pub fn matrix(&self, i: usize) -> &ToppleMatrix {
        &self.matrices[i]
    }

    pub fn largest(&self) -> (&VolumeGraph, &ToppleMatrix) {
        (
            &self.volumes[self.len() - 1],
            &self.matrices[self.len() - 1],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_ball_counts() {
        assert_eq!(build_tree_volume(2, 0).unwrap().site_count(), 1);
        let b1 = build_tree_volume(2, 1).unwrap();
        assert_eq!(b1.site_count(), 4);
        assert_eq!(b1.edge_count(), 3);
        assert_eq!(build_tree_volume(2, 2).unwrap().site_count(), 10);
    }

    #[test]
    fn tree_ball_count_formula_matches_bfs() {
        for d in [2u32, 3] {
            for n in 0..=10u32 {
                let formula = tree_ball_site_count(d, n, usize::MAX).unwrap();
                if formula > 2_000_000 {
                    continue;
                }
                let v = build_tree_volume(d, n).unwrap();
                assert_eq!(v.site_count(), formula, "d={d} n={n}");
            }
        }
    }

    #[test]
    fn tree_ball_structure() {
        let v = build_tree_volume(2, 2).unwrap();
        assert_eq!(v.origin(), 0);
        assert_eq!(v.generation(0), 0);
        // interior sites have full degree, boundary sites fewer
        for x in 0..v.site_count() {
            if v.generation(x) < 2 {
                assert_eq!(v.degree(x), 3);
                assert!(!v.is_boundary(x));
            } else {
                assert_eq!(v.degree(x), 1);
                assert!(v.is_boundary(x));
            }
        }
        // generation equals BFS distance from origin
        let mut dist = vec![u32::MAX; v.site_count()];
        dist[0] = 0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(x) = queue.pop_front() {
            for &y in v.neighbors(x) {
                if dist[y] == u32::MAX {
                    dist[y] = dist[x] + 1;
                    queue.push_back(y);
                }
            }
        }
        for x in 0..v.site_count() {
            assert_eq!(dist[x], v.generation(x));
        }
    }

    #[test]
    fn tree_site_cap() {
        assert!(matches!(
            build_tree_volume(2, 40),
            Err(Error::SiteCapExceeded { .. })
        ));
        assert!(build_tree_volume_capped(2, 2, 9).is_err());
    }

    #[test]
    fn grid_volumes() {
        let single = build_grid_volume(1, 1).unwrap();
        assert_eq!(single.site_count(), 1);
        assert_eq!(single.edge_count(), 0);

        let path = build_grid_volume(1, 3).unwrap();
        assert_eq!(path.site_count(), 3);
        assert_eq!(path.edge_count(), 2);
        assert_eq!(path.origin(), 1);

        let square = build_grid_volume(2, 2).unwrap();
        assert_eq!(square.site_count(), 4);
        assert_eq!(square.edge_count(), 4);
        for x in 0..4 {
            assert_eq!(square.degree(x), 2);
        }
    }

    #[test]
    fn laplacian_entries() {
        let single = build_tree_volume(2, 0).unwrap();
        let m = toppling_matrix(&single);
        assert_eq!(m.dim(), 1);
        assert_eq!(m.diag(0), 3);

        let pair = prefix_volume(&build_tree_volume(2, 1).unwrap(), 2).unwrap();
        let m = toppling_matrix(&pair);
        assert_eq!(m.diag(0), 3);
        assert_eq!(m.diag(1), 3);
        assert_eq!(m.entry(0, 1), -1);
        assert_eq!(m.entry(1, 0), -1);

        let path = build_grid_volume(1, 3).unwrap();
        let m = toppling_matrix(&path);
        assert_eq!(m.diag(0), 2);
        assert_eq!(m.diag(1), 2);
        assert_eq!(m.diag(2), 2);
        assert_eq!(m.entry(0, 1), -1);
        assert_eq!(m.entry(1, 2), -1);
        assert_eq!(m.entry(0, 2), 0);
    }

    #[test]
    fn validation_report() {
        let pair = ToppleMatrix::from_dense(&[vec![3, -1], vec![-1, 3]]).unwrap();
        let report = validate_toppling_matrix(&pair);
        assert!(report.passes());
        assert_eq!(report.dissipative_sites, vec![0, 1]);

        let identity = ToppleMatrix::from_dense(&[vec![1, 0], vec![0, 1]]).unwrap();
        let report = validate_toppling_matrix(&identity);
        assert!(report.passes());
        assert_eq!(report.dissipative_sites, vec![0, 1]);

        let conservative = ToppleMatrix::from_dense(&[vec![2, -2], vec![-2, 2]]).unwrap();
        let report = validate_toppling_matrix(&conservative);
        assert!(!report.total_sum_positive);
        assert!(report.row_sums_nonnegative);
        assert!(!report.passes());
        assert!(report.dissipative_sites.is_empty());

        let asymmetric = ToppleMatrix::from_dense(&[vec![3, -1], vec![0, 3]]).unwrap();
        assert!(!validate_toppling_matrix(&asymmetric).offdiag_symmetric_nonpositive);
    }

    #[test]
    fn constructed_volumes_pass_validation() {
        let volumes = [
            build_tree_volume(2, 3).unwrap(),
            build_tree_volume(3, 2).unwrap(),
            build_grid_volume(1, 5).unwrap(),
            build_grid_volume(2, 3).unwrap(),
            build_grid_volume(3, 2).unwrap(),
        ];
        for v in &volumes {
            let m = toppling_matrix(v);
            assert!(m.is_valid());
            // row sum = full_degree - deg, strictly positive exactly on the boundary
            for x in 0..v.site_count() {
                let expected = (v.full_degree() - v.degree(x)) as i64;
                assert_eq!(m.row_sum(x), expected);
                assert_eq!(m.row_sum(x) > 0, v.is_boundary(x));
            }
        }
    }

    #[test]
    fn enumeration_is_generation_ordered() {
        let single = build_tree_volume(2, 0).unwrap();
        assert_eq!(enumerate_sites(&single).order(), &[0]);

        let b1 = build_tree_volume(2, 1).unwrap();
        assert_eq!(enumerate_sites(&b1).order(), &[0, 1, 2, 3]);

        let b2 = build_tree_volume(2, 2).unwrap();
        let order = enumerate_sites(&b2).order().to_vec();
        let gens: Vec<u32> = order.iter().map(|&x| b2.generation(x)).collect();
        assert_eq!(gens[..4], [0, 1, 1, 1]);
        assert!(gens[4..].iter().all(|&g| g == 2));

        for v in [
            build_tree_volume(2, 5).unwrap(),
            build_tree_volume(3, 3).unwrap(),
            build_grid_volume(2, 5).unwrap(),
        ] {
            let order = enumerate_sites(&v);
            assert_eq!(order.order()[0], v.origin());
            let gens: Vec<u32> = order.order().iter().map(|&x| v.generation(x)).collect();
            assert!(gens.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn tree_balls_nest_as_prefixes() {
        let big = build_tree_volume(2, 4).unwrap();
        for n in 0..=3u32 {
            let small = build_tree_volume(2, n).unwrap();
            let prefix = prefix_volume(&big, small.site_count()).unwrap();
            assert!(volumes_equal(&small, &prefix), "n={n}");
        }
    }

    #[test]
    fn prefix_volume_bounds() {
        let v = build_tree_volume(2, 1).unwrap();
        assert!(prefix_volume(&v, 0).is_err());
        assert!(prefix_volume(&v, 5).is_err());
        let p = prefix_volume(&v, 2).unwrap();
        assert_eq!(p.site_count(), 2);
        assert_eq!(p.edge_count(), 1);
        assert_eq!(p.generation(1), 1);
    }
}
