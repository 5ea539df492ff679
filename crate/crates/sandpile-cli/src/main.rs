//! Command-line front end binding the sandpile library into reproducible
//! experiments with machine-readable outputs.
//!
//! Every run resolves a manifest (config file plus flag overrides),
//! writes it next to the outputs, and is byte-for-byte reproducible from
//! that manifest: seeds are mandatory, maps are ordered, and parallel
//! replicas merge in index order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use sandpile::dynamics::{
    stabilized_window_run, summability_check, toppling_bound_check, RateFunction, RateSpec,
    Summability,
};
use sandpile::engine::HeightConfig;
use sandpile::measure::{
    boundary_height_identity, cauchy_net_diagnostic, expectation, ExpectationMethod,
    LocalObservable, SampleMethod, UniformSampler,
};
use sandpile::observables::{
    cluster_size_distribution, expected_topplings_mc, greens_decay_check, greens_exact,
    ClusterSampleConfig, TailFitConfig,
};
use sandpile::recurrence::{enumerate_recurrent, verify_group_axioms, DEFAULT_ENUMERATION_CAP};
use sandpile::topology::{
    build_grid_volume, build_tree_volume, prefix_volume, toppling_matrix, VolumeGraph,
    VolumeSchedule,
};

const EXIT_OK: u8 = 0;
const EXIT_ASSERTION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_REFUSED: u8 = 3;

#[derive(Parser)]
#[command(name = "sandpile", about = "Reproducible abelian sandpile experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed (mandatory, here or in the config; no wall-clock default).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replica parallelism cap.
    #[arg(long)]
    threads: Option<usize>,
    /// Volume, e.g. tree:2:4 (kind:d:size) or grid:2:3.
    #[arg(long)]
    volume: Option<String>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    runs: Option<u64>,
    /// Time horizon for continuous-time runs.
    #[arg(long)]
    t: Option<f64>,
    /// Tree-ball radii, e.g. 2,4,6,8.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long)]
    thinning: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact algebraic verification on an enumerable volume.
    Verify(Common),
    /// Draw stationary configurations.
    Sample(Common),
    /// Expected toppling numbers against the exact Green's function.
    Greens(Common),
    /// Cluster-size histogram and tail fit at the origin.
    Clusters(Common),
    /// Expectations, the boundary-height identity and the volume-convergence diagnostic.
    Stats(Common),
    /// Coupled truncated Poisson dynamics over a volume schedule.
    Dynamics {
        #[command(flatten)]
        common: Common,
        /// Addition rates, e.g. geometric:0.25, constant:1.0 or table:1.0,0.5.
        #[arg(long)]
        phi: Option<String>,
        /// Run a non-summable rate anyway (negative-control mode).
        #[arg(long)]
        allow_nonsummable: bool,
    },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum VolumeSpec {
    Tree { d: u32, generations: u32 },
    Grid { d: u32, side: u32 },
}

impl VolumeSpec {
    fn build(&self) -> sandpile::Result<VolumeGraph> {
        match *self {
            VolumeSpec::Tree { d, generations } => build_tree_volume(d, generations),
            VolumeSpec::Grid { d, side } => build_grid_volume(d, side),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    volume: Option<VolumeSpec>,
    phi: Option<RateSpec>,
    seed: Option<u64>,
    samples: Option<u64>,
    runs: Option<u64>,
    t: Option<f64>,
    schedule: Option<Vec<u32>>,
    burn_in: Option<u64>,
    thinning: Option<u64>,
    threads: Option<usize>,
    allow_nonsummable: Option<bool>,
}

/// The fully resolved inputs of a run; written alongside every output.
#[derive(Clone, Debug, Serialize)]
struct Manifest {
    command: String,
    volume: Option<VolumeSpec>,
    phi: Option<RateSpec>,
    seed: u64,
    samples: Option<u64>,
    runs: Option<u64>,
    t: Option<f64>,
    schedule: Option<Vec<u32>>,
    burn_in: Option<u64>,
    thinning: Option<u64>,
    threads: usize,
    allow_nonsummable: Option<bool>,
    outputs: Vec<String>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn refused(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_REFUSED,
            message: message.into(),
        }
    }

    fn assertion(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_ASSERTION,
            message: message.into(),
        }
    }
}

impl From<sandpile::Error> for Failure {
    fn from(e: sandpile::Error) -> Self {
        match e {
            sandpile::Error::NonSummableRate(_) => Failure::refused(e.to_string()),
            sandpile::Error::SiteCapExceeded { .. }
            | sandpile::Error::EnumerationCapExceeded { .. }
            | sandpile::Error::InvalidParameter(_) => Failure::usage(e.to_string()),
            other => Failure::assertion(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(format!("i/o error: {e}"))
    }
}

/// Everything a command needs after merging config and flags.
struct Resolved {
    cfg: FileConfig,
    out: PathBuf,
    seed: u64,
    threads: usize,
}

fn parse_volume_flag(s: &str) -> Result<VolumeSpec, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Failure::usage(format!("cannot parse volume '{s}', expected kind:d:size"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let d: u32 = parts[1].parse().map_err(|_| bad())?;
    let size: u32 = parts[2].parse().map_err(|_| bad())?;
    match parts[0] {
        "tree" => Ok(VolumeSpec::Tree {
            d,
            generations: size,
        }),
        "grid" => Ok(VolumeSpec::Grid { d, side: size }),
        _ => Err(bad()),
    }
}

fn parse_phi_flag(s: &str) -> Result<RateSpec, Failure> {
    let bad = || {
        Failure::usage(format!(
            "cannot parse phi '{s}', expected geometric:R, constant:C or table:V1,V2,..."
        ))
    };
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "geometric" => Ok(RateSpec::Geometric {
            base: rest.parse().map_err(|_| bad())?,
        }),
        "constant" => Ok(RateSpec::Constant {
            value: rest.parse().map_err(|_| bad())?,
        }),
        "table" => Ok(RateSpec::Table {
            values: rest
                .split(',')
                .map(|v| v.parse().map_err(|_| bad()))
                .collect::<Result<_, _>>()?,
        }),
        _ => Err(bad()),
    }
}

fn resolve(common: &Common) -> Result<Resolved, Failure> {
    let mut cfg: FileConfig = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("cannot read config {path:?}: {e}")))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::usage(format!("cannot parse config {path:?}: {e}")))?
        }
        None => FileConfig::default(),
    };
    if let Some(flag) = &common.volume {
        cfg.volume = Some(parse_volume_flag(flag)?);
    }
    if let Some(s) = common.samples {
        cfg.samples = Some(s);
    }
    if let Some(r) = common.runs {
        cfg.runs = Some(r);
    }
    if let Some(t) = common.t {
        cfg.t = Some(t);
    }
    if let Some(schedule) = &common.schedule {
        let parsed: Result<Vec<u32>, _> = schedule.split(',').map(str::parse).collect();
        cfg.schedule =
            Some(parsed.map_err(|_| Failure::usage(format!("bad schedule '{schedule}'")))?);
    }
    if let Some(b) = common.burn_in {
        cfg.burn_in = Some(b);
    }
    if let Some(th) = common.thinning {
        cfg.thinning = Some(th);
    }
    if let Some(t) = common.threads {
        cfg.threads = Some(t);
    }
    let seed = common
        .seed
        .or(cfg.seed)
        .ok_or_else(|| Failure::usage("a seed is mandatory: pass --seed or set it in the config"))?;
    cfg.seed = Some(seed);
    let threads = cfg.threads.unwrap_or(1).max(1);
    Ok(Resolved {
        cfg,
        out: common.out.clone(),
        seed,
        threads,
    })
}

fn volume_or_usage(r: &Resolved) -> Result<(VolumeSpec, VolumeGraph), Failure> {
    let spec = r
        .cfg
        .volume
        .ok_or_else(|| Failure::usage("a volume is required: pass --volume or set it in the config"))?;
    let v = spec.build()?;
    Ok((spec, v))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    let mut file = fs::File::create(dir.join(name))?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::assertion(format!("serialization failed: {e}")))?;
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), Failure> {
    write_json(dir, "manifest.json", manifest)
}

fn manifest_for(r: &Resolved, command: &str, outputs: &[&str]) -> Manifest {
    Manifest {
        command: command.into(),
        volume: r.cfg.volume,
        phi: r.cfg.phi.clone(),
        seed: r.seed,
        samples: r.cfg.samples,
        runs: r.cfg.runs,
        t: r.cfg.t,
        schedule: r.cfg.schedule.clone(),
        burn_in: r.cfg.burn_in,
        thinning: r.cfg.thinning,
        threads: r.threads,
        allow_nonsummable: r.cfg.allow_nonsummable,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    }
}

fn cmd_verify(common: &Common) -> Result<u8, Failure> {
    let r = resolve(common)?;
    let (_, volume) = volume_or_usage(&r)?;
    if volume.site_count() > DEFAULT_ENUMERATION_CAP {
        return Err(Failure::usage(format!(
            "verify needs an enumerable volume (<= {DEFAULT_ENUMERATION_CAP} sites), got {}",
            volume.site_count()
        )));
    }
    fs::create_dir_all(&r.out)?;
    let report = verify_group_axioms(&volume)?;
    write_json(&r.out, "report.json", &report)?;
    // stream the full recurrent set alongside the report
    let mut csv = std::io::BufWriter::new(fs::File::create(r.out.join("recurrent.csv"))?);
    writeln!(csv, "config,site,height")?;
    for (i, c) in enumerate_recurrent(&volume)?.iter().enumerate() {
        for x in 0..volume.site_count() {
            writeln!(csv, "{i},{x},{}", c.height(x))?;
        }
    }
    csv.flush()?;
    drop(csv);
    write_manifest(
        &r.out,
        &manifest_for(&r, "verify", &["report.json", "recurrent.csv"]),
    )?;
    if report.passes() {
        println!(
            "verify: ok ({} recurrent configurations = det, all axioms hold)",
            report.recurrent_count
        );
        Ok(EXIT_OK)
    } else {
        println!("verify: FAILED: {:?}", report.violations.first());
        Ok(EXIT_ASSERTION)
    }
}

fn cmd_sample(common: &Common) -> Result<u8, Failure> {
    let r = resolve(common)?;
    let (_, volume) = volume_or_usage(&r)?;
    let samples = r.cfg.samples.unwrap_or(100);
    if samples == 0 {
        return Err(Failure::usage("samples must be > 0"));
    }
    let m = toppling_matrix(&volume);
    let method = if volume.site_count() <= DEFAULT_ENUMERATION_CAP {
        SampleMethod::Enumeration
    } else {
        SampleMethod::Mcmc {
            burn_in: r.cfg.burn_in.unwrap_or(10 * volume.site_count() as u64),
            thinning: r.cfg.thinning.unwrap_or(4),
        }
    };
    let mut sampler = UniformSampler::new(&volume, &m, method, r.seed)?;
    fs::create_dir_all(&r.out)?;
    let mut csv = String::from("sample,site,generation,height\n");
    let mut all: Vec<Vec<u64>> = Vec::with_capacity(samples as usize);
    for i in 0..samples {
        let c = sampler.draw()?;
        for x in 0..volume.site_count() {
            csv.push_str(&format!(
                "{i},{x},{},{}\n",
                volume.generation(x),
                c.height(x)
            ));
        }
        all.push(c.heights().to_vec());
    }
    fs::write(r.out.join("samples.csv"), csv)?;
    write_json(&r.out, "samples.json", &all)?;
    write_manifest(
        &r.out,
        &manifest_for(&r, "sample", &["samples.csv", "samples.json"]),
    )?;
    println!("sample: wrote {samples} configurations");
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct GreensSummary {
    identity_residual: f64,
    pairs_within_3_sigma: usize,
    pairs_total: usize,
    decay: Option<sandpile::observables::GreensDecayReport>,
}

fn cmd_greens(common: &Common) -> Result<u8, Failure> {
    let r = resolve(common)?;
    let (spec, volume) = volume_or_usage(&r)?;
    let samples = r.cfg.samples.unwrap_or(20_000);
    if samples == 0 {
        return Err(Failure::usage("samples must be > 0"));
    }
    let m = toppling_matrix(&volume);
    let greens = greens_exact(&volume, &m)?;

    // one representative pair per generation plus the origin diagonal
    let origin = volume.origin();
    let mut pairs = vec![(origin, origin)];
    let mut seen_gen = std::collections::BTreeSet::new();
    for x in 0..volume.site_count() {
        if seen_gen.insert(volume.generation(x)) && x != origin {
            pairs.push((origin, x));
            pairs.push((x, origin));
        }
    }
    let estimates = expected_topplings_mc(&volume, &m, &pairs, samples, r.seed)?;

    fs::create_dir_all(&r.out)?;
    let mut csv = String::from("x,y,exact,mc,stderr,within_3_sigma\n");
    let mut within = 0usize;
    for (&(x, y), est) in pairs.iter().zip(&estimates) {
        let exact = greens.get(x, y);
        let ok = est.within_sigmas(exact, 3.0);
        within += usize::from(ok);
        csv.push_str(&format!(
            "{x},{y},{exact},{},{},{ok}\n",
            est.mean, est.stderr
        ));
    }
    fs::write(r.out.join("greens_pairs.csv"), csv)?;

    let decay = match spec {
        VolumeSpec::Tree { d, generations } if generations >= 2 => {
            Some(greens_decay_check(d, &[generations.max(3) / 2, generations])?)
        }
        _ => None,
    };
    let summary = GreensSummary {
        identity_residual: greens.identity_residual(&m),
        pairs_within_3_sigma: within,
        pairs_total: pairs.len(),
        decay,
    };
    write_json(&r.out, "greens.json", &summary)?;
    write_manifest(
        &r.out,
        &manifest_for(&r, "greens", &["greens_pairs.csv", "greens.json"]),
    )?;
    println!(
        "greens: identity residual {:.2e}, {}/{} pairs within 3 sigma",
        summary.identity_residual, within, summary.pairs_total,
    );
    Ok(EXIT_OK)
}

fn cmd_clusters(common: &Common) -> Result<u8, Failure> {
    let r = resolve(common)?;
    let (spec, volume) = volume_or_usage(&r)?;
    if !matches!(spec, VolumeSpec::Tree { .. }) {
        return Err(Failure::usage("clusters runs on tree volumes"));
    }
    let samples = r.cfg.samples.unwrap_or(100_000);
    if samples == 0 {
        return Err(Failure::usage("samples must be > 0"));
    }
    let m = toppling_matrix(&volume);
    let cfg = ClusterSampleConfig {
        n_samples: samples,
        burn_in: r.cfg.burn_in.unwrap_or(10 * volume.site_count() as u64),
        thinning: r.cfg.thinning.unwrap_or(16),
        seed: r.seed,
    };
    let stats = cluster_size_distribution(&volume, &m, &cfg, &TailFitConfig::default())?;
    fs::create_dir_all(&r.out)?;
    let mut csv = String::from("size,count,censored_count\n");
    for row in &stats.histogram {
        csv.push_str(&format!("{},{},{}\n", row.size, row.count, row.censored));
    }
    fs::write(r.out.join("histogram.csv"), csv)?;
    write_json(&r.out, "clusters.json", &stats)?;
    write_manifest(
        &r.out,
        &manifest_for(&r, "clusters", &["histogram.csv", "clusters.json"]),
    )?;
    match &stats.fit {
        Some(fit) => println!(
            "clusters: tail exponent {:.3} +- {:.3} over [{}, {}]",
            fit.exponent, fit.stderr, fit.k_min, fit.k_max
        ),
        None => println!("clusters: histogram written; tail fit not reliable at this size"),
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct StatsSummary {
    origin_height: sandpile::measure::EmpiricalEstimate,
    boundary: sandpile::measure::BoundaryHeightReport,
    cauchy: Option<sandpile::measure::CauchyNetReport>,
}

fn cmd_stats(common: &Common) -> Result<u8, Failure> {
    let r = resolve(common)?;
    let (_, volume) = volume_or_usage(&r)?;
    let samples = r.cfg.samples.unwrap_or(50_000);
    let m = toppling_matrix(&volume);
    let f = LocalObservable::height_at(volume.origin());
    let origin_height = if volume.site_count() <= DEFAULT_ENUMERATION_CAP {
        expectation(&f, &volume, &m, ExpectationMethod::Exact, r.seed)?
    } else {
        expectation(
            &f,
            &volume,
            &m,
            ExpectationMethod::Sampled {
                method: SampleMethod::Mcmc {
                    burn_in: r.cfg.burn_in.unwrap_or(10 * volume.site_count() as u64),
                    thinning: r.cfg.thinning.unwrap_or(4),
                },
                n_samples: samples,
            },
            r.seed,
        )?
    };

    let smaller = prefix_volume(&volume, volume.site_count() - 1)?;
    let boundary = boundary_height_identity(&smaller, &volume, samples, r.seed)?;

    let cauchy = match r.cfg.schedule.as_deref() {
        Some(radii) if radii.len() >= 2 => {
            let schedule = VolumeSchedule::tree_balls(2, radii)?;
            Some(cauchy_net_diagnostic(
                &LocalObservable::height_at(0),
                &schedule,
                r.cfg.runs.unwrap_or(20_000),
                r.cfg.t.unwrap_or(12.0),
                r.seed,
            )?)
        }
        _ => None,
    };

    fs::create_dir_all(&r.out)?;
    let mut outputs = vec!["stats.json"];
    if let Some(report) = &cauchy {
        let mut csv = String::from("step,sites_small,sites_big,diff,stderr\n");
        for (i, d) in report.diffs.iter().enumerate() {
            csv.push_str(&format!(
                "{i},{},{},{},{}\n",
                report.volume_sites[i],
                report.volume_sites[i + 1],
                d.mean,
                d.stderr
            ));
        }
        fs::write(r.out.join("cauchy.csv"), csv)?;
        outputs.push("cauchy.csv");
    }
    let summary = StatsSummary {
        origin_height,
        boundary,
        cauchy,
    };
    write_json(&r.out, "stats.json", &summary)?;
    write_manifest(&r.out, &manifest_for(&r, "stats", &outputs))?;
    println!(
        "stats: origin height {:.4} +- {:.4}; boundary det ratio {:.4}",
        summary.origin_height.mean, summary.origin_height.stderr, summary.boundary.det_ratio
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct DynamicsSummary {
    summability: Summability,
    n_runs: u64,
    /// Fraction of runs whose window changed between consecutive schedule steps.
    change_fraction_per_step: Vec<f64>,
    changed_at_last_step_fraction: f64,
    stabilized_by_last_fraction: f64,
    toppling_bound: sandpile::dynamics::TopplingBoundReport,
}

fn cmd_dynamics(common: &Common, phi_flag: &Option<String>, allow_flag: bool) -> Result<u8, Failure> {
    let r = {
        let mut r = resolve(common)?;
        if let Some(flag) = phi_flag {
            r.cfg.phi = Some(parse_phi_flag(flag)?);
        }
        if allow_flag {
            r.cfg.allow_nonsummable = Some(true);
        }
        r
    };
    let phi_spec = r
        .cfg
        .phi
        .clone()
        .ok_or_else(|| Failure::usage("dynamics needs an addition rate: pass --phi or set it in the config"))?;
    let phi = RateFunction::new(phi_spec)?;
    let radii = r.cfg.schedule.clone().unwrap_or_else(|| vec![2, 4, 6, 8]);
    let schedule = VolumeSchedule::tree_balls(2, &radii)?;
    let allow = r.cfg.allow_nonsummable.unwrap_or(false);
    let summability = summability_check(&phi, 2);
    if !summability.is_convergent() && !allow {
        let diagnosis = match &summability {
            Summability::Divergent { diagnosis } => diagnosis.clone(),
            Summability::Convergent { .. } => unreachable!(),
        };
        return Err(Failure::refused(format!(
            "the addition rate violates the summability condition (sum over sites of rate(x) * 2^-|x| must converge): {diagnosis}. Pass --allow-nonsummable to run it as a negative control."
        )));
    }
    let t = r.cfg.t.unwrap_or(1.0);
    let n_runs = r.cfg.runs.unwrap_or(1000);
    if n_runs == 0 {
        return Err(Failure::usage("runs must be > 0"));
    }

    let (largest, m_largest) = schedule.largest();
    // stationary starts come from one chain, drawn up front so replicas
    // stay deterministic under any thread count
    let mut sampler = UniformSampler::mcmc_default(largest, m_largest, r.seed)?;
    let initials: Vec<HeightConfig> = (0..n_runs)
        .map(|_| sampler.draw())
        .collect::<sandpile::Result<_>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(r.threads)
        .build()
        .map_err(|e| Failure::usage(format!("cannot build thread pool: {e}")))?;
    let window = [largest.origin()];
    let reports: Vec<sandpile::dynamics::WindowRunReport> = pool.install(|| {
        use rayon::prelude::*;
        initials
            .par_iter()
            .enumerate()
            .map(|(run, initial)| {
                stabilized_window_run(
                    initial,
                    &phi,
                    t,
                    &window,
                    &schedule,
                    sandpile::rng::derive_seed(r.seed, run as u64, 0xd1),
                    allow,
                )
            })
            .collect::<sandpile::Result<_>>()
    })?;

    let steps = schedule.len() - 1;
    let mut changed_per_step = vec![0u64; steps];
    let mut stabilized_by_last = 0u64;
    for report in &reports {
        for i in 1..schedule.len() {
            if report.snapshots[i] != report.snapshots[i - 1] {
                changed_per_step[i - 1] += 1;
            }
        }
        if report.stabilized_at.is_some() {
            stabilized_by_last += 1;
        }
    }

    let bound = toppling_bound_check(&phi, largest, m_largest, t, n_runs.min(2000), r.seed)?;

    fs::create_dir_all(&r.out)?;
    let mut csv = String::from("run,step,n_gen,site,height\n");
    for (run, report) in reports.iter().enumerate() {
        for (step, snapshot) in report.snapshots.iter().enumerate() {
            for (&site, &height) in report.window.iter().zip(snapshot) {
                csv.push_str(&format!("{run},{step},{},{site},{height}\n", radii[step]));
            }
        }
    }
    fs::write(r.out.join("window.csv"), csv)?;
    let summary = DynamicsSummary {
        summability,
        n_runs,
        change_fraction_per_step: changed_per_step
            .iter()
            .map(|&c| c as f64 / n_runs as f64)
            .collect(),
        changed_at_last_step_fraction: changed_per_step[steps - 1] as f64 / n_runs as f64,
        stabilized_by_last_fraction: stabilized_by_last as f64 / n_runs as f64,
        toppling_bound: bound,
    };
    write_json(&r.out, "stabilization.json", &summary)?;
    write_manifest(
        &r.out,
        &manifest_for(&r, "dynamics", &["window.csv", "stabilization.json"]),
    )?;
    println!(
        "dynamics: changed-at-last-step fraction {:.4} over {} runs",
        summary.changed_at_last_step_fraction, n_runs
    );
    Ok(EXIT_OK)
}

fn run() -> Result<u8, Failure> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Verify(c) => cmd_verify(c),
        Command::Sample(c) => cmd_sample(c),
        Command::Greens(c) => cmd_greens(c),
        Command::Clusters(c) => cmd_clusters(c),
        Command::Stats(c) => cmd_stats(c),
        Command::Dynamics {
            common,
            phi,
            allow_nonsummable,
        } => cmd_dynamics(common, phi, *allow_nonsummable),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
