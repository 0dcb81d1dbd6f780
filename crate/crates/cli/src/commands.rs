use std::fmt;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};

use approx_topk::bench::{run_bench, BenchConfig, DEFAULT_REPEATS, DEFAULT_WARMUP};
use approx_topk::dataset::{self, VectorDataset};
use approx_topk::mips::{self, MipsRequest};
use approx_topk::perf::{self, DeviceProfile, KernelFootprint, RuntimeEstimate};
use approx_topk::planner::{self, GridRequest, PlanRequest};
use approx_topk::recall::{self, RecallEstimate};
use approx_topk::simulate::{simulate_recall_with, DEFAULT_RUNS};
use approx_topk::{AlgoParams, Exec};

use crate::output::Report;
use crate::ConfigArgs;

/// A computation finished but produced nothing usable.
#[derive(Debug)]
pub struct EmptyResult(pub String);

impl fmt::Display for EmptyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for EmptyResult {}

fn label(p: &AlgoParams) -> String {
    format!(
        "n={};b={};k={};kprime={}",
        p.n(),
        p.num_buckets(),
        p.global_k(),
        p.local_k()
    )
}

impl ConfigArgs {
    fn params(&self) -> Result<AlgoParams> {
        Ok(AlgoParams::with_lane_multiple(
            self.n,
            self.b,
            self.kprime,
            self.k,
            self.lane_multiple,
        )?)
    }
}

fn push_estimate(r: &mut Report, config: &str, est: &RecallEstimate) {
    r.push_se(config, &format!("recall_{}", est.method), est.value, est.std_error);
    if let Some(t) = est.trials {
        r.push(config, "trials", t as f64);
    }
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    k: u64,
    #[arg(long, default_value_t = 0.95)]
    recall_target: f64,
    /// Candidates K' = 1..=max.
    #[arg(long, default_value_t = 4)]
    max_kprime: u64,
    #[arg(long, default_value_t = 128)]
    lane_multiple: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn plan(a: &PlanArgs) -> Result<Report> {
    let req = PlanRequest {
        n: a.n,
        k: a.k,
        recall_target: a.recall_target,
        allowed_local_k: (1..=a.max_kprime).collect(),
        lane_multiple: a.lane_multiple,
        seed: a.seed,
    };
    req.validate()?;
    let rep = planner::plan(&req, Exec::default())?;
    let mut r = Report::default();
    for w in &rep.warnings {
        r.note(format!("warning: {w}"));
    }
    let w = &rep.result;
    r.note(format!(
        "selected K'={} B={} ({} elements)",
        w.local_k, w.num_buckets, w.num_elements
    ));
    let cfg = format!("selected;kprime={};b={}", w.local_k, w.num_buckets);
    r.push(&cfg, "kprime", w.local_k as f64);
    r.push(&cfg, "num_buckets", w.num_buckets as f64);
    r.push(&cfg, "num_elements", w.num_elements as f64);
    push_estimate(&mut r, &cfg, &w.estimated_recall);
    for c in &rep.candidates {
        let cfg = format!("candidate;kprime={};b={}", c.local_k, c.num_buckets);
        r.push(&cfg, "num_elements", c.num_elements as f64);
        push_estimate(&mut r, &cfg, &c.estimate);
    }
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Exact,
    Mc,
    /// Improved closed-form lower bound (K' = 1).
    Bound,
    /// Quartic refinement of the bound (K' = 1).
    Quartic,
    /// Bound of the K' = 1 baseline analysis.
    Original,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    method: Method,
    /// Monte-Carlo sample count; adaptive when omitted.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn estimate_recall(a: &EstimateArgs) -> Result<Report> {
    let p = a.config.params()?;
    if a.trials == Some(0) {
        bail!("--trials must be positive");
    }
    let est = match a.method {
        Method::Exact => recall::exact_expected_recall(&p)?,
        Method::Mc => match a.trials {
            Some(t) => recall::mc_expected_recall(&p, t, a.seed)?,
            None => recall::mc_expected_recall_adaptive(&p, a.seed)?,
        },
        Method::Bound => recall::recall_bound_improved(&p)?,
        Method::Quartic => recall::recall_bound_quartic(&p)?,
        Method::Original => recall::recall_bound_original(&p)?,
    };
    let mut r = Report::default();
    push_estimate(&mut r, &label(&p), &est);
    Ok(r)
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    runs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples for the Monte-Carlo prediction.
    #[arg(long, default_value_t = 262_144)]
    mc_trials: u64,
}

pub fn simulate(a: &SimulateArgs) -> Result<Report> {
    let p = a.config.params()?;
    if a.runs == 0 || a.mc_trials == 0 {
        bail!("--runs and --mc-trials must be positive");
    }
    let sim = simulate_recall_with(&p, a.runs, a.seed, Exec::default())?;
    let exact = recall::exact_expected_recall(&p)?;
    let mc = recall::mc_expected_recall(&p, a.mc_trials, a.seed)?;
    let cfg = label(&p);
    let mut r = Report::default();
    r.push_se(&cfg, "recall_simulated", sim.mean, Some(sim.std_error));
    r.push(&cfg, "recall_simulated_std", sim.std_dev);
    r.push(&cfg, "runs", sim.runs as f64);
    push_estimate(&mut r, &cfg, &exact);
    push_estimate(&mut r, &cfg, &mc);
    Ok(r)
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    repeats: usize,
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    warmup: usize,
    /// Also time exact top-k by full sort.
    #[arg(long)]
    exact: bool,
    /// Run on one thread regardless of --threads.
    #[arg(long)]
    sequential: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn bench(a: &BenchArgs) -> Result<Report> {
    let p = a.config.params()?;
    if a.batch == 0 || a.repeats == 0 {
        bail!("--batch and --repeats must be positive");
    }
    let cfg = BenchConfig {
        batch: a.batch,
        params: p,
        warmup: a.warmup,
        repeats: a.repeats,
        exact_baseline: a.exact,
        seed: a.seed,
        exec: if a.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        },
    };
    let rep = run_bench(&cfg)?;
    let c = format!("batch={};{}", a.batch, label(&p));
    let mut r = Report::default();
    let mut stats = vec![
        ("stage1", &rep.stage1),
        ("stage2", &rep.stage2),
        ("total", &rep.total),
    ];
    if let Some(e) = &rep.exact {
        stats.push(("exact", e));
    }
    for (name, s) in stats {
        r.push(&c, &format!("{name}_median_s"), s.median);
        r.push(&c, &format!("{name}_iqr_s"), s.iqr());
    }
    r.push(&c, "repeats", a.repeats as f64);
    Ok(r)
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[arg(long, default_value_t = 0.95)]
    recall_target: f64,
    #[arg(long, default_value_t = 4)]
    max_kprime: u64,
    /// Comma-separated K/N fractions.
    #[arg(long, value_delimiter = ',')]
    k_fractions: Option<Vec<f64>>,
    /// Comma-separated array sizes.
    #[arg(long, value_delimiter = ',')]
    n_values: Option<Vec<u64>>,
    #[arg(long, default_value_t = 128)]
    lane_multiple: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn grid(a: &GridArgs) -> Result<Report> {
    let mut g = GridRequest::new(a.recall_target);
    g.kprime_max = a.max_kprime;
    g.lane_multiple = a.lane_multiple;
    g.seed = a.seed;
    if let Some(f) = &a.k_fractions {
        g.k_fractions = f.clone();
    }
    if let Some(n) = &a.n_values {
        g.n_values = n.clone();
    }
    let cells = planner::reduction_factor_grid(&g, Exec::default())?;
    let mut r = Report::default();
    let mut absent = 0;
    for c in &cells {
        let cfg = format!("kfrac={};n={};k={}", c.k_fraction, c.n, c.k);
        match (c.ratio(), &c.baseline, &c.best) {
            (Some(ratio), Some(base), Some(best)) => {
                r.push(&cfg, "ratio", ratio);
                r.push(&cfg, "baseline_elements", base.num_elements as f64);
                r.push(&cfg, "best_elements", best.num_elements as f64);
                r.push(&cfg, "best_kprime", best.local_k as f64);
            }
            _ => absent += 1,
        }
    }
    if absent == cells.len() {
        return Err(EmptyResult("no grid cell has a feasible configuration".into()).into());
    }
    if absent > 0 {
        r.note(format!("{absent} of {} cells have no feasible configuration", cells.len()));
    }
    Ok(r)
}

#[derive(Args, Debug)]
pub struct MipsArgs {
    /// ATKV file of database rows.
    #[arg(long, requires = "queries", conflicts_with = "random_n")]
    database: Option<PathBuf>,
    /// ATKV file of query rows.
    #[arg(long, requires = "database")]
    queries: Option<PathBuf>,
    /// Generate a Gaussian database of this many rows instead of reading one.
    #[arg(long)]
    random_n: Option<usize>,
    #[arg(long, default_value_t = 16)]
    random_d: usize,
    #[arg(long, default_value_t = 4)]
    random_queries: usize,
    #[arg(long)]
    k: u64,
    /// Buckets; chosen by the planner when omitted.
    #[arg(long)]
    b: Option<u64>,
    #[arg(long)]
    kprime: Option<u64>,
    /// Planner target when --b is omitted.
    #[arg(long, default_value_t = 0.99)]
    recall_target: f64,
    #[arg(long, default_value_t = 128)]
    lane_multiple: u64,
    /// Score columns per fused block (default: B).
    #[arg(long)]
    block_cols: Option<usize>,
    /// Materialize the full score matrix instead of fusing.
    #[arg(long)]
    unfused: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn mips_inputs(a: &MipsArgs) -> Result<(VectorDataset, VectorDataset)> {
    match (&a.database, &a.queries, a.random_n) {
        (Some(db), Some(q), None) => Ok((
            dataset::load(db).with_context(|| format!("reading {}", db.display()))?,
            dataset::load(q).with_context(|| format!("reading {}", q.display()))?,
        )),
        (None, None, Some(n)) => {
            if n == 0 || a.random_d == 0 || a.random_queries == 0 {
                bail!("--random-n, --random-d and --random-queries must be positive");
            }
            Ok((
                dataset::synth_gaussian(n, a.random_d, a.seed),
                dataset::synth_gaussian(a.random_queries, a.random_d, a.seed.wrapping_add(1)),
            ))
        }
        _ => bail!("give either --database and --queries, or --random-n"),
    }
}

pub fn mips(a: &MipsArgs) -> Result<Report> {
    let (db, q) = mips_inputs(a)?;
    let mut r = Report::default();
    let (b, kprime) = match (a.b, a.kprime) {
        (Some(b), kp) => (b, kp.unwrap_or(1)),
        (None, None) => {
            let lane = a.lane_multiple.max(1);
            let n = padded_for_plan(db.rows() as u64, lane);
            let w = planner::select_parameters(&PlanRequest {
                n,
                k: a.k,
                recall_target: a.recall_target,
                allowed_local_k: vec![1, 2, 3, 4],
                lane_multiple: lane,
                seed: a.seed,
            })?;
            r.note(format!("planned K'={} B={}", w.local_k, w.num_buckets));
            (w.num_buckets, w.local_k)
        }
        (None, Some(_)) => bail!("--kprime needs --b"),
    };
    let req = MipsRequest::with_config(&db, &q, b, kprime, a.k, a.lane_multiple)?;
    let p = *req.params();
    let (approx, buffer) = if a.unfused {
        let out = mips::mips_unfused(&req, Exec::default())?;
        (out, q.rows() * p.n() as usize)
    } else {
        let bc = a.block_cols.unwrap_or(b as usize);
        let (out, stats) = mips::mips_fused_with_stats(&req, bc, Exec::default())?;
        (out, stats.score_buffer_elems)
    };
    let exact = mips::exact_mips(&db, &q, a.k as usize, Exec::default())?;
    let recalls = mips::per_query_recall(&approx, &exact)?;
    let m = recalls.len() as f64;
    let mean = recalls.iter().sum::<f64>() / m;
    let se = if recalls.len() > 1 {
        let var = recalls.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
        Some((var / m).sqrt())
    } else {
        None
    };
    let short = approx.iter().filter(|t| t.len() < a.k as usize).count();
    if short > 0 {
        r.note(format!("{short} queries returned fewer than k results"));
    }
    let cfg = format!("{};queries={};d={}", label(&p), q.rows(), q.dims());
    r.push_se(&cfg, "recall_vs_brute_force", mean, se);
    push_estimate(&mut r, &cfg, &recall::exact_expected_recall(&p)?);
    r.push(&cfg, "score_buffer_elems", buffer as f64);
    Ok(r)
}

fn padded_for_plan(n: u64, lane: u64) -> u64 {
    n.div_ceil(lane) * lane
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Profile name (built-in or from --profiles-file); all when omitted.
    #[arg(long)]
    device: Option<String>,
    /// key = value profile file; its entries are added to the built-ins.
    #[arg(long)]
    profiles_file: Option<PathBuf>,
    /// Print both ridge points.
    #[arg(long)]
    ridge: bool,
    /// Dot-product dimension for the matrix ridge point.
    #[arg(long, default_value_t = 128)]
    dot_dims: u64,
    /// Stage-1 boundedness at this K'.
    #[arg(long)]
    kprime: Option<u64>,
    /// Runtime of a footprint given as BYTES,VECTOR_OPS,MATRIX_OPS.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    footprint: Option<Vec<f64>>,
    /// Runtime of standalone stage 1 over BATCH,N at --kprime (default 1).
    #[arg(long, value_delimiter = ',', num_args = 2)]
    stage1: Option<Vec<u64>>,
    /// Arithmetic intensity and fused/unfused runtime of a score matmul
    /// given as QUERIES,DIMS,N.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    mips: Option<Vec<u64>>,
    #[arg(long, default_value_t = 4)]
    bytes_per_elem: u64,
    /// Print the profiles in key = value form and exit.
    #[arg(long)]
    dump_profiles: bool,
}

fn push_runtime(r: &mut Report, cfg: &str, est: &RuntimeEstimate) {
    let cfg = format!("{cfg};bottleneck={}", est.label());
    r.push(&cfg, "runtime_s", est.seconds);
    r.push(&cfg, "memory_s", est.memory_seconds);
    r.push(&cfg, "vector_s", est.vector_seconds);
    r.push(&cfg, "matrix_s", est.matrix_seconds);
}

pub fn model(a: &ModelArgs) -> Result<Report> {
    let mut profiles = perf::builtin_profiles();
    if let Some(path) = &a.profiles_file {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        for p in perf::parse_profiles(&text)? {
            profiles.retain(|q| q.name() != p.name());
            profiles.push(p);
        }
    }
    let selected: Vec<DeviceProfile> = match &a.device {
        Some(name) => {
            let p = profiles
                .iter()
                .find(|p| p.name() == name)
                .with_context(|| {
                    let names: Vec<&str> = profiles.iter().map(|p| p.name()).collect();
                    format!("unknown device {name:?}; known: {}", names.join(", "))
                })?;
            vec![p.clone()]
        }
        None => profiles,
    };
    let mut r = Report::default();
    if a.dump_profiles {
        r.note(perf::format_profiles(&selected).trim_end().to_string());
        return Ok(r);
    }
    if a.dot_dims == 0 || a.bytes_per_elem == 0 {
        bail!("--dot-dims and --bytes-per-elem must be positive");
    }
    let any_query = a.kprime.is_some() || a.footprint.is_some() || a.stage1.is_some() || a.mips.is_some();
    let footprint = a
        .footprint
        .as_ref()
        .map(|f| KernelFootprint::new(f[0], f[1], f[2]))
        .transpose()?;
    for dev in &selected {
        let name = dev.name();
        if a.ridge || !any_query {
            r.push(
                format!("device={name};d={}", a.dot_dims),
                "vector_ops_per_dot",
                perf::ridge_vector_ops_per_dot(dev, a.dot_dims),
            );
            r.push(
                format!("device={name}"),
                "vector_ops_per_4_bytes",
                perf::ridge_vector_ops_per_4bytes(dev),
            );
        }
        if let Some(kp) = a.kprime {
            let b = perf::stage1_boundedness(kp, dev)?;
            let cfg = format!("device={name};kprime={kp};regime={}", b.regime);
            r.push(&cfg, "ops_per_element", b.ops_per_element as f64);
            r.push(&cfg, "ridge", b.ridge);
            r.push(&cfg, "crossover_kprime", b.crossover_local_k as f64);
        }
        if let Some(fp) = &footprint {
            push_runtime(&mut r, &format!("device={name};footprint"), &perf::estimate_runtime(fp, dev));
        }
        if let Some(s) = &a.stage1 {
            let kp = a.kprime.unwrap_or(1);
            let fp = perf::stage1_footprint(s[0], s[1], kp)?;
            push_runtime(
                &mut r,
                &format!("device={name};stage1;batch={};n={};kprime={kp}", s[0], s[1]),
                &perf::estimate_runtime(&fp, dev),
            );
        }
        if let Some(m) = &a.mips {
            let (qb, d, n, e) = (m[0], m[1], m[2], a.bytes_per_elem);
            let kp = a.kprime.unwrap_or(1);
            let cfg = format!("device={name};queries={qb};d={d};n={n}");
            let unfused = perf::estimate_runtime(&perf::matmul_footprint(qb, d, n, e)?, dev);
            let stage1 = perf::estimate_runtime(&perf::stage1_footprint(qb, n, kp)?, dev);
            let fused = perf::estimate_runtime(&perf::fused_mips_footprint(qb, d, n, e, kp)?, dev);
            push_runtime(&mut r, &format!("{cfg};matmul"), &unfused);
            push_runtime(&mut r, &format!("{cfg};stage1;kprime={kp}"), &stage1);
            push_runtime(&mut r, &format!("{cfg};fused;kprime={kp}"), &fused);
        }
    }
    if let Some(m) = &a.mips {
        let (qb, d, n) = (m[0], m[1], m[2]);
        let cfg = format!("queries={qb};d={d};n={n};bytes={}", a.bytes_per_elem);
        let u = perf::mips_arithmetic_intensity(qb, d, n, a.bytes_per_elem, false)?;
        let f = perf::mips_arithmetic_intensity(qb, d, n, a.bytes_per_elem, true)?;
        r.push(&cfg, "intensity_unfused", u.intensity);
        r.push(&cfg, "intensity_fused", f.intensity);
        r.push(&cfg, "intensity_bound", u.bound);
    }
    Ok(r)
}
