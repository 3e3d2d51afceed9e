use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use grouplab::cayley::{
    bfs_closure, cache_key, diameter, distance_histogram, growth_function, spectral_gap, CayleyGraph, Enumeration, GraphCache, SpectralOptions,
};
use grouplab::distortion::{
    c2_lower_bound, classical_mds, compare_profiles, distortion_profile, frechet_embedding, graph_profile, min_distortion_embed, one_lipschitz,
    poincare_witness, EmbedOptions, Embedding, FiniteMetric, PoincareData,
};
use grouplab::expander::{build_sl3, certificate, check_perfect, sl3_order, GenSet};
use grouplab::grigorchuk::{check_sequence_properties, grig_growth, schreier_ball, GrigError, Ray};
use grouplab::imbed::{build_wreath_host, find_ball_faithful_quotient, verify_sandwich, ImbedError, QuotientSearch};
use grouplab::perfect::{compute_j, derived_subgroup, perfect_norm_table};
use grouplab::pipeline::{parse_rho, run_pipeline, toy_factor, Config, PipelineError, ReportFormat};
use grouplab::wreath::{build_psi, configure_plan, growth_and_m, measure_bilipschitz, verify_ball_coincidence, Factor, WreathSystem};
use grouplab::algebra::{GroupHandle, MatrixGroup, PermGroup, Permutation};

#[derive(Parser)]
#[command(name = "grouplab", version, about = "Finite group computations for distortion of group embeddings")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for cached Cayley graphs.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Element budget for group enumeration.
    #[arg(long, global = true)]
    budget_elements: Option<usize>,
    /// Eigensolver and optimizer tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate a group.
    #[command(subcommand)]
    Group(GroupCmd),
    /// Word-metric statistics of a Cayley graph.
    #[command(subcommand)]
    Cayley(CayleyCmd),
    /// Spectral gap and Poincaré certificate.
    Spectral(Sl3Args),
    /// Perfect norms and the constant J.
    PerfectNorm(PerfectArgs),
    /// Imbed a finite group in the derived subgroup of a wreath host.
    ImbedDerived(ImbedArgs),
    /// Grigorchuk group: Schreier graphs, growth, sequence properties.
    #[command(subcommand)]
    Grig(GrigCmd),
    /// Wreath approximants W_i.
    #[command(subcommand)]
    Wreath(WreathCmd),
    /// Distortion of Euclidean embeddings.
    #[command(subcommand)]
    Distortion(DistortionCmd),
    /// The end-to-end selection pipeline.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Args, Clone)]
struct Sl3Args {
    #[arg(long, default_value_t = 2)]
    p: u32,
    #[arg(long, default_value_t = 1)]
    level: u32,
    /// small or large.
    #[arg(long, default_value = "small")]
    genset: String,
}

#[derive(Subcommand)]
enum GroupCmd {
    /// Enumerate SL_3(F_p[t]/(t^level)) and compare with the order formula.
    Build(Sl3Args),
}

#[derive(Subcommand)]
enum CayleyCmd {
    Stats {
        #[command(flatten)]
        group: Sl3Args,
        /// Growth radius (default: the diameter).
        #[arg(long)]
        radius: Option<usize>,
    },
}

#[derive(Args)]
struct PerfectArgs {
    #[command(flatten)]
    group: Sl3Args,
    /// Length budget for balanced words.
    #[arg(long, default_value_t = 16)]
    budget: u32,
}

#[derive(Args)]
struct ImbedArgs {
    /// C<k> or S<k>.
    #[arg(long, default_value = "S3")]
    group: String,
    /// Ball parameter (default: the group order).
    #[arg(long)]
    m: Option<u32>,
    /// Perfect-norm budget in the host.
    #[arg(long, default_value_t = 8)]
    budget: u32,
    /// Element budget for enumerating the host.
    #[arg(long, default_value_t = 2000)]
    host_budget: usize,
}

#[derive(Subcommand)]
enum GrigCmd {
    /// Labeled ball around the marked ray x_i.
    Schreier {
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 3)]
        radius: u32,
        /// Write Graphviz to --out.
        #[arg(long)]
        dot: bool,
    },
    /// Ball sizes in the Cayley graph.
    Growth {
        #[arg(long, default_value_t = 10)]
        radius: usize,
    },
    /// Spreading and locally-stabilizing indices N(R).
    Props {
        #[arg(long, default_value_t = 6)]
        max_radius: u32,
        #[arg(long, default_value_t = 64)]
        cap: usize,
    },
}

#[derive(Args, Clone)]
struct PlanArgs {
    #[arg(long, default_value = "S3")]
    factors: String,
    #[arg(long, default_value = "1,1")]
    radii: String,
    #[arg(long, default_value_t = 64)]
    cap: usize,
}

#[derive(Subcommand)]
enum WreathCmd {
    /// Place the generators and print the plan.
    Plan(PlanArgs),
    /// Check that the balls of W_i and W_{i+1} coincide.
    Verify {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value_t = 1)]
        position: usize,
        #[arg(long, default_value_t = 1)]
        radius: u32,
    },
    /// Build Ψ for a factor and measure its bi-Lipschitz constants.
    Measure {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value_t = 0)]
        factor: usize,
        #[arg(long, default_value_t = 10)]
        radius: u32,
        /// Also find m(i) for this decay target ε.
        #[arg(long)]
        growth_eps: Option<f64>,
    },
}

#[derive(Subcommand)]
enum DistortionCmd {
    /// Distortion profile of an embedding (seeded Fréchet when none is given).
    Profile {
        /// path:n, cycle:n, uniform:n or sl3:p:level.
        #[arg(long)]
        metric: String,
        #[arg(long)]
        embedding: Option<PathBuf>,
        /// Compare against this bound.
        #[arg(long)]
        rho: Option<String>,
        #[arg(long, default_value_t = 8)]
        dim: usize,
    },
    /// Poincaré table, Euclidean distortion lower bound and a far-pair witness.
    Bound {
        #[command(flatten)]
        group: Sl3Args,
        #[arg(long, default_value_t = 8)]
        dim: usize,
    },
    /// Least-distortion embedding of a small metric.
    Optimize {
        #[arg(long)]
        metric: String,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, default_value_t = 400)]
        sweeps: usize,
        #[arg(long, default_value_t = 40)]
        steps: usize,
    },
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Build certificates, run the selection and write the report bundle.
    Run {
        /// json or csv.
        #[arg(long, default_value = "json")]
        format: String,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure { code: e.exit_code() as u8, message: e.to_string() }
    }
}

macro_rules! via_pipeline {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                PipelineError::from(e).into()
            }
        }
    )*};
}
via_pipeline!(
    grouplab::expander::ExpanderError,
    grouplab::cayley::CayleyError,
    grouplab::perfect::PerfectNormError,
    grouplab::wreath::WreathError,
    grouplab::distortion::DistortionError,
    grouplab::pipeline::RhoError
);

impl From<ImbedError> for Failure {
    fn from(e: ImbedError) -> Self {
        let code = match e {
            ImbedError::Check(_) => 4,
            _ => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<GrigError> for Failure {
    fn from(e: GrigError) -> Self {
        let code = match e {
            GrigError::OracleDisagreement(_) => 4,
            _ => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 3, message: message.into() }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| usage(format!("{}: {e}", path.display()))
}

type Res<T> = Result<T, Failure>;

struct Ctx {
    cfg: Config,
    out: Option<PathBuf>,
    cache: Option<GraphCache>,
}

impl Ctx {
    fn new(g: &Global) -> Res<Self> {
        let mut cfg = match &g.config {
            Some(p) => Config::parse(&fs::read_to_string(p).map_err(io(p))?)?,
            None => Config::default(),
        };
        for kv in &g.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = g.seed {
            cfg.set("global.seed", &s.to_string())?;
        }
        if let Some(b) = g.budget_elements {
            cfg.set("global.budget_elements", &b.to_string())?;
        }
        if let Some(t) = g.tol {
            cfg.set("global.tol", &t.to_string())?;
        }
        let cache = g.cache_dir.as_ref().map(GraphCache::new).transpose()?;
        Ok(Ctx { cfg, out: g.out.clone(), cache })
    }

    fn seed(&self) -> Res<u64> {
        Ok(self.cfg.get("global.seed")?)
    }

    fn budget(&self) -> Res<usize> {
        Ok(self.cfg.get("global.budget_elements")?)
    }

    fn spectral_options(&self) -> Res<SpectralOptions> {
        Ok(SpectralOptions { tol: self.cfg.get("global.tol")?, seed: self.seed()?, ..Default::default() })
    }

    fn sl3(&self, a: &Sl3Args) -> Res<Enumeration<MatrixGroup>> {
        let genset = GenSet::parse(&a.genset).ok_or_else(|| usage(format!("unknown generating set {:?}", a.genset)))?;
        let e = build_sl3(a.p, a.level, genset, self.budget()?)?;
        if let Some(c) = &self.cache {
            let key = cache_key(e.handle(), self.budget()?);
            if c.get(&key)?.is_none() {
                c.put(&key, &e.graph)?;
            }
        }
        Ok(e)
    }

    /// Writes `text` to `--out` when given, otherwise to stdout.
    fn emit(&self, text: &str) -> Res<()> {
        match &self.out {
            Some(p) => fs::write(p, text).map_err(io(p)),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap();
    s.push('\n');
    s
}

fn toy_group(name: &str) -> Res<Enumeration<PermGroup>> {
    let k: usize = name.get(1..).and_then(|s| s.parse().ok()).filter(|k| (2..=6).contains(k)).ok_or_else(|| usage(format!("unknown group {name:?}")))?;
    let gens = match &name[..1] {
        "C" => vec![("t".to_string(), Permutation::rotation(k, 1))],
        "S" => vec![("s".to_string(), Permutation::from_cycles(k, &[&[0, 1]]).unwrap()), ("r".to_string(), Permutation::rotation(k, 1))],
        _ => return Err(usage(format!("unknown group {name:?}"))),
    };
    Ok(bfs_closure(&GroupHandle::new(PermGroup::new(k), gens), 1000)?)
}

fn plan_system(a: &PlanArgs) -> Res<WreathSystem> {
    let factors: Vec<Factor> = a.factors.split(',').map(|f| toy_factor(f.trim())).collect::<Result<_, _>>()?;
    let radii: Vec<u32> = a.radii.split(',').map(|r| r.trim().parse().map_err(|_| usage(format!("bad radius {r:?}")))).collect::<Result<_, _>>()?;
    let mut sys = configure_plan(factors, None)?;
    sys.place_by_radii(&radii, a.cap)?;
    Ok(sys)
}

/// A metric by name, with its graph when it comes from one.
fn metric(ctx: &Ctx, spec: &str) -> Res<(FiniteMetric, Option<CayleyGraph>)> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| s.parse::<usize>().map_err(|_| usage(format!("bad metric {spec:?}")));
    match parts[..] {
        ["path", n] => Ok((FiniteMetric::path(num(n)?), None)),
        ["uniform", n] => Ok((FiniteMetric::uniform(num(n)?), None)),
        ["cycle", n] => Ok((FiniteMetric::cycle(num(n)?), None)),
        ["sl3", p, l] => {
            let e = ctx.sl3(&Sl3Args { p: num(p)? as u32, level: num(l)? as u32, genset: "small".into() })?;
            if e.order() > 6000 {
                return Err(usage(format!("{spec} has {} points; dense metrics are limited to 6000", e.order())));
            }
            Ok((FiniteMetric::from_graph(&e.graph)?, Some(e.graph)))
        }
        _ => Err(usage(format!("bad metric {spec:?} (expected path:n, cycle:n, uniform:n or sl3:p:level)"))),
    }
}

fn run(cli: Cli) -> Res<u8> {
    let ctx = Ctx::new(&cli.global)?;
    match cli.command {
        Command::Group(GroupCmd::Build(a)) => {
            let e = ctx.sl3(&a)?;
            let formula = sl3_order(a.p as u64, a.level);
            ctx.emit(&pretty(&json!({
                "group": format!("SL3(F{}[t]/t^{})", a.p, a.level),
                "genset": a.genset,
                "generators": e.handle().names(),
                "order": e.order(),
                "order_formula": formula,
                "matches": e.order() as u64 == formula,
                "degree": e.graph.degree(),
            })))?;
            Ok(if e.order() as u64 == formula { 0 } else { 4 })
        }
        Command::Cayley(CayleyCmd::Stats { group, radius }) => {
            let e = ctx.sl3(&group)?;
            let hist = distance_histogram(&e.graph)?;
            let diam = diameter(&e.graph)?;
            let growth = growth_function(&e.graph, radius.unwrap_or(diam as usize));
            ctx.emit(&pretty(&json!({
                "order": e.order(),
                "degree": e.graph.degree(),
                "diameter": diam,
                "growth": growth.sizes,
                "distance_histogram": hist,
            })))?;
            Ok(0)
        }
        Command::Spectral(a) => {
            let e = ctx.sl3(&a)?;
            let s = spectral_gap(&e.graph, &ctx.spectral_options()?)?;
            let cert = certificate(&e.graph, &s, a.p, a.level, &a.genset)?;
            let mut v = serde_json::to_value(&cert).unwrap();
            v["iterations"] = json!(s.iterations);
            v["method"] = json!(s.method);
            ctx.emit(&pretty(&v))?;
            Ok(0)
        }
        Command::PerfectNorm(a) => {
            let e = ctx.sl3(&a.group)?;
            let derived = derived_subgroup(&e);
            let j = compute_j(&e, &derived, a.budget)?;
            let summary = json!({
                "order": e.order(),
                "derived_order": derived.order(),
                "perfect": check_perfect(&e),
                "J": j.j,
                "per_generator": j.per_generator.iter().map(|(n, l, _)| json!({"generator": n, "perfect_norm": l})).collect::<Vec<_>>(),
            });
            if let Some(p) = &ctx.out {
                let table = perfect_norm_table(&e, &derived, a.budget)?;
                let mut f = fs::File::create(p).map_err(io(p))?;
                table.write_csv(&e, &mut f).map_err(io(p))?;
                eprintln!("unresolved within budget: {}", table.unresolved());
            }
            print!("{}", pretty(&summary));
            Ok(0)
        }
        Command::ImbedDerived(a) => {
            let e = toy_group(&a.group)?;
            let m = a.m.unwrap_or(e.order() as u32);
            let search = QuotientSearch { seed: ctx.seed()?, ..Default::default() };
            let q = find_ball_faithful_quotient(&e, m, &search)?;
            let host = build_wreath_host(&e, q)?;
            let rep = verify_sandwich(&e, &host, a.budget, a.host_budget)?;
            if let Some(p) = &ctx.out {
                let mut f = fs::File::create(p).map_err(io(p))?;
                rep.write_csv(&mut f).map_err(io(p))?;
            }
            print!("{}", pretty(&rep.summary_json()));
            Ok(if rep.lower_violations.is_empty() { 0 } else { 4 })
        }
        Command::Grig(GrigCmd::Schreier { index, radius, dot }) => {
            let ball = schreier_ball(&Ray::marked(index), radius);
            if dot {
                ctx.emit(&ball.to_dot())?;
            } else {
                let marked: Vec<usize> = ball.vertices.iter().filter_map(|x| x.marked_index()).collect();
                ctx.emit(&pretty(&json!({ "index": index, "radius": radius, "vertices": ball.vertices.len(), "marked_in_ball": marked })))?;
            }
            Ok(0)
        }
        Command::Grig(GrigCmd::Growth { radius }) => {
            ctx.emit(&pretty(&json!({ "radius": radius, "ball_sizes": grig_growth(radius).sizes })))?;
            Ok(0)
        }
        Command::Grig(GrigCmd::Props { max_radius, cap }) => {
            let rows = (1..=max_radius).map(check_sequence_properties_for(cap)).collect::<Result<Vec<_>, _>>()?;
            ctx.emit(&pretty(&Value::Array(rows)))?;
            Ok(0)
        }
        Command::Wreath(WreathCmd::Plan(a)) => {
            let sys = plan_system(&a)?;
            ctx.emit(&pretty(&serde_json::to_value(&sys.plan).unwrap()))?;
            Ok(0)
        }
        Command::Wreath(WreathCmd::Verify { plan, position, radius }) => {
            let sys = plan_system(&plan)?;
            let rep = verify_ball_coincidence(&sys, position, radius, ctx.budget()?.max(1_000_000))?;
            ctx.emit(&pretty(&serde_json::to_value(&rep).unwrap()))?;
            Ok(if rep.coincide { 0 } else { 4 })
        }
        Command::Wreath(WreathCmd::Measure { plan, factor, radius, growth_eps }) => {
            let sys = plan_system(&plan)?;
            let psi = build_psi(&sys, factor, 30, 1_000_000)?;
            let rep = measure_bilipschitz(&sys, &psi, radius, 4_000_000, 40)?;
            let mut v = json!({ "rectifiers": psi.records, "bilipschitz": rep });
            if let Some(eps) = growth_eps {
                v["growth"] = serde_json::to_value(growth_and_m(&sys, sys.plan.positions(), eps, 30, 8_000_000)?).unwrap();
            }
            ctx.emit(&pretty(&v))?;
            Ok(0)
        }
        Command::Distortion(DistortionCmd::Profile { metric: spec, embedding, rho, dim }) => {
            let (m, graph) = metric(&ctx, &spec)?;
            let phi = match &embedding {
                Some(p) => Embedding::read(BufReader::new(fs::File::open(p).map_err(io(p))?))?,
                None => match &graph {
                    Some(g) => frechet_embedding(g, dim, ctx.seed()?)?,
                    None => classical_mds(&m, dim),
                },
            };
            let profile = match &graph {
                Some(g) => graph_profile(g, &phi, &[], true)?,
                None => distortion_profile(&m, &phi, true)?,
            };
            let mut csv = Vec::new();
            profile.write_csv(&mut csv).unwrap();
            ctx.emit(&String::from_utf8(csv).unwrap())?;
            if let Some(r) = rho {
                let rho = parse_rho(&r)?;
                let horizon = profile.thresholds.last().copied().unwrap_or(0.0);
                let c = compare_profiles(&profile, |t| rho.eval(t).unwrap_or(f64::NAN), horizon);
                eprintln!("{}", serde_json::to_string(&c).unwrap());
            }
            Ok(0)
        }
        Command::Distortion(DistortionCmd::Bound { group, dim }) => {
            let e = ctx.sl3(&group)?;
            let s = spectral_gap(&e.graph, &ctx.spectral_options()?)?;
            let data = PoincareData::new(&e.graph, s.lambda1)?;
            let phi = frechet_embedding(&e.graph, dim, ctx.seed()?)?;
            let witnesses = data.table.iter().map(|r| poincare_witness(&e.graph, &data, &phi, r.t, &[])).collect::<Result<Vec<_>, _>>()?;
            ctx.emit(&pretty(&json!({
                "lambda1": s.lambda1,
                "d_reg": data.d_reg,
                "table": data.table,
                "c2_lower_bound": c2_lower_bound(&data),
                "frechet_witnesses": witnesses,
            })))?;
            Ok(0)
        }
        Command::Distortion(DistortionCmd::Optimize { metric: spec, dim, sweeps, steps }) => {
            let (m, _) = metric(&ctx, &spec)?;
            let tol = ctx.cfg.get::<f64>("global.tol")?.max(1e-12);
            let opts = EmbedOptions { dim, tol: tol.max(1e-6), sweeps, bisection_steps: steps, seed: ctx.seed()? };
            let r = min_distortion_embed(&m, &opts)?;
            let phi = one_lipschitz(&m, &r.embedding);
            if let Some(p) = &ctx.out {
                let mut f = fs::File::create(p).map_err(io(p))?;
                phi.write(&mut f).map_err(io(p))?;
                f.flush().map_err(io(p))?;
            }
            println!("{}", pretty(&json!({ "points": m.len(), "distortion": r.distortion, "converged": r.converged, "bisection_steps": r.bisection_steps })).trim_end());
            Ok(0)
        }
        Command::Pipeline(PipelineCmd::Run { format }) => {
            let format = ReportFormat::parse(&format).ok_or_else(|| usage(format!("unknown format {format:?}")))?;
            let out = ctx.out.clone().ok_or_else(|| usage("pipeline run needs --out DIR"))?;
            let run = run_pipeline(&ctx.cfg, ctx.cache.as_ref())?;
            run.bundle.write(&out, format)?;
            let l = &run.bundle.document.ledger;
            for w in &run.bundle.document.rho_warnings {
                eprintln!("warning: {w}");
            }
            println!("{} of {} rounds; M = {}; bundle in {}", l.rows.len(), l.rounds_requested, l.m.value, out.display());
            if let Some(c) = &l.limiting_constraint {
                eprintln!("partial ledger: {c}");
            }
            Ok(run.exit_code() as u8)
        }
    }
}

fn check_sequence_properties_for(cap: usize) -> impl Fn(u32) -> Result<Value, GrigError> {
    move |r| check_sequence_properties(r, cap).map(|p| serde_json::to_value(p).unwrap())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
