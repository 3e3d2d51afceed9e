//! End-to-end acceptance checks, one line per criterion.
//!
//! Run with `cargo test --release -p grouplab --test acceptance`.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use grouplab::algebra::{GroupHandle, MatrixGroup, PermGroup, Permutation, Ring};
use grouplab::cayley::{bfs_closure, distances_from, spectral_gap, CayleyGraph, Enumeration, SpectralData, SpectralOptions};
use grouplab::distortion::{
    c2_lower_bound, frechet_embedding, min_distortion_embed, one_lipschitz, poincare_witness, EmbedOptions, Embedding, FiniteMetric, PoincareData,
};
use grouplab::expander::{build_sl3, check_perfect, sl3_order, steinberg_check, GenSet};
use grouplab::grigorchuk::{
    act_on_ray, check_sequence_properties, complete_level, grig_equal, level_generators, trivial_by_recursion, trivial_on_level, GrigWord, Ray, A, B, C, D,
};
use grouplab::imbed::{build_wreath_host, check_host, find_ball_faithful_quotient, verify_sandwich, QuotientSearch};
use grouplab::perfect::{compute_j, derived_subgroup, perfect_norm_table};
use grouplab::pipeline::{run_pipeline, toy_factor, Config, ReportFormat};
use grouplab::wreath::{build_psi, configure_plan, measure_bilipschitz, verify_ball_coincidence};

/// Criteria expected to fail with the shipped arithmetic; see the README.
const KNOWN_UNATTAINABLE: &[usize] = &[12];

const INSTANCES: [(u32, u32); 3] = [(2, 1), (2, 2), (3, 1)];

struct Instance {
    name: String,
    group: Enumeration<MatrixGroup>,
    spectral: Option<SpectralData>,
}

#[derive(Default)]
struct Ctx {
    sl3: Vec<Instance>,
}

impl Ctx {
    fn instances(&mut self) -> &mut [Instance] {
        if self.sl3.is_empty() {
            for (p, level) in INSTANCES {
                let group = build_sl3(p, level, GenSet::Small, 100_000).unwrap();
                self.sl3.push(Instance { name: format!("SL3(F{p}[t]/t^{level})"), group, spectral: None });
            }
        }
        &mut self.sl3
    }

    fn spectral(&mut self) -> Vec<(String, CayleyGraph, SpectralData)> {
        self.instances()
            .iter_mut()
            .map(|inst| {
                let s = inst.spectral.get_or_insert_with(|| spectral_gap(&inst.group.graph, &SpectralOptions::default()).unwrap());
                (inst.name.clone(), inst.group.graph.clone(), s.clone())
            })
            .collect()
    }
}

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn group_orders(ctx: &mut Ctx) -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for (inst, (p, level)) in ctx.instances().iter().zip(INSTANCES) {
        let oracle = sl3_order(p as u64, level);
        ensure(inst.group.order() as u64 == oracle, || format!("{}: BFS {} vs formula {oracle}", inst.name, inst.group.order()))?;
        parts.push(format!("{}", inst.group.order()));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:.1?}"))?;
    Ok(format!("orders {} match the formula in {elapsed:.1?}", parts.join(", ")))
}

fn steinberg(_: &mut Ctx) -> Outcome {
    let mut checks = 0;
    for (p, level) in INSTANCES {
        let r = steinberg_check(Ring::new(p, level).unwrap(), 10_000, 17).unwrap();
        ensure(r.failures.is_empty(), || format!("F{p}[t]/t^{level}: {}", r.failures[0]))?;
        checks += r.checks;
    }
    Ok(format!("10^4 trials per ring, {checks} identities, 0 failures"))
}

fn cyclic_product(orders: &[usize]) -> Enumeration<PermGroup> {
    let degree: usize = orders.iter().sum();
    let mut gens = Vec::new();
    let mut offset = 0;
    for (k, &n) in orders.iter().enumerate() {
        let mut images: Vec<u32> = (0..degree as u32).collect();
        for j in 0..n {
            images[offset + j] = (offset + (j + 1) % n) as u32;
        }
        gens.push((format!("z{k}"), Permutation::from_images(images).unwrap()));
        offset += n;
    }
    bfs_closure(&GroupHandle::new(PermGroup::new(degree), gens), 10_000).unwrap()
}

fn perfectness(ctx: &mut Ctx) -> Outcome {
    for inst in ctx.instances().iter() {
        ensure(check_perfect(&inst.group), || format!("{} is not perfect", inst.name))?;
    }
    for orders in [&[2][..], &[5], &[2, 2], &[2, 3], &[4, 6]] {
        let e = cyclic_product(orders);
        ensure(!check_perfect(&e), || format!("abelian control {orders:?} passed"))?;
        ensure(derived_subgroup(&e).order() == 1, || format!("abelian control {orders:?} has nontrivial commutators"))?;
    }
    Ok("3 SL3 instances perfect; 5 abelian controls rejected".into())
}

fn perfect_sandwich(ctx: &mut Ctx) -> Outcome {
    let e = &ctx.instances()[0].group;
    let d = derived_subgroup(e);
    let j = compute_j(e, &d, 16).unwrap().j;
    let table = perfect_norm_table(e, &d, 12).unwrap();
    let mut checked = 0;
    for &(g, word, perfect) in &table.rows {
        let Some(p) = perfect else { continue };
        ensure(word <= p && p <= j * word, || format!("element {g}: ‖g‖ = {word}, perfect {p}, J = {j}"))?;
        checked += 1;
    }
    Ok(format!("J = {j}; {checked} of {} elements within budget 12, 0 violations", table.rows.len()))
}

fn imbed_sandwich(_: &mut Ctx) -> Outcome {
    let mut parts = Vec::new();
    for name in ["C2", "C3", "S3"] {
        let k: usize = name[1..].parse().unwrap();
        let gens = if name.starts_with('C') {
            vec![("t".to_string(), Permutation::rotation(k, 1))]
        } else {
            vec![("s".to_string(), Permutation::from_cycles(k, &[&[0, 1]]).unwrap()), ("r".to_string(), Permutation::rotation(k, 1))]
        };
        let e = bfs_closure(&GroupHandle::new(PermGroup::new(k), gens), 100).unwrap();
        let q = find_ball_faithful_quotient(&e, e.order() as u32, &QuotientSearch::default()).map_err(|err| format!("{name}: {err}"))?;
        let host = build_wreath_host(&e, q).map_err(|err| format!("{name}: {err}"))?;
        check_host(&e, &host).map_err(|err| format!("{name}: {err}"))?;
        let rep = verify_sandwich(&e, &host, 8, 2000).map_err(|err| format!("{name}: {err}"))?;
        ensure(rep.rows.iter().all(|r| r.upper_ok), || format!("{name}: an element lacks ‖ι(g)‖_perfect ≤ 4‖g‖"))?;
        parts.push(format!("{name} degree {} lower-bound violations {:?}", rep.degree, rep.lower_violations));
    }
    Ok(parts.join("; "))
}

fn spectral_oracle(ctx: &mut Ctx) -> Outcome {
    let opts = SpectralOptions::default();
    let mut worst: f64 = 0.0;
    for n in 2..=200usize {
        let complete: Vec<Vec<(u32, u16)>> =
            (0..n).map(|v| (0..n).filter(|&w| w != v).enumerate().map(|(i, w)| (w as u32, i as u16)).collect()).collect();
        let l = spectral_gap(&CayleyGraph::from_adjacency(&complete).unwrap(), &opts).unwrap().lambda1;
        ensure((l - n as f64).abs() <= 1e-9, || format!("λ1(K_{n}) = {l}"))?;
        worst = worst.max((l - n as f64).abs());
        if n >= 3 {
            let cycle: Vec<Vec<(u32, u16)>> = (0..n).map(|v| vec![(((v + 1) % n) as u32, 0), (((v + n - 1) % n) as u32, 1)]).collect();
            let l = spectral_gap(&CayleyGraph::from_adjacency(&cycle).unwrap(), &opts).unwrap().lambda1;
            let exact = 2.0 - 2.0 * (2.0 * std::f64::consts::PI / n as f64).cos();
            ensure((l - exact).abs() <= 1e-9, || format!("λ1(C_{n}) = {l}, expected {exact}"))?;
            worst = worst.max((l - exact).abs());
        }
    }
    let start = Instant::now();
    let big = ctx.spectral().into_iter().find(|(_, g, _)| g.vertex_count() == 43008).unwrap();
    let elapsed = start.elapsed();
    let s = big.2;
    ensure(s.residual <= 1e-6, || format!("residual {:.2e}", s.residual))?;
    ensure(elapsed < Duration::from_secs(600), || format!("took {elapsed:.1?}"))?;
    Ok(format!("K_n, C_n (n ≤ 200) max error {worst:.1e}; n = 43008: λ1 = {:.6}, residual {:.1e}, {elapsed:.1?}", s.lambda1, s.residual))
}

fn optimizer(ctx: &mut Ctx) -> Outcome {
    let opts = EmbedOptions { dim: None, tol: 1e-6, sweeps: 400, bisection_steps: 40, seed: 0 };
    for (name, metric, exact, tol) in [
        ("path(6)", FiniteMetric::path(6), 1.0, 1e-6),
        ("simplex(5)", FiniteMetric::uniform(5), 1.0, 1e-6),
        ("C4", FiniteMetric::cycle(4), 2f64.sqrt(), 1e-3),
    ] {
        let d = min_distortion_embed(&metric, &opts).unwrap().distortion;
        ensure((d - exact).abs() <= tol, || format!("{name}: D = {d}, expected {exact}"))?;
    }
    let mut graphs: Vec<(String, CayleyGraph, f64, EmbedOptions)> = Vec::new();
    for n in [4usize, 5, 6] {
        let cycle: Vec<Vec<(u32, u16)>> = (0..n).map(|v| vec![(((v + 1) % n) as u32, 0), (((v + n - 1) % n) as u32, 1)]).collect();
        let g = CayleyGraph::from_adjacency(&cycle).unwrap();
        let l = spectral_gap(&g, &SpectralOptions::default()).unwrap().lambda1;
        graphs.push((format!("C{n}"), g, l, opts.clone()));
    }
    for n in [4usize, 6] {
        let complete: Vec<Vec<(u32, u16)>> =
            (0..n).map(|v| (0..n).filter(|&w| w != v).enumerate().map(|(i, w)| (w as u32, i as u16)).collect()).collect();
        graphs.push((format!("K{n}"), CayleyGraph::from_adjacency(&complete).unwrap(), n as f64, opts.clone()));
    }
    let (name, g, s) = ctx.spectral().into_iter().next().unwrap();
    graphs.push((name, g, s.lambda1, EmbedOptions { sweeps: 30, bisection_steps: 8, ..opts.clone() }));
    let mut parts = Vec::new();
    for (name, g, lambda1, o) in graphs {
        let bound = c2_lower_bound(&PoincareData::new(&g, lambda1).unwrap());
        let d = min_distortion_embed(&FiniteMetric::from_graph(&g).unwrap(), &o).unwrap().distortion;
        ensure(bound <= d, || format!("{name}: lower bound {bound} exceeds D = {d}"))?;
        parts.push(format!("{name} {bound:.3} ≤ {d:.3}"));
    }
    Ok(format!("path, simplex D = 1, C4 D = √2; {}", parts.join(", ")))
}

fn poincare(ctx: &mut Ctx) -> Outcome {
    let mut parts = Vec::new();
    for (k, (name, g, s)) in ctx.spectral().into_iter().enumerate() {
        let data = PoincareData::new(&g, s.lambda1).unwrap();
        let rows = vec![(0usize, distances_from(&g, 0))];
        let mut embeddings: Vec<Embedding> = Vec::new();
        if k == 0 {
            let metric = FiniteMetric::from_graph(&g).unwrap();
            let opt = EmbedOptions { dim: None, tol: 1e-6, sweeps: 30, bisection_steps: 8, seed: 0 };
            embeddings.push(one_lipschitz(&metric, &min_distortion_embed(&metric, &opt).unwrap().embedding));
        }
        let mut witnesses = 0;
        let runs = 1000;
        for seed in 0..runs {
            let phi = frechet_embedding(&g, 8, seed).unwrap();
            for row in data.table.iter().filter(|r| r.p_t > 0.0) {
                poincare_witness(&g, &data, &phi, row.t, &rows).map_err(|e| format!("{name}, seed {seed}: {e}"))?;
                witnesses += 1;
            }
        }
        for phi in &embeddings {
            for row in data.table.iter().filter(|r| r.p_t > 0.0) {
                poincare_witness(&g, &data, phi, row.t, &rows).map_err(|e| format!("{name}, optimized embedding: {e}"))?;
                witnesses += 1;
            }
        }
        parts.push(format!("{name} {witnesses} witnesses"));
    }
    Ok(format!("0 violations over 10^3 seeded runs per instance: {}", parts.join(", ")))
}

fn level_compose(letters: &[u8], gens: &[Vec<u32>; 4]) -> Vec<u32> {
    (0..gens[0].len() as u32).map(|v| letters.iter().fold(v, |x, &g| gens[g as usize][x as usize])).collect()
}

fn grigorchuk(_: &mut Ctx) -> Outcome {
    // Relations on unreduced letters through the level-12 action and on rays.
    let gens = level_generators(12);
    let id: Vec<u32> = (0..gens[0].len() as u32).collect();
    for g in [A, B, C, D] {
        ensure(level_compose(&[g, g], &gens) == id, || format!("generator {g} squared acts nontrivially"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (x, y, z) in [(B, C, D), (C, B, D), (C, D, B), (D, C, B), (B, D, C), (D, B, C)] {
        ensure(level_compose(&[x, y], &gens) == gens[z as usize], || format!("{x}{y} ≠ {z} on level 12"))?;
        for _ in 0..100 {
            let prefix: Vec<u8> = (0..rng.gen_range(0..40)).map(|_| rng.gen_range(0..2)).collect();
            let ray = Ray::new(&prefix);
            ensure(act_on_ray(y, &act_on_ray(x, &ray)) == act_on_ray(z, &ray), || format!("{x}{y} ≠ {z} on a ray"))?;
        }
        let name = |l: u8| ['a', 'b', 'c', 'd'][l as usize];
        let lhs = GrigWord::parse(&format!("{}{}", name(x), name(y))).unwrap();
        ensure(grig_equal(&lhs, &GrigWord::generator(z), 20).unwrap(), || "grig_equal rejects a relation".into())?;
    }
    for g in [A, B, C, D] {
        ensure(grig_equal(&GrigWord::generator(g).mul(&GrigWord::generator(g)), &GrigWord::identity(), 20).unwrap(), || "square".into())?;
    }

    let relator = GrigWord::parse("adadadad").unwrap();
    let mut equal = 0;
    for k in 0..10_000 {
        let len = rng.gen_range(0..=16);
        let w1 = GrigWord::reduce((0..len).map(|_| rng.gen_range(0..4u8)));
        let w2 = if k % 2 == 0 {
            let cut = rng.gen_range(0..=w1.len());
            let (head, tail) = w1.letters().split_at(cut);
            GrigWord::reduce(head.iter().chain(relator.letters()).chain(tail).copied())
        } else {
            GrigWord::reduce((0..rng.gen_range(0..=16)).map(|_| rng.gen_range(0..4u8)))
        };
        let q = w1.mul(&w2.inverse());
        let by_recursion = trivial_by_recursion(&q);
        let by_level = trivial_on_level(&q, complete_level(q.len()));
        ensure(by_recursion == by_level, || format!("oracles disagree on {w1} vs {w2}"))?;
        ensure(grig_equal(&w1, &w2, 20).unwrap() == by_level, || format!("grig_equal disagrees on {w1} vs {w2}"))?;
        equal += by_level as usize;
    }

    let mut ns = Vec::new();
    for r in 1..=6 {
        let p = check_sequence_properties(r, 64).map_err(|e| format!("R = {r}: {e}"))?;
        ns.push(format!("{}/{}", p.spreading, p.stabilizing));
    }
    Ok(format!("relations hold; oracles agree on 10^4 pairs ({equal} equal); N(R) spreading/stabilizing for R = 1..6: {}", ns.join(" ")))
}

fn wreath_coincidence(_: &mut Ctx) -> Outcome {
    let mut parts = Vec::new();
    for m in [2u32, 3] {
        let mut sys = configure_plan(vec![toy_factor("C2").unwrap(), toy_factor("C3").unwrap()], None).unwrap();
        sys.place_by_radii(&[m, m], 64).unwrap();
        let rep = verify_ball_coincidence(&sys, 1, m, 4_000_000).unwrap();
        ensure(rep.coincide, || format!("m = {m}: first mismatch {:?}", rep.first_mismatch))?;
        parts.push(format!("m = {m}: n = {:?}, {} elements", sys.plan.n, rep.sizes.0));
    }
    let mut bad = configure_plan(vec![toy_factor("C2").unwrap(), toy_factor("C3").unwrap()], None).unwrap();
    bad.place_at(vec![0, 1], vec![2, 2]).unwrap();
    let rep = verify_ball_coincidence(&bad, 1, 2, 4_000_000).unwrap();
    ensure(!rep.coincide, || "the adversarial plan passed".into())?;
    Ok(format!("{}; adversarial n = [0, 1] rejected", parts.join("; ")))
}

fn psi_bounds(_: &mut Ctx) -> Outcome {
    let mut parts = Vec::new();
    for (factors, radii) in [("S3", &[1u32, 1][..]), ("S3,C2", &[1, 1, 1][..]), ("S3,C3", &[1, 1, 1][..]), ("S4", &[1, 1][..])] {
        let fs = factors.split(',').map(|f| toy_factor(f).unwrap()).collect();
        let mut sys = configure_plan(fs, None).unwrap();
        sys.place_by_radii(radii, 64).unwrap();
        let psi = build_psi(&sys, 0, 30, 1_000_000).unwrap();
        let rep = measure_bilipschitz(&sys, &psi, 10, 4_000_000, 40).map_err(|e| format!("{factors}: {e}"))?;
        let bound = 2 * rep.l_prime as u32 + 1;
        let mut measured = 0;
        for row in &rep.rows {
            if let Some(w) = row.w_norm {
                ensure(row.perfect_norm <= w && w <= bound * row.perfect_norm, || format!("{factors}: element {} has ‖Ψ(h)‖ = {w}", row.element))?;
                measured += 1;
            }
        }
        ensure(measured > 0, || format!("{factors}: nothing measured"))?;
        parts.push(format!("{factors} m = {radii:?}: L' = {}, {measured} of {} elements, ratios [{:.2}, {:.2}]", rep.l_prime, rep.rows.len(), rep.k.unwrap(), rep.l.unwrap()));
    }
    Ok(parts.join("; "))
}

fn read_tree(dir: &Path) -> BTreeSet<(String, Vec<u8>)> {
    let mut out = BTreeSet::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out
}

fn pipeline(_: &mut Ctx) -> Outcome {
    let start = Instant::now();
    let cfg = Config::default();
    let first = run_pipeline(&cfg, None).map_err(|e| e.to_string())?;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    first.bundle.write(a.path(), ReportFormat::Csv).unwrap();
    run_pipeline(&cfg, None).unwrap().bundle.write(b.path(), ReportFormat::Csv).unwrap();
    let identical = read_tree(a.path()) == read_tree(b.path());
    let ledger = &first.bundle.document.ledger;
    let failures = ledger.verify(&first.rho).unwrap();
    let elapsed = start.elapsed();

    // The same family and plan under a fast-growing bound, to show the chain closes.
    let mut fast = cfg.clone();
    fast.set("pipeline.rho", "exp(10*t)").unwrap();
    let fast_run = run_pipeline(&fast, None).unwrap();
    let fast_ledger = &fast_run.bundle.document.ledger;
    let fast_ok = fast_ledger.rows.len() >= 2 && fast_ledger.verify(&fast_run.rho).unwrap().is_empty();

    let summary = format!(
        "log(1+t): {} of {} rounds, M = {:.2}, reproducible = {identical}, recorded inequalities verify = {}, {elapsed:.1?}; exp(10*t): {} rounds verify = {fast_ok}",
        ledger.rows.len(),
        ledger.rounds_requested,
        ledger.m.value,
        failures.is_empty(),
        fast_ledger.rows.len()
    );
    ensure(identical && failures.is_empty() && fast_ok, || summary.clone())?;
    ensure(elapsed < Duration::from_secs(1200), || summary.clone())?;
    ensure(ledger.rows.len() >= 2, || format!("{summary}; limiting constraint: {}", ledger.limiting_constraint.clone().unwrap_or_default()))?;
    Ok(summary)
}

fn main() -> ExitCode {
    let criteria: [(&str, fn(&mut Ctx) -> Outcome); 12] = [
        ("group orders", group_orders),
        ("Steinberg identities", steinberg),
        ("perfectness", perfectness),
        ("perfect-metric sandwich", perfect_sandwich),
        ("imbedding sandwich", imbed_sandwich),
        ("spectral oracle", spectral_oracle),
        ("distortion optimizer", optimizer),
        ("Poincaré witness", poincare),
        ("Grigorchuk", grigorchuk),
        ("wreath coincidence", wreath_coincidence),
        ("Ψ bounds", psi_bounds),
        ("pipeline", pipeline),
    ];
    let mut ctx = Ctx::default();
    let mut unexpected = Vec::new();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let n = k + 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&mut ctx))).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n:>2} {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                let note = if KNOWN_UNATTAINABLE.contains(&n) { " (known unattainable)" } else { "" };
                println!("FAIL {n:>2} {name}{note} [{secs:.1}s]: {detail}");
                if !KNOWN_UNATTAINABLE.contains(&n) {
                    unexpected.push(n);
                }
            }
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
