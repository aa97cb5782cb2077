//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Reference values come from oracles local to this file (BFS, Floyd–Warshall,
//! a separate legitimacy check, direct change and activation counting); the
//! library is only trusted to produce executions.

mod common;

use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use common::{bfs_oracle, floyd, is_spanning_tree, random_faults, random_graph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use ssbfs::adversary::{Adversary, AdversaryKind};
use ssbfs::analysis::{in_lc, measure, segment_disruptions};
use ssbfs::cli::{cmd_run, RunConfig};
use ssbfs::graph::radius_area;
use ssbfs::protocol::{enabled_set, step, ByzantineWrites};
use ssbfs::scenarios::{
    corrupted_configuration, hexagon, random_configuration, replay_strong_impossibility,
    replay_ta_strong_impossibility,
};
use ssbfs::scheduler::{default_budget, Termination};
use ssbfs::{
    run, Configuration, DaemonKind, DaemonPolicy, Execution, Fairness, FaultModel, ProcessSet,
    ProcessState, StopCriterion, Topology,
};

/// Seeds of the random panels, fixed so the reported numbers can be re-derived.
const CLOSURE_SEED: u64 = 0x1d_c105;
const PANEL_SEED: u64 = 0x5b_0200;

struct Outcome {
    pass: bool,
    summary: String,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Outcome {
            pass,
            summary: summary.into(),
        }
    }
}

// ---------------------------------------------------------------- oracles

/// Areas from all-pairs distances: `(S_B, S_B*, E_B)`.
fn oracle_areas(n: usize, edges: &[(usize, usize)], root: usize, byz: &ProcessSet) -> (ProcessSet, ProcessSet, ProcessSet) {
    let d = floyd(n, edges);
    let (mut s_b, mut star, mut e_b) = (ProcessSet::new(), ProcessSet::new(), ProcessSet::new());
    for v in (0..n).filter(|v| *v != root && !byz.contains(v)) {
        let Some(near) = byz.iter().map(|&b| d[v][b]).min() else {
            continue;
        };
        if near <= d[root][v] {
            s_b.insert(v);
        }
        if near < d[root][v] {
            star.insert(v);
        }
        if near == d[root][v] {
            e_b.insert(v);
        }
    }
    (s_b, star, e_b)
}

/// Legitimacy of `v` by walking its parent chain; written independently of
/// the library's checker.
fn oracle_spec(topo: &Topology, byz: &ProcessSet, cfg: &Configuration, v: usize) -> bool {
    let adj = |a: usize, b: usize| topo.neighbors(a).contains(&b);
    if v == topo.root() {
        return cfg.get(v) == ProcessState::ROOT;
    }
    let mut chain = vec![v];
    loop {
        let cur = *chain.last().unwrap();
        match cfg.prnt(cur) {
            None => {
                return cur != v && (cur == topo.root() || byz.contains(&cur)) && cfg.level(cur) == 0;
            }
            Some(p) => {
                if !adj(cur, p) || chain.contains(&p) {
                    return false;
                }
                let min = topo.neighbors(cur).iter().map(|&q| cfg.level(q)).min().unwrap();
                if cfg.level(p) != min || cfg.level(cur) != cfg.level(p) + 1 {
                    return false;
                }
                chain.push(p);
            }
        }
    }
}

/// `level_v ≥ min(d, distance to B ∪ {r})` for every process.
fn oracle_i(dist_to_sources: &[u32], cfg: &Configuration, d: u32) -> bool {
    (0..dist_to_sources.len()).all(|v| cfg.level(v) >= u64::from(d.min(dist_to_sources[v])))
}

fn sources_distance(n: usize, edges: &[(usize, usize)], root: usize, byz: &ProcessSet) -> Vec<u32> {
    let per_source: Vec<Vec<u32>> = std::iter::once(root)
        .chain(byz.iter().copied())
        .map(|s| bfs_oracle(n, edges, s))
        .collect();
    (0..n).map(|v| per_source.iter().map(|d| d[v]).min().unwrap()).collect()
}

fn oracle_lc(topo: &Topology, byz: &ProcessSet, area: &ProcessSet, dist: &[u32], cfg: &Configuration) -> bool {
    let big_d = topo.diameter();
    oracle_i(dist, cfg, big_d)
        && topo
            .processes()
            .filter(|v| !byz.contains(v) && !area.contains(v))
            .all(|v| oracle_spec(topo, byz, cfg, v))
}

fn changes_after(exec: &Execution, from: usize) -> Vec<usize> {
    let mut counts = vec![0; exec.topology().process_count()];
    for i in from..exec.len() {
        let (a, b) = (exec.configuration(i), exec.configuration(i + 1));
        for (v, c) in counts.iter_mut().enumerate() {
            if a.get(v) != b.get(v) {
                *c += 1;
            }
        }
    }
    counts
}

fn activations_after(exec: &Execution, from: usize) -> Vec<usize> {
    let mut counts = vec![0; exec.topology().process_count()];
    for record in &exec.steps()[from..] {
        for &v in &record.activated {
            counts[v] += 1;
        }
    }
    counts
}

// ------------------------------------------------------------ criterion 1

/// All edge sets over `0..n` that connect every process, by bitmask.
fn connected_graphs(n: usize) -> Vec<Vec<(usize, usize)>> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    (0u64..1 << pairs.len())
        .into_par_iter()
        .filter_map(|mask| {
            let edges: Vec<(usize, usize)> =
                pairs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &e)| e).collect();
            let d = bfs_oracle(n, &edges, 0);
            d.iter().all(|&x| x != u32::MAX).then_some(edges)
        })
        .collect()
}

fn daemon_for(index: usize) -> DaemonPolicy {
    let seed = index as u64;
    match index % 4 {
        0 => DaemonPolicy::central_round_robin(),
        1 => DaemonPolicy::distributed_random(seed),
        2 => DaemonPolicy::synchronous(),
        _ => DaemonPolicy {
            kind: DaemonKind::Central,
            fairness: Fairness::Random { seed },
        },
    }
}

fn criterion_1() -> Outcome {
    let mut runs = 0usize;
    let mut failures: Vec<String> = Vec::new();
    let mut graphs = 0usize;
    let mut longest = 0f64;
    for n in 1..=7 {
        let sets = connected_graphs(n);
        graphs += sets.len();
        let results: Vec<(usize, Option<String>, f64)> = sets
            .par_iter()
            .enumerate()
            .map(|(gi, edges)| {
                let topo = Arc::new(Topology::new(n, 0, edges.iter().copied()).unwrap());
                let expected = bfs_oracle(n, edges, 0);
                let budget = 50 * n * edges.len().max(1);
                let mut rng = ChaCha8Rng::seed_from_u64(gi as u64 ^ (n as u64) << 32);
                let inits = [
                    ("all-bottom-zero", Configuration::uniform(n, ProcessState::ROOT)),
                    ("corrupted", corrupted_configuration(&topo)),
                    ("random", random_configuration(&topo, &mut rng)),
                ];
                let mut worst = 0f64;
                for (k, (name, init)) in inits.into_iter().enumerate() {
                    let idx = gi * 3 + k;
                    let exec = run(
                        topo.clone(),
                        FaultModel::fault_free(),
                        init,
                        daemon_for(idx),
                        &mut Adversary::new(AdversaryKind::Silent),
                        StopCriterion::Quiescent { budget },
                        idx as u64,
                    )
                    .unwrap();
                    let last = exec.last_configuration();
                    let levels_ok = (0..n).all(|v| last.level(v) == u64::from(expected[v]));
                    worst = worst.max(exec.len() as f64 / budget as f64);
                    if exec.termination != Termination::Quiescent
                        || exec.len() > budget
                        || !levels_ok
                        || !is_spanning_tree(&topo, last)
                    {
                        return (
                            3,
                            Some(format!("n={n} edges={edges:?} init={name} daemon={}", daemon_for(idx))),
                            worst,
                        );
                    }
                }
                (3, None, worst)
            })
            .collect();
        for (r, failure, worst) in results {
            runs += r;
            failures.extend(failure);
            longest = longest.max(worst);
        }
    }
    let summary = format!(
        "fault-free convergence: {graphs} connected graphs with n ≤ 7, {runs} runs, {} failures, \
         longest run used {:.1}% of 50·n·m{}",
        failures.len(),
        100.0 * longest,
        failures.first().map_or(String::new(), |f| format!("; first: {f}"))
    );
    Outcome::new(failures.is_empty() && graphs == 1 + 1 + 4 + 38 + 728 + 26704 + 1_866_256, summary)
}

// ------------------------------------------------------------ criterion 2

fn criterion_2() -> Outcome {
    const INSTANCES: usize = 100_000;
    let broken: usize = (0..INSTANCES)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(CLOSURE_SEED + i as u64);
            let topo = random_graph(&mut rng, 1, 20, 0.15);
            let n = topo.process_count();
            let f = rng.gen_range(0..=3);
            let fm = random_faults(&mut rng, &topo, f);
            let edges = topo.edges().to_vec();
            let dist = sources_distance(n, &edges, topo.root(), fm.byzantine());
            let d = rng.gen_range(0..=topo.diameter());
            let mut cfg = common::random_config(&mut rng, &topo, 0);
            for v in 0..n {
                let mut s = cfg.get(v);
                s.level = u64::from(d.min(dist[v])) + rng.gen_range(0..=2);
                cfg.set(v, s);
            }
            assert!(oracle_i(&dist, &cfg, d));
            let activated: Vec<usize> =
                enabled_set(&topo, &fm, &cfg).into_iter().filter(|_| rng.gen_bool(0.6)).collect();
            let mut writes = ByzantineWrites::new();
            for &b in fm.byzantine() {
                if rng.gen_bool(0.8) {
                    let nbrs = topo.neighbors(b);
                    let pick = rng.gen_range(0..=nbrs.len());
                    writes.insert(b, ProcessState::new(nbrs.get(pick).copied(), rng.gen_range(0..=2 * n as u64)));
                }
            }
            let next = step(&topo, &fm, &cfg, &activated, &writes).unwrap();
            usize::from(!oracle_i(&dist, &next, d))
        })
        .sum();
    Outcome::new(
        broken == 0,
        format!(
            "I_d closure: {INSTANCES} random instances (n ≤ 20, |B| ≤ 3), {} successors satisfy I_d ({broken} do not)",
            INSTANCES - broken
        ),
    )
}

// ------------------------------------------------------ criteria 3, 4, 5

struct PanelRun {
    exec: Execution,
    first_lc: usize,
    s_b: ProcessSet,
    star: ProcessSet,
    e_b: ProcessSet,
}

const FURTHER_STEPS: usize = 10_000;

fn panel_run(i: usize) -> Result<PanelRun, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(PANEL_SEED + i as u64);
    let topo = loop {
        let t = random_graph(&mut rng, 4, 12, 0.2);
        let f = 1 + i % 3;
        if t.process_count() > f + 1 {
            break t;
        }
    };
    let f = 1 + i % 3;
    let fm = random_faults(&mut rng, &topo, f);
    let n = topo.process_count();
    let edges = topo.edges().to_vec();
    let byz = fm.byzantine().clone();
    let (s_b, star, e_b) = oracle_areas(n, &edges, topo.root(), &byz);
    let dist = sources_distance(n, &edges, topo.root(), &byz);
    let mut init = random_configuration(&topo, &mut rng);
    init.normalize(&topo, &fm);

    let topo = Arc::new(topo);
    let first = Arc::new(AtomicUsize::new(usize::MAX));
    let stop = {
        let (topo, byz, s_b, first) = (topo.clone(), byz.clone(), s_b.clone(), first.clone());
        StopCriterion::predicate(default_budget(&topo) + FURTHER_STEPS, move |e: &Execution| {
            let mut at = first.load(Ordering::Relaxed);
            if at == usize::MAX && oracle_lc(&topo, &byz, &s_b, &dist, e.last_configuration()) {
                at = e.len();
                first.store(at, Ordering::Relaxed);
            }
            at != usize::MAX && e.len() >= at + FURTHER_STEPS
        })
    };
    let exec = run(
        topo.clone(),
        fm,
        init,
        DaemonPolicy::distributed_random(i as u64),
        &mut Adversary::new(AdversaryKind::oscillator()),
        stop,
        i as u64,
    )
    .map_err(|e| format!("run {i}: {e}"))?;
    let first_lc = first.load(Ordering::Relaxed);
    if first_lc == usize::MAX || exec.len() < first_lc + FURTHER_STEPS {
        return Err(format!("run {i}: no LC configuration within {} steps", exec.len()));
    }
    let library_lc = exec
        .configurations()
        .position(|c| in_lc(exec.topology(), exec.faults(), c).unwrap());
    if library_lc != Some(first_lc) {
        return Err(format!("run {i}: library first LC {library_lc:?}, oracle {first_lc}"));
    }
    Ok(PanelRun {
        exec,
        first_lc,
        s_b,
        star,
        e_b,
    })
}

fn first_lc_star(r: &PanelRun) -> Option<usize> {
    let topo = r.exec.topology();
    let byz = r.exec.faults().byzantine();
    let dist = sources_distance(topo.process_count(), topo.edges(), topo.root(), byz);
    r.exec
        .configurations()
        .position(|c| oracle_lc(topo, byz, &r.star, &dist, c))
}

fn criterion_3(runs: &[PanelRun]) -> Outcome {
    let mut moved = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        let changes = changes_after(&r.exec, r.first_lc);
        for v in r.exec.faults().correct(r.exec.topology()).filter(|v| !r.s_b.contains(v)) {
            if changes[v] > 0 {
                moved.push(format!("run {i} process {v}: {} changes", changes[v]));
            }
        }
    }
    Outcome::new(
        moved.is_empty(),
        format!(
            "TA strict containment: {} oscillator runs, {FURTHER_STEPS} steps after first LC each, \
             {} correct processes outside S_B changed{}",
            runs.len(),
            moved.len(),
            moved.first().map_or(String::new(), |m| format!("; first: {m}"))
        ),
    )
}

fn criterion_4(runs: &[PanelRun]) -> Outcome {
    let mut over = Vec::new();
    let mut over_with_settled_neighbor = 0;
    let mut checked = 0;
    let mut over_from_lc_star = 0;
    for (i, r) in runs.iter().enumerate() {
        let topo = r.exec.topology();
        let counts = activations_after(&r.exec, r.first_lc);
        let star_counts = first_lc_star(r).map(|at| activations_after(&r.exec, at));
        for &v in &r.e_b {
            checked += 1;
            let degree = topo.degree(v);
            if counts[v] > degree {
                let settled = topo
                    .neighbors(v)
                    .iter()
                    .any(|&q| r.exec.faults().is_correct(q) && !r.s_b.contains(&q));
                over_with_settled_neighbor += usize::from(settled);
                over.push(format!(
                    "run {i} process {v}: {} activations, degree {degree}{}",
                    counts[v],
                    if settled { "" } else { ", all neighbors Byzantine or in S_B" }
                ));
            }
            if star_counts.as_ref().is_some_and(|c| c[v] > degree) {
                over_from_lc_star += 1;
            }
        }
    }
    Outcome::new(
        over.is_empty(),
        format!(
            "E_B activation bound from first LC: {checked} E_B processes, {} above Δ_v \
             ({over_with_settled_neighbor} of them with a correct neighbor outside S_B); \
             counted from first LC* instead: {over_from_lc_star} above Δ_v{}",
            over.len(),
            over.first().map_or(String::new(), |o| format!("; first: {o}"))
        ),
    )
}

fn criterion_5(runs: &[PanelRun]) -> Outcome {
    let mut problems = Vec::new();
    let mut max_disruptions = 0;
    let mut max_changes = 0;
    for (i, r) in runs.iter().enumerate() {
        let topo = r.exec.topology();
        let Some(at) = first_lc_star(r) else {
            problems.push(format!("run {i}: no LC* configuration"));
            continue;
        };
        let segments = match segment_disruptions(&r.exec, &r.star) {
            Ok(s) => s,
            Err(e) => {
                problems.push(format!("run {i}: {e}"));
                continue;
            }
        };
        let disruptions = segments.iter().filter(|s| s.start_index >= at).count();
        max_disruptions = max_disruptions.max(disruptions);
        if disruptions > 2 * topo.edge_count() {
            problems.push(format!("run {i}: {disruptions} disruptions > 2m = {}", 2 * topo.edge_count()));
        }
        let changes = changes_after(&r.exec, at);
        for v in r.exec.faults().correct(topo).filter(|v| !r.star.contains(v)) {
            max_changes = max_changes.max(changes[v]);
            if changes[v] > topo.max_degree() {
                problems.push(format!("run {i} process {v}: {} changes > Δ = {}", changes[v], topo.max_degree()));
            }
        }
        let metrics = measure(&r.exec).unwrap();
        if metrics.first_lc_star_index != Some(at) || metrics.disruption_count != disruptions {
            problems.push(format!("run {i}: library metrics disagree with the oracle"));
        }
    }
    Outcome::new(
        problems.is_empty(),
        format!(
            "disruption bound from first LC*: {} runs, max {max_disruptions} S_B*-disruptions, \
             max {max_changes} changes per S_B*-correct process, {} violations{}",
            runs.len(),
            problems.len(),
            problems.first().map_or(String::new(), |p| format!("; first: {p}"))
        ),
    )
}

// ------------------------------------------------------------ criterion 6

/// Criteria 3–5 re-measured on a replayed execution against the optimal areas.
fn optimal_area_checks(exec: &Execution) -> Result<(), String> {
    let topo = exec.topology();
    let byz = exec.faults().byzantine().clone();
    let n = topo.process_count();
    let (s_b, star, e_b) = oracle_areas(n, topo.edges(), topo.root(), &byz);
    let dist = sources_distance(n, topo.edges(), topo.root(), &byz);
    let lc = exec
        .configurations()
        .position(|c| oracle_lc(topo, &byz, &s_b, &dist, c))
        .ok_or("no LC configuration")?;
    let changes = changes_after(exec, lc);
    if let Some(v) = exec.faults().correct(topo).find(|v| !s_b.contains(v) && changes[*v] > 0) {
        return Err(format!("process {v} outside S_B changed after LC"));
    }
    let activations = activations_after(exec, lc);
    if let Some(v) = e_b.iter().find(|&&v| activations[v] > topo.degree(v)) {
        return Err(format!("E_B process {v} over its degree"));
    }
    let lc_star = exec
        .configurations()
        .position(|c| oracle_lc(topo, &byz, &star, &dist, c))
        .ok_or("no LC* configuration")?;
    let disruptions = segment_disruptions(exec, &star)
        .map_err(|e| e.to_string())?
        .iter()
        .filter(|s| s.start_index >= lc_star)
        .count();
    if disruptions > 2 * topo.edge_count() {
        return Err(format!("{disruptions} S_B*-disruptions"));
    }
    let changes = changes_after(exec, lc_star);
    if let Some(v) = exec
        .faults()
        .correct(topo)
        .find(|v| !star.contains(v) && changes[*v] > topo.max_degree())
    {
        return Err(format!("process {v} changed more than Δ times"));
    }
    Ok(())
}

fn criterion_6() -> Outcome {
    let strong = replay_strong_impossibility(2, 6).unwrap();
    let radius = radius_area(strong.topology(), strong.faults(), 2);
    let strong_count = segment_disruptions(&strong, &radius).unwrap().len();
    let strong_ok = optimal_area_checks(&strong);

    let area = ProcessSet::from([hexagon::V]);
    let ta = replay_ta_strong_impossibility(&area, 6).unwrap();
    let ta_count = segment_disruptions(&ta, &area).unwrap().len();
    let ta_ok = optimal_area_checks(&ta);

    let pass = strong_count >= 6 && ta_count >= 6 && strong_ok.is_ok() && ta_ok.is_ok() && strong.is_replayable() && ta.is_replayable();
    let verdict = |r: &Result<(), String>| r.as_ref().map_or_else(|e| format!("violated ({e})"), |_| "hold".into());
    Outcome::new(
        pass,
        format!(
            "impossibility replays: line c=2 gives {strong_count} radius-2 disruptions in 6 cycles, \
             hexagon area {{v}} gives {ta_count} disruptions in 6 cycles; bounds for S_B/S_B*: {} / {}",
            verdict(&strong_ok),
            verdict(&ta_ok)
        ),
    )
}

// ------------------------------------------------------------ criterion 7

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        RunConfig {
            seed: 1,
            ..RunConfig::scenario("hexagon").with_all_checks()
        },
        RunConfig {
            adversary: "random".into(),
            seed: 42,
            ..RunConfig::scenario("random n=11 p=0.3 seed=8 faults=3")
        },
        RunConfig {
            daemon: "central".into(),
            init: "corrupted".into(),
            seed: 3,
            ..RunConfig::scenario("grid w=4 h=3 faults=2 byz-seed=1")
        },
    ];
    let mut differing = Vec::new();
    for (i, base) in configs.iter().enumerate() {
        let mut artifacts = Vec::new();
        for copy in 0..2 {
            let config = RunConfig {
                trace: Some(dir.path().join(format!("{i}-{copy}.trace"))),
                metrics: Some(dir.path().join(format!("{i}-{copy}.csv"))),
                ..base.clone()
            };
            cmd_run(&config).unwrap();
            artifacts.push((
                std::fs::read(config.trace.unwrap()).unwrap(),
                std::fs::read(config.metrics.unwrap()).unwrap(),
            ));
        }
        if artifacts[0] != artifacts[1] {
            differing.push(base.scenario_id());
        }
    }
    Outcome::new(
        differing.is_empty(),
        format!(
            "determinism: {} configurations run twice, {} with differing trace or metrics bytes",
            configs.len(),
            differing.len()
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut outcomes: Vec<(u32, Outcome)> = Vec::new();
    let mut report = |id: u32, outcome: Outcome| {
        println!(
            "{} criterion {id}: {} [{:.1}s]",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.summary,
            start.elapsed().as_secs_f64()
        );
        outcomes.push((id, outcome));
    };

    report(1, criterion_1());
    report(2, criterion_2());
    let panel: Result<Vec<PanelRun>, String> = (0..200).into_par_iter().map(panel_run).collect();
    match panel {
        Ok(runs) => {
            report(3, criterion_3(&runs));
            report(4, criterion_4(&runs));
            report(5, criterion_5(&runs));
        }
        Err(e) => {
            for id in 3..=5 {
                report(id, Outcome::new(false, format!("panel did not run: {e}")));
            }
        }
    }
    report(6, criterion_6());
    report(7, criterion_7());

    let failed: Vec<u32> = outcomes.iter().filter(|(_, o)| !o.pass).map(|(id, _)| *id).collect();
    println!(
        "acceptance: {} of {} criteria passed{}",
        outcomes.len() - failed.len(),
        outcomes.len(),
        if failed.is_empty() { String::new() } else { format!("; failed: {failed:?}") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
