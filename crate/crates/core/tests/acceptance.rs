//! Acceptance run: one PASS/FAIL line per criterion, with the checks that
//! fed it listed above. Exits nonzero on any unexpected failure.

use proptest::test_runner::{Config as PropConfig, TestRunner};
use recontrack::analytic::*;
use recontrack::des::{simulate, Fate, Horizon, SimConfig};
use recontrack::experiment::{run_experiment, run_single, ExperimentConfig, SummaryRow};
use recontrack::metrics::reconstruction_error;
use recontrack::policies::{fill_predecessors, DropContext, PolicyKind};
use recontrack::stochastic::RngStream;
use recontrack::wiener::{end_to_end_reconstruction_error, fine_grid, generate_path, mc_integrated_squared_error, refine_path};
use std::time::Instant;

const SEED: u64 = 2024;

struct Check {
    ok: bool,
    /// Failing is the documented outcome for this check.
    known: bool,
    text: String,
}

#[derive(Default)]
struct Criterion {
    checks: Vec<Check>,
}

impl Criterion {
    fn check(&mut self, ok: bool, text: String) {
        self.checks.push(Check { ok, known: false, text });
    }

    fn known(&mut self, ok: bool, text: String) {
        self.checks.push(Check { ok, known: true, text });
    }

    fn rel(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        let r = (got / want - 1.0).abs();
        self.check(r <= tol, format!("{what}: {got:.5} vs {want:.5} (rel {:.3}%, tol {:.1}%)", 100.0 * r, 100.0 * tol));
    }

    fn abs(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        let d = (got - want).abs();
        self.check(d <= tol + 1e-12, format!("{what}: {got:.4} vs {want:.4} (|diff| {d:.4}, tol {tol})"));
    }
}

fn mm(lambda: f64, b: usize, policy: PolicyKind, n: u64, seed: u64) -> SimConfig {
    SimConfig::markovian(lambda, 1.0, b, policy, Horizon::Deliveries(n), seed).unwrap()
}

fn p(lambda: f64, b: usize) -> AnalyticParams {
    AnalyticParams::new(lambda, 1.0, b).unwrap()
}

fn sweep(text: String) -> Vec<SummaryRow> {
    run_experiment(&ExperimentConfig::from_toml_str(&text).unwrap()).unwrap().summary
}

fn find<'a>(rows: &'a [SummaryRow], policy: &str, lambda: f64, eps: f64) -> &'a SummaryRow {
    rows.iter()
        .find(|r| r.policy == policy && (r.lambda - lambda).abs() < 1e-9 && (r.epsilon - eps).abs() < 1e-9)
        .unwrap_or_else(|| panic!("no row for {policy} at {lambda}, {eps}"))
}

fn below(x: f64, reference: f64) -> f64 {
    100.0 * (reference - x) / reference
}

/// KF, IaA and KO summaries at λ = 2 and 10³ (5 × 10⁶ deliveries each),
/// shared by several criteria.
struct Shared {
    lam2: Vec<SummaryRow>,
    lam1000: Vec<SummaryRow>,
    normalized_wait: f64,
}

fn shared() -> Shared {
    let lam2 = sweep(format!(
        "name='c5a'\npolicies=['keep-old','keep-fresh','iaa']\nsweep='lambda'\nvalues=[2.0]\n\
         replications=5\ndeliveries=1000000\nseed={SEED}\n"
    ));
    let lam1000 = sweep(format!(
        "name='c5b'\npolicies=['keep-fresh','iaa']\nsweep='lambda'\nvalues=[1000.0]\n\
         replications=5\ndeliveries=1000000\nseed={SEED}\n"
    ));
    // waiting-time statistics are not part of result rows; one more run
    let out = simulate(&mm(1000.0, 1, PolicyKind::Iaa, 1_000_000, SEED)).unwrap();
    Shared {
        lam2,
        lam1000,
        normalized_wait: out.stats.waits.normalized_wait(),
    }
}

fn criterion_1() -> Criterion {
    let mut c = Criterion::default();
    for lambda in [0.5, 1.0, 2.0, 4.0] {
        let a = p(lambda, 1);
        for (policy, age, re) in [
            (PolicyKind::KeepOld, peak_age_ko_mm12(&a).unwrap(), re_ko_mm12(&a).unwrap()),
            (PolicyKind::KeepFresh, peak_age_kf_mm12(&a).unwrap(), re_kf_mm12(&a).unwrap()),
        ] {
            let row = run_single(&mm(lambda, 1, policy, 1_000_000, SEED), false).unwrap();
            assert!(row.deliveries >= 1_000_000);
            c.rel(&format!("{policy} λ={lambda} age"), row.avg_peak_age, age, 0.02);
            c.rel(&format!("{policy} λ={lambda} RE"), row.avg_re, re, 0.02);
        }
    }
    c
}

fn criterion_2() -> Criterion {
    let mut c = Criterion::default();
    for lambda in [0.9, 2.0] {
        for b in [1, 2, 4, 8] {
            let a = p(lambda, b);
            for (policy, age, re) in [
                (PolicyKind::KeepOld, peak_age_ko_b(&a).unwrap(), re_ko_b(&a).unwrap()),
                (PolicyKind::KeepFresh, peak_age_kf_b(&a).unwrap(), re_kf_b(&a).unwrap()),
            ] {
                let row = run_single(&mm(lambda, b, policy, 1_000_000, SEED), false).unwrap();
                c.rel(&format!("{policy} λ={lambda} B={b} age"), row.avg_peak_age, age, 0.02);
                c.rel(&format!("{policy} λ={lambda} B={b} RE"), row.avg_re, re, 0.02);
            }
        }
    }
    c
}

fn criterion_3() -> Criterion {
    let mut c = Criterion::default();
    let mut worst = 0.0f64;
    let grid: Vec<f64> = [0.25, 0.5, 0.9, 1.1, 2.0, 4.0]
        .into_iter()
        .chain((1..=40).map(|k| 0.1 * k as f64 + 0.05))
        .collect();
    for &lambda in &grid {
        let a = p(lambda, 1);
        let pairs = [
            (peak_age_ko_b(&a), peak_age_ko_mm12(&a)),
            (re_ko_b(&a), re_ko_mm12(&a)),
            (peak_age_kf_b(&a), peak_age_kf_mm12(&a)),
            (re_kf_b(&a), re_kf_mm12(&a)),
        ];
        for (x, y) in pairs {
            let (x, y) = (x.unwrap(), y.unwrap());
            worst = worst.max((x / y - 1.0).abs());
        }
    }
    c.check(worst <= 1e-9, format!("max relative gap over {} λ values: {worst:.2e}", grid.len()));
    c
}

fn criterion_4(s: &Shared) -> Criterion {
    let mut c = Criterion::default();
    let iaa = find(&s.lam1000, "iaa", 1000.0, 0.0);
    c.rel("IaA λ=1000 age", iaa.peak_age_mean, peak_age_iaa_asymptote(1.0), 0.01);
    let t = Instant::now();
    let m = iaa_invariant_measure(1 << 14, 1e-10).unwrap();
    c.abs(
        &format!("invariant mean ({} bins, {} iterations, {:.0?})", m.bins(), m.iterations, t.elapsed()),
        m.mean,
        0.375,
        0.005,
    );
    c.abs("normalized wait vs invariant mean", s.normalized_wait, m.mean, 0.01);
    c
}

fn criterion_5(s: &Shared) -> Criterion {
    let mut c = Criterion::default();
    for (rows, lambda, age_claim, re_claim) in [(&s.lam2, 2.0, 6.64, 6.46), (&s.lam1000, 1000.0, 15.63, 16.92)] {
        let kf = find(rows, "keep-fresh", lambda, 0.0);
        let iaa = find(rows, "iaa", lambda, 0.0);
        let age = below(kf.peak_age_mean, iaa.peak_age_mean);
        let re = below(iaa.re_mean, kf.re_mean);
        c.abs(&format!("λ={lambda} KF age below IaA (%)"), age, age_claim, 2.0);
        c.abs(&format!("λ={lambda} IaA RE below KF (%)"), re, re_claim, 2.0);
    }
    c
}

fn criterion_6(s: &Shared) -> Criterion {
    let mut c = Criterion::default();
    let eps: Vec<String> = (0..=12).map(|k| format!("{:.1}", 0.1 * k as f64)).collect();
    let eps = eps.join(",");
    for (lambda, reps, n, want) in [(2.0, 5, 1_000_000, 0.6), (1000.0, 3, 200_000, 0.4)] {
        let rows = sweep(format!(
            "name='c6'\npolicies=['th-iaa']\nlambda={lambda}\nsweep='epsilon'\nvalues=[{eps}]\n\
             replications={reps}\ndeliveries={n}\nseed={SEED}\n"
        ));
        let best = rows.iter().min_by(|a, b| a.re_mean.total_cmp(&b.re_mean)).unwrap();
        c.abs(&format!("λ={lambda} argmin-RE ε"), best.epsilon, want, 0.2);
        if lambda == 2.0 {
            let th = find(&rows, "th-iaa", 2.0, 0.6);
            let kf = find(&s.lam2, "keep-fresh", 2.0, 0.0);
            let age = -below(th.peak_age_mean, kf.peak_age_mean);
            let re = below(th.re_mean, kf.re_mean);
            c.known((age - 14.38).abs() <= 2.0, format!("Th(0.6) age above KF (%): {age:.2} vs 14.38 (tol 2)"));
            c.known((re - 16.83).abs() <= 2.0, format!("Th(0.6) RE below KF (%): {re:.2} vs 16.83 (tol 2)"));
        }
    }
    c
}

fn criterion_7() -> Criterion {
    let mut c = Criterion::default();
    let samples = [1.0, 3.0];
    let grid = fine_grid(&samples, 0.01, 100).unwrap();
    let mut stream = RngStream::new(SEED, 7);
    let paths = 40_000;
    let mut sum = 0.0;
    for _ in 0..paths {
        let path = generate_path(&grid, &mut stream).unwrap();
        sum += mc_integrated_squared_error(&path, &samples).unwrap();
    }
    c.rel(&format!("mean ISE over {paths} paths, intervals 1 and 2"), sum / paths as f64, 5.0 / 6.0, 0.02);

    let n = 100_000;
    let mut sq = 0.0;
    for _ in 0..n {
        let coarse = generate_path(&samples, &mut stream).unwrap();
        let fine = refine_path(&coarse, 1.0, &mut stream).unwrap();
        let mid = fine.values[fine.times.iter().position(|&t| t == 2.0).unwrap()];
        let r = mid - 0.5 * (coarse.values[0] + coarse.values[1]);
        sq += r * r;
    }
    c.rel("bridge midpoint variance on [1, 3]", sq / n as f64, 0.5, 0.03);

    for (lambda, b, policy) in [
        (2.0, 1, PolicyKind::KeepFresh),
        (2.0, 2, PolicyKind::Iaa),
        (0.9, 4, PolicyKind::KeepOld),
        (4.0, 1, PolicyKind::ThresholdIaa { epsilon: 0.6 }),
    ] {
        let trace = simulate(&mm(lambda, b, policy, 200_000, SEED)).unwrap().trace;
        let formula = reconstruction_error(&trace).unwrap().avg_re;
        let mc = end_to_end_reconstruction_error(&trace, 100, &mut stream).unwrap();
        c.rel(&format!("end-to-end MC RE {policy} λ={lambda} B={b}"), mc, formula, 0.03);
    }
    c
}

fn criterion_8(s: &Shared) -> Criterion {
    let mut c = Criterion::default();
    let policies = [
        PolicyKind::KeepOld,
        PolicyKind::KeepFresh,
        PolicyKind::Iaa,
        PolicyKind::ThresholdIaa { epsilon: 0.6 },
    ];

    let (mut conserved, mut deterministic) = (true, true);
    for (i, policy) in policies.iter().enumerate() {
        for b in [1, 3] {
            let config = SimConfig {
                record_packets: true,
                ..mm(1.7, b, *policy, 100_000, SEED + i as u64)
            };
            let out = simulate(&config).unwrap();
            let st = &out.stats;
            let t = &out.trace;
            conserved &= st.total_generated == st.total_delivered + st.total_dropped + st.in_system_at_end;
            conserved &= t.generated_count + st.in_system_at_start == t.delivered_count() + t.dropped_count + st.in_system_at_end;
            let recs = out.records.as_ref().unwrap();
            conserved &= recs.iter().filter(|r| r.fate == Fate::InSystem).count() as u64 == st.in_system_at_end;
            deterministic &= simulate(&config).unwrap() == out;
        }
    }
    c.check(conserved, "packet conservation, 4 policies × B ∈ {1, 3}".into());
    c.check(deterministic, "bit-identical reruns, 4 policies × B ∈ {1, 3}".into());

    for b in [1, 3] {
        let want = lambda_eff(&p(2.0, b));
        let mut worst = 0.0f64;
        for policy in policies {
            let t = simulate(&mm(2.0, b, policy, 1_000_000, SEED)).unwrap().trace;
            let rate = t.delivered_count() as f64 / (t.end_time - t.window_start);
            worst = worst.max((rate / want - 1.0).abs());
        }
        c.check(worst <= 0.01, format!("λ_eff policy independence B={b}: worst rel {:.3}% (tol 1%)", 100.0 * worst));
    }

    let out = simulate(&mm(1.5, 3, PolicyKind::Iaa, 1_000_000, SEED)).unwrap();
    let seen = out.stats.arrival_occupancy_distribution();
    let time = out.stats.time_average_occupancy();
    let gap = seen.iter().zip(&time).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    c.check(gap <= 0.01, format!("PASTA, IaA λ=1.5 B=3: max |arrival − time| occupancy {gap:.4} (tol 0.01)"));

    // victim-for-victim on random full-buffer snapshots
    let mut runner = TestRunner::new(PropConfig { cases: 2000, failure_persistence: None, ..PropConfig::default() });
    let strategy = (1usize..6, proptest::collection::vec(0.001..3.0f64, 12), proptest::collection::vec(0.001..3.0f64, 0..4));
    let same = runner
        .run(&strategy, |(b, gaps, delivered_gaps)| {
            let mut t = 0.0;
            let delivered: Vec<f64> = delivered_gaps.iter().map(|g| { t += g; t }).collect();
            let times: Vec<f64> = gaps[..b + 2].iter().map(|g| { t += g; t }).collect();
            let (t_s, buf, t_n) = (times[0], &times[1..=b], times[b + 1]);
            let mut prior = Vec::new();
            fill_predecessors(t_s, buf, t_n, |g| delivered.iter().copied().filter(|&d| d < g).reduce(f64::max), &mut prior);
            let ctx = DropContext { in_service_gen: t_s, buffered_gen: buf, new_gen: t_n, last_prior_gen: &prior };
            proptest::prop_assert_eq!(
                PolicyKind::ThresholdIaa { epsilon: 0.0 }.decide(&ctx),
                PolicyKind::Iaa.decide(&ctx)
            );
            Ok(())
        })
        .is_ok();
    let mut fates_match = true;
    for b in [1, 2, 4] {
        let run = |policy| {
            let config = SimConfig { record_packets: true, ..mm(3.0, b, policy, 50_000, SEED) };
            simulate(&config).unwrap().records.unwrap()
        };
        fates_match &= run(PolicyKind::Iaa) == run(PolicyKind::ThresholdIaa { epsilon: 0.0 });
    }
    c.check(same && fates_match, "Th-IaA(0) ≡ IaA: 2000 random snapshots and per-packet fates for B ∈ {1, 2, 4}".into());

    let get = |pol: &str| find(&s.lam2, pol, 2.0, 0.0);
    let (ko, kf, iaa) = (get("keep-old"), get("keep-fresh"), get("iaa"));
    c.check(
        kf.peak_age_mean < iaa.peak_age_mean && iaa.peak_age_mean < ko.peak_age_mean,
        format!("age order KF < IaA < KO at λ=2: {:.4} < {:.4} < {:.4}", kf.peak_age_mean, iaa.peak_age_mean, ko.peak_age_mean),
    );
    c.check(
        iaa.re_mean < kf.re_mean && kf.re_mean < ko.re_mean,
        format!("RE order IaA < KF < KO at λ=2: {:.4} < {:.4} < {:.4}", iaa.re_mean, kf.re_mean, ko.re_mean),
    );
    c
}

fn criterion_9() -> Criterion {
    let mut c = Criterion::default();
    let alpha = 3.5;
    let x_m: Vec<String> = [1.0, 2.0, 4.0].iter().map(|l| format!("{}", (alpha - 1.0) / (alpha * l))).collect();
    let setups = [
        ("log-normal service", "service='lognormal'\nsweep='lambda'\nvalues=[1.0,2.0,4.0]".to_string()),
        ("Erlang-2 arrivals", "arrival='erlang2'\nsweep='lambda'\nvalues=[1.0,2.0,4.0]".to_string()),
        ("Pareto arrivals", format!("arrival='pareto'\npareto_alpha={alpha}\nsweep='x_m'\nvalues=[{}]", x_m.join(","))),
    ];
    for (label, body) in setups {
        let rows = sweep(format!(
            "name='c9'\npolicies=['keep-old','keep-fresh','iaa']\n{body}\nreplications=3\ndeliveries=200000\nseed={SEED}\n"
        ));
        let mut lambdas: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
        lambdas.sort_by(f64::total_cmp);
        lambdas.dedup();
        for lambda in lambdas {
            let get = |pol: &str| find(&rows, pol, lambda, 0.0);
            let (ko, kf, iaa) = (get("keep-old"), get("keep-fresh"), get("iaa"));
            c.check(
                iaa.re_mean < kf.re_mean && iaa.re_mean < ko.re_mean,
                format!("{label} λ={lambda:.2}: IaA RE lowest ({:.4} vs KF {:.4}, KO {:.4})", iaa.re_mean, kf.re_mean, ko.re_mean),
            );
            c.check(
                kf.peak_age_mean < iaa.peak_age_mean && kf.peak_age_mean < ko.peak_age_mean,
                format!("{label} λ={lambda:.2}: KF age lowest ({:.4} vs IaA {:.4}, KO {:.4})", kf.peak_age_mean, iaa.peak_age_mean, ko.peak_age_mean),
            );
        }
    }
    c
}

fn report(n: usize, c: Criterion, started: Instant) -> bool {
    for ch in &c.checks {
        let tag = match (ch.ok, ch.known) {
            (true, _) => "ok",
            (false, true) => "known-fail",
            (false, false) => "FAIL",
        };
        println!("    [{tag}] {}", ch.text);
    }
    let unexpected = c.checks.iter().any(|ch| !ch.ok && !ch.known);
    let known = c.checks.iter().any(|ch| !ch.ok && ch.known);
    let verdict = if unexpected || known { "FAIL" } else { "PASS" };
    let note = if known && !unexpected { "; remaining targets not reproducible, see README" } else { "" };
    println!(
        "criterion {n}: {verdict} ({}/{} checks, {:.1?}{note})",
        c.checks.iter().filter(|ch| ch.ok).count(),
        c.checks.len(),
        started.elapsed()
    );
    !unexpected
}

fn main() {
    let mut all_ok = true;
    let t = Instant::now();
    all_ok &= report(1, criterion_1(), t);
    let t = Instant::now();
    all_ok &= report(2, criterion_2(), t);
    let t = Instant::now();
    all_ok &= report(3, criterion_3(), t);
    let t = Instant::now();
    let s = shared();
    println!("    shared λ=2 and λ=1000 runs: {:.1?}", t.elapsed());
    let t = Instant::now();
    all_ok &= report(4, criterion_4(&s), t);
    let t = Instant::now();
    all_ok &= report(5, criterion_5(&s), t);
    let t = Instant::now();
    all_ok &= report(6, criterion_6(&s), t);
    let t = Instant::now();
    all_ok &= report(7, criterion_7(), t);
    let t = Instant::now();
    all_ok &= report(8, criterion_8(&s), t);
    let t = Instant::now();
    all_ok &= report(9, criterion_9(), t);
    if !all_ok {
        eprintln!("acceptance: unexpected failures");
        std::process::exit(1);
    }
}
