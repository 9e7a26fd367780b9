//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Built with `harness = false` so the report is printed on every run.

mod common;

use std::time::Instant;

use common::*;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use richq_core::belief::{joint_update_vectors, label_update, ranking_update_vectors, GaussianBelief, UpdateSettings};
use richq_core::dataset::{fit_gumbel, EmbeddedItem, GroundTruth, Gumbel, GumbelFlavor, ScoreStats};
use richq_core::harness::{
    export_trace, interactions_to_mse, run_experiment, Experiment, ExperimentConfig, ExperimentOutcome, Learner,
};
use richq_core::policy::{
    estimate_info_ratios, fit_cost_model, predict_cost, select_query_config, CostModel, CostObservation,
    InfoRateTable, RatioEstimate, RatioSettings,
};
use richq_core::response::{response_likelihood, Label, Query, QueryKind, Response, ResponseParams};
use richq_core::selection::DisagreementSettings;
use richq_core::session::SessionManager;
use richq_core::simulate::{AnnotatorMode, SimulatedAnnotator};
use richq_core::theory::{stopping_bounds, BoundInput};

struct Outcome {
    pass: bool,
    detail: String,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn synthetic(seed: u64, dim: usize, kind: &str, size: usize, stop: &str, extra: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        "seed = {seed}\n{stop}\n{extra}\n\
         [pool]\nsource = \"synthetic\"\ndim = {dim}\nitems = 500\n\
         [policy]\ntype = \"fixed\"\nkind = \"{kind}\"\nset_size = {size}\n"
    ))
    .expect("valid config")
}

fn runs(seeds: std::ops::Range<u64>, f: impl Fn(u64) -> ExperimentConfig) -> Vec<ExperimentOutcome> {
    seeds
        .map(|s| {
            let out = run_experiment(&f(s)).expect("experiment runs");
            assert!(out.error.is_none(), "seed {s}: {:?}", out.error);
            out
        })
        .collect()
}

// 1 ----------------------------------------------------------------------

fn posterior_fidelity() -> Outcome {
    const LIMIT: f64 = 0.15;
    // unit annotator scale: |w| = a/sigma = 1
    let (w, k) = (-1.0, 1.0);
    let settings = UpdateSettings::default();
    let prior = GaussianBelief::isotropic(2, 1.0).expect("prior");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let names = ["label", "select|2", "select|3", "select|4", "rank|2", "rank|3"];
    let mut worst = [0.0_f64; 6];
    for _ in 0..10 {
        let xs: Vec<DVector<f64>> = (0..4).map(|_| circle_item(rng.random_range(0.0..std::f64::consts::TAU))).collect();
        let positive = rng.random_bool(0.5);
        let y = if positive { Label::Positive } else { Label::Negative };

        let q = label_update(&prior, &xs[0], y, w, &settings).expect("label update");
        let p = grid_posterior(|a, b| log_label(xs[0][0] * a + xs[0][1] * b, w, positive));
        worst[0] = worst[0].max(kl_gaussian_to_grid(q.mu(), q.sigma(), &p));

        let pick = rng.random_range(0..4usize);
        for n in 2..=4 {
            let i = pick % n;
            let refs: Vec<_> = xs[..n].iter().collect();
            let q = joint_update_vectors(&prior, &refs, i, y, w, k, &settings).expect("selection update");
            let p = grid_posterior(|a, b| {
                let z: Vec<f64> = xs[..n].iter().map(|x| x[0] * a + x[1] * b).collect();
                log_choice(&z, i, k) + log_label(z[i], w, positive)
            });
            worst[n - 1] = worst[n - 1].max(kl_gaussian_to_grid(q.mu(), q.sigma(), &p));
        }
        for n in 2..=3 {
            let refs: Vec<_> = xs[..n].iter().collect();
            let mut order: Vec<usize> = (0..n).collect();
            for j in (1..n).rev() {
                order.swap(j, rng.random_range(0..=j));
            }
            let ell = rng.random_range(0..=n);
            let q = ranking_update_vectors(&prior, &refs, &order, ell, w, k, &settings).expect("ranking update");
            let p = grid_posterior(|a, b| {
                let z: Vec<f64> = xs[..n].iter().map(|x| x[0] * a + x[1] * b).collect();
                log_plackett_luce(&z, &order, k)
                    + order.iter().enumerate().map(|(j, &i)| log_label(z[i], w, j < ell)).sum::<f64>()
            });
            worst[n + 2] = worst[n + 2].max(kl_gaussian_to_grid(q.mu(), q.sigma(), &p));
        }
    }
    let detail = names.iter().zip(&worst).map(|(n, v)| format!("{n} {v:.3}")).collect::<Vec<_>>().join(", ");
    Outcome { pass: worst.iter().all(|&v| v <= LIMIT), detail: format!("max KL over 10 draws: {detail} (limit {LIMIT})") }
}

// 2 ----------------------------------------------------------------------

fn item(id: usize, x: DVector<f64>) -> EmbeddedItem<f64> {
    EmbeddedItem::new(format!("i{id}"), format!("item {id}"), x, ScoreStats { mean: None, var: 0.0, samples: None })
}

fn normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let normal = Normal::new(0.0, 1.5).expect("normal");
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let dim = rng.random_range(2..=4);
        let theta = DVector::from_fn(dim, |_, _| normal.sample(&mut rng));
        let params = ResponseParams::new(rng.random_range(-3.0..3.0), rng.random_range(0.1..3.0), rng.random_range(0.2..2.0))
            .expect("params");
        for kind in QueryKind::ALL {
            let sizes = if kind == QueryKind::Label { 1..=1 } else { 2..=3 };
            for n in sizes {
                let items = (0..n).map(|i| item(i, DVector::from_fn(dim, |_, _| normal.sample(&mut rng)))).collect();
                let q = Query::new(kind, items).expect("query");
                let mut outcomes = Vec::new();
                for y in [Label::Positive, Label::Negative] {
                    match kind {
                        QueryKind::Label => outcomes.push(Response::Label { y }),
                        QueryKind::SelectHigh | QueryKind::SelectLow => {
                            outcomes.extend((0..n).map(|index| Response::Selection { index, y }))
                        }
                        QueryKind::Rank => {}
                    }
                }
                if kind == QueryKind::Rank {
                    for order in all_permutations(n) {
                        outcomes.extend((0..=n).map(|threshold| Response::Ranking { order: order.clone(), threshold }));
                    }
                }
                let total: f64 =
                    outcomes.iter().map(|r| response_likelihood(r, &q, &theta, &params).expect("likelihood")).sum();
                worst = worst.max((total - 1.0).abs());
            }
        }
    }
    Outcome { pass: worst <= 1e-9, detail: format!("max |sum - 1| = {worst:.2e} over 100 draws x all kinds, |S| <= 3 (limit 1e-9)") }
}

// 3 ----------------------------------------------------------------------

fn simulation_agreement() -> Outcome {
    let trials = 20000;
    let (a, b, scale) = (1.3, 0.2, 0.6);
    let gt = GroundTruth::new(DVector::from_vec(vec![0.3, 0.8, -0.5]), None).expect("gt");
    let noise = Gumbel::new(GumbelFlavor::Max, 0.0, scale).expect("gumbel");
    let mode = AnnotatorMode::GumbelScore { a, b, noise, mirror_for_low: true };
    let mut worst_z = 0.0_f64;
    for n in [2usize, 4] {
        let angles: [f64; 4] = [0.3, 1.9, 3.4, 5.0];
        let items: Vec<_> = (0..n)
            .map(|i| item(i, DVector::from_vec(vec![1.0, angles[i].cos(), angles[i].sin()])))
            .collect();
        let z: Vec<f64> = items.iter().map(|it| gt.theta.dot(&it.x)).collect();
        let q = Query::new(QueryKind::SelectHigh, items).expect("query");
        let mut ann = SimulatedAnnotator::new(mode.clone(), gt.clone(), b, 30 + n as u64);
        let mut counts = vec![0usize; n];
        for _ in 0..trials {
            match ann.simulate_answer(&q).expect("answer") {
                Response::Selection { index, .. } => counts[index] += 1,
                other => panic!("unexpected {other:?}"),
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            let p = log_choice(&z, i, a / scale).exp();
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            worst_z = worst_z.max((c as f64 / trials as f64 - p).abs() / se);
        }
    }
    Outcome { pass: worst_z <= 3.0, detail: format!("max |freq - softmax| = {worst_z:.2} standard errors, |S| in {{2, 4}}, {trials} trials") }
}

// 4 ----------------------------------------------------------------------

fn sample_complexity() -> Outcome {
    let seeds = 0..10;
    let hits = |kind: &str, size: usize, cap: usize| -> Vec<f64> {
        runs(seeds.clone(), |s| synthetic(s, 10, kind, size, &format!("max_interactions = {cap}"), ""))
            .iter()
            .map(|o| interactions_to_mse(&o.records, 0.5).map_or(f64::INFINITY, |t| t as f64))
            .collect()
    };
    let label = median(hits("label", 1, 300));
    let select = median(hits("select", 4, 150));
    let rank = median(hits("rank", 4, 60));
    let at_200 = |selection: &str| -> Vec<f64> {
        runs(seeds.clone(), |s| {
            synthetic(s, 10, "select", 4, "max_interactions = 200", &format!("item_selection = \"{selection}\""))
        })
        .iter()
        .map(|o| o.records[199].mse_to_gt)
        .collect()
    };
    let active = median(at_200("active"));
    let random = median(at_200("random"));
    let ordered = rank < select && select < label && rank <= 0.5 * label;
    Outcome {
        pass: ordered && active < random,
        detail: format!(
            "median interactions to mse <= 0.5: rank|4 {rank}, select|4 {select}, label {label}; \
             mse@200 select|4 active {active:.4} vs random {random:.4}"
        ),
    }
}

// 5 ----------------------------------------------------------------------

fn set_size_effect() -> Outcome {
    let at_300 = |size: usize| -> f64 {
        median(
            runs(0..10, |s| synthetic(s, 10, "select", size, "max_interactions = 300", ""))
                .iter()
                .map(|o| o.records[299].mse_to_gt)
                .collect(),
        )
    };
    let (small, large) = (at_300(2), at_300(10));
    Outcome { pass: large < small, detail: format!("median mse@300: |S|=10 {large:.4} vs |S|=2 {small:.4}") }
}

// 6 ----------------------------------------------------------------------

fn theorem_bracket() -> Outcome {
    let eps = 0.05;
    let mut lines = Vec::new();
    let mut pass = true;
    for (kind, name, size, qk) in
        [("label", "label", 1, QueryKind::Label), ("select", "select|4", 4, QueryKind::SelectHigh), ("rank", "rank|4", 4, QueryKind::Rank)]
    {
        let outs = runs(0..10, |s| synthetic(s, 2, kind, size, &format!("epsilon = {eps}\nmax_interactions = 5000"), ""));
        let censored = outs.iter().filter(|o| o.records.len() >= 5000).count();
        let mean = outs.iter().map(|o| o.records.len() as f64).sum::<f64>() / outs.len() as f64;
        // theta lives in R^3 for the d = 2 task
        let input = BoundInput { d: 3, m: 1.0, epsilon: eps, kind: qk, set_size: size, l: 1.0 };
        let lower = stopping_bounds(&input).expect("bounds").lower;
        pass &= mean >= lower && censored == 0;
        lines.push(format!("{name} mean T {mean:.1} >= {lower:.2}"));
    }
    // monotone: non-decreasing in d, non-increasing in N
    let mut monotone = true;
    for &m in &[0.75, 1.0, 2.0] {
        for &e in &[1e-3, 0.01, 0.05, 0.1, 0.3] {
            for d in 1..30 {
                let mut prev_n: Option<(f64, f64)> = None;
                let mut cells: Vec<(f64, BoundInput)> = Vec::new();
                for (kind, sizes) in [(QueryKind::Label, 1..=1), (QueryKind::SelectHigh, 2..=10), (QueryKind::Rank, 2..=10)] {
                    for s in sizes {
                        let input = BoundInput { d, m, epsilon: e, kind, set_size: s, l: 1.0 };
                        cells.push((richq_core::theory::outcome_space_size(kind, s), input));
                    }
                }
                cells.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
                for (n, input) in &cells {
                    let here = stopping_bounds(input).expect("bounds").lower;
                    let next_d = stopping_bounds(&BoundInput { d: d + 1, ..*input }).expect("bounds").lower;
                    monotone &= next_d >= here;
                    if let Some((pn, pl)) = prev_n {
                        if *n > pn {
                            monotone &= here <= pl;
                        }
                    }
                    prev_n = Some((*n, here));
                }
            }
        }
    }
    lines.push(format!("monotone in d and N: {monotone}"));
    Outcome { pass: pass && monotone, detail: format!("d = 2, eps = {eps}, 10 seeds: {}", lines.join("; ")) }
}

// 7 ----------------------------------------------------------------------

fn cost_model() -> Outcome {
    let costs = CostModel::standard();
    let sel = predict_cost(&costs, QueryKind::SelectHigh, 4).expect("select cost");
    let rank = predict_cost(&costs, QueryKind::Rank, 4).expect("rank cost");
    let predictions_ok = (sel - 6.53).abs() < 1e-9
        && (rank - 17.32).abs() < 1e-9
        && ((sel * 10.0).round() / 10.0 - 6.5).abs() < 1e-9
        && ((rank * 10.0).round() / 10.0 - 17.3).abs() < 1e-9;

    // set-size counts of the published selection data, 1648 points in all
    let counts = [(2, 147), (3, 272), (4, 269), (5, 234), (6, 276), (7, 225), (8, 225)];
    let (b0, b1, sd) = (4.01, 0.63, 3.35);
    let generate = |seed: u64| -> Vec<CostObservation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd).expect("normal");
        let mut obs = vec![CostObservation { kind: QueryKind::Label, set_size: 1, seconds: 4.37 }];
        for &(size, n) in &counts {
            for _ in 0..n {
                let seconds = b0 + b1 * size as f64 + noise.sample(&mut rng);
                obs.push(CostObservation { kind: QueryKind::SelectHigh, set_size: size, seconds });
            }
        }
        obs
    };
    let fit_of = |seed: u64| {
        let line = fit_cost_model(&generate(seed)).expect("fit").line(QueryKind::SelectHigh).expect("line");
        (line.beta0, line.beta1)
    };
    let (f0, f1) = fit_of(0);
    let within = |(a, b): (f64, f64)| (a - b0).abs() <= 0.1 && (b - b1).abs() <= 0.1;
    let coverage = (1..=200).filter(|&s| within(fit_of(s))).count() as f64 / 200.0;
    Outcome {
        pass: predictions_ok && within((f0, f1)),
        detail: format!(
            "select|4 {sel:.2}s, rank|4 {rank:.2}s; fit on n=1648 (seed 0): beta0 {f0:.3} (target 4.01), \
             beta1 {f1:.3} (target 0.63), tolerance 0.1; both within tolerance in {:.0}% of 200 other seeds",
            100.0 * coverage
        ),
    }
}

// 8 ----------------------------------------------------------------------

fn rate_policy() -> Outcome {
    // probes: beliefs part-way through an active label run on the d = 10 task
    let config = synthetic(0, 10, "label", 1, "max_interactions = 300", "");
    let experiment = Experiment::prepare(&config).expect("experiment");
    let probes = experiment.belief_snapshots(&[50, 150, 300]).expect("snapshots");
    let learner = &experiment.learner;
    let mut grid = vec![(QueryKind::Label, 1)];
    for kind in [QueryKind::SelectHigh, QueryKind::Rank] {
        grid.extend((2..=10).map(|s| (kind, s)));
    }
    let settings = RatioSettings {
        committee_size: 50,
        candidates: Some(60),
        disagreement: DisagreementSettings { exact_rank_max: 5, mc_draws: 50, seed: 8 },
        seed: 8,
    };
    let ratios = estimate_info_ratios(&learner.pool, &probes, &grid, &learner.params, &settings).expect("ratios");

    let oracle = |table: &InfoRateTable| {
        table.rows.iter().max_by(|a, b| (a.ratio / a.cost).partial_cmp(&(b.ratio / b.cost)).expect("finite")).map(|r| (r.kind, r.set_size))
    };
    let default_table = InfoRateTable::from_ratios(&ratios, &CostModel::standard());
    let chosen = select_query_config(&default_table).expect("choice");
    let rank_dominates = oracle(&default_table) == Some((QueryKind::Rank, 10));

    let alt = CostModel::read_csv(&include_bytes!("fixtures/alt_costs.csv")[..]).expect("fixture");
    let alt_table = InfoRateTable::from_ratios(&ratios, &alt);
    let alt_chosen = select_query_config(&alt_table).expect("alt choice");

    let scaled = |r: &[RatioEstimate], c: f64| -> Vec<RatioEstimate> {
        r.iter().map(|e| RatioEstimate { ratio: e.ratio * c, ..*e }).collect()
    };
    let mut invariant = true;
    for &c in &[0.37, 2.0, 7.3, 1e3] {
        invariant &= select_query_config(&InfoRateTable::from_ratios(&scaled(&ratios, c), &CostModel::standard())).ok() == Some(chosen);
        let mut costs = CostModel::standard();
        for line in costs.lines.values_mut() {
            line.beta0 *= c;
            line.beta1 *= c;
        }
        invariant &= select_query_config(&InfoRateTable::from_ratios(&ratios, &costs)).ok() == Some(chosen);
    }
    let rate = |k: QueryKind, s: usize| default_table.rows.iter().find(|e| e.kind == k && e.set_size == s).map_or(f64::NAN, |e| e.rate);
    let best_select = (2..=10).max_by(|&a, &b| rate(QueryKind::SelectHigh, a).total_cmp(&rate(QueryKind::SelectHigh, b))).expect("sizes");
    Outcome {
        pass: oracle(&default_table) == Some(chosen)
            && rank_dominates
            && chosen == (QueryKind::Rank, 10)
            && alt_chosen == (QueryKind::SelectHigh, 2)
            && invariant,
        detail: format!(
            "default costs -> {} |S|={} (ratio/s: rank|10 {:.3}, best select |S|={best_select} {:.3}, label {:.3}; \
             ranking dominates: {rank_dominates}); alternate costs -> {} |S|={}; scale invariance {invariant}",
            chosen.0,
            chosen.1,
            rate(QueryKind::Rank, 10),
            rate(QueryKind::SelectHigh, best_select),
            rate(QueryKind::Label, 1),
            alt_chosen.0,
            alt_chosen.1
        ),
    }
}

// 9 ----------------------------------------------------------------------

fn gumbel_diagnostics() -> Outcome {
    let g = Gumbel::new(GumbelFlavor::Max, 0.4, 1.7).expect("gumbel");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sample: Vec<f64> = (0..5000).map(|_| g.sample(&mut rng)).collect();
    let fit = fit_gumbel(&sample, GumbelFlavor::Max).expect("fit");
    let (shift, scale) = (3.25, 2.5);
    let shifted = fit_gumbel(&sample.iter().map(|v| v + shift).collect::<Vec<_>>(), GumbelFlavor::Max).expect("fit");
    let scaled = fit_gumbel(&sample.iter().map(|v| v * scale).collect::<Vec<_>>(), GumbelFlavor::Max).expect("fit");
    let err = [
        (shifted.location - (fit.location + shift)).abs(),
        (shifted.scale - fit.scale).abs(),
        (scaled.location - fit.location * scale).abs(),
        (scaled.scale - fit.scale * scale).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Outcome {
        pass: fit.ks_statistic <= 0.05 && err <= 1e-6,
        detail: format!("KS {:.4} (limit 0.05) on 5000 samples; equivariance error {err:.1e} (limit 1e-6)", fit.ks_statistic),
    }
}

// 10 ---------------------------------------------------------------------

fn determinism_and_replay() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut identical = true;
    for (kind, size) in [("label", 1), ("select", 3), ("rank", 3)] {
        let cfg = synthetic(42, 4, kind, size, "max_interactions = 25", "committee_size = 16");
        let mut bytes = Vec::new();
        for copy in 0..2 {
            let path = dir.path().join(format!("{kind}-{copy}.jsonl"));
            export_trace(&run_experiment(&cfg).expect("run").records, &path).expect("export");
            bytes.push(std::fs::read(&path).expect("read"));
        }
        identical &= bytes[0] == bytes[1] && !bytes[0].is_empty();
    }

    let manager = SessionManager::new();
    let mut exact = true;
    for (kind, size) in [("select", 3), ("rank", 4), ("label", 1)] {
        let cfg = synthetic(7, 4, kind, size, "max_interactions = 12", "committee_size = 16");
        let learner = Learner::from_config(&cfg).expect("learner");
        let truth = learner.truth.clone().expect("synthetic truth");
        let mut annotator = SimulatedAnnotator::new(truth.mode, truth.gt, truth.label_threshold, 3);
        let id = manager.create_with_config(&cfg).expect("session");
        for _ in 0..12 {
            let view = manager.next_query(&id).expect("query");
            let items: Vec<_> = view.items.iter().map(|v| learner.pool.get(learner.pool.index_of(&v.id).expect("id")).expect("item").clone()).collect();
            let answer = annotator.simulate_answer(&Query::new(view.kind, items).expect("query")).expect("answer");
            let payload = match answer {
                Response::Label { y } => serde_json::json!({ "y": y }),
                Response::Selection { index, y } => serde_json::json!({ "index": index, "y": y }),
                Response::Ranking { order, threshold } => serde_json::json!({ "order": order, "threshold": threshold }),
            };
            manager.submit_response(&id, &view.query_id, &payload, 1200).expect("answer accepted");
        }
        let live = manager.snapshot(&id).expect("snapshot").belief;
        let replayed = manager.replay(&id).expect("replay");
        let bits = |b: &GaussianBelief<f64>| -> Vec<u64> {
            b.mu().iter().chain(b.sigma().iter()).map(|v| v.to_bits()).collect()
        };
        exact &= bits(&live) == bits(&replayed);
    }
    Outcome {
        pass: identical && exact,
        detail: format!("byte-identical traces for label/select/rank: {identical}; replayed session beliefs bit-identical: {exact}"),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("posterior fidelity", posterior_fidelity),
        ("likelihood normalization", normalization),
        ("simulation-model agreement", simulation_agreement),
        ("sample-complexity ordering", sample_complexity),
        ("set-size effect", set_size_effect),
        ("stopping-time bracket", theorem_bracket),
        ("cost model", cost_model),
        ("rate policy", rate_policy),
        ("gumbel diagnostics", gumbel_diagnostics),
        ("determinism and replay", determinism_and_replay),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {verdict} {name} ({:.1}s): {}", i + 1, start.elapsed().as_secs_f64(), outcome.detail);
        failed += usize::from(!outcome.pass);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
