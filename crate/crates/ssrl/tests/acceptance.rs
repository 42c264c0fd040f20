//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use ssrl::cli::{cmd_synth, resolve, CommonArgs};
use ssrl::evaluate::run_grid;
use ssrl::pipeline::load_clean;
use ssrl_core::eval::{check_leakage, labeled_sessions, plan_folds, CellResult};
use ssrl_core::features::{FeatureStore, HashingEmbedder, SegmentKey};
use ssrl_core::fusion::fuse_session;
use ssrl_core::ingestion::{assemble_sessions, Sourced};
use ssrl_core::metrics::{bootstrap_ci, cohens_kappa, labels_from_table, roc_auc};
use ssrl_core::nn::{init_params, ClassWeights, Mode, NetworkSpec, Rows};
use ssrl_core::report::format_cell;
use ssrl_core::synth::{context_map, regions};
use ssrl_core::{seed, ActionEvent, FeatureConfig, RawAction, SsrlCode, TaskContext, Utterance};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                wins += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

/// Random scores drawn from a small pool (so ties are common) with both classes present.
fn random_instance(rng: &mut impl Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..=500);
    let levels = rng.random_range(2..=40);
    let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
    labels[0] = true;
    labels[1] = false;
    (scores, labels)
}

fn auc_oracle() -> Outcome {
    let mut rng = seed::rng(101);
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (s, y) = random_instance(&mut rng);
        worst = worst.max((roc_auc(&s, &y).unwrap() - brute_auc(&s, &y)).abs());
    }
    let elapsed = started.elapsed();
    ensure(worst <= 1e-12, || format!("max |rank - pairwise| = {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:.2?}"))?;
    Ok(format!("200 instances, max diff {worst:e}, {elapsed:.2?}"))
}

fn gradient_check() -> Outcome {
    let mut rng = seed::rng(202);
    let started = Instant::now();
    let step = 1e-6;
    let mut worst: f64 = 0.0;
    for net in 0..20 {
        let input_dim = rng.random_range(1..=8);
        let spec = NetworkSpec {
            input_dim,
            hidden_units: (rng.random_range(1..=8), rng.random_range(1..=8)),
            dropout_rate: 0.0,
            l2_coeff: 1e-3,
            learning_rate: 1e-3,
            batch_size: 16,
            max_epochs: 1,
            seed: net,
        };
        let mut params = init_params(&spec);
        params.values.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let n = rng.random_range(2..=12);
        let x: Vec<f64> = (0..n * input_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let rows = Rows::new(&x, input_dim, &y);
        let weights = ClassWeights { pos: rng.random_range(0.5..3.0), neg: rng.random_range(0.5..3.0) };
        let l2 = rng.random_range(0.0..1e-2);
        let (_, analytic) = params.loss_and_grad(&rows, weights, l2, Mode::Eval);
        for i in 0..params.values.len() {
            let mut probe = params.clone();
            probe.values[i] += step;
            let up = probe.loss_and_grad(&rows, weights, l2, Mode::Eval).0;
            probe.values[i] -= 2.0 * step;
            let down = probe.loss_and_grad(&rows, weights, l2, Mode::Eval).0;
            let numeric = (up - down) / (2.0 * step);
            let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / scale);
        }
    }
    let elapsed = started.elapsed();
    ensure(worst <= 1e-4, || format!("max relative error {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:.2?}"))?;
    Ok(format!("20 networks, max relative error {worst:.2e}, {elapsed:.2?}"))
}

const PLANTED_SEED: u64 = 42;
const TEXT_CODE: SsrlCode = SsrlCode::OffTopic;
const LOG_CODE: SsrlCode = SsrlCode::Reflecting;
const NEUTRAL_CODE: SsrlCode = SsrlCode::Planning;

/// The planted-signal grid, shared by the leakage and replication criteria.
struct PlantedRun {
    results: Vec<CellResult>,
    leakage: Outcome,
    elapsed: Duration,
}

fn planted_run(dir: &Path) -> Result<PlantedRun, String> {
    let started = Instant::now();
    let common = CommonArgs {
        seed: Some(PLANTED_SEED),
        out: Some(dir.to_path_buf()),
        data: Some(dir.to_path_buf()),
        dim: Some(64),
        budget: Some(5),
        ..CommonArgs::default()
    };
    let cfg = resolve(&common).map_err(|e| e.to_string())?;
    cmd_synth(&cfg, None).map_err(|e| e.to_string())?;
    let loaded = load_clean(&cfg).map_err(|e| e.to_string())?;
    let segments = &loaded.segments;
    let labeled_count = segments.iter().filter(|s| s.label.is_some()).count();
    eprintln!("planted data: {} sessions, {labeled_count} labeled segments", labeled_sessions(segments).len());

    let embedder = HashingEmbedder::new(64);
    let store = FeatureStore::new(segments, &embedder).map_err(|e| e.to_string())?;
    let settings = cfg.settings(PLANTED_SEED);
    let plan = plan_folds(&labeled_sessions(segments), settings.outer_folds, settings.inner_folds, PLANTED_SEED)
        .map_err(|e| e.to_string())?;
    let codes = [TEXT_CODE, LOG_CODE, NEUTRAL_CODE];
    let results = run_grid(&store, &plan, &codes, &FeatureConfig::ALL, &settings, 1).map_err(|e| e.to_string())?;

    let labeled: Vec<SegmentKey> = store.labeled_rows().into_iter().map(|r| SegmentKey::of(store.segment(r))).collect();
    let mut violations = Vec::new();
    let mut models = 0;
    for r in &results {
        match &r.outcome {
            Ok(e) => {
                models += e.audits.len();
                violations.extend(check_leakage(&plan, e, &labeled).into_iter().map(|v| format!("{} {}: {v}", r.code, r.config)));
            }
            Err(e) => violations.push(format!("{} {}: no result to audit ({e})", r.code, r.config)),
        }
    }
    let leakage = if violations.is_empty() {
        Ok(format!("{} cells, {models} fitted models audited, 0 violations", results.len()))
    } else {
        Err(format!("{} violation(s); first: {}", violations.len(), violations[0]))
    };
    Ok(PlantedRun { results, leakage, elapsed: started.elapsed() })
}

fn replication(run: &PlantedRun) -> Outcome {
    let auc = |code: SsrlCode, config: FeatureConfig| -> Result<f64, String> {
        let cell = run.results.iter().find(|r| r.code == code && r.config == config).expect("cell was run");
        cell.outcome.as_ref().map(|e| e.auc).map_err(|e| format!("{code} {config}: {e}"))
    };
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let mut check = |label: String, value: f64, ok: bool| {
        lines.push(format!("{label}={value:.4}"));
        if !ok {
            failures.push(format!("{label}={value:.4}"));
        }
    };
    let text_on_text = auc(TEXT_CODE, FeatureConfig::TextOnly)?;
    let text_on_log = auc(TEXT_CODE, FeatureConfig::LogOnly)?;
    let log_on_log = auc(LOG_CODE, FeatureConfig::LogOnly)?;
    let log_on_text = auc(LOG_CODE, FeatureConfig::TextOnly)?;
    check(format!("{TEXT_CODE}/text_only"), text_on_text, text_on_text >= 0.85);
    check(format!("{TEXT_CODE}/log_only"), text_on_log, text_on_log <= 0.65);
    check(format!("{LOG_CODE}/log_only"), log_on_log, log_on_log >= 0.85);
    check(format!("{LOG_CODE}/text_only"), log_on_text, log_on_text <= 0.65);
    for config in FeatureConfig::ALL {
        let v = auc(NEUTRAL_CODE, config)?;
        check(format!("{NEUTRAL_CODE}/{config}"), v, (v - 0.5).abs() <= 0.12);
    }
    if run.elapsed > Duration::from_secs(15 * 60) {
        failures.push(format!("took {:.0?}", run.elapsed));
    }
    let summary = format!("{}; {:.0?}", lines.join(", "), run.elapsed);
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("out of range: {}; all: {summary}", failures.join(", ")))
    }
}

fn determinism(root: &Path) -> Outcome {
    let bin = env!("CARGO_BIN_EXE_ssrl");
    let config = root.join("run.toml");
    std::fs::write(
        &config,
        "seed = 7\ndim = 32\nbudget = 2\nmax_epochs = 15\nresamples = 200\n\
         codes = [\"OFF_TOPIC\", \"REFLECTING\"]\nconfigs = [\"text_only\", \"log_only\", \"log_and_text\"]\n\
         [synth]\nn_sessions = 12\ntarget_segments = 180\n",
    )
    .map_err(|e| e.to_string())?;
    let data = root.join("data");
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
        ensure(out.status.success(), || format!("ssrl {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    };
    let cfg = config.to_str().unwrap();
    run(&["synth", "--config", cfg, "--out", data.to_str().unwrap()])?;
    let outs = [root.join("run1"), root.join("run2")];
    for (out, jobs) in outs.iter().zip(["1", "2"]) {
        run(&["evaluate", "--config", cfg, "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", jobs])?;
    }
    let files = ["evaluation_manifest.json", "results.json", "report.csv", "report.txt", "predictions.csv"];
    for f in files {
        let a = std::fs::read(outs[0].join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = std::fs::read(outs[1].join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure(a == b, || format!("{f} differs between runs"))?;
    }
    Ok(format!("{} files byte-identical across two runs (jobs 1 and 2)", files.len()))
}

fn random_session(rng: &mut impl Rng, id: &str) -> (Vec<Utterance>, Vec<ActionEvent>) {
    let contexts = [TaskContext::InitVars, TaskContext::UpdateEachStep, TaskContext::UpdateUnderCond, TaskContext::Conditionals];
    let mut t = rng.random_range(0..3_000u64);
    let mut actions = Vec::new();
    for k in 0..rng.random_range(1..=60) {
        t += rng.random_range(0..4_000);
        // the first action carries a region so the session has a context
        let raw = if k == 0 { RawAction::Add } else { RawAction::ALL[rng.random_range(0..RawAction::ALL.len())] };
        let pool = regions(contexts[rng.random_range(0..4)]);
        actions.push(ActionEvent {
            session_id: id.into(),
            t,
            block_id: format!("b{}", rng.random_range(0..20)),
            raw_action: raw,
            connected: rng.random_bool(0.6),
            region: raw.needs_region().then(|| pool[rng.random_range(0..pool.len())].to_string()),
        });
    }
    let end = t + 5_000;
    let utterances = (0..rng.random_range(0..40))
        .map(|_| {
            let start = rng.random_range(0..end);
            Utterance {
                session_id: id.into(),
                speaker_id: if rng.random_bool(0.5) { "s1" } else { "s2" }.into(),
                t_start: start,
                t_end: start + rng.random_range(0..3_000),
                text: "some words here".into(),
            }
        })
        .collect();
    (utterances, actions)
}

fn fusion_conservation() -> Outcome {
    let mut rng = seed::rng(606);
    let cmap = context_map();
    let mut segments_seen = 0;
    for s in 0..100 {
        let id = format!("R{s:03}");
        let (utterances, actions) = random_session(&mut rng, &id);
        let (n_utt, n_act) = (utterances.len(), actions.len());
        let (bundles, _) = assemble_sessions(Sourced::number(utterances), Sourced::number(actions));
        let bundle = &bundles[0];
        let segments = fuse_session(bundle, &cmap).map_err(|e| format!("{id}: {e}"))?;
        let kept_act: usize = segments.iter().map(|g| g.actions.len()).sum();
        let kept_utt: usize = segments.iter().map(|g| g.utterances.len()).sum();
        // assembly may drop exact duplicates; conservation is across segmentation
        ensure(kept_act == bundle.actions.len() && bundle.actions.len() <= n_act, || {
            format!("{id}: {kept_act} actions in segments, {} in bundle", bundle.actions.len())
        })?;
        ensure(kept_utt == bundle.utterances.len() && bundle.utterances.len() <= n_utt, || {
            format!("{id}: {kept_utt} utterances in segments, {} in bundle", bundle.utterances.len())
        })?;
        ensure(segments.windows(2).all(|w| w[0].context != w[1].context), || format!("{id}: adjacent segments share a context"))?;
        segments_seen += segments.len();
    }
    Ok(format!("100 sessions, {segments_seen} segments"))
}

fn metrics_fixtures() -> Outcome {
    let (a, b) = labels_from_table(&[vec![20, 5], vec![10, 15]]);
    let kappa = cohens_kappa(&a, &b).map_err(|e| e.to_string())?;
    ensure(kappa == 0.4, || format!("kappa = {kappa:?}"))?;

    let flat = [0.3; 40];
    let labels: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
    let ci = bootstrap_ci(&flat, &labels, 1000, 9).map_err(|e| e.to_string())?;
    ensure(ci.lo == 0.5 && ci.hi == 0.5, || format!("all-equal CI = [{}, {}]", ci.lo, ci.hi))?;

    let mut rng = seed::rng(707);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (s, y) = random_instance(&mut rng);
        let flipped: Vec<bool> = y.iter().map(|v| !v).collect();
        worst = worst.max((roc_auc(&s, &y).unwrap() + roc_auc(&s, &flipped).unwrap() - 1.0).abs());
    }
    ensure(worst <= 1e-12, || format!("label-flip duality off by {worst:e}"))?;
    Ok(format!("kappa {kappa}, CI [{}, {}], flip duality max diff {worst:e}", ci.lo, ci.hi))
}

fn report_format() -> Outcome {
    let cell = format_cell(0.8247, 0.7396, 0.9008);
    ensure(cell == "0.8247 [0.7396, 0.9008]", || format!("rendered {cell:?}"))?;
    Ok(cell)
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    })
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut results: BTreeMap<usize, (&str, Outcome)> = BTreeMap::new();
    results.insert(1, ("AUC oracle equivalence", guarded(auc_oracle)));
    results.insert(2, ("gradient check", guarded(gradient_check)));

    let planted = catch_unwind(AssertUnwindSafe(|| planted_run(&tmp.path().join("planted"))))
        .unwrap_or_else(|_| Err("planted-signal run panicked".into()));
    match &planted {
        Ok(run) => {
            results.insert(3, ("leakage suite", run.leakage.clone()));
            results.insert(4, ("planted-signal replication", guarded(|| replication(run))));
        }
        Err(e) => {
            results.insert(3, ("leakage suite", Err(e.clone())));
            results.insert(4, ("planted-signal replication", Err(e.clone())));
        }
    }
    results.insert(5, ("determinism", guarded(|| determinism(tmp.path()))));
    results.insert(6, ("fusion conservation", guarded(fusion_conservation)));
    results.insert(7, ("metrics fixtures", guarded(metrics_fixtures)));
    results.insert(8, ("report format", guarded(report_format)));

    let mut failed = 0;
    for (n, (name, outcome)) in &results {
        match outcome {
            Ok(detail) => println!("PASS {n} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n} {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
