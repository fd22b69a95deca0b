//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! Datasets are looked up in `SEMGP_DATA_DIR`, then in the repository `data/`
//! directory. A missing dataset fails the criteria that need it.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use semgp::cli::{holdout_score, holdout_split, TEST_FRACTION};
use semgp::dataset::{class_entropy, load_csv, Dataset, LoadOptions, OvrTargets};
use semgp::ensemble::{train_ensemble, Combine, EnsembleModel};
use semgp::evolution::{evolve_step, init_population, EvolveConfig, StepOutcome};
use semgp::metrics::{critical_difference, friedman_test, rank_scores, ScoreTable};
use semgp::nodes::ols::ols_fit;
use semgp::nodes::{eval_addition, ColumnMode, Sample};
use semgp::selection::{Pool, SchemeConfig};
use semgp::semantics::{
    agreement, cosine_similarity, novelty_score, pearson, relative_angle, BehaviorVector, Semantics,
};

const DESK_POP: usize = 500;
const DESK_EARLY_STOP: usize = 500;
const DESK_MODELS: usize = 5;

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn data_path(file: &str) -> PathBuf {
    if let Ok(dir) = std::env::var("SEMGP_DATA_DIR") {
        let p = Path::new(&dir).join(file);
        if p.exists() {
            return p;
        }
    }
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(file)
}

fn dataset(name: &str) -> Result<Dataset, String> {
    let path = data_path(&format!("{name}.csv"));
    if !path.exists() {
        return Err(format!("{name}.csv not found (set SEMGP_DATA_DIR)"));
    }
    load_csv(&path, &LoadOptions::default()).map_err(|e| format!("{name}: {e}"))
}

fn desk(scheme: &str) -> EvolveConfig {
    EvolveConfig {
        population_size: DESK_POP,
        early_stop: DESK_EARLY_STOP,
        scheme: scheme.parse().expect("valid scheme"),
        ..EvolveConfig::default()
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Median held-out macro-F1 over seeds 1..=5, each trained on one core.
fn desk_quality(name: &str, threshold: f64, max_seconds: f64) -> Outcome {
    let ds = match dataset(name) {
        Ok(ds) => ds,
        Err(e) => return outcome(false, e),
    };
    let one_core = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("thread pool");
    let cfg = desk("agr-rnd");
    let mut scores = Vec::new();
    let mut slowest = 0.0f64;
    for seed in 1..=5u64 {
        match one_core.install(|| holdout_score(&ds, &cfg, DESK_MODELS, seed, TEST_FRACTION)) {
            Ok(h) => {
                scores.push(h.macro_f1);
                slowest = slowest.max(h.wall_seconds);
            }
            Err(e) => return outcome(false, format!("seed {seed} failed: {e}")),
        }
    }
    let shown: Vec<String> = scores.iter().map(|s| format!("{s:.4}")).collect();
    let med = median(&mut scores);
    outcome(
        med >= threshold && slowest <= max_seconds,
        format!(
            "{name} agr-rnd median test macro-F1={med:.4} (need >= {threshold}), seeds=[{}], slowest seed {slowest:.1}s (limit {max_seconds}s)",
            shown.join(" ")
        ),
    )
}

fn criterion_entropy() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    match dataset("iris") {
        Ok(ds) => {
            let h = class_entropy(&ds);
            pass &= (h - 1.0).abs() <= 0.01;
            notes.push(format!("iris={h:.4} (need 1.00 +/- 0.01)"));
        }
        Err(e) => {
            pass = false;
            notes.push(e);
        }
    }
    match dataset("banknote") {
        Ok(ds) => {
            let h = class_entropy(&ds);
            pass &= (0.98..=1.0).contains(&h);
            notes.push(format!("banknote={h:.4} (need [0.98, 1.00])"));
        }
        Err(e) => {
            pass = false;
            notes.push(e);
        }
    }
    outcome(pass, notes.join(", "))
}

mod brute {
    pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let mut ab = 0.0;
        let mut aa = 0.0;
        let mut bb = 0.0;
        for i in (0..a.len()).rev() {
            ab += a[i] * b[i];
            aa += a[i] * a[i];
            bb += b[i] * b[i];
        }
        ab / (aa * bb).sqrt()
    }

    pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (n - 1.0);
        let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let sb = (b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        cov / (sa * sb)
    }

    pub fn agreement(a: &[usize], b: &[usize]) -> f64 {
        let mut same = 0usize;
        for i in 0..a.len() {
            if a[i] == b[i] {
                same += 1;
            }
        }
        same as f64 / a.len() as f64
    }

    /// Law of cosines on the triangle formed by the two error vectors.
    pub fn relative_angle(t: &[f64], p1: &[f64], p2: &[f64]) -> f64 {
        let mut a2 = 0.0;
        let mut b2 = 0.0;
        let mut c2 = 0.0;
        for i in 0..t.len() {
            let e1 = t[i] - p1[i];
            let e2 = t[i] - p2[i];
            a2 += e1 * e1;
            b2 += e2 * e2;
            c2 += (p2[i] - p1[i]).powi(2);
        }
        ((a2 + b2 - c2) / (2.0 * (a2 * b2).sqrt()))
            .clamp(-1.0, 1.0)
            .acos()
    }

    pub fn novelty(b: &[bool], archive: &[Vec<bool>], k: usize) -> f64 {
        let mut d: Vec<usize> = archive
            .iter()
            .map(|o| o.iter().zip(b).filter(|(x, y)| x != y).count())
            .collect();
        d.sort_unstable();
        let take = k.min(d.len());
        d[..take].iter().sum::<usize>() as f64 / take as f64
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let scale = 10f64.powi(rng.gen_range(-2..3));
    (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale).collect()
}

fn criterion_oracles() -> Outcome {
    const CASES: usize = 1000;
    const TOL: f64 = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let mut failures: Vec<String> = Vec::new();
    let mut worst_centered = 0.0f64;

    for case in 0..CASES {
        let n = rng.gen_range(2..60);
        let a = random_vec(&mut rng, n);
        let b = random_vec(&mut rng, n);
        let t = random_vec(&mut rng, n);

        let got = cosine_similarity(&a, &b).unwrap();
        if !close(got, brute::cosine(&a, &b), TOL) {
            failures.push(format!("cosine case {case}"));
        }
        let got = pearson(&a, &b).unwrap();
        if !close(got, brute::pearson(&a, &b), TOL) {
            failures.push(format!("pearson case {case}"));
        }
        let got = relative_angle(&t, &a, &b).unwrap();
        if !close(got, brute::relative_angle(&t, &a, &b), TOL) {
            failures.push(format!("relative_angle case {case}"));
        }

        let k = rng.gen_range(2..6);
        let l1: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let l2: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        if !close(
            agreement(&l1, &l2).unwrap(),
            brute::agreement(&l1, &l2),
            TOL,
        ) {
            failures.push(format!("agreement case {case}"));
        }

        let bits =
            |rng: &mut ChaCha8Rng| -> Vec<bool> { (0..n).map(|_| rng.gen_bool(0.5)).collect() };
        let me = bits(&mut rng);
        let archive: Vec<Vec<bool>> = (0..rng.gen_range(1..40)).map(|_| bits(&mut rng)).collect();
        let k_nn = rng.gen_range(1..20);
        let packed: Vec<BehaviorVector> = archive
            .iter()
            .map(|v| BehaviorVector::from_bits(v))
            .collect();
        let got = novelty_score(&BehaviorVector::from_bits(&me), &packed, k_nn).unwrap();
        if !close(got, brute::novelty(&me, &archive, k_nn), TOL) {
            failures.push(format!("novelty case {case}"));
        }

        let center = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| x - m).collect::<Vec<_>>()
        };
        let (ca, cb) = (center(&a), center(&b));
        if let (Ok(p), Ok(c)) = (pearson(&ca, &cb), cosine_similarity(&ca, &cb)) {
            worst_centered = worst_centered.max((p - c).abs());
        }
    }
    if worst_centered > 1e-12 {
        failures.push(format!(
            "pearson vs cosine on centered data differs by {worst_centered:e}"
        ));
    }
    outcome(
        failures.is_empty(),
        format!(
            "{CASES} cases each for cosine, pearson, agreement, relative_angle, novelty at {TOL:e}; centered pearson/cosine max diff {worst_centered:e}; failures={}{}",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    )
}

fn criterion_directional() -> Outcome {
    const DATASETS: [&str; 4] = ["iris", "wine", "banknote", "tae"];
    const SCHEMES: [&str; 2] = ["agr-rnd", "fit-fit"];
    const SEEDS: u64 = 10;
    let mut missing = Vec::new();
    let mut loaded = Vec::new();
    for name in DATASETS {
        match dataset(name) {
            Ok(ds) => loaded.push(ds),
            Err(e) => missing.push(e),
        }
    }
    if loaded.len() < 2 {
        return outcome(false, format!("too few datasets: {}", missing.join("; ")));
    }
    let cells: Vec<(usize, usize, u64)> = (0..loaded.len())
        .flat_map(|d| {
            (0..SCHEMES.len()).flat_map(move |s| (1..=SEEDS).map(move |seed| (d, s, seed)))
        })
        .collect();
    let scores: Vec<Option<f64>> = cells
        .par_iter()
        .map(|&(d, s, seed)| {
            holdout_score(
                &loaded[d],
                &desk(SCHEMES[s]),
                DESK_MODELS,
                seed,
                TEST_FRACTION,
            )
            .ok()
            .map(|h| h.macro_f1)
        })
        .collect();
    let values: Vec<Vec<Option<f64>>> = (0..SCHEMES.len())
        .map(|s| {
            (0..loaded.len())
                .map(|d| {
                    let got: Vec<f64> = cells
                        .iter()
                        .zip(&scores)
                        .filter(|((cd, cs, _), _)| *cd == d && *cs == s)
                        .filter_map(|(_, v)| *v)
                        .collect();
                    (!got.is_empty()).then(|| got.iter().sum::<f64>() / got.len() as f64)
                })
                .collect()
        })
        .collect();
    let names: Vec<String> = loaded.iter().map(|d| d.name().to_string()).collect();
    let means: Vec<String> = (0..SCHEMES.len())
        .map(|s| {
            let cols: Vec<String> = names
                .iter()
                .zip(&values[s])
                .map(|(n, v)| format!("{n}={}", v.map_or("NA".into(), |x| format!("{x:.4}"))))
                .collect();
            format!("{}[{}]", SCHEMES[s], cols.join(" "))
        })
        .collect();
    let st = ScoreTable::new(
        SCHEMES.iter().map(|s| s.to_string()).collect(),
        names,
        values,
    )
    .expect("score table");
    let rt = rank_scores(&st).expect("ranks");
    let friedman = friedman_test(&rt)
        .map(|f| format!("friedman statistic={:.4} p={:.4}", f.statistic, f.p_value))
        .unwrap_or_else(|e| format!("friedman not computed: {e}"));
    let ordered = rt.mean_rank[0] <= rt.mean_rank[1];
    let mut detail = format!(
        "mean rank agr-rnd={:.3} fit-fit={:.3} over {} datasets x {SEEDS} seeds; {friedman}; {}",
        rt.mean_rank[0],
        rt.mean_rank[1],
        loaded.len(),
        means.join(" ")
    );
    if !missing.is_empty() {
        detail.push_str(&format!("; incomplete: {}", missing.join("; ")));
    }
    outcome(ordered && missing.is_empty(), detail)
}

fn criterion_nested_ols() -> Outcome {
    const INSTANCES: usize = 500;
    const SLACK: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    let mut checks = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..INSTANCES {
        let k = rng.gen_range(2..5);
        let n = rng.gen_range(4..60);
        let p = rng.gen_range(2..6);
        let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let targets = OvrTargets::from_labels(&y, k);
        let mut args: Vec<Semantics> = Vec::new();
        for j in 0..p {
            let scores: Vec<Vec<f64>> = if j > 0 && rng.gen_bool(0.2) {
                // collinear with an earlier argument
                let factor = rng.gen_range(-3.0..3.0);
                args[0]
                    .scores()
                    .iter()
                    .map(|c| c.iter().map(|x| x * factor).collect())
                    .collect()
            } else {
                (0..k).map(|_| random_vec(&mut rng, n)).collect()
            };
            args.push(Semantics::new(scores).unwrap());
        }
        let refs: Vec<&Semantics> = args.iter().collect();
        let (out, _) = eval_addition(&refs, &targets, ColumnMode::PerClass).unwrap();
        for c in 0..k {
            let t = targets.class(c);
            let rss: f64 = t
                .iter()
                .zip(out.class(c))
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            for a in &args {
                let single = ols_fit(&[a.class(c)], t).unwrap().residual_ss;
                checks += 1;
                worst = worst.max(rss - single);
                if rss > single + SLACK * single.max(1.0) {
                    violations += 1;
                }
            }
        }
    }
    outcome(
        violations == 0,
        format!("{INSTANCES} instances / {checks} per-class comparisons, violations={violations}, max(rss_add - rss_single)={worst:e}"),
    )
}

fn criterion_determinism() -> Outcome {
    let ds = match dataset("iris") {
        Ok(ds) => ds,
        Err(e) => return outcome(false, e),
    };
    let (train, test, _) = holdout_split(&ds, TEST_FRACTION, 11).expect("split");
    let cfg = EvolveConfig {
        population_size: 100,
        early_stop: 100,
        ..EvolveConfig::default()
    };
    let dir = tempfile::tempdir().expect("tempdir");
    let mut bytes = Vec::new();
    for i in 0..2 {
        let (em, _) = train_ensemble(&train, &cfg, 3, 11).expect("training");
        let path = dir.path().join(format!("model{i}.json"));
        em.save(&path).expect("save");
        bytes.push(std::fs::read(&path).expect("read back"));
    }
    let identical = bytes[0] == bytes[1];
    let (em, _) = train_ensemble(&train, &cfg, 3, 11).expect("training");
    let loaded = EnsembleModel::load(dir.path().join("model0.json")).expect("load");
    let mut same_predictions = true;
    for combine in [Combine::Mean, Combine::Vote] {
        let a = em.predict(test.features(), combine).expect("predict");
        let b = loaded.predict(test.features(), combine).expect("predict");
        same_predictions &= a == b;
    }
    let same_scores = em.decision_columns(&test.columns()).unwrap().scores()
        == loaded.decision_columns(&test.columns()).unwrap().scores();
    outcome(
        identical && same_predictions && same_scores,
        format!(
            "model files byte-identical={identical} ({} bytes), reloaded predictions identical={same_predictions}, reloaded scores bit-identical={same_scores} on {} held-out rows",
            bytes[0].len(),
            test.n()
        ),
    )
}

fn table(rows: &[[f64; 4]]) -> ScoreTable {
    ScoreTable::new(
        (0..rows.len()).map(|i| format!("s{i}")).collect(),
        (0..4).map(|j| format!("d{j}")).collect(),
        rows.iter()
            .map(|r| r.iter().map(|&x| Some(x)).collect())
            .collect(),
    )
    .unwrap()
}

fn criterion_friedman() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    // ranks per dataset (1,2,3) (2,3,1) (3,1,2) (1,2,3): rank sums 7, 8, 9
    // chi2 = 12*4/(3*4) * (1.75^2 + 2^2 + 2.25^2 - 3*16/4) = 0.5
    let rotating = table(&[
        [0.9, 0.8, 0.7, 0.9],
        [0.8, 0.7, 0.9, 0.8],
        [0.7, 0.9, 0.8, 0.7],
    ]);
    let f = friedman_test(&rank_scores(&rotating).unwrap()).unwrap();
    pass &= (f.statistic - 0.5).abs() <= 1e-9;
    notes.push(format!("rotating 3x4 statistic={} (hand 0.5)", f.statistic));

    // ranks (1,2,3) (1,3,2) (2,1,3) (1,2,3): mean ranks 1.25, 2, 2.75, chi2 = 4.5
    let spread = table(&[
        [0.9, 0.9, 0.8, 0.9],
        [0.8, 0.7, 0.9, 0.8],
        [0.7, 0.8, 0.7, 0.7],
    ]);
    let f = friedman_test(&rank_scores(&spread).unwrap()).unwrap();
    pass &= (f.statistic - 4.5).abs() <= 1e-9;
    notes.push(format!("spread 3x4 statistic={} (hand 4.5)", f.statistic));

    let tied = table(&[[0.5; 4], [0.5; 4], [0.5; 4]]);
    let f = friedman_test(&rank_scores(&tied).unwrap()).unwrap();
    pass &= f.statistic == 0.0;
    notes.push(format!("all tied statistic={}", f.statistic));

    // CD = q * sqrt(s(s+1)/(6d)) with q from the studentized range table
    let cases = [
        (2usize, 4usize, 0.10, 1.644854),
        (3, 4, 0.05, 2.343701),
        (4, 30, 0.05, 2.569032),
        (7, 30, 0.10, 2.692732),
    ];
    for (s, d, alpha, q) in cases {
        let expected = q * ((s * (s + 1)) as f64 / (6.0 * d as f64)).sqrt();
        let got = critical_difference(s, d, alpha).unwrap();
        pass &= (got - expected).abs() <= 1e-9;
        notes.push(format!(
            "CD(s={s},d={d},a={alpha})={got:.6} (closed form {expected:.6})"
        ));
    }
    outcome(pass, notes.join(", "))
}

fn toy_dataset() -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for i in 0..60 {
        let c = i % 3;
        features.push(vec![
            c as f64 + rng.gen_range(-0.8..0.8),
            rng.gen_range(-1.0..1.0),
            (c as f64 * 0.5).sin() + rng.gen_range(-0.5..0.5),
        ]);
        labels.push(c);
    }
    Dataset::new(
        features,
        labels,
        vec!["a".into(), "b".into(), "c".into()],
        "toy",
    )
    .unwrap()
}

fn criterion_fuzz() -> Outcome {
    const STEPS: usize = 10_000;
    let ds = toy_dataset();
    let (train, val, _) = holdout_split(&ds, 0.5, 3).expect("split");
    let schemes = [
        "agr-rnd",
        "fit-fit",
        "sim-fit*",
        "prs-rnd--fit",
        "ads-rnd",
        "nvs-fit",
        "rnd-rnd",
    ];
    let per_scheme = STEPS / schemes.len() + 1;
    let mut total = 0;
    let mut created = 0;
    for (i, name) in schemes.iter().enumerate() {
        let scheme: SchemeConfig = name.parse().unwrap();
        let cfg = EvolveConfig {
            population_size: 25,
            early_stop: STEPS,
            scheme,
            ..EvolveConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let mut pop = match init_population(
            Sample::from_dataset(&train),
            Sample::from_dataset(&val),
            &cfg,
            &mut rng,
        ) {
            Ok(p) => p,
            Err(e) => return outcome(false, format!("{name}: init failed: {e}")),
        };
        let mut best = pop.best().val_fitness;
        for step in 0..per_scheme.min(STEPS - total) {
            match evolve_step(&mut pop, &cfg, &mut rng) {
                Ok(StepOutcome::Created { .. }) => created += 1,
                Ok(StepOutcome::Discarded) => {}
                Err(e) => return outcome(false, format!("{name} step {step}: {e}")),
            }
            total += 1;
            if pop.live().len() != pop.capacity() {
                return outcome(
                    false,
                    format!("{name} step {step}: live size {}", pop.live().len()),
                );
            }
            let now = pop.best().val_fitness;
            if now < best {
                return outcome(
                    false,
                    format!("{name} step {step}: best_val decreased {best} -> {now}"),
                );
            }
            best = now;
            if let Err(e) = pop.check_integrity() {
                return outcome(false, format!("{name} step {step}: {e}"));
            }
        }
    }
    outcome(
        total == STEPS,
        format!(
            "{total} evolve_steps over {} schemes ({created} offspring inserted): live size, monotone best_val and DAG references held",
            schemes.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 10] = [
        ("iris quality", || desk_quality("iris", 0.90, 120.0)),
        ("banknote quality", || desk_quality("banknote", 0.97, 300.0)),
        ("wine quality", || desk_quality("wine", 0.90, f64::INFINITY)),
        ("class entropy", criterion_entropy),
        ("similarity oracles", criterion_oracles),
        ("agr-rnd vs fit-fit ranks", criterion_directional),
        ("nested addition fit", criterion_nested_ols),
        ("determinism", criterion_determinism),
        ("friedman and nemenyi", criterion_friedman),
        ("steady-state fuzz", criterion_fuzz),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!(
            "{verdict} criterion {} ({name}): {} [{:.1}s]",
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
