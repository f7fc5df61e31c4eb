//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with `harness = false`, so the lines are printed uncaptured by
//! `cargo test`. The process exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use spoofgap::cm::{FeatureKind, FeatureMatrix};
use spoofgap::config::{PipelineConfig, RawConfig, DEFAULT_SEED};
use spoofgap::distance::{six_distances, DistanceVector, PartitionQuad, PAIRS};
use spoofgap::fixtures::{default_fixture_specs, generate_fixture_corpora, FixtureSet};
use spoofgap::gmm::{fit_gmm, FitConfig};
use spoofgap::metrics::compute_eer;
use spoofgap::pipeline::{run_pipeline, RunOutput};
use spoofgap::quality::wada::synth_gamma_mixture;
use spoofgap::quality::{estimate_snr_wada, FeatureName, VectorStore, XVECTOR_DIM};
use spoofgap::regression::{adjusted_r2, feature_model_table, ols_fit, ExperimentRow, Scope};
use spoofgap::rng::{self, StreamRng};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

type Verdict = (bool, String);
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn gauss(r: &mut StreamRng) -> f64 {
    StandardNormal.sample(r)
}

struct Shared {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    fixtures: FixtureSet,
    /// One full run per seed, 7 corpora, N_test = 20.
    runs: Vec<(u64, RunOutput)>,
    cold_runtime: Duration,
}

fn config(fixtures: &FixtureSet, over: RawConfig) -> PipelineConfig {
    let raw = RawConfig::load(&fixtures.config).expect("fixture config").overlay(over);
    PipelineConfig::resolve(raw).expect("valid config")
}

fn setup() -> Shared {
    let tmp = tempfile::tempdir().expect("tempdir");
    let root = tmp.path().to_path_buf();
    let fixtures = generate_fixture_corpora(&default_fixture_specs(7, DEFAULT_SEED), &root.join("fixtures")).expect("fixtures");
    let cache = root.join("cache");
    let mut runs = Vec::new();
    let mut cold_runtime = Duration::ZERO;
    for seed in SEEDS {
        let t = Instant::now();
        let cfg = config(
            &fixtures,
            RawConfig {
                seed: Some(seed),
                out: Some(root.join(format!("seed{seed}"))),
                cache: Some(cache.clone()),
                ntest: Some(20),
                ..Default::default()
            },
        );
        let out = run_pipeline(cfg).expect("pipeline run");
        if seed == SEEDS[0] {
            cold_runtime = t.elapsed();
        }
        eprintln!("seed {seed}: {:.1} s", t.elapsed().as_secs_f64());
        runs.push((seed, out));
    }
    Shared { _tmp: tmp, root, fixtures, runs, cold_runtime }
}

// ---- 1: grid arithmetic ----

fn grid_counts(rows: &[ExperimentRow]) -> BTreeMap<String, (usize, usize)> {
    let mut c: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in rows {
        let e = c.entry(r.classifier.clone()).or_default();
        match r.scope {
            Scope::Within => e.0 += 1,
            Scope::Across => e.1 += 1,
        }
    }
    c
}

fn c1_grid(s: &Shared) -> Verdict {
    let big = grid_counts(&s.runs[0].1.rows);
    let big_ok = big.len() == 2 && big.values().all(|&c| c == (140, 840));
    let small_fx = generate_fixture_corpora(&default_fixture_specs(2, DEFAULT_SEED), &s.root.join("fixtures2")).expect("fixtures");
    let cfg = config(
        &small_fx,
        RawConfig { ntest: Some(3), out: Some(s.root.join("small")), ..Default::default() },
    );
    let small = grid_counts(&run_pipeline(cfg).expect("small run").rows);
    let small_ok = small.len() == 2 && small.values().all(|&c| c == (6, 6));
    let fast = s.cold_runtime < Duration::from_secs(30 * 60);
    (
        big_ok && small_ok && fast,
        format!(
            "M=7 N=20 {big:?}; M=2 N=3 {small:?}; cold 7-corpus run {:.1} s",
            s.cold_runtime.as_secs_f64()
        ),
    )
}

// ---- 2: EER ----

/// Every threshold midpoint plus one point beyond each end; pick the operating
/// point with the smallest |miss - fa| and interpolate towards the neighbour
/// on the other side of the crossing.
fn eer_oracle(bona: &[f64], spoof: &[f64]) -> f64 {
    let mut u: Vec<f64> = bona.iter().chain(spoof).copied().collect();
    u.sort_by(f64::total_cmp);
    u.dedup();
    let mut ts = vec![u[0] - 1.0];
    ts.extend(u.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    ts.push(u[u.len() - 1] + 1.0);
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| {
            let miss = bona.iter().filter(|&&b| b < t).count() as f64 / bona.len() as f64;
            let fa = spoof.iter().filter(|&&s| s >= t).count() as f64 / spoof.len() as f64;
            (miss, fa)
        })
        .collect();
    let k = (0..pts.len())
        .min_by(|&i, &j| (pts[i].0 - pts[i].1).abs().total_cmp(&(pts[j].0 - pts[j].1).abs()))
        .unwrap();
    let dk = pts[k].0 - pts[k].1;
    if dk == 0.0 {
        return 100.0 * pts[k].0;
    }
    let j = if dk < 0.0 { k + 1 } else { k - 1 };
    let dj = pts[j].0 - pts[j].1;
    let lambda = dk / (dk - dj);
    100.0 * (pts[k].0 + lambda * (pts[j].0 - pts[k].0))
}

fn random_scores(r: &mut StreamRng, tied: bool) -> (Vec<f64>, Vec<f64>) {
    let nb = r.random_range(1..40);
    let ns = r.random_range(1..40);
    let shift = r.random_range(-1.0..3.0);
    let q = |v: f64| if tied { (v * 4.0).round() / 4.0 } else { v };
    let b = (0..nb).map(|_| q(shift + gauss(r))).collect();
    let s = (0..ns).map(|_| q(gauss(r))).collect();
    (b, s)
}

fn tie_free(b: &[f64], s: &[f64]) -> bool {
    let mut all: Vec<f64> = b.iter().chain(s).copied().collect();
    all.sort_by(f64::total_cmp);
    all.windows(2).all(|w| w[0] != w[1])
}

fn c2_eer() -> Verdict {
    let mut r = rng::stream(2, "acceptance/eer");
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let (b, s) = random_scores(&mut r, i % 2 == 1);
        let got = compute_eer(&b, &s).expect("eer").eer;
        worst = worst.max((got - eer_oracle(&b, &s)).abs());
    }
    let (mut rank_ok, mut checked, mut swap_dev) = (true, 0, 0.0f64);
    for _ in 0..1000 {
        let nb = r.random_range(1..40);
        let ns = r.random_range(1..40);
        let b: Vec<f64> = (0..nb).map(|_| r.random_range(0.5..3.0)).collect();
        let s: Vec<f64> = (0..ns).map(|_| r.random_range(0.1..2.0)).collect();
        if !tie_free(&b, &s) {
            continue;
        }
        let base = compute_eer(&b, &s).unwrap().eer;
        for f in [|x: f64| 2.0 * x + 3.0, |x: f64| x * x * x] {
            let (fb, fs): (Vec<f64>, Vec<f64>) = (b.iter().map(|&x| f(x)).collect(), s.iter().map(|&x| f(x)).collect());
            if tie_free(&fb, &fs) {
                rank_ok &= compute_eer(&fb, &fs).unwrap().eer == base;
                checked += 1;
            }
        }
        swap_dev = swap_dev.max((compute_eer(&s, &b).unwrap().eer - (100.0 - base)).abs());
    }
    (
        worst <= 0.01 && rank_ok && swap_dev <= 1e-9,
        format!(
            "max |EER - oracle| {worst:.2e} pp over 1000 sets; rank invariance exact on {checked} transforms: {rank_ok}; max label-swap deviation {swap_dev:.1e}"
        ),
    )
}

// ---- 3: Chamfer ----

fn directed_oracle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for p in a {
        let mut best = f64::INFINITY;
        for q in b {
            let mut d = 0.0;
            for k in 0..p.len() {
                d += (p[k] - q[k]).powi(2);
            }
            if d < best {
                best = d;
            }
        }
        total += best;
    }
    total / a.len() as f64
}

fn c3_chamfer() -> Verdict {
    let mut r = rng::stream(3, "acceptance/chamfer");
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let dim = r.random_range(1..8);
        let clouds: [Vec<Vec<f64>>; 4] = std::array::from_fn(|c| {
            let n = r.random_range(1..12);
            (0..n).map(|_| (0..dim).map(|_| c as f64 + gauss(&mut r)).collect()).collect()
        });
        let got = six_distances(&PartitionQuad::new("x", clouds.clone()).unwrap()).unwrap().as_array();
        for (k, &(i, j)) in PAIRS.iter().enumerate() {
            let (a, b) = (&clouds[i - 1], &clouds[j - 1]);
            let want = (directed_oracle(a, b) + directed_oracle(b, a)) / 2.0 / dim as f64;
            worst = worst.max((got[k] - want).abs());
        }
    }
    let one_d = |v: f64| vec![vec![v]];
    let ex = six_distances(&PartitionQuad::new("x", [one_d(0.0), one_d(1.0), one_d(0.0), one_d(1.0)]).unwrap()).unwrap();
    let ex_ok = ex == DistanceVector { d12: 1.0, d13: 0.0, d23: 1.0, d14: 1.0, d24: 0.0, d34: 1.0 };
    (worst <= 1e-12 && ex_ok, format!("max deviation {worst:.1e} over 100 quads; 1-D example exact: {ex_ok}"))
}

// ---- 4: EM ----

fn c4_em(s: &Shared) -> Verdict {
    let fits: Vec<_> = s.runs.iter().flat_map(|(_, o)| &o.model_fits).collect();
    let worst = fits.iter().map(|f| f.worst_decrease).fold(0.0, f64::max);
    let mut r = rng::stream(4, "acceptance/blobs");
    let centres = [[-2.0, 1.0, 0.0], [3.0, -1.0, 4.0]];
    let mut x = Vec::new();
    for c in &centres {
        for _ in 0..400 {
            x.extend(c.iter().map(|m| m + 0.7 * gauss(&mut r)));
        }
    }
    let (model, rep) = fit_gmm(&x, 3, &FitConfig::new(2, 11)).expect("blob fit");
    let mut means = model.means.clone();
    means.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let err = means
        .iter()
        .zip(&centres)
        .flat_map(|(m, c)| m.iter().zip(c).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    (
        worst <= 1e-10 && rep.worst_decrease() <= 1e-10 && err < 0.1,
        format!("{} fixture fits, worst log-likelihood decrease {worst:.1e}; two-blob max mean error {err:.3}", fits.len()),
    )
}

// ---- 5: OLS ----

fn c5_ols() -> Verdict {
    let mut r = rng::stream(5, "acceptance/ols");
    let mut worst = 0.0f64;
    let mut worst_adj = 0.0f64;
    for _ in 0..100 {
        let n = r.random_range(15..80);
        let p = r.random_range(1..7);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| std::iter::once(1.0).chain((0..p).map(|_| gauss(&mut r))).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|i| x[i].iter().sum::<f64>() + gauss(&mut r)).collect();
        let fit = ols_fit(&x, &y).expect("ols");
        let xm = DMatrix::from_fn(n, p + 1, |i, j| x[i][j]);
        let yv = DVector::from_column_slice(&y);
        let xtx = xm.transpose() * &xm;
        let beta = xtx.cholesky().expect("well conditioned").solve(&(xm.transpose() * yv));
        for j in 0..=p {
            worst = worst.max((fit.coefficients[j] - beta[j]).abs());
        }
        let adj = 1.0 - (1.0 - fit.r_squared) * (n as f64 - 1.0) / (n as f64 - p as f64 - 1.0);
        worst_adj = worst_adj.max((fit.adj_r_squared - adj).abs());
        worst_adj = worst_adj.max((adjusted_r2(fit.r_squared, n, p) - adj).abs());
    }

    let rows: Vec<ExperimentRow> = (0..140)
        .map(|i| {
            let d: [f64; 6] = std::array::from_fn(|_| r.random_range(0.0..3.0));
            let eer = 3.0 * d[1] + 5.0 * d[4] + 0.5 * gauss(&mut r);
            ExperimentRow {
                train_corpus: "a".into(),
                test_corpus: "a".into(),
                trial_idx: i,
                scope: Scope::Within,
                classifier: "planted".into(),
                eer,
                threshold: 0.0,
                distances: BTreeMap::from([("ltas".to_string(), DistanceVector::from_array(d))]),
            }
        })
        .collect();
    let (fits, _) = feature_model_table(&rows, &["planted".into()], &["ltas".into()]);
    let planted = &fits[0];
    let truth = [0.0, 0.0, 3.0, 0.0, 0.0, 5.0, 0.0];
    let coef_err = planted.coefficients.iter().zip(truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    (
        worst <= 1e-8 && worst_adj <= 1e-12 && coef_err <= 0.3 && planted.adj_r_squared > 0.9,
        format!(
            "max |beta - normal equations| {worst:.1e}; adjusted R2 identity {worst_adj:.1e}; planted model max coefficient error {coef_err:.3}, adj R2 {:.4}",
            planted.adj_r_squared
        ),
    )
}

// ---- 6: WADA ----

fn c6_wada() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for snr in [0.0, 10.0, 20.0] {
        let est: f64 = (0..20u64)
            .map(|seed| estimate_snr_wada(&synth_gamma_mixture(80_000, Some(snr), 600 + seed)).expect("wada"))
            .sum::<f64>()
            / 20.0;
        ok &= (est - snr).abs() <= 3.0;
        parts.push(format!("{snr:.0} dB -> {est:.2} dB"));
    }
    (ok, parts.join(", "))
}

// ---- 7: qualitative behaviour ----

fn c7_behaviour(s: &Shared) -> Verdict {
    let (mut a, mut b, mut c) = (0, 0, 0);
    let mut lines = Vec::new();
    for (seed, out) in &s.runs {
        let eer = &out.summary.mean_eer;
        let a_ok = eer.values().all(|m| m["within"] < m["across"]);
        let mean_abs = |scope: usize| {
            let v: Vec<f64> = out
                .analysis
                .correlations
                .iter()
                .flat_map(|t| t.cells[scope].iter().flatten().map(|r| r.abs()))
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (rw, ra) = (mean_abs(0), mean_abs(1));
        let b_ok = rw > ra;
        let ltas = |clf: &str, scope: Scope| {
            out.analysis
                .fits
                .iter()
                .find(|f| f.feature == "ltas" && f.classifier == clf && f.scope == scope)
                .map(|f| f.adj_r_squared)
        };
        let mut c_ok = true;
        let mut adj = Vec::new();
        for clf in eer.keys() {
            let (w, x) = (ltas(clf, Scope::Within), ltas(clf, Scope::Across));
            c_ok &= matches!((w, x), (Some(w), Some(x)) if w > x);
            adj.push(format!("{clf} {:.2}/{:.2}", w.unwrap_or(f64::NAN), x.unwrap_or(f64::NAN)));
        }
        a += a_ok as usize;
        b += b_ok as usize;
        c += c_ok as usize;
        let eers: Vec<String> =
            eer.iter().map(|(k, m)| format!("{k} {:.1}/{:.1}", m["within"], m["across"])).collect();
        lines.push(format!(
            "    seed {seed}: EER% {} [{a_ok}]; mean|r| {rw:.3}/{ra:.3} [{b_ok}]; LTAS adjR2 {} [{c_ok}]",
            eers.join(", "),
            adj.join(", ")
        ));
    }
    (
        a >= 4 && b >= 4 && c >= 4,
        format!("(a) {a}/5, (b) {b}/5, (c) {c}/5 seeds (within/across)\n{}", lines.join("\n")),
    )
}

// ---- 8: determinism ----

const COMPARED: [&str; 3] = ["experiments.csv", "distances.csv", "feature_models.csv"];

fn cli(args: &[&str], cfg: &Path, out: &Path, extra: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_spoofgap"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .stdout(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn c8_determinism(s: &Shared) -> Verdict {
    let cfg = &s.fixtures.config;
    let (a, b, c) = (s.root.join("det-a"), s.root.join("det-b"), s.root.join("det-c"));
    let warm = a.join("cache");
    let ran = cli(&["run-all"], cfg, &a, &[])
        && cli(&["run-all"], cfg, &b, &[])
        && cli(&["run-all"], cfg, &c, &["--cache", warm.to_str().unwrap()]);
    if !ran {
        return (false, "run-all failed".into());
    }
    let mut same = true;
    let mut sizes = Vec::new();
    for f in COMPARED {
        let x = std::fs::read(a.join(f)).unwrap_or_default();
        same &= !x.is_empty();
        same &= x == std::fs::read(b.join(f)).unwrap_or_default();
        same &= x == std::fs::read(c.join(f)).unwrap_or_default();
        sizes.push(format!("{f} {} B", x.len()));
    }
    (same, format!("3 run-all executions (2 cold caches, 1 warm): byte-identical {}", sizes.join(", ")))
}

// ---- 9: dimensionality ----

fn c9_dimensions(s: &Shared) -> Verdict {
    let cache = s.root.join("cache");
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut bad = Vec::new();
    for corpus in std::fs::read_dir(cache.join("quality")).expect("quality cache") {
        let corpus = corpus.unwrap().path();
        for f in [FeatureName::Ltas, FeatureName::NoiseSpectrum, FeatureName::Xvector] {
            let path = corpus.join(f.version()).join(format!("{}.vec", f.as_str()));
            let text = std::fs::read_to_string(&path).expect("cached vectors");
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let mut parts = line.split_whitespace();
                let utt = parts.next().unwrap();
                let declared: usize = parts.next().unwrap().parse().unwrap();
                let v: Vec<f64> = parts.map(|x| x.parse().unwrap()).collect();
                let want = if f == FeatureName::Xvector { 512 } else { 257 };
                if declared != want {
                    bad.push(format!("{} {utt} declares {declared}", f.as_str()));
                }
                let norm_ok = f != FeatureName::Xvector || (v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-9;
                if v.len() != want || !norm_ok {
                    bad.push(format!("{} {utt}", f.as_str()));
                }
                *counts.entry(f.as_str()).or_default() += 1;
            }
        }
    }
    for (kind, want) in [(FeatureKind::Lfcc, 60), (FeatureKind::Cqcc, 90)] {
        for corpus in std::fs::read_dir(cache.join("cm")).expect("cm cache") {
            let dir = corpus.unwrap().path().join(kind.version());
            for file in std::fs::read_dir(&dir).expect("cm cache dir") {
                let fm = FeatureMatrix::load(&file.unwrap().path()).expect("cached matrix");
                if fm.dim() != want || fm.as_slice().len() != want * fm.n_frames() {
                    bad.push(format!("{} {}", kind.as_str(), fm.utt_id));
                }
                *counts.entry(kind.as_str()).or_default() += 1;
            }
        }
    }
    // a wrong-sized vector in a store must be refused
    let refused = VectorStore::new(XVECTOR_DIM).insert("u", vec![0.0; 511]).is_err()
        && VectorStore::parse("u 257 1 2 3\n", 257).is_err();
    let checks: usize = s.runs.iter().map(|(_, o)| o.summary.dimension_checks).sum();
    (
        bad.is_empty() && refused && checks > 0 && counts.len() == 5,
        format!("{counts:?}, {} violations; {checks} in-pipeline checks; malformed vectors refused: {refused}", bad.len()),
    )
}

fn main() {
    let t = Instant::now();
    let shared = setup();
    eprintln!("setup {:.1} s", t.elapsed().as_secs_f64());
    let criteria: Vec<Criterion> = vec![
        ("grid arithmetic", Box::new(|| c1_grid(&shared))),
        ("EER oracle equivalence", Box::new(c2_eer)),
        ("Chamfer oracle equivalence", Box::new(c3_chamfer)),
        ("EM soundness", Box::new(|| c4_em(&shared))),
        ("OLS oracle equivalence", Box::new(c5_ols)),
        ("WADA recovery", Box::new(c6_wada)),
        ("qualitative behaviour", Box::new(|| c7_behaviour(&shared))),
        ("determinism", Box::new(|| c8_determinism(&shared))),
        ("dimensionality contracts", Box::new(|| c9_dimensions(&shared))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| (false, "panicked".into()));
        failed += !ok as usize;
        println!("{} C{} {name}: {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
