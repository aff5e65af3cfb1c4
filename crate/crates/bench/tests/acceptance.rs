//! Acceptance gate. Each criterion prints one PASS/FAIL line; the test fails
//! if any criterion does.
//!
//! Run alone with `cargo test -p surf-bench --test acceptance`.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, Axis};
use surf_bench::manifest::{check_roundtrip, Manifest, EXPORT_TOLERANCE};
use surf_bench::npy;
use surf_bench::pipeline::{FitOptions, MethodSpec};
use surf_bench::sweep::{run_sweep, write_sweep};
use surf_bench::synthetic::{gen_synthetic, SynthConfig};
use surf_core::discovery::shapley::AgreementGame;
use surf_core::discovery::{shapley_values, Method, ShapleyGame};
use surf_core::metrics::{self, emd_per_sample, logit_scale, metric_suite, SURF_EMD, SURF_MAE, TOP1};
use surf_core::model::{model_forward, Labels, LinearHead, Split, SurrogateOutput, Task};
use surf_core::numerics::linalg::svd;
use surf_core::numerics::mlp::{MlpLoss, MlpObjective, MlpParams};
use surf_core::numerics::nnls::nnls_project;
use surf_core::numerics::train::{Objective, Parameters};
use surf_core::numerics::{kmeans, nmf, sae, spearman, Rng};
use surf_core::sanity::{make_perfect, SanitySetting};
use surf_core::surrogates::{
    self, cshap_eval_forward, ice_eval_forward, surf_forward, train_cshap_surrogate, CshapConfig, SurrogateSpec,
    SurrogateTag,
};

struct Gate {
    failed: Vec<u32>,
}

impl Gate {
    fn record(&mut self, id: u32, what: &str, ok: bool, detail: String) {
        // straight to the stdout handle so the line shows even when the
        // harness captures output
        let verdict = if ok { "PASS" } else { "FAIL" };
        writeln!(
            std::io::stdout().lock(),
            "criterion {id:>2}: {verdict} {what} ({detail})"
        )
        .unwrap();
        if !ok {
            self.failed.push(id);
        }
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn nonincreasing(xs: &[f64], slack: f64) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] + slack)
}

fn default_synthetic() -> surf_bench::synthetic::Synthetic {
    gen_synthetic(&SynthConfig::default(), 7).unwrap()
}

fn perfect_exactness(g: &mut Gate) {
    let t0 = Instant::now();
    let s = default_synthetic();
    let e = make_perfect(&s.head).unwrap();
    let out = surf_forward(&e, &s.head, &s.train).unwrap();
    let res = metric_suite(&out, Task::Classification, &s.train.labels, None).unwrap();
    let dt = t0.elapsed();
    let get = |n: &str| res.iter().find(|r| r.name == n).and_then(|r| r.value).unwrap();
    let (mae, emd, top1, rc) = (get(SURF_MAE), get(SURF_EMD), get(TOP1), get(metrics::RANK_CORR));
    let scale = logit_scale(&out);
    let ok = s.train.len() == 2020
        && mae <= 1e-9 * scale
        && emd <= 1e-9
        && top1 == 100.0
        && rc == 1.0
        && dt < Duration::from_secs(1);
    g.record(
        1,
        "perfect setting is exact under SURF",
        ok,
        format!(
            "mae={mae:.2e} scale={scale:.3} emd={emd:.2e} top1={top1} rank_corr={rc} in {}",
            secs(dt)
        ),
    );
}

fn ice_perfect_exactness(g: &mut Gate) {
    let s = default_synthetic();
    let e = make_perfect(&s.head).unwrap();
    let out = ice_eval_forward(&e, &s.head, &s.train).unwrap();
    let mae = metrics::surf_mae(&out).unwrap();
    let emd = metrics::surf_emd(&out).unwrap();
    // the identity itself, on random h and f
    let mut rng = Rng::new(11, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let h = Array1::from_shape_fn(64, |_| rng.normal());
        let f = Array1::from_shape_fn(64, |_| rng.normal());
        let v = &f / f.dot(&f).sqrt();
        let lhs = h.dot(&v) * f.dot(&v);
        let rhs = h.dot(&f);
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
    }
    let ok = mae <= 1e-9 && emd <= 1e-9 && worst <= 1e-9;
    g.record(
        2,
        "ICE-Eval is exact on the perfect setting",
        ok,
        format!("mae={mae:.2e} emd={emd:.2e} identity_err={worst:.2e}"),
    );
}

fn sanity_table(g: &mut Gate) {
    let s = default_synthetic();
    let t0 = Instant::now();
    let t = surf_bench::pipeline::run_sanity(
        &s.head,
        &s.train,
        &s.test,
        &[SurrogateSpec::Surf, SurrogateSpec::IceEval],
        10,
        3,
    )
    .unwrap();
    let dt = t0.elapsed();
    let m = |set, sur: &str, name: &str| t.row(set, sur).unwrap().metric(name).unwrap();
    use SanitySetting::*;

    let ice_rows_equal = [SURF_MAE, SURF_EMD, TOP1, metrics::RANK_CORR]
        .iter()
        .all(|n| m(Perfect, "ice-eval", n).to_bits() == m(RandImp, "ice-eval", n).to_bits());
    let blind = t.verdict.ice_blind_to_importance == Some(true);
    let ri_mae = m(RandImp, "surf", SURF_MAE);
    let ri_rc = m(RandImp, "surf", metrics::RANK_CORR);
    let ok3 = blind && ice_rows_equal && ri_mae >= 0.1 && ri_rc < 0.9 && dt < Duration::from_secs(10);
    g.record(
        3,
        "ICE-Eval is blind to importances, SURF is not",
        ok3,
        format!(
            "ice bitwise={blind} rows_equal={ice_rows_equal} surf rand-imp mae={ri_mae:.3} rank_corr={ri_rc:.3} in {}",
            secs(dt)
        ),
    );

    let emd = [Perfect, RandImp, FullRand].map(|x| m(x, "surf", SURF_EMD));
    let mae = [Perfect, RandImp, FullRand].map(|x| m(x, "surf", SURF_MAE));
    let fr_rc = m(FullRand, "surf", metrics::RANK_CORR);
    let ok4 = emd[0] < emd[1] && emd[1] <= emd[2] + 0.02 && mae[0] < mae[1] && mae[1] < mae[2] && fr_rc.abs() < 0.1;
    g.record(
        4,
        "SURF orders perfect < rand-imp < full-rand",
        ok4,
        format!("emd={emd:.4?} mae={mae:.4?} full-rand rank_corr={fr_rc:.4}"),
    );
}

fn flops_accounting(g: &mut Gate) {
    let f = [
        surrogates::flops(SurrogateTag::Surf, 1, 100, 0, 0),
        surrogates::flops(SurrogateTag::IceEval, 1, 100, 2048, 0),
        surrogates::flops(SurrogateTag::CshapEval, 1, 100, 2048, 500),
        surrogates::param_count(SurrogateTag::CshapEval, 1, 2048, 500),
    ];
    let want = [200, 614_400, 205_309_600, 1_027_048];
    g.record(5, "FLOPs and parameter counts", f == want, format!("{f:?}"));
}

/// Tie-free random vector of length n.
fn distinct(rng: &mut Rng, n: usize) -> Array1<f64> {
    let p = rng.permutation(n);
    Array1::from_iter(p.iter().map(|&i| i as f64 + 0.25 * rng.uniform()))
}

fn mlp_gradient_error() -> f64 {
    let mut rng = Rng::new(5, 0);
    let x = Array2::from_shape_fn((12, 3), |_| rng.normal());
    let mut worst: f64 = 0.0;
    for loss in [MlpLoss::CrossEntropy, MlpLoss::L1] {
        let targets = match loss {
            MlpLoss::CrossEntropy => {
                let z = Array2::from_shape_fn((12, 4), |_| rng.normal());
                surf_core::model::softmax_rows(z.view())
            }
            _ => Array2::from_shape_fn((12, 4), |_| rng.normal()),
        };
        let obj = MlpObjective {
            inputs: x.view(),
            targets: targets.view(),
            loss,
        };
        let p = MlpParams::init(3, 6, 4, &mut rng);
        let batch: Vec<usize> = (0..12).collect();
        let mut grad = p.zeros_like();
        obj.loss_grad(&p, &batch, Some(&mut grad));
        let analytic: Vec<f64> = grad.slices().concat();
        let mut numeric = Vec::with_capacity(analytic.len());
        let eps = 1e-6;
        let n_params = p.num_params();
        for j in 0..n_params {
            let at = |delta: f64| {
                let mut q = p.clone();
                let mut k = j;
                for s in q.slices_mut() {
                    if k < s.len() {
                        s[k] += delta;
                        break;
                    }
                    k -= s.len();
                }
                obj.loss_grad(&q, &batch, None)
            };
            numeric.push((at(eps) - at(-eps)) / (2.0 * eps));
        }
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
    }
    worst
}

fn metric_oracles(g: &mut Gate) {
    let mut rng = Rng::new(21, 0);
    // total variation identity: ½Σ|p − q| = 1 − Σ min(p, q)
    let (n, c) = (1000, 6);
    let ref_logits = Array2::from_shape_fn((n, c), |_| 2.0 * rng.normal());
    let sur_logits = Array2::from_shape_fn((n, c), |_| 2.0 * rng.normal());
    let out = SurrogateOutput::new(sur_logits, ref_logits).unwrap();
    let (p, q) = (out.reference_probabilities(), out.probabilities());
    let per = emd_per_sample(&out);
    let mut tv_err: f64 = 0.0;
    for (i, e) in per.iter().enumerate() {
        let overlap: f64 = p.row(i).iter().zip(q.row(i)).map(|(a, b)| a.min(*b)).sum();
        tv_err = tv_err.max((e - (1.0 - overlap)).abs());
    }
    let mean_tv = per.iter().sum::<f64>() / n as f64;
    tv_err = tv_err.max((metrics::surf_emd(&out).unwrap() - mean_tv).abs());

    // spearman against 1 − 6Σd²/(n³ − n), d computed on integer ranks
    let mut rho_err: f64 = 0.0;
    for t in 0..1000 {
        let len = 2 + t % 7;
        let a = distinct(&mut rng, len);
        let b = distinct(&mut rng, len);
        let rank = |v: &Array1<f64>| {
            let mut r = vec![0i64; v.len()];
            for (i, x) in v.iter().enumerate() {
                r[i] = 1 + v.iter().filter(|y| *y < x).count() as i64;
            }
            r
        };
        let (ra, rb) = (rank(&a), rank(&b));
        let d2: i64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
        let nn = len as i64;
        let oracle = 1.0 - (6 * d2) as f64 / (nn * nn * nn - nn) as f64;
        let got = spearman::spearman(a.view(), b.view()).unwrap().unwrap();
        rho_err = rho_err.max((got - oracle).abs());
    }

    let grad_err = mlp_gradient_error();
    let ok = tv_err <= 1e-12 && rho_err <= 1e-12 && grad_err <= 1e-4;
    g.record(
        6,
        "metric and gradient oracles",
        ok,
        format!("tv_err={tv_err:.1e} spearman_err={rho_err:.1e} grad_rel_err={grad_err:.1e}"),
    );
}

/// Exhaustive NNLS: best unconstrained fit over every support whose
/// solution is nonnegative.
fn nnls_oracle(h: &Array1<f64>, v: &Array2<f64>) -> Array1<f64> {
    let k = v.nrows();
    let mut best = Array1::zeros(k);
    let mut best_r = h.dot(h);
    for mask in 1u32..(1 << k) {
        let idx: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
        let sub = v.select(Axis(0), &idx);
        let Ok(c) = surf_core::numerics::linalg::lstsq(sub.view(), h.view()) else {
            continue;
        };
        if c.iter().any(|&x| x < 0.0) {
            continue;
        }
        let r = h - &sub.t().dot(&c);
        let r2 = r.dot(&r);
        if r2 < best_r {
            best_r = r2;
            best = Array1::zeros(k);
            for (j, &i) in idx.iter().enumerate() {
                best[i] = c[j];
            }
        }
    }
    best
}

fn numerics_suite(g: &mut Gate) {
    let mut rng = Rng::new(33, 0);
    let m = Array2::from_shape_fn((50, 30), |_| rng.normal());
    let s = svd(m.view(), 30).unwrap();
    let svd_err = (&s.reconstruct() - &m).mapv(|x| x * x).sum().sqrt() / m.mapv(|x| x * x).sum().sqrt();

    let x = Array2::from_shape_fn((40, 20), |_| rng.uniform());
    let nm = nmf::nmf(x.view(), 5, &mut rng, 300).unwrap();
    let nmf_mono = nonincreasing(&nm.objective_history, 1e-12 * nm.objective_history[0]);

    let km = kmeans::kmeans(x.view(), 4, &mut rng, kmeans::DEFAULT_MAX_ITER).unwrap();
    let km_mono = nonincreasing(&km.objective_history, 1e-12 * km.objective_history[0]);

    let (_, log) = sae::train_topk_sae(x.view(), 8, 2, &mut rng, 30).unwrap();
    let sae_mono = nonincreasing(&log.losses, 0.0);

    let a = Array1::from_shape_fn(30, |_| 0.1 + rng.uniform());
    let b = Array1::from_shape_fn(12, |_| 0.1 + rng.uniform());
    let r1 = a.view().insert_axis(Axis(1)).dot(&b.view().insert_axis(Axis(0)));
    let f1 = nmf::nmf(r1.view(), 1, &mut rng, nmf::DEFAULT_ITERS).unwrap();
    let r1_err = (&f1.w.dot(&f1.v) - &r1).mapv(|x| x * x).sum().sqrt() / r1.mapv(|x| x * x).sum().sqrt();

    let mut nnls_err: f64 = 0.0;
    for t in 0..300 {
        let k = 2 + t % 2;
        let d = k + t % 3;
        let v = Array2::from_shape_fn((k, d), |_| rng.normal());
        let h = Array1::from_shape_fn(d, |_| rng.normal());
        let got = nnls_project(h.view(), v.view());
        let want = nnls_oracle(&h, &v);
        nnls_err = nnls_err.max((&got - &want).mapv(f64::abs).fold(0.0, |a, &b| a.max(b)));
    }

    let ok = svd_err <= 1e-8 && nmf_mono && km_mono && sae_mono && r1_err <= 1e-6 && nnls_err <= 1e-6;
    g.record(
        7,
        "numerical kernels",
        ok,
        format!(
            "svd_rel={svd_err:.1e} nmf_mono={nmf_mono} kmeans_mono={km_mono} sae_mono={sae_mono} nmf_rank1={r1_err:.1e} nnls_err={nnls_err:.1e}"
        ),
    );
}

fn sweep_behavior(g: &mut Gate) {
    let cfg = SynthConfig {
        classes: 10,
        per_class: 40,
        ..SynthConfig::default()
    };
    let s = gen_synthetic(&cfg, 2).unwrap();
    let ks = [1, 2, 4, 8, 16, 32];
    let opts = FitOptions::default();
    let t0 = Instant::now();
    let mut r = run_sweep(
        &s.train,
        &s.test,
        &s.head,
        MethodSpec::Discovery(Method::McdLite),
        &ks,
        &opts,
        0,
    )
    .unwrap();
    let dt = t0.elapsed();
    let dir = tempfile::tempdir().unwrap();
    write_sweep(dir.path(), &mut r).unwrap();
    let emitted = ["sweep.svg", "sweep.csv", "sweep.json"]
        .iter()
        .all(|f| dir.path().join(f).is_file());

    let scale = logit_scale(&model_forward(&s.head, &s.test).unwrap());
    let mae: Vec<f64> = r.series(SURF_MAE).into_iter().map(|p| p.1).collect();
    let complete = r.failure.is_none() && mae.len() == ks.len();
    let mono = nonincreasing(&mae, 1e-9 * scale);
    let last = *mae.last().unwrap_or(&f64::INFINITY);
    let saturated = ks[ks.len() - 1] * opts.subspace_dim >= s.head.dim() && last <= 1e-6 * scale;
    let ok = complete && mono && saturated && emitted && dt < Duration::from_secs(60);
    g.record(
        8,
        "mcd-lite sweep is monotone and saturates",
        ok,
        format!(
            "mae=[{}] scale={scale:.3} files={emitted} in {}",
            mae.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", "),
            secs(dt)
        ),
    );
}

fn cshap_failure(g: &mut Gate) {
    let cfg = SynthConfig {
        classes: 10,
        ..SynthConfig::default()
    };
    let s = gen_synthetic(&cfg, 4).unwrap();
    let e = make_perfect(&s.head).unwrap();
    let surf_mae = metrics::surf_mae(&surf_forward(&e, &s.head, &s.test).unwrap()).unwrap();
    let sur = train_cshap_surrogate(&e, &s.head, &s.train, &CshapConfig::default(), &mut Rng::new(0, 9)).unwrap();
    let out = cshap_eval_forward(&sur, &e, &s.head, &s.test).unwrap();
    let mae = metrics::surf_mae(&out).unwrap();
    let scale = logit_scale(&out);
    let ok = e.max_basis() == 1 && s.head.dim() == 64 && mae >= 100.0 * surf_mae && mae > 1e-3 * scale;
    g.record(
        9,
        "trained C-SHAP-Eval is far from the perfect setting",
        ok,
        format!("cshap mae={mae:.3} surf mae={surf_mae:.2e} scale={scale:.3}"),
    );
}

fn shapley_axioms(g: &mut Gate) {
    let head = LinearHead::new(
        ndarray::array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        ndarray::array![0.0, 0.5],
        Task::Classification,
    )
    .unwrap();
    let members = ndarray::array![[2.0, 0.2, 0.0], [1.5, -0.3, 0.0], [3.0, 1.0, 0.0]];
    let pool = ndarray::array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let game = AgreementGame::new(&pool, &head, &members).unwrap();
    let phi = shapley_values(&game, 0, &Rng::new(0, 0)).unwrap();
    let gap = game.value(&[0, 1, 2]) - game.value(&[]);
    let sum: f64 = phi.values.sum();
    let ok = phi.exact && sum == gap && phi.values[2].abs() <= 1e-12;
    g.record(
        10,
        "Shapley efficiency and null player",
        ok,
        format!("phi={:?} sum={sum} v(N)-v(0)={gap}", phi.values.to_vec()),
    );
}

fn surf(args: &[&str], threads: usize, out: &Path) {
    let st = Command::new(env!("CARGO_BIN_EXE_surf"))
        .args(args)
        .args(["--threads", &threads.to_string(), "--seed", "5", "--out"])
        .arg(out)
        .output()
        .unwrap();
    assert!(st.status.success(), "{args:?}: {}", String::from_utf8_lossy(&st.stderr));
}

/// Every file under `dir`, with timestamp lines dropped.
fn snapshot(dir: &Path) -> Vec<(String, String)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let text = std::fs::read_to_string(&p).unwrap();
                let kept: Vec<&str> = text.lines().filter(|l| !l.contains("\"timestamp\"")).collect();
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), kept.join("\n")));
            }
        }
    }
    files.sort();
    files
}

fn determinism(g: &mut Gate) {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let st = Command::new(env!("CARGO_BIN_EXE_surf"))
        .args([
            "gen",
            "--classes",
            "8",
            "--dim",
            "24",
            "--per-class",
            "24",
            "--test-per-class",
            "8",
            "--out",
        ])
        .arg(&data)
        .output()
        .unwrap();
    assert!(st.status.success());
    let (tr, te) = (data.join("train.json"), data.join("test.json"));
    let (tr, te) = (tr.to_str().unwrap(), te.to_str().unwrap());
    let mut runs = Vec::new();
    for (i, threads) in [1usize, 2, 4, 2].into_iter().enumerate() {
        let dir = root.path().join(format!("run{i}"));
        surf(
            &[
                "sanity",
                "--manifest",
                te,
                "--train",
                tr,
                "--seeds",
                "3",
                "--surrogates",
                "surf,ice-eval,cshap-eval",
                "--cshap-epochs",
                "2",
            ],
            threads,
            &dir.join("sanity.json"),
        );
        surf(
            &[
                "eval",
                "--train",
                tr,
                "--test",
                te,
                "--methods",
                "kmeans,mcd-lite,cshap-lite,sae",
                "--k",
                "3",
                "--pool-size",
                "14",
                "--sae-epochs",
                "5",
            ],
            threads,
            &dir.join("eval.json"),
        );
        surf(
            &["sweep", "--train", tr, "--test", te, "--ks", "1,2,4,8"],
            threads,
            &dir.join("sweep"),
        );
        runs.push(snapshot(&dir));
    }
    let files = runs[0].len();
    let same = runs.iter().all(|r| *r == runs[0]);
    g.record(
        11,
        "reports are byte-identical across runs and thread counts",
        same && files >= 8,
        format!("{files} files x {} runs, threads 1/2/4/2", runs.len()),
    );
}

fn export_roundtrip(g: &mut Gate) {
    // what an exporter writes: single-precision head, embeddings and logits
    let cfg = SynthConfig {
        classes: 12,
        dim: 48,
        ..SynthConfig::default()
    };
    let s = gen_synthetic(&cfg, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let f32_round = |a: &Array2<f64>| a.mapv(|x| x as f32 as f64);
    let w = f32_round(&s.head.weights);
    let b = s.head.bias.mapv(|x| x as f32 as f64);
    let h = f32_round(&s.test.embeddings);
    let logits = f32_round(&(h.dot(&w.t()) + &b));
    let labels = Array1::from_iter(logits.rows().into_iter().map(|r| metrics::argmax(r) as i64));
    npy::write_f32(&p.join("w.npy"), &w).unwrap();
    npy::write_f32(&p.join("b.npy"), &b).unwrap();
    npy::write_f32(&p.join("h.npy"), &h).unwrap();
    npy::write_f32(&p.join("z.npy"), &logits).unwrap();
    npy::write_ints(&p.join("y.npy"), &labels).unwrap();
    Manifest {
        embeddings: "h.npy".into(),
        labels: Some("y.npy".into()),
        weights: "w.npy".into(),
        bias: "b.npy".into(),
        logits: Some("z.npy".into()),
        task: Task::Classification,
        split: Split::Test,
        provenance: "simulated export".into(),
    }
    .write(&p.join("export.json"))
    .unwrap();

    let loaded = Manifest::load(&p.join("export.json")).unwrap();
    let rt = check_roundtrip(&loaded).unwrap();
    let z = loaded.reference_logits.as_ref().unwrap();
    let argmax_ok = match &loaded.data.labels {
        Labels::Classes(l) => l.iter().zip(z.rows()).all(|(&y, r)| y == metrics::argmax(r)),
        _ => false,
    };
    let ok = rt.passes(EXPORT_TOLERANCE) && argmax_ok && rt.rows == s.test.len();
    g.record(
        12,
        "exported arrays reproduce the logits",
        ok,
        format!(
            "rows={} max_abs_diff={:.2e} label_mismatches={}",
            rt.rows, rt.max_abs_diff, rt.label_mismatches
        ),
    );
}

#[test]
fn acceptance() {
    let mut g = Gate { failed: Vec::new() };
    perfect_exactness(&mut g);
    ice_perfect_exactness(&mut g);
    sanity_table(&mut g);
    flops_accounting(&mut g);
    metric_oracles(&mut g);
    numerics_suite(&mut g);
    sweep_behavior(&mut g);
    cshap_failure(&mut g);
    shapley_axioms(&mut g);
    determinism(&mut g);
    export_roundtrip(&mut g);
    assert!(g.failed.is_empty(), "failed criteria: {:?}", g.failed);
}
