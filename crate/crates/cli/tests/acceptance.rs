//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.
//!
//! Criterion 10 runs only when `DOCNET_FULL_CSV` names a NetFlow CSV; otherwise it prints SKIP.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use docnet::data::{self, fit_scaler, split_benign_indices, SplitSpec, SynthSpec, ATTACK};
use docnet::eval::{self, confusion, metrics, roc_auc, ConfusionMatrix, DetectorKind, EvalConfig};
use docnet::hbos::{fit_histograms, HEIGHT_FLOOR};
use docnet::nn::{Activation, MlpParams};
use docnet::pipeline::{DocConfig, DocModel};
use docnet::svdd::{self, svdd_loss, svdd_loss_grad, SvddConfig};
use docnet::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion<'a> = (u32, &'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_secs, || {
        format!(
            "runtime {:.2}s exceeds {limit_secs}s",
            elapsed.as_secs_f64()
        )
    })
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Standard fixture with its 70% benign training split, scaled on that split.
struct Fixture {
    ds: data::LabeledDataset,
    train_raw: Matrix,
    train_scaled: Matrix,
}

fn fixture() -> Fixture {
    let ds = data::synth_generate(&SynthSpec::STANDARD).unwrap();
    let (train, _) = split_benign_indices(&ds, &SplitSpec::default()).unwrap();
    let train_raw = ds.features.select_rows(&train);
    let scaler = fit_scaler(&train_raw).unwrap();
    let train_scaled = scaler.apply(&train_raw).unwrap();
    Fixture {
        ds,
        train_raw,
        train_scaled,
    }
}

fn gradient_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut entries = 0;
    for pair in 0..20u64 {
        let p = MlpParams::init(&[8, 16, 4], Activation::LeakyRelu, pair).unwrap();
        let x = random_matrix(&mut rng, 1, 8, 0.0, 1.0);
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
        let lambda = 1e-4;
        let (_, grads) = svdd_loss_grad(&p, &x, &c, lambda).unwrap();
        for l in 0..p.layers().len() {
            for idx in 0..p.layers()[l].as_slice().len() {
                let loss_at = |delta: f64| {
                    let mut layers = p.layers().to_vec();
                    layers[l].as_mut_slice()[idx] += delta;
                    let q = MlpParams::from_layers(layers, p.activation()).unwrap();
                    svdd_loss(&q, &x, &c, lambda).unwrap()
                };
                let fd = (loss_at(h) - loss_at(-h)) / (2.0 * h);
                let an = grads.layers[l].as_slice()[idx];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-8);
                worst = worst.max(rel);
                entries += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(worst < 1e-4, || {
        format!("max relative error {worst:.3e} over {entries} entries")
    })?;
    within(elapsed, 5.0)?;
    Ok(format!(
        "max rel err {worst:.2e} over {entries} entries, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn loss_closed_forms() -> Check {
    let identity = MlpParams::from_layers(
        vec![Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()],
        Activation::Identity,
    )
    .unwrap();
    let unit = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let a = svdd_loss(&identity, &unit, &[0.0, 0.0], 0.0).unwrap();

    let net = MlpParams::init(&[3, 5, 2], Activation::LeakyRelu, 9).unwrap();
    let x = vec![0.2, 0.7, 0.4];
    let c = net.forward(&x).unwrap();
    let b = svdd_loss(
        &net,
        &Matrix::from_rows(&[x.clone(), x.clone(), x]).unwrap(),
        &c,
        0.0,
    )
    .unwrap();

    let w = MlpParams::from_layers(
        vec![Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap()],
        Activation::Identity,
    )
    .unwrap();
    // (1,0) maps to (1,3), so a center there leaves only the Frobenius term
    let c = vec![1.0, 3.0];
    let batch = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
    let d = svdd_loss(&w, &batch, &c, 2.0).unwrap();

    for (got, want) in [(a, 1.0), (b, 0.0), (d, 30.0)] {
        ensure((got - want).abs() < 1e-10, || {
            format!("loss {got} vs expected {want}")
        })?;
    }
    Ok(format!("losses {a}, {b}, {d}"))
}

#[derive(Default)]
struct HbosPaths {
    floor: usize,
    clamp: usize,
}

/// Locates each value's bin by scanning explicit edges and sums the log-inverse heights.
fn brute_hbos(train: &Matrix, k: usize, z: &[f64], paths: &mut HbosPaths) -> f64 {
    let mut total = 0.0;
    for (j, &v) in z.iter().enumerate() {
        let col: Vec<f64> = train.column(j).collect();
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = (hi - lo) / k as f64;
        let bin_of = |v: f64| -> usize {
            if hi <= lo || v < lo {
                return 0;
            }
            if v > hi {
                return k - 1;
            }
            let last = k - 1;
            (0..k)
                .find(|&i| lo + i as f64 * w <= v && (i == last || v < lo + (i + 1) as f64 * w))
                .unwrap_or(last)
        };
        let mut counts = vec![0u64; k];
        for &t in &col {
            counts[bin_of(t)] += 1;
        }
        let max = *counts.iter().max().unwrap() as f64;
        let height = counts[bin_of(v)] as f64 / max;
        if v < lo || v > hi {
            paths.clamp += 1;
        }
        if height == 0.0 {
            paths.floor += 1;
        }
        total += -(height.max(HEIGHT_FLOOR)).ln();
    }
    total
}

fn hbos_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut paths = HbosPaths::default();
    let mut worst: f64 = 0.0;
    let mut probes = 0;
    for m in 0..50 {
        let n = rng.random_range(1..=100);
        let d = rng.random_range(1..=4);
        let k = rng.random_range(1..=12);
        let mut train = if m % 2 == 0 {
            // a coarse grid lands values exactly on bin edges
            Matrix::from_vec(
                n,
                d,
                (0..n * d)
                    .map(|_| rng.random_range(0..8) as f64 / 4.0)
                    .collect(),
            )
            .unwrap()
        } else {
            random_matrix(&mut rng, n, d, 0.0, 1.0)
        };
        if m % 7 == 0 {
            for r in 0..n {
                train.set(r, 0, 0.5);
            }
        }
        let hist = fit_histograms(&train, k).unwrap();
        let mut probe = |z: &[f64]| {
            let got = hist.score(z).unwrap();
            let want = brute_hbos(&train, k, z, &mut paths);
            worst = worst.max((got - want).abs());
            probes += 1;
        };
        for r in 0..n {
            probe(train.row(r));
        }
        for _ in 0..40 {
            let z: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..2.5)).collect();
            probe(&z);
        }
    }
    ensure(worst < 1e-12, || format!("max abs difference {worst:.3e}"))?;
    ensure(paths.floor > 0 && paths.clamp > 0, || {
        format!(
            "paths not exercised: floor {} clamp {}",
            paths.floor, paths.clamp
        )
    })?;
    Ok(format!(
        "max abs diff {worst:.1e} over {probes} probes ({} floored, {} clamped values)",
        paths.floor, paths.clamp
    ))
}

fn contraction(fx: &Fixture) -> Check {
    let start = Instant::now();
    let model = svdd::train(&SvddConfig::default(), &fx.train_scaled).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let ratio = model.final_mean_distance / model.initial_mean_distance;
    ensure(ratio <= 0.5, || {
        format!("final/initial mean distance {ratio:.4}")
    })?;
    within(elapsed, 60.0)?;
    // informational: the same run at lr 1e-3
    let slow = SvddConfig {
        lr: 1e-3,
        ..SvddConfig::default()
    };
    let slow = svdd::train(&slow, &fx.train_scaled).map_err(|e| e.to_string())?;
    Ok(format!(
        "mean distance {:.4} -> {:.4} (ratio {ratio:.3}), {:.2}s; at lr 1e-3 the ratio is {:.3}",
        model.initial_mean_distance,
        model.final_mean_distance,
        elapsed.as_secs_f64(),
        slow.final_mean_distance / slow.initial_mean_distance
    ))
}

fn threshold_property(fx: &Fixture) -> Check {
    let n = fx.train_raw.rows() as f64;
    let mut parts = Vec::new();
    for gamma in [0.05, 0.1, 0.2] {
        let config = DocConfig {
            contamination: gamma,
            ..DocConfig::default()
        };
        let schema = fx.ds.schema();
        let model = DocModel::fit_raw(&config, &fx.train_raw, schema).map_err(|e| e.to_string())?;
        let scores = model
            .score_batch(&fx.train_raw)
            .map_err(|e| e.to_string())?;
        let above = scores.iter().filter(|&&s| s > model.threshold).count() as f64 / n;
        ensure(
            above >= gamma - 1.0 / n - 1e-12 && above <= gamma + 1e-12,
            || {
                format!(
                    "gamma {gamma}: fraction above threshold {above:.5} outside [{:.5}, {gamma}]",
                    gamma - 1.0 / n
                )
            },
        )?;
        parts.push(format!("γ={gamma}: {above:.4}"));
    }
    Ok(parts.join(", "))
}

fn end_to_end(fx: &Fixture) -> Check {
    let start = Instant::now();
    let config = EvalConfig::default();
    let suite = eval::evaluate(&fx.ds, &[DetectorKind::Doc, DetectorKind::Hbos], &config)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let doc = suite.report(DetectorKind::Doc).unwrap();
    let hbos = suite.report(DetectorKind::Hbos).unwrap();
    ensure(doc.folds.len() == 5, || {
        format!("{} folds", doc.folds.len())
    })?;
    ensure(doc.mean.auc >= 90.0, || {
        format!("DOC mean AUC {:.2}%", doc.mean.auc)
    })?;
    ensure(doc.mean.far <= hbos.mean.far, || {
        format!(
            "DOC FAR {:.3}% above HBOS FAR {:.3}%",
            doc.mean.far, hbos.mean.far
        )
    })?;
    within(elapsed, 300.0)?;
    Ok(format!(
        "DOC AUC {:.2}%, FAR {:.3}% vs HBOS FAR {:.3}%, {:.1}s",
        doc.mean.auc,
        doc.mean.far,
        hbos.mean.far,
        elapsed.as_secs_f64()
    ))
}

/// Area under the ROC polyline, walking distinct thresholds from the top.
fn trapezoid_auc(labels: &[u8], scores: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let (mut tp, mut fp, mut area, mut prev_tpr, mut prev_fpr) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            j += 1;
        }
        let (tpr, fpr) = (tp / pos, fp / neg);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
        i = j;
    }
    area
}

fn cm(tp: u64, fp: u64, tn: u64, fn_: u64) -> ConfusionMatrix {
    ConfusionMatrix { tp, fp, tn, fn_ }
}

fn metric_oracles() -> Check {
    let ok = |c: Result<ConfusionMatrix, _>, want: ConfusionMatrix| -> Result<(), String> {
        let got = c.map_err(|e: docnet::Error| e.to_string())?;
        ensure(got == want, || format!("confusion {got:?} vs {want:?}"))
    };
    ok(confusion(&[1, 1, 0, 0], &[1, 0, 0, 1]), cm(1, 1, 1, 1))?;
    ok(
        confusion(&[1, 0, 1, 0, 0], &[1, 0, 1, 0, 0]),
        cm(2, 0, 3, 0),
    )?;
    ok(
        confusion(&[1, 0, 0, 1, 0], &[1, 1, 1, 1, 1]),
        cm(2, 3, 0, 0),
    )?;

    ensure(metrics(&cm(90, 0, 0, 10)).dr == 90.0, || {
        "DR for tp=90, fn=10".into()
    })?;
    ensure(metrics(&cm(0, 2, 98, 0)).far == 2.0, || {
        "FAR for fp=2, tn=98".into()
    })?;
    let m = metrics(&cm(50, 50, 0, 0));
    ensure(m.precision == 50.0 && m.dr == 100.0, || {
        format!("precision {} dr {}", m.precision, m.dr)
    })?;
    ensure((m.f1 - 2.0 * 100.0 * 50.0 / 150.0).abs() < 1e-12, || {
        format!("f1 {}", m.f1)
    })?;
    let empty = metrics(&cm(0, 0, 0, 0));
    ensure(empty.accuracy == 0.0 && !empty.undefined.is_empty(), || {
        "zero-denominator sentinel".into()
    })?;

    let auc = |l: &[u8], s: &[f64]| roc_auc(l, s).map_err(|e| e.to_string());
    ensure(auc(&[0, 0, 1, 1], &[0.1, 0.2, 0.8, 0.9])? == 1.0, || {
        "separated AUC".into()
    })?;
    ensure(auc(&[0, 1, 0, 1], &[0.4; 4])? == 0.5, || "tied AUC".into())?;
    ensure(auc(&[1, 0, 1, 0], &[0.9, 0.8, 0.7, 0.1])? == 0.75, || {
        "worked AUC example".into()
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..300);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // quantized scores so ties are common
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..25) as f64 / 25.0)
            .collect();
        worst = worst.max((auc(&labels, &scores)? - trapezoid_auc(&labels, &scores)).abs());
    }
    ensure(worst < 1e-9, || {
        format!("rank vs trapezoid AUC differs by {worst:.3e}")
    })?;
    Ok(format!(
        "hand examples exact; rank vs trapezoid max diff {worst:.1e} on 100 vectors"
    ))
}

fn docnet_bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_docnet"));
    cmd.env_remove("DOC_SEED");
    cmd
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn protocol_guarantees(fx: &Fixture) -> Check {
    let folds = eval::kfold_splits(&fx.ds, 5, 42).map_err(|e| e.to_string())?;
    let benign = fx.ds.benign_indices();
    let attacks = fx.ds.attack_indices();
    let mut seen = vec![0u32; fx.ds.len()];
    for (i, f) in folds.iter().enumerate() {
        ensure(f.train.iter().all(|&r| fx.ds.labels[r] != ATTACK), || {
            format!("fold {i} trains on attack rows")
        })?;
        let attack_in_test = f
            .test
            .iter()
            .filter(|&&r| fx.ds.labels[r] == ATTACK)
            .count();
        ensure(attack_in_test == attacks.len(), || {
            format!("fold {i} tests {attack_in_test} attack rows")
        })?;
        for &r in f.test.iter().filter(|&&r| fx.ds.labels[r] != ATTACK) {
            seen[r] += 1;
        }
        let mut train_and_test: Vec<usize> = f
            .train
            .iter()
            .chain(&f.test)
            .copied()
            .filter(|&r| fx.ds.labels[r] != ATTACK)
            .collect();
        train_and_test.sort_unstable();
        ensure(train_and_test == benign, || {
            format!("fold {i} train and test do not cover the benign rows")
        })?;
    }
    ensure(benign.iter().all(|&r| seen[r] == 1), || {
        "benign test folds do not partition the benign rows".into()
    })?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("standard.csv");
    data::save_csv(&fx.ds, &input).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in 0..2 {
        let json = dir.path().join(format!("run{run}.json"));
        let table = dir.path().join(format!("run{run}.txt"));
        let out = docnet_bin()
            .args([
                "evaluate",
                "--input",
                path_str(&input),
                "--seed",
                "42",
                "--detectors",
                "doc,svdd,hbos,pca",
            ])
            .args([
                "--out-json",
                path_str(&json),
                "--out-table",
                path_str(&table),
            ])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || {
            String::from_utf8_lossy(&out.stderr).into_owned()
        })?;
        outputs.push((
            std::fs::read(&json).unwrap(),
            std::fs::read(&table).unwrap(),
            out.stdout,
        ));
    }
    ensure(outputs[0] == outputs[1], || {
        "reports differ between two runs with the same seed".into()
    })?;
    Ok(format!(
        "{} folds, benign partition exact, no attack rows in training, JSON report ({} bytes) byte-identical",
        folds.len(),
        outputs[0].0.len()
    ))
}

fn serialization(fx: &Fixture) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model = DocModel::fit_raw(&DocConfig::default(), &fx.train_raw, fx.ds.schema())
        .map_err(|e| e.to_string())?;
    let path = dir.path().join("model.doc");
    model.save(&path).map_err(|e| e.to_string())?;
    let loaded = DocModel::load(&path).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let d = fx.ds.columns.len();
    let inputs = random_matrix(&mut rng, 1000, d, -0.2, 1.2);
    for x in inputs.iter_rows() {
        let (a, b) = (model.score(x).unwrap(), loaded.score(x).unwrap());
        ensure(a.to_bits() == b.to_bits(), || {
            format!("score {a} reloaded as {b}")
        })?;
    }

    let bytes = std::fs::read(&path).unwrap();
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x40;
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let cases: [(&str, Vec<u8>); 4] = [
        ("bad magic", bad_magic),
        ("flipped byte", flipped),
        ("truncated", bytes[..bytes.len() / 3].to_vec()),
        ("empty", Vec::new()),
    ];
    let input = dir.path().join("in.csv");
    data::save_csv(&fx.ds.subset(&[0, 1, 2]), &input).map_err(|e| e.to_string())?;
    for (name, content) in cases {
        let bad = dir.path().join("bad.doc");
        std::fs::write(&bad, &content).unwrap();
        let lib_rejects = DocModel::load(&bad).is_err();
        let out = docnet_bin()
            .args([
                "score",
                "--model",
                path_str(&bad),
                "--input",
                path_str(&input),
            ])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(lib_rejects && out.status.code() == Some(4), || {
            format!(
                "{name}: exit {:?}, library rejects {lib_rejects}",
                out.status.code()
            )
        })?;
        if name == "bad magic" {
            let err = String::from_utf8_lossy(&out.stderr);
            ensure(err.contains("not a DOC model file"), || {
                format!("bad magic message: {err}")
            })?;
        }
    }
    Ok("1000 reloaded scores bit-identical; 4 corruptions rejected with exit 4".into())
}

fn full_scale() -> Option<Check> {
    let csv = std::env::var_os("DOCNET_FULL_CSV")?;
    let out = match docnet_bin()
        .arg("evaluate")
        .arg("--input")
        .arg(&csv)
        .output()
    {
        Ok(o) => o,
        Err(e) => return Some(Err(e.to_string())),
    };
    let stdout = String::from_utf8_lossy(&out.stdout);
    let columns = ["Accuracy", "F1 Score", "AUC", "DR", "FAR"];
    Some(if !out.status.success() {
        Err(format!(
            "exit {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    } else if !columns.iter().all(|c| stdout.contains(c)) {
        Err("table is missing metric columns".into())
    } else {
        Ok(format!("evaluate completed on {}", csv.to_string_lossy()))
    })
}

fn report(id: u32, name: &str, outcome: std::thread::Result<Check>) -> bool {
    let outcome = outcome.unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    match outcome {
        Ok(detail) => {
            println!("[PASS] {id:>2}. {name}: {detail}");
            true
        }
        Err(detail) => {
            println!("[FAIL] {id:>2}. {name}: {detail}");
            false
        }
    }
}

fn main() -> ExitCode {
    let fx = fixture();
    let criteria: Vec<Criterion> = vec![
        (1, "gradient oracle", Box::new(gradient_oracle)),
        (2, "loss closed forms", Box::new(loss_closed_forms)),
        (3, "HBOS oracle equivalence", Box::new(hbos_oracle)),
        (4, "training contraction", Box::new(|| contraction(&fx))),
        (
            5,
            "threshold property",
            Box::new(|| threshold_property(&fx)),
        ),
        (6, "end-to-end detection", Box::new(|| end_to_end(&fx))),
        (7, "metric oracles", Box::new(metric_oracles)),
        (
            8,
            "protocol guarantees",
            Box::new(|| protocol_guarantees(&fx)),
        ),
        (9, "serialization", Box::new(|| serialization(&fx))),
    ];
    let mut failed = 0;
    for (id, name, check) in &criteria {
        if !report(*id, name, catch_unwind(AssertUnwindSafe(check))) {
            failed += 1;
        }
    }
    match full_scale() {
        None => println!(
            "[SKIP] 10. full-scale run: set DOCNET_FULL_CSV to a NetFlow CSV to run (not gating)"
        ),
        Some(outcome) => {
            // not gating
            report(10, "full-scale run", Ok(outcome));
        }
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
