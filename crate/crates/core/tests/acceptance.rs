//! Acceptance suite. One line per criterion; exits nonzero if any fails.
//!
//! Run with `cargo test -p divfe-core --test acceptance --release`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use divfe_core::arch::ModelSpec;
use divfe_core::augment::{expand_training_set, invert_polarity, rotate_time, AugmentConfig};
use divfe_core::checkpoint::{from_bytes, to_bytes, Checkpoint};
use divfe_core::data::{load_iris, load_mnist_dir, split, synthetic, CsvOptions, LabeledDataset, SplitSpec};
use divfe_core::divergence::{analyze, divergence_value, CenterSource, Matrix};
use divfe_core::gradcheck::{check_layer, LayerKind, TOLERANCE};
use divfe_core::mdn::classify;
use divfe_core::seed::{self, Stream};
use divfe_core::trainer::{self, feature_outputs, fit, OptimizerKind, TrainConfig, TrialData};
use divfe_core::walsh::{build_modified_walsh, WalshCodebook};
use divfe_core::{Error, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn walsh_structure() -> Outcome {
    for rank in [2usize, 4, 8, 16, 32] {
        let m = build_modified_walsh(rank).map_err(e)?;
        let rows = m.rows();
        ensure(rows.len() == rank, || format!("rank {rank}: {} rows", rows.len()))?;
        for i in 0..rank {
            for j in i + 1..rank {
                let d = rows[i].iter().zip(&rows[j]).filter(|(a, b)| a != b).count();
                ensure(d == rank / 2, || format!("rank {rank}: rows {i},{j} differ in {d} places"))?;
            }
        }
    }
    let expected = [
        "11111111", "10101010", "11001100", "10011001", "11110000", "10100101", "11000011", "10010110",
    ];
    let m = build_modified_walsh(8).map_err(e)?;
    for (row, want) in m.rows().iter().zip(expected) {
        let got: String = row.iter().map(|b| char::from(b'0' + b)).collect();
        ensure(got == want, || format!("8x8 row {got} != {want}"))?;
    }
    Ok("ranks 2..32 equidistant at rank/2; 8x8 matches reference".into())
}

fn mdn_oracle(output: &[f64], targets: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, t) in targets.iter().enumerate() {
        let d: f64 = output.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

fn mdn_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ties = 0;
    for classes in [2usize, 4, 11] {
        let cb = WalshCodebook::new(16, classes).map_err(e)?;
        for n in 0..10_000 {
            // Every third vector sits on a half-integer lattice, where ties are common.
            let out: Vec<f64> = (0..16)
                .map(|_| if n % 3 == 0 { rng.random_range(0..3) as f64 * 0.5 } else { rng.random_range(-0.5..1.5) })
                .collect();
            let want = mdn_oracle(&out, cb.targets());
            let got = classify(&out, &cb).map_err(e)?;
            ensure(got == want, || format!("C={classes}: classify {got}, oracle {want} for {out:?}"))?;
            let dists: Vec<f64> = cb.targets().iter().map(|t| out.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum()).collect();
            if dists.iter().filter(|&&d| d == dists[want]).count() > 1 {
                ties += 1;
            }
        }
    }
    Ok(format!("30000 vectors agree with brute force ({ties} ties)"))
}

fn gradients() -> Outcome {
    let kinds = [
        LayerKind::Conv1d,
        LayerKind::Conv2d,
        LayerKind::MaxPool,
        LayerKind::BatchNorm,
        LayerKind::Dense,
        LayerKind::Relu,
        LayerKind::Mse,
    ];
    let mut worst = 0.0f64;
    for kind in kinds {
        for s in 0..10u64 {
            let r = check_layer(kind, 1000 + s).map_err(e)?;
            ensure(r.max_error < TOLERANCE, || format!("{kind:?} seed {s}: error {:e}", r.max_error))?;
            worst = worst.max(r.max_error);
        }
    }
    Ok(format!("7 kinds x 10 configs, worst error {worst:.2e} < {TOLERANCE:e}"))
}

fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose()
}

fn divergence_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 16;
    let s = random_psd(n, &mut rng) + Matrix::identity(n, n);
    let zero = divergence_value(&s, &Matrix::zeros(n, n), 1e-9).map_err(e)?;
    ensure(zero == 0.0, || format!("B=0 gives {zero}"))?;

    let b = random_psd(n, &mut rng);
    let ident = divergence_value(&Matrix::identity(n, n), &b, 0.0).map_err(e)?;
    ensure((ident - b.trace()).abs() <= 1e-10, || format!("tr(I^-1 B) {ident} vs tr(B) {}", b.trace()))?;

    let base = divergence_value(&s, &b, 0.0).map_err(e)?;
    for c in [0.5, 3.0, 10.0] {
        let scaled = divergence_value(&s, &(&b * c), 0.0).map_err(e)?;
        ensure((scaled - c * base).abs() <= 1e-9 * (c * base).abs().max(1.0), || {
            format!("scale {c}: {scaled} vs {}", c * base)
        })?;
    }

    let cb = WalshCodebook::new(n, 2).map_err(e)?;
    let mut values = Vec::new();
    for sep in [1.0, 2.0, 4.0] {
        let mut g = ChaCha8Rng::seed_from_u64(7);
        let mut outputs = Vec::new();
        let mut labels = Vec::new();
        for class in 0..2 {
            for _ in 0..400 {
                let noise: Vec<f64> = (0..n).map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut g)).collect();
                let mut x = noise;
                x[0] += sep * class as f64;
                outputs.push(x);
                labels.push(class);
            }
        }
        let r = analyze(&outputs, &labels, &cb, CenterSource::Empirical, None).map_err(e)?;
        values.push(r.divergence);
    }
    ensure(values.windows(2).all(|w| w[1] > w[0]), || format!("not increasing: {values:?}"))?;
    Ok(format!("zero, identity, scaling ok; separations 1,2,4 -> {values:.3?}"))
}

fn iris_accuracy() -> Outcome {
    let data = load_iris(root().join("data/iris.data"), CsvOptions::default()).map_err(e)?;
    let spec = ModelSpec::load(root().join("specs/iris.spec")).map_err(e)?;
    let mut cfg = TrainConfig::load(root().join("configs/iris.cfg")).map_err(e)?;
    cfg.standardize = Some(cfg.standardize.unwrap_or(true));
    ensure(cfg.trials == 5, || format!("config runs {} trials", cfg.trials))?;
    let weights = spec.build(&mut seed::rng(0, Stream::Init)).map_err(e)?.weight_count();
    ensure((738..=902).contains(&weights), || format!("{weights} weights outside 820 +/- 10%"))?;
    let summary = trainer::run_trials(&spec, TrialData::Pool(&data), &cfg).map_err(e)?;
    let correct: Vec<String> = summary.trials.iter().map(|t| format!("{}/{}", t.correct, t.total)).collect();
    let totals_ok = summary.trials.iter().all(|t| t.total == 30);
    ensure(totals_ok, || format!("test sets {correct:?} are not 30 samples"))?;
    ensure(summary.median >= 29.0 / 30.0, || format!("median {:.4} below 29/30; trials {correct:?}", summary.median))?;
    Ok(format!("{weights} weights; trials {correct:?}; median {:.4}", summary.median))
}

fn mnist_accuracy() -> Outcome {
    let dir = root().join("data/mnist");
    let (train, test) = load_mnist_dir(&dir)
        .map_err(|err| format!("{err}; run scripts/fetch_mnist.sh to download the data"))?;
    ensure(test.len() == 10_000, || format!("test partition has {} samples", test.len()))?;
    let spec = ModelSpec::load(root().join("specs/mnist.spec")).map_err(e)?;
    let cfg = TrainConfig::load(root().join("configs/mnist.cfg")).map_err(e)?;
    ensure(cfg.trials == 3 && cfg.epochs <= 5 && cfg.train_subset == Some(10_000), || {
        format!("config: trials {} epochs {} subset {:?}", cfg.trials, cfg.epochs, cfg.train_subset)
    })?;
    ensure(cfg.optimizer == OptimizerKind::Sgd, || "config must use SGD".into())?;
    let summary = trainer::run_trials(&spec, TrialData::Predefined { train: &train, test: &test }, &cfg).map_err(e)?;
    let accs: Vec<String> = summary.accuracies().iter().map(|a| format!("{a:.4}")).collect();
    ensure(summary.median >= 0.95, || format!("median {:.4} below 0.95; seeds {accs:?}", summary.median))?;
    Ok(format!("seeds {accs:?}; median {:.4}", summary.median))
}

fn dft_magnitudes(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * t) as f64 / n;
                re += v * a.cos();
                im += v * a.sin();
            }
            re.hypot(im)
        })
        .collect()
}

fn augmentation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let len = rng.random_range(4..64);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
        let base = dft_magnitudes(&x);
        let shift = rng.random_range(-100i64..100);
        for y in [invert_polarity(&x), rotate_time(&x, shift)] {
            for (a, b) in base.iter().zip(dft_magnitudes(&y)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    ensure(worst <= 1e-9, || format!("spectrum moved by {worst:e}"))?;

    let data = synthetic::blobs(3, 20, 12, 2.0, 1);
    let cfg = AugmentConfig { factor: 3, seed: 5, ..AugmentConfig::default() };
    let out = expand_training_set(&data, &cfg).map_err(e)?;
    let before = data.class_histogram();
    let after = out.class_histogram();
    ensure(after.iter().zip(&before).all(|(a, b)| *a == 3 * b), || format!("{before:?} -> {after:?}"))?;
    let originals_kept = (0..data.len()).all(|i| {
        (0..out.len()).any(|j| out.labels()[j] == data.labels()[i] && out.samples()[j] == data.samples()[i])
    });
    ensure(originals_kept, || "an original sample is missing".into())?;
    Ok(format!("spectrum drift {worst:.1e}; counts {before:?} -> {after:?}"))
}

fn weight_bits(m: &divfe_core::FeatureExtractorModel) -> Vec<Vec<u64>> {
    m.params().iter().map(|t| t.data().iter().map(|v| v.to_bits()).collect()).collect()
}

fn training_sanity() -> Outcome {
    let data = synthetic::blobs(2, 100, 8, 6.0, 3);
    let parts = split(&data, &SplitSpec { seed: 1, ..SplitSpec::default() }).map_err(e)?;
    let cb = WalshCodebook::new(4, 2).map_err(e)?;
    let spec: ModelSpec = "input 8\nwalsh_rank 4\nconv1d 8 4\nflatten\n".parse().map_err(e)?;
    let mut model = spec.build(&mut seed::rng(1, Stream::Init)).map_err(e)?;
    let div = |m: &divfe_core::FeatureExtractorModel| -> std::result::Result<f64, String> {
        let out = feature_outputs(m, &parts.test).map_err(e)?;
        Ok(analyze(&out, parts.test.labels(), &cb, CenterSource::Walsh, None).map_err(e)?.divergence)
    };
    let init = div(&model)?;
    let cfg = TrainConfig { epochs: 50, patience: 0, ..TrainConfig::default() };
    let report = fit(&mut model, &parts.train, &parts.validation, &cb, &cfg).map_err(e)?;
    let first = report.epochs.iter().position(|m| m.val_accuracy == 1.0);
    ensure(first.is_some(), || format!("validation accuracy never reached 1.0: {:?}", report.epochs.last()))?;
    let after = div(&model)?;
    ensure(after > init, || format!("divergence {after} <= initial {init}"))?;

    let mut frozen = spec.build(&mut seed::rng(2, Stream::Init)).map_err(e)?;
    let before = weight_bits(&frozen);
    for optimizer in [OptimizerKind::Sgd, OptimizerKind::Adam] {
        let cfg = TrainConfig { lr: 0.0, epochs: 3, optimizer, ..TrainConfig::default() };
        fit(&mut frozen, &parts.train, &parts.validation, &cb, &cfg).map_err(e)?;
        ensure(weight_bits(&frozen) == before, || format!("{optimizer:?} with lr 0 changed weights"))?;
    }
    Ok(format!(
        "val acc 1.0 at epoch {}; divergence {init:.3} -> {after:.3}; lr 0 bit-identical",
        first.unwrap() + 1
    ))
}

fn growth() -> Outcome {
    let template: ModelSpec = "input 2\nwalsh_rank 4\nconv1d 2 8\nrelu\nconv1d 1 4\nflatten\n".parse().map_err(e)?;
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Adam,
        lr: 0.01,
        epochs: 200,
        patience: 20,
        batch: 16,
        threshold: 0.95,
        ..TrainConfig::default()
    };
    let cb = WalshCodebook::new(4, 2).map_err(e)?;
    let empty = |d: &LabeledDataset| d.select(&[]);

    let blobs = synthetic::blobs(2, 60, 2, 8.0, 7);
    let sep = trainer::grow_layers(&template, &blobs, &empty(&blobs), &cb, &cfg).map_err(e)?;
    ensure(sep.accepted && sep.report.growth.len() == 1, || format!("separable: {:?}", sep.report.growth))?;

    let xor = synthetic::xor(60, 0.1, 8);
    let grown = trainer::grow_layers(&template, &xor, &empty(&xor), &cb, &cfg).map_err(e)?;
    let depth = grown.report.growth.len();
    ensure(depth > 1 && grown.accepted, || format!("xor: {:?}", grown.report.growth))?;
    Ok(format!(
        "separable stops at depth 1; xor grows to depth {depth} (train acc {:.3})",
        grown.report.growth[depth - 1].train_accuracy
    ))
}

fn checkpoint_round_trip() -> Outcome {
    let spec = ModelSpec::iris();
    let model = spec.build(&mut seed::rng(3, Stream::Init)).map_err(e)?;
    let data = synthetic::blobs(3, 10, 4, 2.0, 2);
    let ck = Checkpoint {
        model,
        codebook: WalshCodebook::new(spec.walsh_rank, 3).map_err(e)?,
        normalization: Some(divfe_core::Standardizer::fit(&data).map_err(e)?),
    };
    let bytes = to_bytes(&ck).map_err(e)?;
    let back = from_bytes(&bytes).map_err(e)?;
    ensure(weight_bits(&back.model) == weight_bits(&ck.model), || "weights changed".into())?;
    ensure(back.codebook.class_rows() == ck.codebook.class_rows(), || "class rows changed".into())?;
    ensure(to_bytes(&back).map_err(e)? == bytes, || "re-encoding differs".into())?;
    let sample = Tensor::vector(vec![0.3, -1.2, 0.8, 2.0]);
    let probe = ck.model.batch(&[&sample]).map_err(e)?;
    let (a, b) = (ck.model.predict(&probe).map_err(e)?, back.model.predict(&probe).map_err(e)?);
    ensure(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()), || "outputs differ".into())?;

    for i in 4..bytes.len() {
        let mut bad = bytes.clone();
        bad[i] ^= 0x10;
        match from_bytes(&bad) {
            Err(Error::Format { ref field, .. }) if field == "crc" => {}
            other => return Err(format!("flip at byte {i}: {:?}", other.map(|_| ()))),
        }
    }
    Ok(format!("{} bytes bit-exact; all {} payload flips caught by crc", bytes.len(), bytes.len() - 4))
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let criteria = [
        Criterion { id: 1, name: "walsh-structure", limit: Duration::from_secs(1), run: walsh_structure },
        Criterion { id: 2, name: "mdn-oracle", limit: Duration::from_secs(5), run: mdn_agreement },
        Criterion { id: 3, name: "gradient-check", limit: Duration::from_secs(60), run: gradients },
        Criterion { id: 4, name: "divergence-properties", limit: Duration::from_secs(10), run: divergence_properties },
        Criterion { id: 5, name: "iris-accuracy", limit: Duration::from_secs(120), run: iris_accuracy },
        Criterion { id: 6, name: "mnist-accuracy", limit: Duration::from_secs(30 * 60), run: mnist_accuracy },
        Criterion { id: 7, name: "augmentation", limit: Duration::from_secs(5), run: augmentation },
        Criterion { id: 8, name: "training-sanity", limit: Duration::from_secs(60), run: training_sanity },
        Criterion { id: 9, name: "growth", limit: Duration::from_secs(300), run: growth },
        Criterion { id: 10, name: "checkpoint", limit: Duration::from_secs(1), run: checkpoint_round_trip },
    ];
    let mut failed = 0;
    for c in &criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&c.id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > c.limit => Err(format!("{detail}; took {took:.2?} > limit {:?}", c.limit)),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {:>2} {} ({took:.2?}): {detail}", c.id, c.name),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {} ({took:.2?}): {detail}", c.id, c.name);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
