//! Acceptance criteria, one test each. Every test prints a single
//! `PASS`/`FAIL` line (uncaptured) before asserting.

use std::io::Write as _;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rinr_cli::config::RunConfig;
use rinr_cli::pipeline::{self, Trained};
use rinr_core::codec::{self, QuantSettings};
use rinr_core::gradcheck::max_grad_error;
use rinr_core::metrics::{self, ms_ssim, ms_ssim_scales, psnr};
use rinr_core::model::{Model, ModelConfig, Stage, Variant};
use rinr_core::quant::{self, dequantize_tensor, quantize_tensor, CompressedVideo};
use rinr_core::residual::{self, bpp_residual, tap_weights, LowResFrame, ResidualConfig, BICUBIC_A};
use rinr_core::tensor::{self, Tensor};
use rinr_core::train::{self, TrainConfig, TrainingSet};
use rinr_core::video::{synthesize, FrameSequence, SynthKind};

fn report(id: &str, pass: bool, what: &str, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{verdict} criterion {id}: {what} [{detail}]");
}

fn check(id: &str, what: &str, pass: bool, detail: String) {
    report(id, pass, what, &detail);
    assert!(pass, "criterion {id} failed: {what} [{detail}]");
}

#[test]
fn c1_residual_bpp_at_n128() {
    let bpp = bpp_residual(128, 8).unwrap();
    let shown = format!("{:.2e}", bpp);
    check(
        "1",
        "bpp_residual(128, 8) = 0.00146484375, shown as 1.46e-3",
        bpp == 0.00146484375 && bpp == 24.0 / 16384.0 && shown == "1.46e-3",
        format!("got {bpp:e}, shown {shown}"),
    );
}

fn tiny_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        feature_shape: [2, 1, 2],
        stages: vec![Stage { upsample: 2, kernel: 3 }; 3],
        base_width: 4,
        target_params: 0,
        channel_decay: 0.75,
        min_width: 2,
        encoder_width: 3,
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: [usize; 4], lo: f64, hi: f64) -> Vec<f64> {
    (0..shape.iter().product()).map(|_| rng.gen_range(lo..hi)).collect()
}

#[test]
fn c2_gradient_suite() {
    type Case = Box<dyn Fn(&mut ChaCha8Rng) -> (Vec<Tensor<f64>>, Box<dyn Fn() -> Tensor<f64>>)>;
    let p = |rng: &mut ChaCha8Rng, s: [usize; 4]| Tensor::parameter(s, uniform(rng, s, -1.0, 1.0)).unwrap();
    let c = |rng: &mut ChaCha8Rng, s: [usize; 4]| Tensor::new(s, uniform(rng, s, -1.0, 1.0)).unwrap();
    let cases: Vec<(&str, Case)> = vec![
        ("conv2d", Box::new(move |rng| {
            let (x, w, b) = (p(rng, [2, 3, 6, 7]), p(rng, [2, 3, 3, 3]), p(rng, [1, 2, 1, 1]));
            let t = c(rng, [2, 2, 3, 4]);
            let ps = vec![x.clone(), w.clone(), b.clone()];
            (ps, Box::new(move || tensor::mse_loss(&tensor::conv2d(&x, &w, &b, 2, 1).unwrap(), &t).unwrap()))
        })),
        ("gelu", Box::new(move |rng| {
            let x = Tensor::parameter([1, 2, 3, 4], uniform(rng, [1, 2, 3, 4], -3.0, 3.0)).unwrap();
            let t = c(rng, [1, 2, 3, 4]);
            (vec![x.clone()], Box::new(move || tensor::mse_loss(&tensor::gelu(&x), &t).unwrap()))
        })),
        ("sigmoid", Box::new(move |rng| {
            let x = Tensor::parameter([1, 3, 2, 4], uniform(rng, [1, 3, 2, 4], -4.0, 4.0)).unwrap();
            let t = c(rng, [1, 3, 2, 4]);
            (vec![x.clone()], Box::new(move || tensor::mse_loss(&tensor::sigmoid(&x), &t).unwrap()))
        })),
        ("pixel_shuffle", Box::new(move |rng| {
            let x = p(rng, [1, 8, 2, 3]);
            let t = c(rng, [1, 2, 4, 6]);
            (vec![x.clone()], Box::new(move || tensor::mse_loss(&tensor::pixel_shuffle(&x, 2).unwrap(), &t).unwrap()))
        })),
        ("pixel_unshuffle", Box::new(move |rng| {
            let x = p(rng, [1, 2, 6, 6]);
            let t = c(rng, [1, 18, 2, 2]);
            (vec![x.clone()], Box::new(move || tensor::mse_loss(&tensor::pixel_unshuffle(&x, 3).unwrap(), &t).unwrap()))
        })),
        ("mse", Box::new(move |rng| {
            let (a, b) = (p(rng, [1, 3, 4, 5]), p(rng, [1, 3, 4, 5]));
            (vec![a.clone(), b.clone()], Box::new(move || tensor::mse_loss(&a, &b).unwrap()))
        })),
        ("add+sum", Box::new(move |rng| {
            let (a, b) = (p(rng, [1, 2, 3, 3]), p(rng, [1, 2, 3, 3]));
            (vec![a.clone(), b.clone()], Box::new(move || {
                tensor::sum(&tensor::gelu(&tensor::add(&tensor::add(&a, &b).unwrap(), &tensor::gelu(&a)).unwrap()))
            }))
        })),
        ("residual pipeline", Box::new(move |rng| {
            let model: Model<f64> = Model::build(&tiny_config(Variant::Residual), rng.gen()).unwrap();
            let y = Tensor::new([1, 3, 8, 16], uniform(rng, [1, 3, 8, 16], 0.0, 1.0)).unwrap();
            let (_, base) = residual::residual_base(&y, ResidualConfig::new(2)).unwrap();
            (model.params(), Box::new(move || tensor::mse_loss(&model.forward(&y, Some(&base)).unwrap(), &y).unwrap()))
        })),
    ];
    let mut worst = (0.0f64, "");
    for (name, case) in &cases {
        for seed in 1..=5u64 {
            let (params, loss) = case(&mut ChaCha8Rng::seed_from_u64(seed));
            let err = max_grad_error(&params, 1e-5, loss);
            if err > worst.0 {
                worst = (err, name);
            }
        }
    }
    check(
        "2",
        "finite-difference gradients within 1e-4 relative, 5 seeds per op and end to end",
        worst.0 <= 1e-4,
        format!("{} cases x 5 seeds, worst {:.2e} ({})", cases.len(), worst.0, worst.1),
    );
}

#[test]
fn c3_overfit_single_frame() {
    let start = Instant::now();
    let seq = synthesize(SynthKind::Bouncing, 1, 32, 64, 0).unwrap();
    let config = ModelConfig::desk(Variant::Baseline, 32, 64, 20_000);
    let model: Model<f32> = Model::build(&config, 0).unwrap();
    let params = model.count_params().decoder;
    let set = TrainingSet::new(seq.tensors(), Variant::Baseline, ResidualConfig::new(8)).unwrap();
    let tc = TrainConfig {
        epochs: 2_000,
        ..TrainConfig::new(Variant::Baseline)
    };
    let out = train::train(model, &set, &tc, |_| {}).unwrap();
    let recon = train::reconstruct(&out.model, &set).unwrap();
    let p = psnr(&recon[0], &set.frames[0], 1.0).unwrap();
    check(
        "3",
        "one 32x64 frame, ~20k-param decoder, 2000 steps reaches > 35 dB",
        p > 35.0,
        format!("{params} params, {p:.2} dB in {:.0?}", start.elapsed()),
    );
}

const DESK_VIDEOS: [(SynthKind, u64); 5] = [
    (SynthKind::Rects, 1),
    (SynthKind::Bouncing, 2),
    (SynthKind::Gratings, 3),
    (SynthKind::Rects, 4),
    (SynthKind::Bouncing, 5),
];

struct DeskRun {
    seq: FrameSequence,
    baseline: Trained,
    residual: Trained,
}

/// The criterion-4 models, trained once and shared with criterion 5.
fn desk() -> &'static [DeskRun] {
    static RUNS: OnceLock<Vec<DeskRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        DESK_VIDEOS
            .iter()
            .map(|&(kind, seed)| {
                let seq = synthesize(kind, 16, 64, 128, seed).unwrap();
                let run = |variant| {
                    let start = Instant::now();
                    let cfg = RunConfig {
                        variant,
                        ..RunConfig::default()
                    };
                    let t = pipeline::train_video(&cfg, &seq, |_| {}).unwrap();
                    let _ = writeln!(
                        std::io::stderr(),
                        "  trained {}-{seed} {variant}: {:.2} dB in {:.0?}",
                        kind.as_str(),
                        t.train_psnr,
                        start.elapsed()
                    );
                    t
                };
                let baseline = run(Variant::Baseline);
                let residual = run(Variant::Residual);
                DeskRun { seq, baseline, residual }
            })
            .collect()
    })
}

#[test]
fn c4_residual_beats_baseline() {
    let start = Instant::now();
    let runs = desk();
    let wins = runs.iter().filter(|r| r.residual.train_psnr > r.baseline.train_psnr).count();
    let pairs: Vec<String> = runs
        .iter()
        .map(|r| format!("{}: {:.2} vs {:.2}", r.seq.id, r.residual.train_psnr, r.baseline.train_psnr))
        .collect();
    let r0 = &runs[0].residual;
    let lr_ok = runs[0].baseline.checkpoint.model.count_params() == r0.checkpoint.model.count_params()
        && RunConfig::default().learning_rate() == 9.9e-4
        && RunConfig { variant: Variant::Baseline, ..RunConfig::default() }.learning_rate() == 1e-3;
    let params = r0.checkpoint.model.count_params().decoder;
    let min_psnr = runs
        .iter()
        .flat_map(|r| [r.baseline.train_psnr, r.residual.train_psnr])
        .fold(f64::INFINITY, f64::min);
    report(
        "4",
        min_psnr > 25.0,
        "every desk-scale run ends with training PSNR > 25 dB",
        &format!("minimum {min_psnr:.2} dB"),
    );
    check(
        "4",
        "residual (lr 9.9e-4) beats baseline (lr 1e-3) in mean PSNR on >= 70% of 5 videos",
        lr_ok && wins * 10 >= 7 * runs.len(),
        format!(
            "{wins}/{} wins, {params} decoder params; {}; {:.0?}",
            runs.len(),
            pairs.join(", "),
            start.elapsed()
        ),
    );
    assert!(min_psnr > 25.0, "desk-scale training PSNR {min_psnr:.2} dB");
}

fn decoded_psnr(c: &CompressedVideo, seq: &FrameSequence) -> f64 {
    let recon = pipeline::decode(c, &seq.id).unwrap();
    pipeline::evaluate(&recon, seq).unwrap().mean_psnr()
}

#[test]
fn c5_quantization() {
    // bound on random tensors
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut bound_ok = true;
    let mut worst_ratio = 0.0f64;
    for bits in [1u8, 4, 6, 8, 16] {
        for _ in 0..20 {
            let (lo, span) = (rng.gen_range(-10.0..10.0), rng.gen_range(1e-3..20.0));
            let n = rng.gen_range(1..2_000);
            let t = Tensor::<f64>::new([1, 1, 1, n], (0..n).map(|_| lo + span * rng.gen::<f64>()).collect()).unwrap();
            let v = t.to_vec();
            let (mn, mx) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            let back = dequantize_tensor::<f64>(&quantize_tensor(&t, bits).unwrap()).unwrap().to_vec();
            let bound = (mx - mn) / (2.0 * ((1u64 << bits) - 1) as f64);
            let err = v.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            bound_ok &= err <= bound;
            if bound > 0.0 {
                worst_ratio = worst_ratio.max(err / bound);
            }
        }
    }
    report(
        "5",
        bound_ok,
        "round-trip error <= (max-min)/(2(2^bits-1)) for bits 1,4,6,8,16",
        &format!("100 random tensors, worst error/bound {worst_ratio:.4}"),
    );

    // degradation of the criterion-4 models, through the packed bytes
    let mut worst = (0.0f64, String::new());
    let mut bit_exact = true;
    for r in desk() {
        for t in [&r.baseline, &r.residual] {
            let c = pipeline::compress(&t.checkpoint, &t.features, t.lowres.as_ref(), &RunConfig::default()).unwrap();
            let bytes = quant::pack(&c);
            let unpacked = quant::unpack(&bytes).unwrap();
            bit_exact &= quant::pack(&unpacked) == bytes && unpacked == c;
            let drop = t.train_psnr - decoded_psnr(&unpacked, &r.seq);
            if drop > worst.0 {
                worst = (drop, format!("{} {}", r.seq.id, c.variant()));
            }
        }
    }
    report(
        "5",
        worst.0 < 1.0,
        "8-bit weights + 6-bit features cost < 1 dB on the criterion-4 models",
        &format!("worst drop {:.3} dB ({})", worst.0, worst.1),
    );
    report(
        "5",
        bit_exact,
        "desk-scale artifacts survive pack/unpack bit-exactly",
        "10 containers",
    );

    // monotonicity in weight bits on one fixed model, features unquantized
    let r = &desk()[0];
    let t = &r.residual;
    let (rc, lows) = t.lowres.as_ref().unwrap();
    let mses: Vec<f64> = [4u8, 6, 8, 16]
        .iter()
        .map(|&bits| {
            let settings = QuantSettings { feature_bits: 16, model_bits: bits };
            let c = codec::compress(&t.checkpoint.model, &t.features, Some((*rc, lows)), settings).unwrap();
            let dec = codec::decoder_of(&c).unwrap();
            let total: f64 = (0..r.seq.len())
                .map(|i| {
                    let base = residual::bicubic_upsample(&lows[i].dequantize::<f32>(), (64, 128)).unwrap();
                    let out = residual::reconstruct(&base, &dec.forward(&t.features[i]).unwrap()).unwrap();
                    metrics::mse(&out, &r.seq.frame::<f32>(i)).unwrap()
                })
                .sum();
            total / r.seq.len() as f64
        })
        .collect();
    let monotone = mses.windows(2).all(|w| w[1] <= w[0]);
    report(
        "5",
        monotone,
        "reconstruction error non-increasing in weight bits 4,6,8,16",
        &format!("mse {:?}", mses.iter().map(|m| format!("{m:.3e}")).collect::<Vec<_>>()),
    );
    assert!(bound_ok && worst.0 < 1.0 && bit_exact && monotone);
}

fn random_container(seed: u64) -> CompressedVideo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let variant = if rng.gen() { Variant::Residual } else { Variant::Baseline };
    let config = ModelConfig {
        variant,
        feature_shape: [rng.gen_range(1..=4), rng.gen_range(1..=2), rng.gen_range(1..=3)],
        stages: (0..rng.gen_range(1..=4))
            .map(|_| Stage {
                upsample: 2,
                kernel: [1, 3][rng.gen_range(0..2)],
            })
            .collect(),
        base_width: rng.gen_range(2..=6),
        target_params: 0,
        channel_decay: 0.75,
        min_width: 1,
        encoder_width: 2,
    };
    let model: Model<f32> = Model::build(&config, rng.gen()).unwrap();
    let frames = rng.gen_range(1..=4);
    let [c, fh, fw] = config.feature_shape;
    let features: Vec<Tensor<f32>> = (0..frames)
        .map(|_| Tensor::new([1, c, fh, fw], (0..c * fh * fw).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap())
        .collect();
    let settings = QuantSettings {
        feature_bits: rng.gen_range(1..=16),
        model_bits: rng.gen_range(1..=16),
    };
    let (h, w) = config.frame_dims();
    let lows: Vec<LowResFrame>;
    let lowres = match variant {
        Variant::Baseline => None,
        Variant::Residual => {
            let n = [1usize, 2, 4].into_iter().filter(|n| h % n == 0 && w % n == 0).last().unwrap();
            let bits = rng.gen_range(1..=8u8);
            lows = (0..frames)
                .map(|_| LowResFrame {
                    height: h / n,
                    width: w / n,
                    bit_depth: bits,
                    codes: (0..3 * (h / n) * (w / n)).map(|_| rng.gen_range(0..=((1u32 << bits) - 1)) as u8).collect(),
                })
                .collect();
            Some((ResidualConfig { scale: n, bit_depth: bits }, &lows[..]))
        }
    };
    codec::compress(&model, &features, lowres, settings).unwrap()
}

#[test]
fn c6_bitstream() {
    let mut exact = 0;
    for seed in 0..100 {
        let c = random_container(seed);
        let bytes = quant::pack(&c);
        let back = quant::unpack(&bytes).unwrap();
        if back == c && quant::pack(&back) == bytes {
            exact += 1;
        }
    }
    report("6", exact == 100, "pack/unpack bit-exact on 100 fuzzed containers", &format!("{exact}/100"));

    let t = tempfile::tempdir().unwrap();
    let p = |name: &str| t.path().join(name).to_str().unwrap().to_string();
    let rinr = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_rinr")).args(args).output().unwrap();
        (out.status.success(), String::from_utf8_lossy(&out.stderr).into_owned())
    };
    let steps = [
        rinr(&["synth", "--kind", "rects", "--frames", "3", "--height", "32", "--width", "64", "--out", &p("video")]),
        rinr(&["train", "--input", &p("video"), "--out", &p("run"), "--epochs", "2", "--model-size", "0.006", "--quiet"]),
        rinr(&["compress", "--run", &p("run"), "--out", &p("v.rinrv")]),
    ];
    let prepared = steps.iter().all(|s| s.0);
    std::fs::remove_dir_all(p("video")).unwrap();
    std::fs::remove_dir_all(p("run")).unwrap();
    let (decoded, err) = rinr(&["decode", "--input", &p("v.rinrv"), "--out", &p("decoded")]);
    let count = std::fs::read_dir(p("decoded")).map(|d| d.count()).unwrap_or(0);
    let after_delete = prepared && decoded && count == 3;
    report(
        "6",
        after_delete,
        "decode succeeds from the container alone after deleting originals and run dir",
        &format!("{count} frames decoded{}", if err.is_empty() { String::new() } else { format!(", stderr: {}", err.trim()) }),
    );
    assert!(exact == 100 && after_delete);
}

/// Plain SSIM with explicit 2-D Gaussian weights over every valid window.
fn ssim_oracle(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let [_, c, h, w] = a.shape();
    let k = 11usize;
    let mut g: Vec<f64> = (0..k).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    let (c1, c2) = (1e-4, 9e-4);
    let (da, db) = (a.to_vec(), b.to_vec());
    let mut total = 0.0;
    for ch in 0..c {
        let mut acc = 0.0;
        let mut count = 0.0;
        for y0 in 0..=h - k {
            for x0 in 0..=w - k {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..k {
                    for j in 0..k {
                        let wt = g[i] * g[j];
                        let at = (ch * h + y0 + i) * w + x0 + j;
                        let (p, q) = (da[at], db[at]);
                        ma += wt * p;
                        mb += wt * q;
                        saa += wt * p * p;
                        sbb += wt * q * q;
                        sab += wt * p * q;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1.0;
            }
        }
        total += acc / count;
    }
    total / c as f64
}

#[test]
fn c7_metrics() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = synthesize(SynthKind::Bouncing, 1, 64, 64, 7).unwrap().frame::<f64>(0);
    let identity = ms_ssim(&a, &a).unwrap();
    let shifted = Tensor::new(a.shape(), a.to_vec().iter().map(|v| v * 0.8 + 0.1).collect()).unwrap();
    let plus = Tensor::new(a.shape(), shifted.to_vec().iter().map(|v| v + 0.1).collect()).unwrap();
    let p20 = psnr(&shifted, &plus, 1.0).unwrap();
    let mut worst = 0.0f64;
    for (h, w) in [(16, 18), (21, 13), (32, 32)] {
        let x = Tensor::new([1, 3, h, w], uniform(&mut rng, [1, 3, h, w], 0.0, 1.0)).unwrap();
        let y = Tensor::new(x.shape(), x.to_vec().iter().map(|v| (v + rng.gen_range(-0.2..0.2)).clamp(0.0, 1.0)).collect()).unwrap();
        worst = worst.max((ms_ssim_scales(&x, &y, 1).unwrap() - ssim_oracle(&x, &y)).abs());
    }
    let pass = (identity - 1.0).abs() <= 1e-6 && p20 == 20.0 && worst < 1e-4;
    check(
        "7",
        "ms_ssim(a,a) = 1 +- 1e-6; uniform 0.1 error is exactly 20 dB; SSIM matches brute force within 1e-4",
        pass,
        format!("ms_ssim {identity}, psnr {p20}, ssim gap {worst:.2e}"),
    );
}

#[test]
fn c8_bicubic() {
    let mut worst = 0.0f64;
    for (c, n) in [(0.0, 2), (0.37, 4), (1.0, 8), (0.5, 3)] {
        let low = Tensor::<f64>::new([1, 3, 4, 6], vec![c; 72]).unwrap();
        let up = residual::bicubic_upsample(&low, (4 * n, 6 * n)).unwrap();
        worst = worst.max(up.to_vec().iter().map(|v| (v - c).abs()).fold(0.0, f64::max));
    }
    report("8", worst <= 1e-6, "bicubic preserves constants within 1e-6", &format!("worst {worst:.1e}"));
    let taps = tap_weights(0.5, BICUBIC_A);
    let expected = [-0.0703125, 0.5703125, 0.5703125, -0.0703125];
    report(
        "8",
        taps == expected,
        "a=-0.75 half-offset taps equal (-0.0703125, 0.5703125, 0.5703125, -0.0703125)",
        &format!("a={BICUBIC_A} gives {taps:?}"),
    );
    assert!(worst <= 1e-6, "constant preservation {worst}");
    assert_eq!(taps, expected, "half-offset taps at a={BICUBIC_A}");
}

#[test]
fn c9_rd_sweep() {
    let start = Instant::now();
    let seq = synthesize(SynthKind::Gratings, 4, 64, 128, 9).unwrap();
    let base = RunConfig {
        model_size: 0.02,
        epochs: 60,
        ..RunConfig::default()
    };
    let sizes = [0.5, 1.0, 1.5, 2.0];
    let rows = pipeline::rd_sweep(&base, &seq, &sizes, &[Variant::Baseline, Variant::Residual], None, |_| {}).unwrap();
    let csv = pipeline::rd_csv(&rows);
    let lines: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let col = |name: &str| pipeline::RD_HEADER.split(',').position(|h| h == name).unwrap();
    let (vi, bi, pi, pxi, si) = (col("variant"), col("bpp"), col("payload_bits"), col("pixels"), col("status"));
    let all_ok = lines.len() == 8 && lines.iter().all(|l| l[si] == "ok");
    let of = |v: &str| lines.iter().filter(|l| l[vi] == v).collect::<Vec<_>>();
    let (bl, rs) = (of("baseline"), of("residual"));
    let increasing = [&bl, &rs].iter().all(|rows| {
        rows.windows(2).all(|w| w[1][bi].parse::<f64>().unwrap() > w[0][bi].parse::<f64>().unwrap())
    });
    let want = bpp_residual(8, 8).unwrap();
    let gaps: Vec<f64> = bl
        .iter()
        .zip(&rs)
        .map(|(b, r)| {
            let bits = r[pi].parse::<u64>().unwrap() - b[pi].parse::<u64>().unwrap();
            bits as f64 / r[pxi].parse::<u64>().unwrap() as f64
        })
        .collect();
    let float_gaps: Vec<f64> = bl
        .iter()
        .zip(&rs)
        .map(|(b, r)| r[bi].parse::<f64>().unwrap() - b[bi].parse::<f64>().unwrap())
        .collect();
    let exact = gaps.len() == 4 && gaps.iter().all(|&g| g == want);
    check(
        "9",
        "2 variants x 4 sizes: bpp strictly increasing per variant, residual gap = bpp_residual exactly",
        all_ok && increasing && exact,
        format!(
            "{} rows, gaps {gaps:?} (from bpp column {:?}) vs {want}; {:.0?}",
            lines.len(),
            float_gaps.iter().map(|g| format!("{g:.6}")).collect::<Vec<_>>(),
            start.elapsed()
        ),
    );
}
