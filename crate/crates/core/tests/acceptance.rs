//! Acceptance suite. Runs every criterion in order and prints one line per
//! criterion; criteria 8 and 9 are expected trends and never fail the run.
//!
//! Criteria 7-9 execute the full pipeline six times (two cold runs for the
//! determinism check, four more seeds for the trend checks).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use headimpact::autodiff::{finite_diff_check, Tape, Tensor, Var};
use headimpact::data::{generate_dataset, ObjectKind, Sample};
use headimpact::eval::{
    perplexity, question_units, score_vqa_units, LogitModel, OracleModel, UniformModel,
};
use headimpact::impact::{binarize, iou, kruskal_wallis, BinaryGrid, HiStats};
use headimpact::lora::{attach_lora, count_params};
use headimpact::model::{
    build_forward, forward, init_model, ModelConfig, ModelWeights, Vocab, WeightVars,
};
use headimpact::pipeline::{Pipeline, RunConfig, Stage};
use headimpact::rng::Rng;
use headimpact::train::{train, TrainConfig, Trainable};
use headimpact::units::{caption_units, vqa_units, Unit};
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;

struct Report {
    failures: usize,
}

impl Report {
    /// Test output capture only intercepts the print macros, so write to the
    /// handle directly to keep these lines visible in a plain `cargo test`.
    fn line(&self, text: &str) {
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{text}");
        let _ = out.flush();
    }

    fn blocking(&mut self, n: usize, name: &str, outcome: Outcome, start: Instant) {
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => self.line(&format!(
                "[PASS] criterion {n:>2} {name}: {detail} ({secs:.1}s)"
            )),
            Err(detail) => {
                self.failures += 1;
                self.line(&format!(
                    "[FAIL] criterion {n:>2} {name}: {detail} ({secs:.1}s)"
                ));
            }
        }
    }

    fn trend(&mut self, n: usize, name: &str, outcome: Outcome) {
        match outcome {
            Ok(detail) => self.line(&format!(
                "[PASS] criterion {n:>2} {name} (expected trend, non-blocking): {detail}"
            )),
            Err(detail) => self.line(&format!(
                "[MISS] criterion {n:>2} {name} (expected trend, non-blocking): {detail}"
            )),
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- 1

fn project(tape: &mut Tape<'_>, v: Var, seed: u64) -> headimpact::Result<Var> {
    let shape = tape.value(v).shape().to_vec();
    let r = tape.leaf(Tensor::randn(&shape, 1.0, &mut Rng::new(seed)), false);
    let m = tape.mul(v, r)?;
    tape.sum(m)
}

fn dims(rng: &mut Rng) -> (usize, usize) {
    (1 + rng.below(4), 1 + rng.below(5))
}

const TRIALS: u64 = 100;
const GRAD_TOL: f64 = 1e-4;
const STEP: f64 = 1e-5;

fn op_trials(
    name: &str,
    trial: impl Fn(u64, &mut Rng) -> headimpact::Result<f64>,
) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for t in 0..TRIALS {
        let mut rng = Rng::derive(
            0xacc1,
            t ^ (name.len() as u64) << 32 ^ name.bytes().map(u64::from).sum::<u64>(),
        );
        let err = trial(t, &mut rng).map_err(|e| format!("{name} trial {t}: {e}"))?;
        if err >= GRAD_TOL {
            return Err(format!("{name} trial {t}: relative error {err:.2e}"));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

fn weight_slots(v: &mut WeightVars) -> Vec<&mut Var> {
    let mut s = vec![
        &mut v.patch_proj,
        &mut v.token_embedding,
        &mut v.position_embedding,
    ];
    for l in &mut v.layers {
        s.extend([
            &mut l.ln1_gamma,
            &mut l.ln1_beta,
            &mut l.wq,
            &mut l.wk,
            &mut l.wv,
            &mut l.wo,
            &mut l.ln2_gamma,
            &mut l.ln2_beta,
            &mut l.ffn_in,
            &mut l.ffn_out,
        ]);
    }
    s.extend([&mut v.final_gamma, &mut v.final_beta, &mut v.output_head]);
    s
}

fn model_loss_check(weights: &ModelWeights, unit: &Unit) -> headimpact::Result<f64> {
    let named = weights.named_tensors();
    let mut worst = 0.0f64;
    for (i, (_, point)) in named.iter().enumerate() {
        let err = finite_diff_check(
            |tape, p| {
                let mut vars = WeightVars::register(tape, weights, false);
                *weight_slots(&mut vars)[i] = p;
                let patches = tape.leaf_ref(&unit.patches, false);
                let out = build_forward(
                    tape,
                    &weights.config,
                    &vars,
                    &[],
                    &unit.layout,
                    patches,
                    false,
                )?;
                tape.cross_entropy(out.logits, &unit.layout.targets())
            },
            point,
            STEP,
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}

fn criterion_1() -> Outcome {
    let mut summary = Vec::new();
    let mut record = |name: &str, r: Result<f64, String>| -> Result<(), String> {
        summary.push(format!("{name} {:.0e}", r?));
        Ok(())
    };

    record(
        "matmul",
        op_trials("matmul", |t, rng| {
            let (m, k) = dims(rng);
            let n = 1 + rng.below(4);
            let a = Tensor::randn(&[m, k], 1.0, rng);
            let b = Tensor::randn(&[k, n], 1.0, rng);
            if t % 2 == 0 {
                finite_diff_check(
                    |tp, x| {
                        let bb = tp.leaf_ref(&b, false);
                        let y = tp.matmul(x, bb)?;
                        project(tp, y, t)
                    },
                    &a,
                    STEP,
                )
            } else {
                finite_diff_check(
                    |tp, x| {
                        let aa = tp.leaf_ref(&a, false);
                        let y = tp.matmul(aa, x)?;
                        project(tp, y, t)
                    },
                    &b,
                    STEP,
                )
            }
        }),
    )?;
    record(
        "add",
        op_trials("add", |t, rng| {
            let (m, n) = dims(rng);
            let a = Tensor::randn(&[m, n], 1.0, rng);
            let b = Tensor::randn(&[m, n], 1.0, rng);
            finite_diff_check(
                |tp, x| {
                    let bb = tp.leaf_ref(&b, false);
                    let y = tp.add(x, bb)?;
                    let y = tp.add(y, x)?;
                    project(tp, y, t)
                },
                &a,
                STEP,
            )
        }),
    )?;
    record(
        "mul",
        op_trials("mul", |t, rng| {
            let (m, n) = dims(rng);
            let a = Tensor::randn(&[m, n], 1.0, rng);
            let b = Tensor::randn(&[m, n], 1.0, rng);
            finite_diff_check(
                |tp, x| {
                    let bb = tp.leaf_ref(&b, false);
                    let y = tp.mul(x, bb)?;
                    let y = tp.mul(y, x)?;
                    project(tp, y, t)
                },
                &a,
                STEP,
            )
        }),
    )?;
    record(
        "scale",
        op_trials("scale", |t, rng| {
            let (m, n) = dims(rng);
            let a = Tensor::randn(&[m, n], 1.0, rng);
            let f = rng.gaussian(0.0, 2.0);
            finite_diff_check(
                |tp, x| {
                    let y = tp.scale(x, f)?;
                    project(tp, y, t)
                },
                &a,
                STEP,
            )
        }),
    )?;
    record(
        "softmax",
        op_trials("softmax", |t, rng| {
            let (m, n) = dims(rng);
            let a = Tensor::randn(&[m, n], 2.0, rng);
            finite_diff_check(
                |tp, x| {
                    let y = tp.softmax(x)?;
                    project(tp, y, t)
                },
                &a,
                STEP,
            )
        }),
    )?;
    record(
        "causal_softmax",
        op_trials("causal_softmax", |t, rng| {
            let n = 1 + rng.below(5);
            let a = Tensor::randn(&[n, n], 2.0, rng);
            finite_diff_check(
                |tp, x| {
                    let y = tp.causal_softmax(x)?;
                    project(tp, y, t)
                },
                &a,
                STEP,
            )
        }),
    )?;
    record(
        "layer_norm",
        op_trials("layer_norm", |t, rng| {
            let m = 1 + rng.below(4);
            let n = 2 + rng.below(5);
            let x = Tensor::randn(&[m, n], 1.5, rng);
            let g = Tensor::randn(&[n], 1.0, rng);
            let b = Tensor::randn(&[n], 1.0, rng);
            match t % 3 {
                0 => finite_diff_check(
                    |tp, v| {
                        let (gg, bb) = (tp.leaf_ref(&g, false), tp.leaf_ref(&b, false));
                        let y = tp.layer_norm(v, gg, bb)?;
                        project(tp, y, t)
                    },
                    &x,
                    STEP,
                ),
                1 => finite_diff_check(
                    |tp, v| {
                        let (xx, bb) = (tp.leaf_ref(&x, false), tp.leaf_ref(&b, false));
                        let y = tp.layer_norm(xx, v, bb)?;
                        project(tp, y, t)
                    },
                    &g,
                    STEP,
                ),
                _ => finite_diff_check(
                    |tp, v| {
                        let (xx, gg) = (tp.leaf_ref(&x, false), tp.leaf_ref(&g, false));
                        let y = tp.layer_norm(xx, gg, v)?;
                        project(tp, y, t)
                    },
                    &b,
                    STEP,
                ),
            }
        }),
    )?;
    record(
        "gelu",
        op_trials("gelu", |t, rng| {
            let (m, n) = dims(rng);
            let a = Tensor::randn(&[m, n], 2.0, rng);
            finite_diff_check(
                |tp, x| {
                    let y = tp.gelu(x)?;
                    project(tp, y, t)
                },
                &a,
                STEP,
            )
        }),
    )?;
    record(
        "embedding",
        op_trials("embedding", |t, rng| {
            let (v, d) = (2 + rng.below(5), 1 + rng.below(4));
            let table = Tensor::randn(&[v, d], 1.0, rng);
            let ids: Vec<usize> = (0..1 + rng.below(6)).map(|_| rng.below(v)).collect();
            finite_diff_check(
                |tp, x| {
                    let y = tp.embedding(x, &ids)?;
                    project(tp, y, t)
                },
                &table,
                STEP,
            )
        }),
    )?;
    record(
        "transpose",
        op_trials("transpose", |t, rng| {
            let (m, n) = dims(rng);
            let a = Tensor::randn(&[m, n], 1.0, rng);
            finite_diff_check(
                |tp, x| {
                    let y = tp.transpose(x)?;
                    project(tp, y, t)
                },
                &a,
                STEP,
            )
        }),
    )?;
    record(
        "reshape",
        op_trials("reshape", |t, rng| {
            let (m, n) = dims(rng);
            let a = Tensor::randn(&[m, n], 1.0, rng);
            finite_diff_check(
                |tp, x| {
                    let y = tp.reshape(x, &[n, m])?;
                    project(tp, y, t)
                },
                &a,
                STEP,
            )
        }),
    )?;
    record(
        "concat",
        op_trials("concat", |t, rng| {
            let (m, n) = dims(rng);
            let axis = (t % 2) as usize;
            let a = Tensor::randn(&[m, n], 1.0, rng);
            let other = if axis == 0 {
                [1 + rng.below(3), n]
            } else {
                [m, 1 + rng.below(3)]
            };
            let b = Tensor::randn(&other, 1.0, rng);
            finite_diff_check(
                |tp, x| {
                    let bb = tp.leaf_ref(&b, false);
                    let y = tp.concat(&[bb, x, bb], axis)?;
                    project(tp, y, t)
                },
                &a,
                STEP,
            )
        }),
    )?;
    record(
        "slice",
        op_trials("slice", |t, rng| {
            let (m, n) = (1 + rng.below(4), 2 + rng.below(4));
            let axis = (t % 2) as usize;
            let a = Tensor::randn(&[m, n], 1.0, rng);
            let extent = if axis == 0 { m } else { n };
            let start = rng.below(extent);
            let len = 1 + rng.below(extent - start);
            finite_diff_check(
                |tp, x| {
                    let y = tp.slice(x, axis, start, len)?;
                    project(tp, y, t)
                },
                &a,
                STEP,
            )
        }),
    )?;
    record(
        "cross_entropy",
        op_trials("cross_entropy", |_, rng| {
            let (m, n) = (1 + rng.below(4), 2 + rng.below(5));
            let a = Tensor::randn(&[m, n], 2.0, rng);
            let targets: Vec<(usize, usize)> = (0..1 + rng.below(4))
                .map(|_| (rng.below(m), rng.below(n)))
                .collect();
            finite_diff_check(|tp, x| tp.cross_entropy(x, &targets), &a, STEP)
        }),
    )?;
    record(
        "sum",
        op_trials("sum", |_, rng| {
            let (m, n) = dims(rng);
            let a = Tensor::randn(&[m, n], 1.0, rng);
            finite_diff_check(
                |tp, x| {
                    let y = tp.mul(x, x)?;
                    tp.sum(y)
                },
                &a,
                STEP,
            )
        }),
    )?;

    let config = ModelConfig {
        d_model: 8,
        n_heads: 2,
        head_dim: 4,
        ffn_dim: 16,
        n_layers: 2,
        ..ModelConfig::default()
    };
    let vocab = Vocab::standard();
    let samples = generate_dataset(10, 5).map_err(e2s)?;
    let refs: Vec<&Sample> = samples.iter().take(2).collect();
    let pool: Vec<String> = ObjectKind::all().iter().map(|k| k.caption()).collect();
    let mut units = caption_units(&vocab, &config, &refs).map_err(e2s)?;
    units.extend(vqa_units(&vocab, &config, &refs, &pool, &mut Rng::new(3)).map_err(e2s)?);
    let mut worst = 0.0f64;
    for (trial, unit) in units.iter().take(3).chain(units.last()).enumerate() {
        let w = init_model(&config, 100 + trial as u64).map_err(e2s)?;
        let err = model_loss_check(&w, unit).map_err(e2s)?;
        ensure(err < GRAD_TOL, || {
            format!("toy model loss trial {trial}: relative error {err:.2e}")
        })?;
        worst = worst.max(err);
    }
    summary.push(format!("model loss {worst:.0e}"));
    Ok(format!(
        "15 ops x {TRIALS} trials + full model loss, worst errors: {}",
        summary.join(", ")
    ))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mut rng = Rng::new(0x10);
    let mut empty_unions = 0;
    for case in 0..1000 {
        let density = rng.uniform();
        let mut grid = || {
            let bits: Vec<bool> = (0..64).map(|_| rng.uniform() < density).collect();
            BinaryGrid::new(8, 8, bits).unwrap()
        };
        let (a, b) = (grid(), grid());
        // cell enumeration with Iverson brackets
        let mut inter = 0u32;
        let mut union = 0u32;
        for r in 0..8 {
            for c in 0..8 {
                let (x, y) = (a.bits[r * 8 + c], b.bits[r * 8 + c]);
                inter += u32::from(x && y);
                union += u32::from(x || y);
            }
        }
        let expected = if union == 0 {
            empty_unions += 1;
            0.0
        } else {
            f64::from(inter) / f64::from(union)
        };
        let got = iou(&a, &b).map_err(e2s)?;
        ensure(got == expected, || {
            format!("case {case}: iou {got} vs oracle {expected}")
        })?;
        ensure(iou(&b, &a).map_err(e2s)? == got, || {
            format!("case {case}: asymmetric")
        })?;
    }
    Ok(format!(
        "1000/1000 exact matches ({empty_unions} empty unions)"
    ))
}

// ---------------------------------------------------------------- 3

/// Average ranks by direct counting, H with tie correction.
fn reference_h(groups: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = groups.iter().flatten().cloned().collect();
    let n = all.len() as f64;
    let rank = |x: f64| {
        let below = all.iter().filter(|&&y| y < x).count() as f64;
        let equal = all.iter().filter(|&&y| y == x).count() as f64;
        below + (equal + 1.0) / 2.0
    };
    let mut h = 0.0;
    for g in groups {
        let r: f64 = g.iter().map(|&x| rank(x)).sum();
        h += r * r / g.len() as f64;
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
    let mut seen: Vec<f64> = Vec::new();
    let mut ties = 0.0;
    for &x in &all {
        if !seen.contains(&x) {
            seen.push(x);
            let t = all.iter().filter(|&&y| y == x).count() as f64;
            ties += t * t * t - t;
        }
    }
    let c = 1.0 - ties / (n * n * n - n);
    h / c
}

/// Chi-square upper tail for integer df in closed form: a Poisson sum for
/// even df, erfc plus a finite series for odd df.
fn reference_sf(x: f64, df: usize) -> f64 {
    let h = x / 2.0;
    if df % 2 == 0 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for i in 1..df / 2 {
            term *= h / i as f64;
            sum += term;
        }
        (-h).exp() * sum
    } else {
        let mut term = (2.0 * x / std::f64::consts::PI).sqrt() * (-h).exp();
        let mut sum = 0.0;
        for i in 1..=(df - 1) / 2 {
            if i > 1 {
                term *= x / (2 * i - 1) as f64;
            }
            sum += term;
        }
        libm::erfc(h.sqrt()) + sum
    }
}

fn criterion_3() -> Outcome {
    let r = kruskal_wallis(&[
        vec![1.0, 2.0, 3.0],
        vec![4.0, 5.0, 6.0],
        vec![7.0, 8.0, 9.0],
    ])
    .map_err(e2s)?;
    ensure((r.statistic - 7.2).abs() < 1e-9, || {
        format!("H = {}", r.statistic)
    })?;
    // df = 2: survival function is exp(-H/2)
    ensure((r.p_value - (-3.6f64).exp()).abs() < 1e-12, || {
        format!("p = {}", r.p_value)
    })?;
    ensure((r.p_value - 0.0273237).abs() < 1e-5, || {
        format!("p = {}", r.p_value)
    })?;

    let mut rng = Rng::new(0x3a);
    let mut worst_h = 0.0f64;
    let mut worst_p = 0.0f64;
    let mut checked = 0;
    while checked < 200 {
        let k = 2 + rng.below(5);
        let tied = rng.below(2) == 0;
        let groups: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                (0..1 + rng.below(8))
                    .map(|_| {
                        if tied {
                            rng.below(6) as f64
                        } else {
                            rng.gaussian(0.0, 1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let all: Vec<f64> = groups.iter().flatten().cloned().collect();
        if all.iter().all(|&x| x == all[0]) {
            continue;
        }
        let got = kruskal_wallis(&groups).map_err(e2s)?;
        let h = reference_h(&groups);
        worst_h = worst_h.max((got.statistic - h).abs());
        ensure((got.statistic - h).abs() < 1e-9, || {
            format!("config {checked}: H {} vs {h}", got.statistic)
        })?;
        let p = reference_sf(h, k - 1);
        worst_p = worst_p.max((got.p_value - p).abs());
        ensure((got.p_value - p).abs() < 1e-9, || {
            format!("config {checked}: p {} vs {p}", got.p_value)
        })?;
        checked += 1;
    }
    Ok(format!(
        "H = {:.10}, p = {:.7}; 200 random configs, max |ΔH| {worst_h:.1e}, max |Δp| vs closed form {worst_p:.1e}",
        r.statistic, r.p_value
    ))
}

// ---------------------------------------------------------------- 4

struct RandomLogits {
    seed: u64,
    vocab: usize,
}

impl LogitModel for RandomLogits {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn logits(&self, unit: &Unit) -> headimpact::Result<Tensor> {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for b in unit
            .sample_id
            .bytes()
            .chain([unit.object as u8, unit.layout.len() as u8])
        {
            h = (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3);
        }
        Ok(Tensor::randn(
            &[unit.layout.len(), self.vocab],
            1.5,
            &mut Rng::derive(self.seed, h),
        ))
    }
}

fn criterion_4() -> Outcome {
    let vocab = Vocab::standard();
    let config = ModelConfig::default();
    let samples = generate_dataset(60, 8).map_err(e2s)?;
    let pool: Vec<String> = ObjectKind::all().iter().map(|k| k.caption()).collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    let captions = caption_units(&vocab, &config, &refs).map_err(e2s)?;
    let u = perplexity(
        &UniformModel {
            vocab_size: vocab.len(),
        },
        &captions,
    )
    .map_err(e2s)?;
    ensure((u.perplexity - vocab.len() as f64).abs() < 1e-9, || {
        format!("uniform perplexity {}", u.perplexity)
    })?;

    let questions = vqa_units(&vocab, &config, &refs, &pool, &mut Rng::new(2)).map_err(e2s)?;
    let mut rng = Rng::new(0x44);
    let mut worst = 0.0f64;
    for case in 0..50u64 {
        // mix 4-token caption units with 1-token answer units so the
        // per-unit and per-token averages differ
        let mut units: Vec<Unit> = Vec::new();
        for _ in 0..2 + rng.below(20) {
            let pick = rng.below(captions.len());
            units.push(if rng.below(2) == 0 {
                captions[pick].clone()
            } else {
                questions[pick].clone()
            });
        }
        let model = RandomLogits {
            seed: case,
            vocab: vocab.len(),
        };
        let got = perplexity(&model, &units).map_err(e2s)?.perplexity;
        let mut acc = 0.0;
        for unit in &units {
            let logits = model.logits(unit).map_err(e2s)?;
            let targets = unit.layout.targets();
            for &(row, class) in &targets {
                let r = logits.row(row);
                let z: f64 = r.iter().map(|x| x.exp()).sum();
                acc += -(r[class].exp() / z).ln() / targets.len() as f64;
            }
        }
        let expected = (acc / units.len() as f64).exp();
        worst = worst.max((got - expected).abs());
        ensure((got - expected).abs() < 1e-12, || {
            format!("case {case}: {got} vs flat {expected}")
        })?;
    }
    Ok(format!(
        "uniform model perplexity {:.12} (V = {}); 50 random cases vs flat oracle, max |Δ| {worst:.1e}",
        u.perplexity,
        vocab.len()
    ))
}

// ---------------------------------------------------------------- 5

fn tensor_hashes(w: &ModelWeights) -> Vec<String> {
    w.named_tensors()
        .iter()
        .map(|(name, t)| {
            let mut h = Sha256::new();
            h.update(name.as_bytes());
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
            hex::encode(h.finalize())
        })
        .collect()
}

fn criterion_5() -> Outcome {
    let config = ModelConfig::default();
    let vocab = Vocab::standard();
    let base = init_model(&config, 31).map_err(e2s)?;
    let samples = generate_dataset(20, 6).map_err(e2s)?;
    let refs: Vec<&Sample> = samples.iter().collect();
    let units = caption_units(&vocab, &config, &refs).map_err(e2s)?;

    let mut model = attach_lora(base.clone(), &[0, 1, 2, 3], 8, 16.0, 4).map_err(e2s)?;
    for (i, s) in samples.iter().take(5).enumerate() {
        let a = forward(&base, &units[i].layout, &s.image, false)
            .map_err(e2s)?
            .logits;
        let b = model
            .forward(&units[i].layout, &s.image, false)
            .map_err(e2s)?
            .logits;
        let same = a
            .data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        ensure(same, || {
            format!("adapted logits differ from base on unit {i}")
        })?;
    }

    let before = tensor_hashes(&model.base);
    let cfg = TrainConfig {
        epochs: 1000,
        batch_size: 2,
        max_steps: Some(100),
        patience: 0,
        ..TrainConfig::default()
    };
    let h = train(&mut model, Trainable::Adapters, &units, &[], &cfg, 9).map_err(e2s)?;
    ensure(h.steps == 100, || format!("ran {} steps", h.steps))?;
    ensure(tensor_hashes(&model.base) == before, || {
        "a frozen tensor changed".into()
    })?;
    ensure(
        model
            .adapters
            .iter()
            .any(|a| a.b.data().iter().any(|&v| v != 0.0)),
        || "adapters did not train".into(),
    )?;

    let d = config.d_model;
    for (layers, r) in [
        (vec![0usize], 8usize),
        (vec![1, 3], 4),
        (vec![0, 1, 2, 3], 8),
        (vec![2], 1),
    ] {
        let m = attach_lora(base.clone(), &layers, r, 2.0 * r as f64, 0).map_err(e2s)?;
        let expected = m.adapters.len() * r * (d + d);
        let got = count_params(&m).trainable;
        ensure(
            got == expected && m.adapters.len() == 3 * layers.len(),
            || format!("layers {layers:?} rank {r}: {got} trainable, expected {expected}"),
        )?;
    }
    Ok(format!(
        "bit-identical logits at attach; 100 steps left all {} base tensor hashes unchanged; counts exact",
        before.len()
    ))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let b = binarize(&[0.1, 0.2, 0.3, 0.4], 2, 2).map_err(e2s)?;
    ensure(b.bits == [false, false, true, true], || {
        format!("{:?}", b.bits)
    })?;
    let c = binarize(&[0.7; 16], 4, 4).map_err(e2s)?;
    ensure(c.count() == 0, || "constant grid has set cells".into())?;
    let mut rng = Rng::new(0x66);
    for case in 0..500 {
        let (rows, cols) = (1 + rng.below(8), 1 + rng.below(8));
        let values: Vec<f64> = (0..rows * cols).map(|_| rng.uniform()).collect();
        let a = 0.01 + rng.uniform() * 100.0;
        let shift = rng.gaussian(0.0, 10.0);
        let moved: Vec<f64> = values.iter().map(|v| a * v + shift).collect();
        let (x, y) = (
            binarize(&values, rows, cols).map_err(e2s)?,
            binarize(&moved, rows, cols).map_err(e2s)?,
        );
        ensure(x == y, || {
            format!("case {case}: affine map {a}x + {shift} changed the grid")
        })?;
    }
    Ok("examples hold; 500/500 positive-affine cases identical".into())
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Outcome {
    let vocab = Vocab::standard();
    let config = ModelConfig::default();
    let samples = generate_dataset(250, 10).map_err(e2s)?;
    let refs: Vec<&Sample> = samples.iter().collect();
    let pool: Vec<String> = ObjectKind::all().iter().map(|k| k.caption()).collect();
    let units = question_units(&vocab, &config, &refs, &pool, 10).map_err(e2s)?;
    ensure(units.len() >= 400, || format!("only {} units", units.len()))?;
    let u = score_vqa_units(
        &UniformModel {
            vocab_size: vocab.len(),
        },
        &vocab,
        &units,
    )
    .map_err(e2s)?;
    ensure((u.accuracy - 0.25).abs() <= 0.05, || {
        format!("uniform accuracy {}", u.accuracy)
    })?;
    let o = score_vqa_units(
        &OracleModel {
            vocab_size: vocab.len(),
        },
        &vocab,
        &units,
    )
    .map_err(e2s)?;
    ensure(o.accuracy == 1.0, || {
        format!("oracle accuracy {}", o.accuracy)
    })?;
    Ok(format!(
        "{} units: uniform accuracy {:.4} (ans_prob {:.4}), oracle accuracy {}",
        units.len(),
        u.accuracy,
        u.ans_prob,
        o.accuracy
    ))
}

// ---------------------------------------------------------------- 7-9

fn run_pipeline(out: &Path, seed: u64) -> Result<(Pipeline, f64), String> {
    let config = RunConfig {
        seed,
        out: out.to_path_buf(),
        ..RunConfig::default()
    };
    let p = Pipeline::new(config).map_err(e2s)?;
    let start = Instant::now();
    p.run_all().map_err(|e| format!("seed {seed}: {e}"))?;
    Ok((p, start.elapsed().as_secs_f64()))
}

const DETERMINISM_FILES: [(Stage, &str); 3] = [
    (Stage::Hi, "hi_scores.csv"),
    (Stage::Hi, "stats.json"),
    (Stage::Eval, "results.json"),
];

fn criterion_7(root: &Path, report: &Report) -> Result<(String, Vec<Pipeline>), String> {
    let (a, ta) = run_pipeline(&root.join("seed0-a"), 0)?;
    report.line(&format!(
        "       criterion  7: first run-all finished in {ta:.0}s"
    ));
    let (b, tb) = run_pipeline(&root.join("seed0-b"), 0)?;
    for (stage, file) in DETERMINISM_FILES {
        let x = std::fs::read(a.dir(stage).join(file)).map_err(e2s)?;
        let y = std::fs::read(b.dir(stage).join(file)).map_err(e2s)?;
        ensure(x == y, || {
            format!("{}/{file} differs between runs", stage.dir_name())
        })?;
    }
    let limit = 30.0 * 60.0;
    ensure(ta < limit && tb < limit, || {
        format!("runtime {ta:.0}s / {tb:.0}s exceeds 30 min")
    })?;
    Ok((
        format!("hi_scores.csv, stats.json, results.json byte-identical; run-all took {ta:.0}s and {tb:.0}s"),
        vec![a],
    ))
}

struct SeedRow {
    seed: u64,
    layers_p: f64,
    heads_p: f64,
    top: Vec<usize>,
    d_top: f64,
    d_bottom: f64,
    d_random: f64,
    d_full: f64,
}

fn seed_row(p: &Pipeline) -> Result<SeedRow, String> {
    let stats_path = p.dir(Stage::Hi).join("stats.json");
    let stats: HiStats =
        serde_json::from_slice(&std::fs::read(stats_path).map_err(e2s)?).map_err(e2s)?;
    let report = p.eval_report().map_err(e2s)?;
    let ppl = |prefix: &str| {
        report
            .results
            .iter()
            .find(|r| r.setup.starts_with(prefix))
            .map(|r| r.perplexity)
            .ok_or_else(|| format!("setup {prefix} missing"))
    };
    let base = ppl("original")?;
    Ok(SeedRow {
        seed: p.config().seed,
        layers_p: stats.tests.layers.p_value,
        heads_p: stats.tests.heads.p_value,
        top: stats.rankings.top.clone(),
        d_top: (ppl("top-")? - base).abs(),
        d_bottom: (ppl("bottom-")? - base).abs(),
        d_random: (ppl("random-")? - base).abs(),
        d_full: (ppl("full")? - base).abs(),
    })
}

fn criteria_8_9(root: &Path, first: Vec<Pipeline>, report: &mut Report) {
    let mut runs = first;
    let mut rows = Vec::new();
    for seed in 0..5u64 {
        if seed > 0 {
            match run_pipeline(&root.join(format!("seed{seed}")), seed) {
                Ok((p, t)) => {
                    report.line(&format!("       seed {seed}: run-all finished in {t:.0}s"));
                    runs.push(p);
                }
                Err(e) => {
                    report.trend(8, "HI layer structure", Err(e.clone()));
                    report.trend(9, "top-k largest |Δ perplexity|", Err(e));
                    return;
                }
            }
        }
    }
    for p in &runs {
        match seed_row(p) {
            Ok(r) => rows.push(r),
            Err(e) => {
                report.trend(8, "HI layer structure", Err(e.clone()));
                report.trend(9, "top-k largest |Δ perplexity|", Err(e));
                return;
            }
        }
    }

    report.line("       seed | layers p   | heads p    | heads ≥ layers | top layers");
    for r in &rows {
        report.line(&format!(
            "       {:>4} | {:<10.4e} | {:<10.4e} | {:<14} | {:?}",
            r.seed,
            r.layers_p,
            r.heads_p,
            r.heads_p >= r.layers_p,
            r.top
        ));
    }
    let valid = rows
        .iter()
        .all(|r| (0.0..=1.0).contains(&r.layers_p) && (0.0..=1.0).contains(&r.heads_p));
    let hits = rows.iter().filter(|r| r.heads_p >= r.layers_p).count();
    let detail = format!("heads p ≥ layers p in {hits}/5 seeds, all p valid: {valid}");
    report.trend(
        8,
        "HI layer structure",
        if valid && hits >= 3 {
            Ok(detail)
        } else {
            Err(detail)
        },
    );

    report.line(
        "       seed | |Δppl| top | |Δppl| bottom | |Δppl| random | |Δppl| full | top largest",
    );
    let mut wins = 0;
    for r in &rows {
        let top_wins = r.d_top > r.d_bottom && r.d_top > r.d_random;
        wins += usize::from(top_wins);
        report.line(&format!(
            "       {:>4} | {:>10.4} | {:>13.4} | {:>13.4} | {:>11.4} | {}",
            r.seed, r.d_top, r.d_bottom, r.d_random, r.d_full, top_wins
        ));
    }
    let detail = format!("top-k has the largest |Δ perplexity| in {wins}/5 seeds");
    report.trend(
        9,
        "top-k largest |Δ perplexity|",
        if wins >= 3 { Ok(detail) } else { Err(detail) },
    );
}

fn main() {
    let mut report = Report { failures: 0 };
    report.line("acceptance suite");

    type Check = fn() -> Outcome;
    let quick: [(usize, &str, Check); 6] = [
        (1, "gradient suite", criterion_1),
        (2, "IoU oracle", criterion_2),
        (3, "Kruskal-Wallis", criterion_3),
        (4, "perplexity", criterion_4),
        (5, "LoRA identity and freezing", criterion_5),
        (6, "binarization", criterion_6),
    ];
    for (n, name, check) in quick {
        let start = Instant::now();
        let outcome = check();
        if n == 1 && start.elapsed().as_secs_f64() > 60.0 {
            let secs = start.elapsed().as_secs_f64();
            report.blocking(n, name, Err(format!("took {secs:.0}s, limit 60s")), start);
            continue;
        }
        report.blocking(n, name, outcome, start);
    }
    let start = Instant::now();
    report.blocking(10, "VQA protocol sanity", criterion_10(), start);

    let tmp = tempfile::tempdir().expect("temporary directory");
    let root: PathBuf = tmp.path().to_path_buf();
    let start = Instant::now();
    match criterion_7(&root, &report) {
        Ok((detail, first)) => {
            report.blocking(7, "end-to-end determinism", Ok(detail), start);
            criteria_8_9(&root, first, &mut report);
        }
        Err(e) => {
            report.blocking(7, "end-to-end determinism", Err(e), start);
            report.trend(
                8,
                "HI layer structure",
                Err("skipped, pipeline failed".into()),
            );
            report.trend(
                9,
                "top-k largest |Δ perplexity|",
                Err("skipped, pipeline failed".into()),
            );
        }
    }

    if report.failures > 0 {
        report.line(&format!("{} blocking criteria failed", report.failures));
        std::process::exit(1);
    }
    report.line("all blocking criteria passed");
}
