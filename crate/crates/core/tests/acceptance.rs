//! Exit-criteria suite. Runs every criterion in order, prints one
//! `PASS`/`FAIL` line each and exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use concare::context::{decorrelation_loss, multi_head_attention, EncoderParams};
use concare::data::{generate_synthetic, PatientCase, SyntheticSpec};
use concare::embedding::{time_aware_attention, time_aware_score, ChannelParams, FeatureMatrix};
use concare::head::{final_attention, HeadKeys, HeadParams};
use concare::inspect::mean_self_attention;
use concare::model::{ConCare, ModelConfig};
use concare::numerics::grad_check;
use concare::train_eval::{
    auprc, auroc, bootstrap_eval, cross_validate, fit, fit_holdout, format_mean_std, min_se_pplus,
    EvalReport, HoldoutRun, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// 1. gradient integrity

fn tiny_cases(rng: &mut ChaCha8Rng, n_features: usize, n_baseline: usize, t: usize, b: usize) -> Vec<PatientCase> {
    (0..b)
        .map(|i| {
            let mut ts = vec![0.0];
            for _ in 1..t {
                let last = *ts.last().unwrap();
                ts.push(last + rng.random_range(0.5..30.0));
            }
            PatientCase {
                id: format!("c{i}"),
                baseline: uniform(rng, n_baseline, 1.0),
                timestamps: ts,
                records: (0..n_features).map(|_| uniform(rng, t, 1.5)).collect(),
                label: (i % 2) as u8,
            }
        })
        .collect()
}

fn gradient_integrity() -> Outcome {
    let start = Instant::now();
    let mut cfg = ModelConfig::new(3, 2);
    cfg.hidden = 8;
    cfg.heads = 2;
    cfg.ffn = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (net, mut store) = ConCare::new(cfg, 11).unwrap();
    for e in store.entries_mut() {
        for v in e.value.values_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let cases = tiny_cases(&mut rng, 3, 2, 4, 2);
    let refs: Vec<&PatientCase> = cases.iter().collect();
    let (_, grads) = net.batch_loss_and_grad(&store, &refs, 1.0);
    store.zero_grad();
    store.accumulate(&grads);
    let report = grad_check(&store, 1e-5, |p| net.batch_loss(p, &refs, 1.0).total);
    let names: Vec<&str> = report.entries.iter().map(|e| e.name.as_str()).collect();
    let covered = ["embed.attn.beta_raw", "encoder.attn.w_q", "encoder.attn.w_k", "encoder.attn.w_v", "encoder.attn.w_o"]
        .iter()
        .all(|n| names.contains(n));
    let worst = report.worst().unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        covered && report.max_rel_error() < 1e-4 && secs < 60.0,
        format!(
            "{} parameters, max rel err {:.2e} at {} (< 1e-4), {secs:.1}s (< 60s)",
            report.entries.len(),
            worst.max_rel_error,
            worst.name
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. formula fidelity against direct loops

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax_loop(z: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for &v in z {
        if v > m {
            m = v;
        }
    }
    let mut e = vec![0.0; z.len()];
    let mut total = 0.0;
    for i in 0..z.len() {
        e[i] = (z[i] - m).exp();
        total += e[i];
    }
    for v in &mut e {
        *v /= total;
    }
    e
}

/// `y[i] = Σ_j w[i*cols + j] x[j]`
fn matvec_loop(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; rows];
    for i in 0..rows {
        for j in 0..cols {
            y[i] += w[i * cols + j] * x[j];
        }
    }
    y
}

fn time_attention_oracle(
    hidden: &[Vec<f64>],
    ts: &[f64],
    w_q: &[f64],
    w_k: &[f64],
    beta: f64,
) -> (Vec<f64>, Vec<f64>) {
    let d = hidden[0].len();
    let t_last = hidden.len() - 1;
    let q = matvec_loop(w_q, d, d, &hidden[t_last]);
    let mut zeta = Vec::new();
    for t in 0..hidden.len() {
        let k = matvec_loop(w_k, d, d, &hidden[t]);
        let mut s = 0.0;
        for j in 0..d {
            s += q[j] * k[j];
        }
        let gap = ts[t_last] - ts[t];
        let denom = beta * (std::f64::consts::E + (1.0 - sigmoid(s)) * gap).ln();
        zeta.push((s / denom).tanh());
    }
    let alpha = softmax_loop(&zeta);
    let mut ctx = vec![0.0; d];
    for t in 0..hidden.len() {
        for j in 0..d {
            ctx[j] += alpha[t] * hidden[t][j];
        }
    }
    (alpha, ctx)
}

/// Returns `attn[m][i][j]` and `u[i]` (heads concatenated).
fn mha_oracle(
    rows: &[Vec<f64>],
    heads: usize,
    dk: usize,
    w_q: &[f64],
    w_k: &[f64],
    w_v: &[f64],
) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
    let p = rows.len();
    let d = rows[0].len();
    let proj = |w: &[f64], m: usize, x: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; dk];
        for a in 0..dk {
            for j in 0..d {
                y[a] += w[m * dk * d + a * d + j] * x[j];
            }
        }
        y
    };
    let mut attn = vec![vec![vec![0.0; p]; p]; heads];
    let mut u = vec![vec![0.0; heads * dk]; p];
    for m in 0..heads {
        for i in 0..p {
            let q = proj(w_q, m, &rows[i]);
            let mut scores = vec![0.0; p];
            for j in 0..p {
                let k = proj(w_k, m, &rows[j]);
                for a in 0..dk {
                    scores[j] += q[a] * k[a];
                }
                scores[j] /= (dk as f64).sqrt();
            }
            let w = softmax_loop(&scores);
            for j in 0..p {
                attn[m][i][j] = w[j];
                let v = proj(w_v, m, &rows[j]);
                for a in 0..dk {
                    u[i][m * dk + a] += w[j] * v[a];
                }
            }
        }
    }
    (attn, u)
}

fn decorrelation_oracle(batch: &[Vec<f64>]) -> f64 {
    let b = batch.len();
    let k = batch[0].len();
    if b < 2 {
        return 0.0;
    }
    let mut mean = vec![0.0; k];
    for u in batch {
        for i in 0..k {
            mean[i] += u[i] / b as f64;
        }
    }
    let mut loss = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let mut c = 0.0;
            for u in batch {
                c += (u[i] - mean[i]) * (u[j] - mean[j]);
            }
            c /= b as f64;
            loss += c * c;
        }
    }
    0.5 * loss
}

fn final_attention_oracle(rows: &[Vec<f64>], w_query: &[f64], w_key: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].len();
    let base = rows.last().unwrap();
    let q = matvec_loop(w_query, d, d, base);
    let mut zeta = Vec::new();
    for f in rows {
        let k = matvec_loop(w_key, d, d, f);
        let mut s = 0.0;
        for j in 0..d {
            s += q[j] * k[j];
        }
        zeta.push(s.tanh());
    }
    let alpha = softmax_loop(&zeta);
    let mut summary = vec![0.0; d];
    for (a, f) in alpha.iter().zip(rows) {
        for j in 0..d {
            summary[j] += a * f[j];
        }
    }
    (alpha, summary)
}

fn formula_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut worst = [0.0f64; 4];
    for _ in 0..100 {
        let d = rng.random_range(2..6);

        let t = rng.random_range(1..7);
        let hidden: Vec<Vec<f64>> = (0..t).map(|_| uniform(&mut rng, d, 1.0)).collect();
        let mut ts = vec![0.0];
        for _ in 1..t {
            let last = *ts.last().unwrap();
            ts.push(last + rng.random_range(0.0..48.0));
        }
        let w_q = uniform(&mut rng, d * d, 1.5);
        let w_k = uniform(&mut rng, d * d, 1.5);
        let zeros = vec![0.0; d * d];
        let beta_raw = rng.random_range(-2.0..2.0);
        let channel = ChannelParams {
            hidden: d,
            w_z: &zeros[..d],
            u_z: &zeros,
            b_z: &zeros[..d],
            w_r: &zeros[..d],
            u_r: &zeros,
            b_r: &zeros[..d],
            w_h: &zeros[..d],
            u_h: &zeros,
            b_h: &zeros[..d],
            w_q: &w_q,
            w_k: &w_k,
            beta_raw,
        };
        let got = time_aware_attention(&hidden, &ts, &channel, true);
        let (alpha, ctx) = time_attention_oracle(&hidden, &ts, &w_q, &w_k, channel.decay_rate());
        worst[0] = worst[0].max(max_abs_diff(&got.alphas, &alpha)).max(max_abs_diff(&got.context, &ctx));

        let heads = rng.random_range(1..4);
        let dk = rng.random_range(1..4);
        let positions = rng.random_range(2..6);
        let rows: Vec<Vec<f64>> = (0..positions).map(|_| uniform(&mut rng, d, 1.0)).collect();
        let wq = uniform(&mut rng, heads * dk * d, 1.0);
        let wk = uniform(&mut rng, heads * dk * d, 1.0);
        let wv = uniform(&mut rng, heads * dk * d, 1.0);
        let unused = vec![0.0; d * heads * dk + d * d + 2 * d];
        let enc = EncoderParams {
            hidden: d,
            heads,
            head_dim: dk,
            ffn: 1,
            w_q: &wq,
            w_k: &wk,
            w_v: &wv,
            w_o: &unused,
            w_1: &unused,
            b_1: &unused,
            w_2: &unused,
            b_2: &unused,
            ln1_gain: &unused,
            ln1_bias: &unused,
            ln2_gain: &unused,
            ln2_bias: &unused,
        };
        let fm = FeatureMatrix { rows: rows.clone() };
        let got = multi_head_attention(&fm, &enc);
        let (attn, u) = mha_oracle(&rows, heads, dk, &wq, &wk, &wv);
        for m in 0..heads {
            for i in 0..positions {
                worst[1] = worst[1].max(max_abs_diff(&got.attn[m][i], &attn[m][i]));
            }
        }
        for i in 0..positions {
            worst[1] = worst[1].max(max_abs_diff(&got.u[i], &u[i]));
        }

        let b = rng.random_range(1..7);
        let k = rng.random_range(1..6);
        let batch: Vec<Vec<f64>> = (0..b).map(|_| uniform(&mut rng, k, 2.0)).collect();
        let refs: Vec<&[f64]> = batch.iter().map(Vec::as_slice).collect();
        worst[2] = worst[2].max((decorrelation_loss(&refs) - decorrelation_oracle(&batch)).abs());

        let w_query = uniform(&mut rng, d * d, 1.0);
        let w_key = uniform(&mut rng, d * d, 1.0);
        let head = HeadParams {
            hidden: d,
            keys: HeadKeys::Shared,
            w_query: &w_query,
            w_key: &w_key,
            w_out: &zeros[..d],
            b_out: 0.0,
        };
        let got = final_attention(&fm, &head);
        let (alpha, summary) = final_attention_oracle(&rows, &w_query, &w_key);
        worst[3] = worst[3].max(max_abs_diff(&got.alphas, &alpha)).max(max_abs_diff(&got.summary, &summary));
    }
    outcome(
        worst.iter().all(|&w| w <= 1e-12),
        format!(
            "100 instances, max abs diff: time attention {:.1e}, multi-head {:.1e}, decorrelation {:.1e}, final attention {:.1e} (<= 1e-12)",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. decay monotonicity

fn decay_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut violations = 0;
    for _ in 0..1000 {
        let score = rng.random_range(-3.0..3.0);
        let beta = rng.random_range(0.4..4.0);
        let mut prev = time_aware_score(score, beta, 0.0);
        for gap in 1..=200 {
            let z = time_aware_score(score, beta, gap as f64);
            let ok = if score > 0.0 {
                z.abs() < prev.abs()
            } else {
                z.abs() <= prev.abs()
            };
            if !ok {
                violations += 1;
            }
            prev = z;
        }
    }
    outcome(
        violations == 0,
        format!("1000 (q·k in [-3,3], β in [0.4,4]) pairs over Δt = 0..200: {violations} violations"),
    )
}

// ---------------------------------------------------------------------------
// 4. decorrelation behavior

fn decorrelation_behavior() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut negative = 0;
    let mut nonzero_degenerate = 0;
    for _ in 0..1000 {
        let b = rng.random_range(1..9);
        let k = rng.random_range(1..7);
        let batch: Vec<Vec<f64>> = (0..b).map(|_| uniform(&mut rng, k, 3.0)).collect();
        let refs: Vec<&[f64]> = batch.iter().map(Vec::as_slice).collect();
        if decorrelation_loss(&refs) < 0.0 {
            negative += 1;
        }
        let constant: Vec<&[f64]> = vec![batch[0].as_slice(); b];
        if decorrelation_loss(&constant) != 0.0 {
            nonzero_degenerate += 1;
        }
        if decorrelation_loss(&refs[..1]) != 0.0 {
            nonzero_degenerate += 1;
        }
    }
    let hand = decorrelation_loss(&[&[1.0, 0.0], &[0.0, 1.0]]);
    outcome(
        negative == 0 && nonzero_degenerate == 0 && (hand - 0.0625).abs() <= 1e-12,
        format!(
            "{negative} negative losses, {nonzero_degenerate} nonzero constant/B=1 losses, unit-basis case {hand} (0.0625 ± 1e-12)"
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. metric oracle equivalence

fn auroc_oracle(s: &[f64], y: &[u8]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] == 1 && y[j] == 0 {
                pairs += 1.0;
                if s[i] > s[j] {
                    wins += 1.0;
                } else if s[i] == s[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

/// Distinct scores, highest first, with `(tp, fp)` counted by scanning every case.
fn threshold_counts(s: &[f64], y: &[u8]) -> Vec<(usize, usize)> {
    let mut thresholds: Vec<f64> = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds
        .iter()
        .map(|&tau| {
            let mut tp = 0;
            let mut fp = 0;
            for i in 0..s.len() {
                if s[i] >= tau {
                    if y[i] == 1 {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            (tp, fp)
        })
        .collect()
}

fn auprc_oracle(s: &[f64], y: &[u8]) -> Option<f64> {
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 {
        return None;
    }
    let mut area = 0.0;
    let mut prev_tp = 0;
    for (tp, fp) in threshold_counts(s, y) {
        if tp > prev_tp {
            area += (tp - prev_tp) as f64 * (tp as f64 / (tp + fp) as f64);
        }
        prev_tp = tp;
    }
    Some(area / pos as f64)
}

fn min_se_pplus_oracle(s: &[f64], y: &[u8]) -> Option<f64> {
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return None;
    }
    let mut best = 0.0f64;
    for (tp, fp) in threshold_counts(s, y) {
        let se = tp as f64 / pos as f64;
        let pp = tp as f64 / (tp + fp) as f64;
        best = best.max(se.min(pp));
    }
    Some(best)
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (mut checked, mut mismatches) = (0usize, 0usize);
    for n in 1..=8usize {
        for pattern in 0u32..(1 << n) {
            let y: Vec<u8> = (0..n).map(|i| ((pattern >> i) & 1) as u8).collect();
            for trial in 0..500 {
                // every other trial draws from a coarse grid to force ties
                let s: Vec<f64> = if trial % 2 == 0 {
                    (0..n).map(|_| rng.random::<f64>()).collect()
                } else {
                    (0..n).map(|_| f64::from(rng.random_range(0..4u8)) / 4.0).collect()
                };
                let pairs = [
                    (auroc(&s, &y).ok(), auroc_oracle(&s, &y)),
                    (auprc(&s, &y).ok(), auprc_oracle(&s, &y)),
                    (min_se_pplus(&s, &y).ok(), min_se_pplus_oracle(&s, &y)),
                ];
                for (got, want) in pairs {
                    checked += 1;
                    if got != want {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("{checked} metric evaluations over all label patterns of 1..=8 cases × 500 score draws: {mismatches} mismatches"),
    )
}

// ---------------------------------------------------------------------------
// 6. overfit capacity

fn overfit_capacity() -> Outcome {
    let start = Instant::now();
    let (raw, _) = generate_synthetic(&SyntheticSpec::new(4, 2, 32, 66)).unwrap();
    let config = TrainConfig {
        max_epochs: 500,
        lambda_decorr: 1.0,
        seed: 66,
        ..TrainConfig::default()
    };
    let all: Vec<usize> = (0..raw.len()).collect();
    let run = || fit(&raw, &all, &[], &config).unwrap().0;
    let model = run();
    let prepared = model.prepare(&raw).unwrap();
    let scores = model.scores(&prepared, &all);
    let ce = scores
        .iter()
        .zip(&raw.cases)
        .map(|(&p, c)| concare::head::cross_entropy(p, c.label))
        .sum::<f64>()
        / scores.len() as f64;
    let again = run();
    let identical = model.params.entries().iter().zip(again.params.entries()).all(|(a, b)| {
        a.value.values().iter().map(|v| v.to_bits()).eq(b.value.values().iter().map(|v| v.to_bits()))
    });
    let secs = start.elapsed().as_secs_f64();
    outcome(
        ce < 0.05 && identical && secs < 300.0,
        format!("32 cases, 500 epochs: training CE {ce:.4} (< 0.05), rerun bitwise identical: {identical}, {secs:.0}s for both runs (< 300s)"),
    )
}

// ---------------------------------------------------------------------------
// 7 & 8. planted time decay

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn planted_decay_dataset(seed: u64, interactions: Vec<(usize, usize)>) -> concare::data::Dataset {
    let mut spec = SyntheticSpec::new(4, 2, 1000, seed);
    spec.label_noise = 0.1;
    spec.interactions = interactions;
    generate_synthetic(&spec).unwrap().0
}

fn test_auroc(run: &HoldoutRun) -> f64 {
    run.test_report.as_ref().and_then(|r| r.get("auroc")).unwrap().point
}

struct DecayRuns {
    full: Vec<HoldoutRun>,
    unaware: Vec<HoldoutRun>,
}

fn decay_runs() -> DecayRuns {
    let mut full = Vec::new();
    let mut unaware = Vec::new();
    for seed in SEEDS {
        let raw = planted_decay_dataset(seed, Vec::new());
        for (time_aware, out) in [(true, &mut full), (false, &mut unaware)] {
            let config = TrainConfig {
                seed,
                time_aware,
                ..TrainConfig::default()
            };
            out.push(fit_holdout(&raw, &config).unwrap());
        }
    }
    DecayRuns { full, unaware }
}

fn decay_recovery(runs: &DecayRuns) -> Outcome {
    let mut hits = 0;
    let mut parts = Vec::new();
    for (seed, run) in SEEDS.iter().zip(&runs.full) {
        let beta = run.model.net.decay_rates(&run.model.params);
        let fast: Vec<f64> = run.model.feature_names.iter().zip(&beta).filter(|(n, _)| n.ends_with("_fast")).map(|(_, b)| *b).collect();
        let slow: Vec<f64> = run.model.feature_names.iter().zip(&beta).filter(|(n, _)| n.ends_with("_slow")).map(|(_, b)| *b).collect();
        let min_fast = fast.iter().copied().fold(f64::INFINITY, f64::min);
        let max_slow = slow.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if min_fast > max_slow {
            hits += 1;
        }
        parts.push(format!("seed {seed}: min fast {min_fast:.4} vs max slow {max_slow:.4}"));
    }
    outcome(hits >= 4, format!("{hits}/5 seeds with fast β > slow β (need >= 4); {}", parts.join("; ")))
}

fn predictive_lift(runs: &DecayRuns) -> Outcome {
    let full: Vec<f64> = runs.full.iter().map(test_auroc).collect();
    let unaware: Vec<f64> = runs.unaware.iter().map(test_auroc).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let lift = mean(&full) - mean(&unaware);
    let each = |v: &[f64]| v.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(",");
    outcome(
        mean(&full) >= 0.75 && lift >= 0.01,
        format!(
            "held-out AUROC full {:.4} [{}] (>= 0.75), time-unaware {:.4} [{}], lift {lift:+.4} (>= 0.01)",
            mean(&full),
            each(&full),
            mean(&unaware),
            each(&unaware)
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. interaction visibility

fn interaction_visibility() -> Outcome {
    let (feature, flag) = (0usize, 1usize);
    let mut hits = 0;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let raw = planted_decay_dataset(seed, vec![(feature, flag)]);
        let config = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let run = fit_holdout(&raw, &config).unwrap();
        let prepared = run.model.prepare(&raw).unwrap();
        let baseline_pos = raw.n_features();
        let to_baseline = |value: f64| {
            let idx: Vec<usize> = run.split.test.iter().copied().filter(|&i| raw.cases[i].baseline[flag] == value).collect();
            let grids = mean_self_attention(&run.model, &prepared, &idx).unwrap();
            grids.iter().map(|g| g[feature][baseline_pos]).sum::<f64>() / grids.len() as f64
        };
        let (with_flag, without) = (to_baseline(1.0), to_baseline(0.0));
        if with_flag > without {
            hits += 1;
        }
        parts.push(format!("seed {seed}: {with_flag:.5} vs {without:.5}"));
    }
    outcome(
        hits >= 4,
        format!("{hits}/5 seeds where head-mean attention feature→baseline is higher with flag=1 than flag=0 (need >= 4); {}", parts.join("; ")),
    )
}

// ---------------------------------------------------------------------------
// 10. protocol plumbing

fn is_mean_std(s: &str) -> bool {
    let b = s.as_bytes();
    let digits = |r: std::ops::Range<usize>| r.clone().all(|i| b[i].is_ascii_digit());
    b.len() == 14
        && digits(0..1)
        && b[1] == b'.'
        && digits(2..6)
        && b[6] == b'('
        && digits(7..8)
        && b[8] == b'.'
        && digits(9..13)
        && b[13] == b')'
}

fn report_bits(r: &EvalReport) -> Vec<u64> {
    r.metrics
        .values()
        .flat_map(|m| [m.point, m.mean, m.std].into_iter().chain(m.replicates.iter().copied()))
        .map(f64::to_bits)
        .collect()
}

fn protocol_plumbing() -> Outcome {
    let mut spec = SyntheticSpec::new(4, 2, 400, 10);
    spec.label_noise = 0.0;
    let (raw, _) = generate_synthetic(&spec).unwrap();
    let config = TrainConfig {
        seed: 10,
        max_epochs: 15,
        ..TrainConfig::default()
    };
    let cv = || cross_validate(&raw, 10, &config, false).unwrap();
    let (a, b) = (cv(), cv());
    let cv_same = report_bits(&a.report) == report_bits(&b.report);
    let fold_mean_auroc = a.report.get("auroc").unwrap().mean;

    let scores: Vec<f64> = a.folds.iter().flat_map(|f| f.scores.iter().copied()).collect();
    let labels: Vec<u8> = a.folds.iter().flat_map(|f| f.test_indices.iter().map(|&i| raw.cases[i].label)).collect();
    let boot = || bootstrap_eval(&scores, &labels, 100, 10).unwrap();
    let (x, y) = (boot(), boot());
    let boot_same = report_bits(&x) == report_bits(&y);

    let cv_reps = a.report.metrics.values().all(|m| m.replicates.len() == 10);
    let boot_reps = x.metrics.values().all(|m| m.replicates.len() == 100);
    let formatted: Vec<String> = a
        .report
        .metrics
        .values()
        .chain(x.metrics.values())
        .map(|m| format_mean_std(m.mean, m.std))
        .collect();
    let format_ok = formatted.iter().all(|s| is_mean_std(s));
    let table_ok = a.report.to_table().contains(&formatted[0]);
    outcome(
        cv_same && boot_same && cv_reps && boot_reps && format_ok && table_ok && fold_mean_auroc > 0.75,
        format!(
            "10-fold AUROC {} and 100-rep bootstrap AUROC {}; replicate counts ok: {}, format ok: {}, bitwise repeatable cv/bootstrap: {cv_same}/{boot_same}, fold-mean AUROC {fold_mean_auroc:.4} (> 0.75)",
            format_mean_std(a.report.get("auroc").unwrap().mean, a.report.get("auroc").unwrap().std),
            format_mean_std(x.get("auroc").unwrap().mean, x.get("auroc").unwrap().std),
            cv_reps && boot_reps,
            format_ok && table_ok,
        ),
    )
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, o: Outcome, secs: f64| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failures += 1;
        }
        println!("criterion {id:>2} {tag} {name} [{secs:.1}s]: {}", o.detail);
    };
    let timed = |f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        (o, t.elapsed().as_secs_f64())
    };

    let (o, s) = timed(&gradient_integrity);
    report(1, "gradient integrity", o, s);
    let (o, s) = timed(&formula_fidelity);
    report(2, "formula fidelity", o, s);
    let (o, s) = timed(&decay_monotonicity);
    report(3, "decay monotonicity", o, s);
    let (o, s) = timed(&decorrelation_behavior);
    report(4, "decorrelation behavior", o, s);
    let (o, s) = timed(&metric_oracles);
    report(5, "metric oracle equivalence", o, s);
    let (o, s) = timed(&overfit_capacity);
    report(6, "overfit capacity", o, s);
    let t = Instant::now();
    let runs = decay_runs();
    let shared = t.elapsed().as_secs_f64();
    report(7, "planted time-decay recovery", decay_recovery(&runs), shared);
    report(8, "predictive lift of time awareness", predictive_lift(&runs), shared);
    let (o, s) = timed(&interaction_visibility);
    report(9, "interaction visibility", o, s);
    let (o, s) = timed(&protocol_plumbing);
    report(10, "protocol plumbing", o, s);

    if failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
