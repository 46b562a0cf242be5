use feedrec_core::synthgen::{generate_corpus, GeneratorConfig};
use feedrec_core::trainer::{train, ModelSize, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("c7");

    if mode == "diag" { diag(); return; }
    if mode == "c6" { c6(); return; }
    if mode == "c7" {
        // criterion 7 probe: 50 users, optimizer defaults, reduced model dims
        let n_imp: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4000);
        let d: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(32);
        let topics: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(4);
        let slope: f64 = std::env::var("CAL_SLOPE").ok().and_then(|v| v.parse().ok()).unwrap_or(1.6);
        let noise: f64 = std::env::var("CAL_NOISE").ok().and_then(|v| v.parse().ok()).unwrap_or(0.8);
        let n_news: usize = std::env::var("CAL_NNEWS").ok().and_then(|v| v.parse().ok()).unwrap_or(400);
        let gen = GeneratorConfig {
            click_model: feedrec_core::synthgen::ClickModel {
                base_rate: 0.2,
                affinity_slope: slope,
                noise_sd: noise,
                decoy_rate: 0.0,
            },
            n_users: 50,
            n_news,
            n_impressions: n_imp,
            shown_per_impression: 5,
            topic_count: topics,
            user_interest_dim: 4,
            seed: 97,
            ..GeneratorConfig::default()
        };
        let corpus = generate_corpus(&gen).unwrap();
        let lr: f64 = std::env::var("CAL_LR").ok().and_then(|v| v.parse().ok()).unwrap_or(1e-4);
        let gamma: f64 = std::env::var("CAL_GAMMA").ok().and_then(|v| v.parse().ok()).unwrap_or(0.2);
        let dropout: f64 = std::env::var("CAL_DROPOUT").ok().and_then(|v| v.parse().ok()).unwrap_or(0.2);
        let max_seq: usize = std::env::var("CAL_MAXSEQ").ok().and_then(|v| v.parse().ok()).unwrap_or(12);
        let heads: usize = std::env::var("CAL_HEADS").ok().and_then(|v| v.parse().ok()).unwrap_or(4);
        let tl: usize = std::env::var("CAL_TITLELEN").ok().and_then(|v| v.parse().ok()).unwrap_or(8);
        let mut cfg = TrainConfig {
            max_seq,
            model: ModelSize { d, heads, d_ff: d, title_len: tl },
            seed: 13,
            learning_rate: lr,
            dropout,
            ..TrainConfig::default()
        };
        cfg.loss_weights.gamma = gamma;
        let t0 = Instant::now();
        let out = train(&corpus, &cfg).unwrap();
        println!("samples/epoch: {}", out.report.train_samples);
        for e in &out.report.epochs {
            println!(
                "epoch {}: total {:.4} click {:.4} finish {:.4} dwell {:.4} dis {:.4} valAUC {:?}",
                e.epoch, e.total, e.click, e.finish, e.dwell, e.disentangle, e.validation_auc
            );
        }
        let first = out.report.epochs.first().unwrap().total;
        let last = out.report.epochs.last().unwrap().total;
        println!("initial {:.4}", out.report.initial_loss);
        println!(
            "ratio last/first = {:.3}  ratio last/initial = {:.3}  elapsed {:.1}s",
            last / first,
            last / out.report.initial_loss,
            t0.elapsed().as_secs_f64()
        );
    }
}

// Diagnostics: inspect score spreads and representation norms after training.
#[allow(dead_code)]
fn diag() {
    use feedrec_core::model::news::encode_candidate;
    use feedrec_core::model::user::encode_user;
    use feedrec_core::model::Forward;
    use feedrec_core::trainer::prepare_dataset;

    let gen = GeneratorConfig {
        n_users: 50,
        n_news: 400,
        n_impressions: 12000,
        shown_per_impression: 5,
        topic_count: 2,
        user_interest_dim: 4,
        seed: 97,
        click_model: feedrec_core::synthgen::ClickModel {
            base_rate: 0.2,
            affinity_slope: 8.0,
            noise_sd: 0.05,
            decoy_rate: 0.0,
        },
        ..GeneratorConfig::default()
    };
    let corpus = generate_corpus(&gen).unwrap();
    let cfg = TrainConfig {
        max_seq: 12,
        model: ModelSize { d: 16, heads: 4, d_ff: 16, title_len: 8 },
        seed: 13,
        learning_rate: std::env::var("CAL_LR").ok().and_then(|v| v.parse().ok()).unwrap_or(1e-3),
        epochs: std::env::var("CAL_EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(3),
        ..TrainConfig::default()
    };
    let out = train(&corpus, &cfg).unwrap();
    for e in &out.report.epochs {
        println!("epoch {}: click {:.4} valAUC {:?}", e.epoch, e.click, e.validation_auc);
    }
    let (params, idx, dims) = out.checkpoint.restore().unwrap();
    let abl = cfg.ablation.to_ablation().unwrap();
    let ds = prepare_dataset(&corpus, &cfg).unwrap();

    for si in [10usize, 500, 2000] {
        let s = &ds.samples[si.min(ds.samples.len() - 1)];
        let window = ds.history_window(&s.user_id, s.timestamp, dims.max_seq);
        let inputs = ds.to_record_inputs(window, dims.title_len).unwrap();
        let mut fwd = Forward::new(&params);
        let rep = encode_user(&mut fwd, &idx, &dims, &abl, &inputs).unwrap();
        let unorm: f64 = fwd.tape.value(rep.u).data().iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut scores = Vec::new();
        let mut embs: Vec<Vec<f64>> = Vec::new();
        let pos_cand = ds.candidate_input(&s.positive, inputs.len(), &dims).unwrap();
        let e = encode_candidate(&mut fwd, &idx, &dims, &abl, &pos_cand).unwrap();
        embs.push(fwd.tape.value(e).data().to_vec());
        let y = fwd.tape.dot(rep.u, e);
        scores.push(fwd.tape.value(y).item());
        for n in &s.negatives {
            let c = ds.candidate_input(n, inputs.len(), &dims).unwrap();
            let e = encode_candidate(&mut fwd, &idx, &dims, &abl, &c).unwrap();
            embs.push(fwd.tape.value(e).data().to_vec());
            let y = fwd.tape.dot(rep.u, e);
            scores.push(fwd.tape.value(y).item());
        }
        let enorm: f64 = embs[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut dmax: f64 = 0.0;
        for i in 0..embs.len() {
            for j in i + 1..embs.len() {
                let d2: f64 = embs[i].iter().zip(&embs[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                dmax = dmax.max(d2.sqrt());
            }
        }
        println!(
            "sample {si}: |u|={unorm:.4} |e0|={enorm:.4} max|de|={dmax:.4} scores={:?}",
            scores.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        );
    }
}

// Criterion-6 probe: full model vs click-only ablation on the default
// 1,000-user corpus, averaged over training seeds.
#[allow(dead_code)]
fn c6() {
    use feedrec_core::metrics::{click_metrics, engagement_metrics, CorpusTotals};
    use feedrec_core::trainer::{prepare_dataset, score_impressions};
    use std::time::Instant;

    let t0 = Instant::now();
    let corpus = generate_corpus(&GeneratorConfig::default()).unwrap();
    let lr: f64 = std::env::var("CAL_LR").ok().and_then(|v| v.parse().ok()).unwrap_or(1e-3);
    let epochs: usize = std::env::var("CAL_EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(3);
    let d: usize = std::env::var("CAL_D").ok().and_then(|v| v.parse().ok()).unwrap_or(16);

    let max_seq: usize = std::env::var("CAL_MAXSEQ").ok().and_then(|v| v.parse().ok()).unwrap_or(12);
    let base = TrainConfig {
        learning_rate: lr,
        epochs,
        max_seq,
        model: ModelSize { d, heads: 4, d_ff: d, title_len: 8 },
        ..TrainConfig::default()
    };
    let mut click_only = base.clone();
    click_only.ablation.drop_feedback =
        vec!["share".into(), "dislike".into(), "finish".into(), "quick_close".into()];
    click_only.loss_weights.alpha = 0.0;
    click_only.loss_weights.beta = 0.0;
    click_only.loss_weights.gamma = 0.0;

    let mut arch_only = base.clone();
    arch_only.loss_weights.alpha = 0.0;
    arch_only.loss_weights.beta = 0.0;
    arch_only.loss_weights.gamma = 0.0;
    let mut loss_only = click_only.clone();
    loss_only.loss_weights = base.loss_weights;
    let variants: Vec<(&str, &TrainConfig)> = if std::env::var("CAL_GRID").is_ok() {
        vec![
            ("full", &base),
            ("click-only", &click_only),
            ("full-arch/click-loss", &arch_only),
            ("click-arch/full-loss", &loss_only),
        ]
    } else {
        vec![("full", &base), ("click-only", &click_only)]
    };
    for (name, cfg) in variants {
        let mut aucs = Vec::new();
        let mut finishes = Vec::new();
        let seeds: Vec<u64> = std::env::var("CAL_SEEDS").ok()
            .map(|v| v.split(',').map(|x| x.parse().unwrap()).collect())
            .unwrap_or_else(|| vec![1, 2, 3]);
        for seed in seeds {
            let mut c = cfg.clone();
            c.seed = seed;
            let out = train(&corpus, &c).unwrap();
            if std::env::var("CAL_TRACE").is_ok() {
                for e in &out.report.epochs {
                    println!(
                        "  {name} seed {seed} epoch {}: click {:.4} valAUC {:?}",
                        e.epoch, e.click, e.validation_auc
                    );
                }
            }
            let (params, idx, dims) = out.checkpoint.restore().unwrap();
            let abl = c.ablation.to_ablation().unwrap();
            let ds = prepare_dataset(&corpus, &c).unwrap();
            let ranked = score_impressions(&params, &idx, &dims, &abl, &ds, &ds.test).unwrap();
            let cm = click_metrics(&ranked);
            let totals = CorpusTotals::from_impressions(&ranked);
            let em = engagement_metrics(&ranked, &totals);
            aucs.push(cm.auc);
            finishes.push(em.finish_rate.unwrap_or(0.0));
        }
        let mauc = aucs.iter().sum::<f64>() / aucs.len() as f64;
        let mfin = finishes.iter().sum::<f64>() / finishes.len() as f64;
        println!(
            "{name}: AUC {:?} mean {:.4} | finish {:?} mean {:.4}",
            aucs.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
            mauc,
            finishes.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
            mfin
        );
    }
    println!("total elapsed {:.1}s", t0.elapsed().as_secs_f64());
}
