//! Scratch timing probe (temporary).

use std::time::Instant;

use tcct_core::data::Split;
use tcct_core::model::{Ablation, ModelConfig, ModelState};
use tcct_core::synth::{generate, SynthConfig};
use tcct_core::train::{train, ScalogramCache, TrainConfig, TrainOutputs};

#[test]
#[ignore]
fn timing_probe() {
    let cfg = SynthConfig::separable();
    let t0 = Instant::now();
    let train_set = generate::<f32>(&cfg, 100, 1, Split::Train).unwrap();
    let val_set = generate::<f32>(&cfg, 25, 2, Split::Val).unwrap();
    println!("generate: {:.2}s", t0.elapsed().as_secs_f64());

    let model = ModelState::<f32>::init(ModelConfig::new(2), 7).unwrap();
    let t0 = Instant::now();
    let cache = ScalogramCache::build(&train_set, model.cwt_plan()).unwrap();
    println!("scalogram cache 400 samples: {:.2}s", t0.elapsed().as_secs_f64());
    drop(cache);

    let tcfg = TrainConfig {
        max_epochs: 3,
        early_stop_patience: 20,
        seed: 9,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let (_m, report) = train(&train_set, &val_set, model, &tcfg, &TrainOutputs::default()).unwrap();
    println!("3 epochs: {:.2}s total", t0.elapsed().as_secs_f64());
    for e in &report.epochs {
        println!(
            "  epoch {}: loss {:.4} train_acc {:.3} val_acc {:.3} {:.2}s",
            e.epoch, e.train_loss, e.train_acc, e.val_acc, e.seconds
        );
    }

    // Single-sample inference latency.
    let model2 = ModelState::<f32>::init(ModelConfig::new(2), 7).unwrap();
    let one = vec![val_set.samples[0].signals.clone()];
    let t0 = Instant::now();
    let mut iters = 0;
    while t0.elapsed().as_secs_f64() < 2.0 {
        let _ = model2.forward_signals(&one, &Ablation::default()).unwrap();
        iters += 1;
    }
    println!(
        "single-sample inference: {:.1} ms over {iters} iters",
        t0.elapsed().as_secs_f64() * 1000.0 / iters as f64
    );
}
