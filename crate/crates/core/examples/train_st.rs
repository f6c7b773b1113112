//! Trains the spatiotemporal multiplier network on a synthetic corpus (horizon 20, ROI x2)
//! and saves the best-validation checkpoint.
//!
//! cargo run --release --example train_st -- [clips_per_class] [tte] [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use lanecast::dataset::CorpusConfig;
use lanecast::harness::{evaluate, train, Method, Pipeline};

fn main() -> lanecast::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let clips_per_class: usize = args.next().map_or(100, |s| s.parse().expect("clips per class"));
    let tte: usize = args.next().map_or(0, |s| s.parse().expect("tte"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/train_st".into()));
    let pipeline = Pipeline {
        corpus: CorpusConfig {
            clips_per_class,
            ..CorpusConfig::default()
        },
        ..Pipeline::default()
    };

    let t = Instant::now();
    let data = pipeline.prepare(20, tte, 2, 1)?;
    println!(
        "corpus: {} train / {} validation windows in {:.1?}",
        data.train.len(),
        data.val.len(),
        t.elapsed()
    );
    let config = pipeline.model_config(Method::StMultiplier);
    let mut outcome = train(&config, &data.train, &data.val, &pipeline.budget, 7)?;
    let report = evaluate(&mut outcome.model, &data.val, 16, 7)?;
    println!(
        "best epoch {:?}, validation accuracy {:.2}% (untrained {:.2}%), {:.1}s",
        outcome.best_epoch,
        100.0 * report.accuracy,
        100.0 * outcome.initial_val_accuracy,
        outcome.seconds
    );
    println!("confusion (rows true NLC/LLC/RLC): {:?}", report.confusion);
    std::fs::create_dir_all(&out)?;
    outcome.model.save(&out.join("best.ckpt"), serde_json::json!({ "tte": tte }))?;
    println!("wrote {}", out.join("best.ckpt").display());
    Ok(())
}
