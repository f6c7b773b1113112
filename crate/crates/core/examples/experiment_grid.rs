//! A reduced experiment grid (both methods, ROI x1..x4, TTE 0 and 10)
//! on a small corpus, with the accuracy tables printed as markdown.
//! Completed cells are reused when the example is run again.
//!
//! cargo run --release --example experiment_grid -- [clips_per_class] [out_dir]

use std::path::PathBuf;

use lanecast::dataset::CorpusConfig;
use lanecast::harness::{
    classification_table, emit_report, prediction_table, run_grid, ExperimentGrid, Method, Pipeline, ReportFormat,
    TrainBudget,
};

fn main() -> lanecast::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = std::env::args().skip(1);
    let clips_per_class: usize = args.next().map_or(12, |s| s.parse().expect("clips per class"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/experiment_grid".into()));
    let grid = ExperimentGrid {
        methods: Method::ALL.to_vec(),
        horizons: vec![20],
        ttes: vec![0, 10],
        roi_scales: vec![1, 2, 3, 4],
        seeds: vec![0],
        pipeline: Pipeline {
            corpus: CorpusConfig {
                clips_per_class,
                ..CorpusConfig::default()
            },
            budget: TrainBudget {
                epochs: 4,
                batch_size: 8,
                ..TrainBudget::default()
            },
            ..Pipeline::default()
        },
    };
    let results = run_grid(&grid, &out)?;
    if let Some(t) = classification_table(&results) {
        println!("{}", t.to_markdown());
    }
    if let Some(t) = prediction_table(&results, 20) {
        println!("{}", t.to_markdown());
    }
    for p in emit_report(&results, &out, ReportFormat::Csv)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
