//! Command-line front end. Outputs go under `$LANECAST_OUT`
//! (default `lanecast-out`).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use lanecast::dataset::{
    dataset_stats, enumerate_windows, load_annotations, synthesize_clip, write_clip, CorpusConfig, WindowSpec,
    DEFAULT_GUARD,
};
use lanecast::flow::{flow_to_rgb, to_grayscale, write_flow_file, FlowEstimator, FlowParams};
use lanecast::harness::{
    emit_report, evaluate_checkpoint, run_grid, train, CellResult, ExperimentGrid, ReportFormat,
};
use lanecast::imageio::{read_image, write_image};
use lanecast::roi::{extract_roi, RoiSpec};
use lanecast::{Error, Result};

const OUT_ENV: &str = "LANECAST_OUT";

#[derive(Parser)]
#[command(name = "lanecast", version, about = "Lane-change recognition and prediction toolkit")]
struct Cli {
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic corpus (config: corpus settings).
    Synth,
    /// Dense flow between two frames (config: flow parameters).
    Flow { frame_a: PathBuf, frame_b: PathBuf },
    /// Crop the region of interest of one annotated frame.
    Roi {
        clip_dir: PathBuf,
        #[arg(long)]
        frame: usize,
        #[arg(long)]
        track: Option<u64>,
        #[arg(long, default_value_t = 2)]
        scale: u32,
        #[arg(long, default_value_t = 112)]
        size: usize,
    },
    /// Enumerate labeled windows and print dataset statistics
    /// (config: horizon, tte, stride, guard).
    Windows { dirs: Vec<PathBuf> },
    /// Train the first cell of a grid config.
    Train,
    /// Evaluate a checkpoint on the validation split of a grid config.
    Eval { checkpoint: PathBuf },
    /// Run (or resume) an experiment grid and write its reports.
    Grid,
    /// Re-render reports from the cell results of a previous grid run.
    Report,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct WindowsConfig {
    horizon: usize,
    tte: usize,
    stride: usize,
    guard: usize,
}

impl Default for WindowsConfig {
    fn default() -> Self {
        WindowsConfig {
            horizon: 20,
            tte: 0,
            stride: 10,
            guard: DEFAULT_GUARD,
        }
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
    }
}

fn out_dir(sub: &str) -> Result<PathBuf> {
    let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("lanecast-out"), PathBuf::from);
    let dir = root.join(sub);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn grid_config(cli: &Cli) -> Result<ExperimentGrid> {
    let mut g: ExperimentGrid = load_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        g.seeds = vec![s];
    }
    g.validate()?;
    Ok(g)
}

fn write_reports(results: &[CellResult], dir: &Path) -> Result<()> {
    for f in [ReportFormat::Csv, ReportFormat::Markdown] {
        for p in emit_report(results, dir, f)? {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Synth => {
            let cfg: CorpusConfig = load_config(cli.config.as_deref())?;
            let dir = out_dir("synth")?;
            for i in 0..cfg.num_clips() {
                let clip_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
                let mut clip = synthesize_clip(cfg.scenario(i), cfg.clip_length, clip_seed, &cfg.synth)?;
                clip.track.track_id = i as u64;
                write_clip(&dir.join(format!("clip_{i:04}")), &clip)?;
            }
            println!("wrote {} clips to {}", cfg.num_clips(), dir.display());
        }
        Command::Flow { frame_a, frame_b } => {
            let params: FlowParams = load_config(cli.config.as_deref())?;
            let est = FlowEstimator::new(params)?;
            let a = to_grayscale(&read_image(frame_a)?)?;
            let b = to_grayscale(&read_image(frame_b)?)?;
            let (flow, diag) = est.flow(&a, &b)?;
            let dir = out_dir("flow")?;
            write_flow_file(&dir.join("flow.lcfl"), &flow)?;
            write_image(&dir.join("flow.png"), &flow_to_rgb(&flow, None))?;
            println!(
                "max |flow| {:.3} px, {} singular pixels; wrote {}",
                flow.max_magnitude(),
                diag.singular_pixels,
                dir.display()
            );
        }
        Command::Roi {
            clip_dir,
            frame,
            track,
            scale,
            size,
        } => {
            let tracks = load_annotations(clip_dir)?;
            let t = match track {
                Some(id) => tracks.iter().find(|t| t.track_id == *id),
                None => tracks.first(),
            }
            .ok_or_else(|| Error::Config("no such track".into()))?;
            let contour = t.contour(*frame).ok_or(Error::Coverage {
                track_id: t.track_id,
                frame: *frame,
            })?;
            let image = read_image(&clip_dir.join(format!("frame_{frame:05}.png")))?;
            let crop = extract_roi(&image, contour, RoiSpec::new(*scale, *size)?)?;
            let path = out_dir("roi")?.join(format!("track{}_frame{frame:05}_x{scale}.png", t.track_id));
            write_image(&path, &crop.image)?;
            println!("wrote {}{}", path.display(), if crop.fully_outside { " (fully outside image)" } else { "" });
        }
        Command::Windows { dirs } => {
            let cfg: WindowsConfig = load_config(cli.config.as_deref())?;
            let spec = WindowSpec::new(cfg.horizon, cfg.tte)?;
            let mut tracks = Vec::new();
            for d in dirs {
                tracks.extend(load_annotations(d)?);
            }
            let windows = enumerate_windows(&tracks, spec, cfg.stride, cfg.guard)?;
            let stats = dataset_stats(&tracks, &windows);
            println!("class  sequences  avg_frames  windows");
            for c in lanecast::dataset::ManeuverClass::ALL {
                let i = c.index();
                println!(
                    "{:<5}  {:>9}  {:>10.1}  {:>7}",
                    c.as_str(),
                    stats.sequences[i],
                    stats.avg_frames[i],
                    stats.windows[i]
                );
            }
            let path = out_dir("windows")?.join("windows.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["track_id", "end_frame", "label"])?;
            for win in &windows {
                w.write_record([win.track_id.to_string(), win.end_frame.to_string(), win.label.to_string()])?;
            }
            w.flush()?;
            println!("wrote {}", path.display());
        }
        Command::Train => {
            let g = grid_config(cli)?;
            let cell = g.cells()[0];
            let data = g.pipeline.prepare(cell.horizon, cell.tte, cell.roi_scale, cell.data_seed())?;
            let config = g.pipeline.model_config(cell.method);
            let out = train(&config, &data.train, &data.val, &g.pipeline.budget, cell.train_seed())?;
            let dir = out_dir(&format!("train/{}", cell.key()))?;
            let extra = serde_json::json!({
                "cell": cell,
                "best_epoch": out.best_epoch,
                "best_val_accuracy": out.best_val_accuracy,
            });
            out.model.save(&dir.join("best.ckpt"), extra)?;
            std::fs::write(dir.join("log.json"), serde_json::to_vec_pretty(&out.log)?)?;
            println!(
                "best validation accuracy {:.4} (epoch {:?}); wrote {}",
                out.best_val_accuracy,
                out.best_epoch,
                dir.display()
            );
        }
        Command::Eval { checkpoint } => {
            let g = grid_config(cli)?;
            let cell = g.cells()[0];
            let data = g.pipeline.prepare(cell.horizon, cell.tte, cell.roi_scale, cell.data_seed())?;
            let report = evaluate_checkpoint(checkpoint, &data.val, g.pipeline.budget.batch_size, cell.train_seed())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Grid => {
            let g = grid_config(cli)?;
            let dir = out_dir("grid")?;
            let results = run_grid(&g, &dir)?;
            write_reports(&results, &dir)?;
            let failed = results.iter().filter(|r| !r.succeeded()).count();
            if failed > 0 {
                eprintln!("{failed} of {} cells failed", results.len());
                return Ok(false);
            }
        }
        Command::Report => {
            let dir = out_dir("grid")?;
            let mut results: Vec<CellResult> = Vec::new();
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir.join("cells"))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            for p in paths {
                results.push(serde_json::from_str(&std::fs::read_to_string(&p)?)?);
            }
            results.sort_by_key(|r| r.cell);
            write_reports(&results, &dir)?;
            return Ok(results.iter().all(CellResult::succeeded));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
