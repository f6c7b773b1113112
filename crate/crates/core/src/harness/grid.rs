use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, MetricsReport};
use super::train::{train, EpochLog, TrainBudget};
use crate::dataset::{split_train_val, CorpusConfig, Example, MaterializeConfig, WindowSpec};
use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::models::{DisjointConfig, ModelConfig, StConfig};
use crate::roi::{Normalization, RoiSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Disjoint,
    StMultiplier,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Disjoint, Method::StMultiplier];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Disjoint => "disjoint",
            Method::StMultiplier => "st-multiplier",
        }
    }

    fn code(self) -> u64 {
        match self {
            Method::Disjoint => 1,
            Method::StMultiplier => 2,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disjoint" => Ok(Method::Disjoint),
            "st-multiplier" => Ok(Method::StMultiplier),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// Everything a cell needs besides its coordinates: corpus generation,
/// preprocessing, split, architecture templates and training budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pipeline {
    pub corpus: CorpusConfig,
    pub roi_output_size: usize,
    pub flow: FlowParams,
    pub flow_pairs: usize,
    pub appearance_frames: usize,
    pub normalization: Normalization,
    pub flow_clamp: f32,
    /// Fraction of source tracks used for training; the rest validate.
    pub train_fraction: f64,
    pub budget: TrainBudget,
    /// Architecture templates; input size, `L` and `T_s` are overwritten
    /// from the fields above.
    pub disjoint: DisjointConfig,
    pub st: StConfig,
}

impl Default for Pipeline {
    fn default() -> Self {
        let m = MaterializeConfig::default();
        Pipeline {
            corpus: CorpusConfig::default(),
            roi_output_size: m.roi.output_size,
            flow: m.flow,
            flow_pairs: m.flow_pairs,
            appearance_frames: m.appearance_frames,
            normalization: m.normalization,
            flow_clamp: m.flow_clamp,
            train_fraction: 0.8,
            budget: TrainBudget::default(),
            disjoint: DisjointConfig::default(),
            st: StConfig::default(),
        }
    }
}

impl Pipeline {
    pub fn model_config(&self, method: Method) -> ModelConfig {
        match method {
            Method::Disjoint => ModelConfig::Disjoint(DisjointConfig {
                input_size: self.roi_output_size,
                flow_pairs: self.flow_pairs,
                ..self.disjoint.clone()
            }),
            Method::StMultiplier => ModelConfig::StMultiplier(StConfig {
                input_size: self.roi_output_size,
                flow_pairs: self.flow_pairs,
                appearance_frames: self.appearance_frames,
                ..self.st.clone()
            }),
        }
    }

    pub fn materialize_config(&self, roi_scale: u32) -> Result<MaterializeConfig> {
        Ok(MaterializeConfig {
            roi: RoiSpec::new(roi_scale, self.roi_output_size)?,
            flow: self.flow,
            flow_pairs: self.flow_pairs,
            appearance_frames: self.appearance_frames,
            normalization: self.normalization,
            flow_clamp: self.flow_clamp,
        })
    }

    /// Checks everything a cell with these coordinates would need, without
    /// generating data.
    pub fn validate_cell(&self, method: Method, horizon: usize, tte: usize, roi_scale: u32) -> Result<()> {
        let spec = WindowSpec::new(horizon, tte)?;
        let mat = self.materialize_config(roi_scale)?;
        if mat.flow_pairs + 1 > spec.horizon {
            return Err(Error::Config(format!(
                "{} flow pairs need at least {} frames, horizon is {}",
                mat.flow_pairs,
                mat.flow_pairs + 1,
                spec.horizon
            )));
        }
        if mat.appearance_frames > spec.horizon {
            return Err(Error::Config(format!(
                "{} appearance frames exceed horizon {}",
                mat.appearance_frames, spec.horizon
            )));
        }
        if self.corpus.clips_per_class == 0 {
            return Err(Error::Config("corpus needs at least one clip per class".into()));
        }
        if self.corpus.clip_length < horizon + tte {
            return Err(Error::Config(format!(
                "clip length {} cannot hold horizon {horizon} plus TTE {tte}",
                self.corpus.clip_length
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train fraction must lie in (0, 1), got {}", self.train_fraction)));
        }
        self.budget.validate()?;
        crate::models::Model::<f32>::new(&self.model_config(method), 0).map(|_| ())
    }

    /// Generates the synthetic corpus for one window spec and ROI scale and
    /// splits it by source track.
    pub fn prepare(&self, horizon: usize, tte: usize, roi_scale: u32, seed: u64) -> Result<Dataset> {
        let spec = WindowSpec::new(horizon, tte)?;
        let mat = self.materialize_config(roi_scale)?;
        let (_, examples) = self.corpus.build(spec, &mat, seed)?;
        let (train, val) = split_train_val(examples, self.train_fraction, seed ^ 0x0053_504C_4954)?;
        Ok(Dataset { train, val })
    }
}

/// Train / validation examples of one corpus.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
}

/// Axes of the experiment grid plus the shared pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentGrid {
    pub methods: Vec<Method>,
    pub horizons: Vec<usize>,
    pub ttes: Vec<usize>,
    pub roi_scales: Vec<u32>,
    pub seeds: Vec<u64>,
    #[serde(flatten)]
    pub pipeline: Pipeline,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            methods: Method::ALL.to_vec(),
            horizons: vec![20],
            ttes: vec![0],
            roi_scales: vec![2],
            seeds: vec![0],
            pipeline: Pipeline::default(),
        }
    }
}

/// One grid coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub method: Method,
    pub horizon: usize,
    pub tte: usize,
    pub roi_scale: u32,
    pub seed: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6C61_6E65_6361_7374, |h, &p| splitmix(h ^ p))
}

impl GridCell {
    /// Training seed: a hash of the replicate seed and every coordinate.
    pub fn train_seed(&self) -> u64 {
        mix(&[self.seed, self.method.code(), self.horizon as u64, self.tte as u64, self.roi_scale as u64])
    }

    /// Data seed: excludes the method so both architectures of a cell
    /// row see the same corpus.
    pub fn data_seed(&self) -> u64 {
        mix(&[self.seed, 0, self.horizon as u64, self.tte as u64, self.roi_scale as u64])
    }

    pub fn key(&self) -> String {
        format!(
            "{}-h{}-t{}-x{}-s{}",
            self.method, self.horizon, self.tte, self.roi_scale, self.seed
        )
    }

    fn data_key(&self) -> (usize, usize, u32, u64) {
        (self.horizon, self.tte, self.roi_scale, self.seed)
    }
}

impl ExperimentGrid {
    /// Cells in method, horizon, TTE, scale, seed order.
    pub fn cells(&self) -> Vec<GridCell> {
        let mut out = Vec::new();
        for &method in &self.methods {
            for &horizon in &self.horizons {
                for &tte in &self.ttes {
                    for &roi_scale in &self.roi_scales {
                        for &seed in &self.seeds {
                            out.push(GridCell {
                                method,
                                horizon,
                                tte,
                                roi_scale,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Rejects empty axes, duplicates and any cell whose configuration
    /// would fail, before anything is trained.
    pub fn validate(&self) -> Result<()> {
        fn axis<T: Ord + Clone>(name: &str, v: &[T]) -> Result<()> {
            if v.is_empty() {
                return Err(Error::Config(format!("grid axis '{name}' is empty")));
            }
            let mut s = v.to_vec();
            s.sort();
            s.dedup();
            if s.len() != v.len() {
                return Err(Error::Config(format!("grid axis '{name}' has duplicates")));
            }
            Ok(())
        }
        axis("methods", &self.methods)?;
        axis("horizons", &self.horizons)?;
        axis("ttes", &self.ttes)?;
        axis("roi_scales", &self.roi_scales)?;
        axis("seeds", &self.seeds)?;
        for c in self.cells() {
            self.pipeline
                .validate_cell(c.method, c.horizon, c.tte, c.roi_scale)
                .map_err(|e| Error::Config(format!("cell {}: {e}", c.key())))?;
        }
        Ok(())
    }
}

/// Outcome of one cell: a report, or the error that stopped it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: GridCell,
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
    pub log: Vec<EpochLog>,
    pub train_samples: usize,
}

impl CellResult {
    pub fn succeeded(&self) -> bool {
        self.report.is_some()
    }

    fn failed(cell: GridCell, e: &Error) -> Self {
        CellResult {
            cell,
            report: None,
            error: Some(e.to_string()),
            log: Vec::new(),
            train_samples: 0,
        }
    }
}

/// Trains and evaluates one cell on a prepared dataset.
pub fn run_cell(pipeline: &Pipeline, cell: GridCell, data: &Dataset) -> CellResult {
    let start = Instant::now();
    let config = pipeline.model_config(cell.method);
    let seed = cell.train_seed();
    let run = || -> Result<CellResult> {
        let mut outcome = train(&config, &data.train, &data.val, &pipeline.budget, seed)?;
        let mut report = evaluate(&mut outcome.model, &data.val, pipeline.budget.batch_size, seed)?;
        report.wall_clock_secs = start.elapsed().as_secs_f64();
        Ok(CellResult {
            cell,
            report: Some(report),
            error: None,
            log: outcome.log,
            train_samples: data.train.len(),
        })
    };
    run().unwrap_or_else(|e| {
        log::warn!("cell {} failed: {e}", cell.key());
        CellResult::failed(cell, &e)
    })
}

pub fn cell_path(dir: &Path, cell: &GridCell) -> PathBuf {
    dir.join("cells").join(format!("{}.json", cell.key()))
}

fn load_cell(path: &Path, cell: &GridCell) -> Option<CellResult> {
    let text = std::fs::read_to_string(path).ok()?;
    let r: CellResult = serde_json::from_str(&text).ok()?;
    (r.cell == *cell && r.succeeded()).then_some(r)
}

fn store_cell(path: &Path, r: &CellResult) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(r)?)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// Runs every cell not already completed under `dir/cells/`, one JSON file
/// per cell. Failed cells are recorded and retried on the next run.
/// Corpora are generated once per (horizon, TTE, scale, seed) and shared
/// by the methods.
pub fn run_grid(grid: &ExperimentGrid, dir: &Path) -> Result<Vec<CellResult>> {
    grid.validate()?;
    std::fs::create_dir_all(dir.join("cells"))?;
    let cells = grid.cells();
    let mut done: BTreeMap<GridCell, CellResult> = BTreeMap::new();
    let mut pending: BTreeMap<(usize, usize, u32, u64), Vec<GridCell>> = BTreeMap::new();
    for c in &cells {
        match load_cell(&cell_path(dir, c), c) {
            Some(r) => {
                done.insert(*c, r);
            }
            None => pending.entry(c.data_key()).or_default().push(*c),
        }
    }
    log::info!("grid: {} cells, {} already complete", cells.len(), done.len());
    for (key, group) in pending {
        let (horizon, tte, scale, _) = key;
        let data = grid.pipeline.prepare(horizon, tte, scale, group[0].data_seed());
        for c in group {
            let r = match &data {
                Ok(d) => run_cell(&grid.pipeline, c, d),
                Err(e) => CellResult::failed(c, e),
            };
            store_cell(&cell_path(dir, &c), &r)?;
            done.insert(c, r);
        }
    }
    Ok(cells.iter().map(|c| done.remove(c).expect("every cell ran")).collect())
}
