//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Tolerances are pinned here.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use lanecast::dataset::{
    enumerate_windows, CorpusConfig, ManeuverClass, VehicleTrack, WindowSpec, DEFAULT_GUARD,
};
use lanecast::flow::{FlowEstimator, FlowField, FlowParams};
use lanecast::harness::{
    classification_table, emit_report, prediction_table, run_grid, train, ExperimentGrid, Method, Pipeline,
    ReportFormat, TrainBudget, FAILED,
};
use lanecast::models::{DisjointConfig, GatedBlock, ResidualUnit, StConfig};
use lanecast::roi::{crop_pad, extract_roi, square_box, Contour, RoiSpec};
use lanecast::tensor::{
    forward, gradcheck, init_layer, random_projection, temporal_conv_inject, BatchNormHyper, Conv1dHyper,
    Conv2dHyper, GradCheckOptions, Hyper, LinearHyper, Mode, ParamStore, PoolSpec, Tape, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_SUITE_SECS: f64 = 60.0;
const GATE_TOL: f64 = 1e-6;
const GATE_CONFIGS: usize = 50;
const FLOW_SIZE: usize = 112;
const FLOW_MAX_SHIFT: i32 = 5;
const FLOW_MEDIAN_EPE: f32 = 0.5;
const FLOW_IDENTITY_MAG: f32 = 0.05;
const FLOW_PAIR_SECS: f64 = 2.0;
const FLOW_MARGIN: usize = 16;
const LABEL_TRACKS: usize = 100;
const E2E_CLIPS_PER_CLASS: usize = 100;
const E2E_MIN_ACCURACY: f64 = 0.85;
const E2E_TRAIN_SECS: f64 = 600.0;
const CHANCE: f64 = 1.0 / 3.0;
const CHANCE_TOL: f64 = 0.10;
const PREDICTION_MIN_ACCURACY: f64 = 0.75;

type Outcome = Result<String, String>;

struct Suite {
    failures: usize,
}

impl Suite {
    fn run(&mut self, name: &str, f: impl FnOnce() -> Outcome) {
        let t = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("PASS {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                self.failures += 1;
                println!("FAIL {name}: {d} [{secs:.1}s]");
            }
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

fn err(e: lanecast::Error) -> String {
    e.to_string()
}

fn rand_f64(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let opts = GradCheckOptions::default();
    let mut worst: (f64, String) = (0.0, String::new());
    let mut checked = Vec::new();
    let mut record = |name: &str, r: lanecast::Result<lanecast::tensor::GradCheckReport>| -> Result<(), String> {
        let r = r.map_err(err)?;
        if r.max_rel_error > worst.0 {
            worst = (r.max_rel_error, format!("{name}/{}", r.worst));
        }
        checked.push(name.to_string());
        ensure(r.max_rel_error <= GRAD_REL_TOL, || {
            format!("{name}: relative error {:.3e} at {}", r.max_rel_error, r.worst)
        })
    };

    let mut store = ParamStore::new();
    let conv = init_layer(
        &mut store,
        "conv",
        Hyper::Conv2d(Conv2dHyper {
            in_ch: 3,
            out_ch: 4,
            kernel: 3,
            stride: 2,
            padding: 1,
        }),
        &mut rng,
    );
    let x = rand_f64(&[2, 3, 7, 7], &mut rng);
    record(
        "conv2d",
        gradcheck(&store, &[x], opts, &|t, s, x| {
            let y = forward(t, s, &conv, x[0], Mode::Train)?;
            random_projection(t, y, 1)
        }),
    )?;

    let mut store = ParamStore::new();
    let tc = init_layer(&mut store, "tconv", Hyper::Conv1dTemporal(Conv1dHyper::same(3, 3)), &mut rng);
    let x = rand_f64(&[2, 3, 5], &mut rng);
    record(
        "conv1d-temporal",
        gradcheck(&store, &[x], opts, &|t, s, x| {
            let y = forward(t, s, &tc, x[0], Mode::Train)?;
            random_projection(t, y, 2)
        }),
    )?;
    let x = rand_f64(&[2 * 4, 3, 2, 2], &mut rng);
    record(
        "conv1d-temporal (folded)",
        gradcheck(&store, &[x], opts, &|t, s, x| {
            let y = temporal_conv_inject(t, s, &tc, x[0], 4)?;
            random_projection(t, y, 3)
        }),
    )?;

    let mut store = ParamStore::new();
    let lin = init_layer(&mut store, "fc", Hyper::Linear(LinearHyper { inputs: 6, outputs: 4 }), &mut rng);
    let x = rand_f64(&[3, 6], &mut rng);
    record(
        "linear",
        gradcheck(&store, &[x], opts, &|t, s, x| {
            let y = forward(t, s, &lin, x[0], Mode::Train)?;
            random_projection(t, y, 4)
        }),
    )?;

    let mut store = ParamStore::new();
    let bn = init_layer(&mut store, "bn", Hyper::BatchNorm(BatchNormHyper::new(3)), &mut rng);
    let x = rand_f64(&[4, 3, 3, 3], &mut rng);
    record(
        "batchnorm",
        gradcheck(&store, &[x], opts, &|t, s, x| {
            let y = forward(t, s, &bn, x[0], Mode::Train)?;
            random_projection(t, y, 5)
        }),
    )?;

    let empty = ParamStore::new();
    let x = rand_f64(&[2, 2, 7, 7], &mut rng);
    record(
        "maxpool",
        gradcheck(&empty, &[x], opts, &|t, _, x| {
            let y = t.max_pool2d(x[0], PoolSpec::default())?;
            random_projection(t, y, 6)
        }),
    )?;
    let x = rand_f64(&[3, 9], &mut rng);
    record(
        "relu",
        gradcheck(&empty, &[x], opts, &|t, _, x| {
            let y = t.relu(x[0])?;
            random_projection(t, y, 7)
        }),
    )?;
    let x = rand_f64(&[4, 3], &mut rng);
    record(
        "softmax-xent",
        gradcheck(&empty, &[x], opts, &|t, _, x| Ok(t.softmax_cross_entropy(x[0], &[0, 1, 2, 1])?.0)),
    )?;

    for (name, in_ch, out_ch, stride) in [("gated block", 3, 3, 1), ("gated block (projection)", 2, 4, 2)] {
        let mut store = ParamStore::new();
        let block = GatedBlock::build(&mut store, &mut rng, "b", in_ch, out_ch, stride);
        let xa = rand_f64(&[2, in_ch, 6, 6], &mut rng);
        let xm = rand_f64(&[2, in_ch, 6, 6], &mut rng);
        record(
            name,
            gradcheck(&store, &[xa, xm], opts, &|t, s, x| {
                let (a, m) = block.forward(t, s, x[0], x[1], Mode::Train)?;
                let la = random_projection(t, a, 8)?;
                let lm = random_projection(t, m, 9)?;
                t.add(la, lm)
            }),
        )?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < GRAD_SUITE_SECS, || format!("suite took {secs:.1}s"))?;
    Ok(format!(
        "{} checks, worst relative error {:.2e} ({}) <= {GRAD_REL_TOL:e}, {secs:.1}s < {GRAD_SUITE_SECS}s",
        checked.len(),
        worst.0,
        worst.1
    ))
}

fn gate_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for case in 0..GATE_CONFIGS {
        let in_ch = rng.random_range(1..6);
        let out_ch = if rng.random_bool(0.5) { in_ch } else { rng.random_range(1..7) };
        let stride = rng.random_range(1..3);
        let side = rng.random_range(3..10);
        let batch = rng.random_range(1..4);
        let mut store = ParamStore::<f64>::new();
        let unit = ResidualUnit::build(&mut store, &mut rng, "u", in_ch, out_ch, stride);
        let shape = [batch, in_ch, side, side];
        let x = rand_f64(&shape, &mut rng);
        let mode = if case % 2 == 0 { Mode::Eval } else { Mode::Train };
        let mut tape = Tape::no_grad();
        let xv = tape.input(&x).map_err(err)?;
        let ones = tape.input(&Tensor::full(&shape, 1.0)).map_err(err)?;
        let gated = unit.forward(&mut tape, &mut store, xv, Some(ones), mode).map_err(err)?;
        let plain = unit.forward(&mut tape, &mut store, xv, None, mode).map_err(err)?;
        for (a, b) in tape.value(gated).iter().zip(tape.value(plain)) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= GATE_TOL, || format!("max elementwise difference {worst:.3e}"))?;
    Ok(format!("{GATE_CONFIGS} configurations, max elementwise difference {worst:.1e} <= {GATE_TOL:e}"))
}

/// Smooth value noise on a random lattice, sampled at continuous positions
/// so shifted frames are exact translations.
struct Noise {
    lattice: Vec<f32>,
    n: usize,
    cell: f32,
}

impl Noise {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 64;
        Noise {
            lattice: (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect(),
            n,
            cell: 5.0,
        }
    }

    fn at(&self, x: f32, y: f32) -> f32 {
        let (gx, gy) = (x / self.cell + 8.0, y / self.cell + 8.0);
        let (ix, iy) = (gx.floor(), gy.floor());
        let (fx, fy) = (gx - ix, gy - iy);
        let s = |t: f32| t * t * (3.0 - 2.0 * t);
        let g = |i: f32, j: f32| self.lattice[(j as usize % self.n) * self.n + i as usize % self.n];
        let top = g(ix, iy) + s(fx) * (g(ix + 1.0, iy) - g(ix, iy));
        let bot = g(ix, iy + 1.0) + s(fx) * (g(ix + 1.0, iy + 1.0) - g(ix, iy + 1.0));
        top + s(fy) * (bot - top)
    }

    fn frame(&self, dx: f32, dy: f32) -> Tensor<f32> {
        let n = FLOW_SIZE;
        Tensor::from_fn(&[1, n, n], |i| self.at((i % n) as f32 - dx, (i / n) as f32 - dy))
    }
}

fn interior_median_epe(f: &FlowField, dx: f32, dy: f32) -> f32 {
    let mut e = Vec::new();
    for y in FLOW_MARGIN..f.height - FLOW_MARGIN {
        for x in FLOW_MARGIN..f.width - FLOW_MARGIN {
            let (u, v) = f.at(x, y);
            e.push(((u - dx).powi(2) + (v - dy).powi(2)).sqrt());
        }
    }
    e.sort_by(f32::total_cmp);
    e[e.len() / 2]
}

fn optical_flow() -> Outcome {
    let params = FlowParams {
        levels: 3,
        ..FlowParams::default()
    };
    let est = FlowEstimator::new(params).map_err(err)?;
    let noise = Noise::new(13);
    let a = noise.frame(0.0, 0.0);
    let (mut worst_epe, mut worst_secs, mut pairs) = (0.0f32, 0.0f64, 0);
    for dy in -FLOW_MAX_SHIFT..=FLOW_MAX_SHIFT {
        for dx in -FLOW_MAX_SHIFT..=FLOW_MAX_SHIFT {
            if dx == 0 && dy == 0 {
                continue;
            }
            let b = noise.frame(dx as f32, dy as f32);
            let t = Instant::now();
            let (f, _) = est.flow(&a, &b).map_err(err)?;
            worst_secs = worst_secs.max(t.elapsed().as_secs_f64());
            let epe = interior_median_epe(&f, dx as f32, dy as f32);
            ensure(epe < FLOW_MEDIAN_EPE, || format!("shift ({dx},{dy}): median EPE {epe:.3}"))?;
            worst_epe = worst_epe.max(epe);
            pairs += 1;
        }
    }
    let t = Instant::now();
    let (f, _) = est.flow(&a, &a).map_err(err)?;
    worst_secs = worst_secs.max(t.elapsed().as_secs_f64());
    let mag = f.max_magnitude();
    ensure(mag < FLOW_IDENTITY_MAG, || format!("identical frames: max magnitude {mag:.4}"))?;
    ensure(worst_secs < FLOW_PAIR_SECS, || format!("slowest pair {worst_secs:.2}s"))?;
    Ok(format!(
        "{pairs} shifts up to {FLOW_MAX_SHIFT}px: worst median EPE {worst_epe:.2e} < {FLOW_MEDIAN_EPE}; \
         identity max |flow| {mag:.1e} < {FLOW_IDENTITY_MAG}; slowest pair {worst_secs:.3}s < {FLOW_PAIR_SECS}s"
    ))
}

fn roi_geometry() -> Outcome {
    let (w, h) = (150usize, 110usize);
    let img = Tensor::from_fn(&[3, h, w], |i| 1.0 + i as f32);
    let src = img.data();
    let mut centers = vec![
        (0.5, 0.5),
        (w as f64 - 0.5, 0.5),
        (0.5, h as f64 - 0.5),
        (w as f64 - 0.5, h as f64 - 0.5),
    ];
    for x in (0..w).step_by(19) {
        for y in (0..h).step_by(13) {
            centers.push((x as f64 + 0.5, y as f64 + 0.5));
        }
    }
    let mut cases = 0;
    for &(cx, cy) in &centers {
        for &(bw, bh) in &[(12.0, 8.0), (6.0, 15.0), (25.0, 25.0)] {
            let c = Contour::rectangle(0, cx - bw / 2.0, cy - bh / 2.0, cx + bw / 2.0, cy + bh / 2.0).map_err(err)?;
            for k in 1..=4u32 {
                let b = square_box(&c, k).map_err(err)?;
                ensure(b.side == k as f64 * f64::max(bw, bh), || format!("side {} at k={k}", b.side))?;
                ensure(b.center == (cx, cy), || format!("centre {:?} vs ({cx},{cy})", b.center))?;
                let (x0, y0, s) = b.pixel_window();
                ensure(
                    (x0 as f64 + s as f64 / 2.0 - cx).abs() <= 0.5 && (y0 as f64 + s as f64 / 2.0 - cy).abs() <= 0.5,
                    || format!("window ({x0},{y0},{s}) not centred on ({cx},{cy})"),
                )?;
                let crop = crop_pad(&img, &b).map_err(err)?;
                let out = crop.image.data();
                for ch in 0..3 {
                    for oy in 0..s {
                        for ox in 0..s {
                            let (sx, sy) = (x0 + ox as i64, y0 + oy as i64);
                            let inside = (0..w as i64).contains(&sx) && (0..h as i64).contains(&sy);
                            let want = if inside { src[(ch * h + sy as usize) * w + sx as usize] } else { 0.0 };
                            let got = out[(ch * s + oy) * s + ox];
                            ensure(got == want, || {
                                format!("pixel ({ox},{oy}) of crop at ({cx},{cy}) k={k}: {got} vs {want}")
                            })?;
                        }
                    }
                }
                let full = extract_roi(&img, &c, RoiSpec::new(k, 112).map_err(err)?).map_err(err)?;
                ensure(full.image.shape() == [3, 112, 112], || format!("{:?}", full.image.shape()))?;
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} crops over {} centres (all four corners included)", centers.len()))
}

fn random_track(id: u64, rng: &mut ChaCha8Rng) -> VehicleTrack {
    let first = rng.random_range(0..25usize);
    let len = rng.random_range(20..240usize);
    let gap = rng.random_bool(0.25).then(|| first + rng.random_range(0..len));
    let frames = (first..first + len)
        .filter(|&f| Some(f) != gap)
        .map(|f| Contour::rectangle(f, 1.0, 1.0, 5.0, 8.0).unwrap())
        .collect();
    let events: BTreeSet<usize> = (0..rng.random_range(0..4)).map(|_| rng.random_range(first..first + len)).collect();
    let events = events
        .into_iter()
        .map(|f| (f, if rng.random_bool(0.5) { ManeuverClass::Llc } else { ManeuverClass::Rlc }))
        .collect();
    VehicleTrack::new(id, "acceptance", 10.0, frames, events).unwrap()
}

/// Independent rescan: a complete window is positive iff an event sits at
/// `end + tte`, NLC iff no event lies within the guard-widened span, and
/// ambiguous otherwise.
fn scan(t: &VehicleTrack, end: usize, n: usize, tte: usize, guard: usize) -> Option<Option<ManeuverClass>> {
    if end + 1 < n {
        return None;
    }
    let start = end + 1 - n;
    let frames: BTreeSet<usize> = t.frames.iter().map(|c| c.frame).collect();
    if !(start..=end).all(|f| frames.contains(&f)) {
        return None;
    }
    if let Some(&(_, c)) = t.events.iter().find(|e| e.0 == end + tte) {
        return Some(Some(c));
    }
    let lo = start as i64 - guard as i64;
    let hi = (end + tte + guard) as i64;
    let near = t.events.iter().any(|e| (lo..=hi).contains(&(e.0 as i64)));
    Some((!near).then_some(ManeuverClass::Nlc))
}

fn labeling_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let tracks: Vec<VehicleTrack> = (0..LABEL_TRACKS).map(|i| random_track(i as u64, &mut rng)).collect();
    let mut pairs = 0;
    let mut positives = 0;
    for (n, tte) in [(20, 0), (20, 10), (20, 20), (30, 0), (40, 0)] {
        let stride = 5;
        let spec = WindowSpec::new(n, tte).map_err(err)?;
        let windows = enumerate_windows(&tracks, spec, stride, DEFAULT_GUARD).map_err(err)?;
        for (ti, t) in tracks.iter().enumerate() {
            let emitted: BTreeSet<(usize, ManeuverClass)> = windows
                .iter()
                .filter(|w| w.track_index == ti)
                .map(|w| (w.end_frame, w.label))
                .collect();
            let mut expected = BTreeSet::new();
            for &(e, c) in &t.events {
                if e >= tte && scan(t, e - tte, n, tte, DEFAULT_GUARD).is_some() {
                    expected.insert((e - tte, c));
                }
            }
            let mut end = t.first_frame() + n - 1;
            while end <= t.last_frame() {
                if scan(t, end, n, tte, DEFAULT_GUARD) == Some(Some(ManeuverClass::Nlc)) {
                    expected.insert((end, ManeuverClass::Nlc));
                }
                end += stride;
            }
            ensure(emitted == expected, || {
                format!("track {ti}, N={n}, TTE={tte}: emitted {emitted:?}, scan {expected:?}")
            })?;
            for &(end, c) in &emitted {
                if c != ManeuverClass::Nlc {
                    positives += 1;
                    ensure(t.events.contains(&(end + tte, c)), || {
                        format!("positive window ending {end} is not {tte} frames before an event")
                    })?;
                }
            }
            pairs += emitted.len();
        }
    }
    Ok(format!(
        "{LABEL_TRACKS} tracks × 5 window specs: {pairs} (window, label) pairs match the scan, {positives} positives end TTE frames before their event"
    ))
}

fn e2e(tte: usize, min_accuracy: f64, check_chance: bool) -> Outcome {
    let pipeline = Pipeline {
        corpus: CorpusConfig {
            clips_per_class: E2E_CLIPS_PER_CLASS,
            ..CorpusConfig::default()
        },
        budget: TrainBudget {
            max_seconds: Some(E2E_TRAIN_SECS),
            target_accuracy: Some(0.95),
            ..TrainBudget::default()
        },
        ..Pipeline::default()
    };
    let t = Instant::now();
    let data = pipeline.prepare(20, tte, 2, 2024 + tte as u64).map_err(err)?;
    let corpus_secs = t.elapsed().as_secs_f64();
    let mut parts = vec![format!(
        "{} clips -> {} train / {} val windows in {corpus_secs:.0}s",
        pipeline.corpus.num_clips(),
        data.train.len(),
        data.val.len()
    )];
    let mut failures = Vec::new();
    for method in Method::ALL {
        let out = train(&pipeline.model_config(method), &data.train, &data.val, &pipeline.budget, 99).map_err(err)?;
        let acc = out.best_val_accuracy;
        parts.push(format!(
            "{method}: {:.2}% after {} epochs in {:.0}s (untrained {:.2}%)",
            100.0 * acc,
            out.log.len(),
            out.seconds,
            100.0 * out.initial_val_accuracy
        ));
        if acc < min_accuracy {
            failures.push(format!("{method} accuracy {acc:.4} < {min_accuracy}"));
        }
        if out.seconds > E2E_TRAIN_SECS + 60.0 {
            failures.push(format!("{method} took {:.0}s", out.seconds));
        }
        if check_chance && (out.initial_val_accuracy - CHANCE).abs() > CHANCE_TOL {
            failures.push(format!("{method} untrained accuracy {:.4}", out.initial_val_accuracy));
        }
    }
    let detail = parts.join("; ");
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failures.join(", ")))
    }
}

fn report_fidelity() -> Outcome {
    let pipeline = Pipeline {
        corpus: CorpusConfig {
            clips_per_class: 3,
            clip_length: 80,
            ..CorpusConfig::default()
        },
        roi_output_size: 80,
        budget: TrainBudget {
            epochs: 1,
            batch_size: 4,
            ..TrainBudget::default()
        },
        disjoint: DisjointConfig {
            conv_channels: [4, 4, 4, 4, 4],
            fc: [8, 8],
            ..DisjointConfig::default()
        },
        st: StConfig {
            stem_channels: 4,
            stage_channels: vec![4, 4, 4, 4],
            ..StConfig::default()
        },
        ..Pipeline::default()
    };
    let classification = ExperimentGrid {
        methods: Method::ALL.to_vec(),
        horizons: vec![20, 30, 40],
        ttes: vec![0],
        roi_scales: vec![1, 2, 3, 4],
        seeds: vec![0],
        pipeline: pipeline.clone(),
    };
    let prediction = ExperimentGrid {
        horizons: vec![20],
        ttes: vec![10, 20],
        ..classification.clone()
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut results = run_grid(&classification, dir.path()).map_err(err)?;
    results.extend(run_grid(&prediction, dir.path()).map_err(err)?);
    ensure(results.len() == 40, || format!("{} cells", results.len()))?;
    let written = emit_report(&results, dir.path(), ReportFormat::Csv).map_err(err)?;
    ensure(written.len() == 3, || format!("{written:?}"))?;
    let mut identity = 0;
    for r in &results {
        if let Some(m) = &r.report {
            let sum: u64 = m.confusion.iter().flatten().sum();
            let trace: u64 = (0..3).map(|i| m.confusion[i][i]).sum();
            ensure(sum == m.samples && m.accuracy == trace as f64 / sum as f64, || {
                format!("cell {}: accuracy identity broken", r.cell.key())
            })?;
            identity += 1;
        }
    }
    let read = |name: &str| -> Result<Vec<Vec<String>>, String> {
        let mut rd = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(dir.path().join(name))
            .map_err(|e| e.to_string())?;
        rd.records()
            .map(|r| r.map(|r| r.iter().map(String::from).collect()).map_err(|e| e.to_string()))
            .collect()
    };
    let two_decimals = |v: &str| v == FAILED || v.split_once('.').is_some_and(|(a, b)| !a.is_empty() && b.len() == 2);
    for (name, axis, rows, keys) in [
        ("classification.csv", "Obs. Horizon", 6, vec!["20", "30", "40"]),
        ("prediction.csv", "TTE", 4, vec!["10", "20"]),
    ] {
        let t = read(name)?;
        ensure(t[0] == ["Method", axis, "x1", "x2", "x3", "x4"], || format!("{name} header {:?}", t[0]))?;
        ensure(t.len() == rows + 1, || format!("{name}: {} data rows", t.len() - 1))?;
        for (i, row) in t[1..].iter().enumerate() {
            let method = Method::ALL[i / keys.len()].as_str();
            ensure(row[0] == method && row[1] == keys[i % keys.len()], || format!("{name} row {i}: {row:?}"))?;
            ensure(row.len() == 6 && row[2..].iter().all(|v| two_decimals(v)), || {
                format!("{name} row {i}: {row:?}")
            })?;
        }
    }
    let t1 = classification_table(&results).ok_or("no classification table")?;
    let t2 = prediction_table(&results, 20).ok_or("no prediction table")?;
    let n1: usize = t1.cells.iter().map(Vec::len).sum();
    let n2: usize = t2.cells.iter().map(Vec::len).sum();
    Ok(format!(
        "classification {}×{} ({n1} cells), prediction {}×{} ({n2} cells), 2-decimal values, trace/sum identity on {identity} evaluated cells",
        t1.rows.len(),
        t1.scales.len(),
        t2.rows.len(),
        t2.scales.len()
    ))
}

fn main() {
    let mut suite = Suite { failures: 0 };
    suite.run("gradient fidelity", gradient_fidelity);
    suite.run("gated block reduction", gate_reduction);
    suite.run("optical flow", optical_flow);
    suite.run("roi geometry", roi_geometry);
    suite.run("labeling oracle", labeling_oracle);
    suite.run("report fidelity", report_fidelity);
    suite.run("end-to-end classification (TTE 0)", || e2e(0, E2E_MIN_ACCURACY, true));
    suite.run("prediction wiring (TTE 10)", || e2e(10, PREDICTION_MIN_ACCURACY, false));
    if suite.failures > 0 {
        println!("{} acceptance criteria failed", suite.failures);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
