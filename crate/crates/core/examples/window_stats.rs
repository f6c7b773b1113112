//! Labels sliding windows over synthetic tracks and prints per-class
//! counts for each observation horizon and time to event.
//!
//! cargo run --release --example window_stats -- [clips_per_class]

use lanecast::dataset::{
    dataset_stats, enumerate_windows, synthesize_clip, ManeuverClass, SynthConfig, WindowSpec, DEFAULT_GUARD,
};

fn main() -> lanecast::Result<()> {
    let per_class: usize = std::env::args().nth(1).map_or(20, |s| s.parse().expect("clips per class"));
    let cfg = SynthConfig::default();
    let mut tracks = Vec::new();
    for i in 0..3 * per_class {
        let mut clip = synthesize_clip(ManeuverClass::ALL[i % 3], 100, i as u64, &cfg)?;
        clip.track.track_id = i as u64;
        tracks.push(clip.track);
    }
    println!("horizon  tte  NLC  LLC  RLC");
    for horizon in [20, 30, 40] {
        for tte in [0, 10, 20] {
            let windows = enumerate_windows(&tracks, WindowSpec::new(horizon, tte)?, 5, DEFAULT_GUARD)?;
            let s = dataset_stats(&tracks, &windows);
            println!(
                "{horizon:>7}  {tte:>3}  {:>3}  {:>3}  {:>3}",
                s.windows[0], s.windows[1], s.windows[2]
            );
        }
    }
    let s = dataset_stats(&tracks, &[]);
    println!("sequences per class {:?}, average frames {:?}", s.sequences, s.avg_frames);
    Ok(())
}
