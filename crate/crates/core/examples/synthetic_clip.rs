//! Renders one synthetic lane-change clip, writes its frames, annotations and
//! the x2 regions of interest around the event to an output directory.
//!
//! cargo run --example synthetic_clip -- [LLC|RLC|NLC] [seed] [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use lanecast::dataset::{synthesize_clip, write_clip, ManeuverClass, SynthConfig};
use lanecast::imageio::write_image;
use lanecast::roi::{extract_roi, RoiSpec};

fn main() -> lanecast::Result<()> {
    let mut args = std::env::args().skip(1);
    let scenario: ManeuverClass = args.next().as_deref().unwrap_or("LLC").parse()?;
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse()).expect("seed must be an integer");
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/synthetic_clip".into()));

    let t = Instant::now();
    let clip = synthesize_clip(scenario, 100, seed, &SynthConfig::default())?;
    println!("rendered {} frames in {:.2?}", clip.frames.len(), t.elapsed());
    write_clip(&out, &clip)?;

    let centre = clip.track.events.first().map_or(50, |e| e.0);
    let rois = out.join("roi");
    std::fs::create_dir_all(&rois)?;
    for f in centre.saturating_sub(10)..(centre + 5).min(clip.frames.len()) {
        let c = clip.track.contour(f).expect("every frame annotated");
        let crop = extract_roi(&clip.frames[f], c, RoiSpec::new(2, 112)?)?;
        write_image(&rois.join(format!("roi_{f:05}.png")), &crop.image)?;
    }
    match clip.track.events.first() {
        Some((e, c)) => println!("{c} event at frame {e}, marking x = {:.1}", clip.marking_x.unwrap_or(f64::NAN)),
        None => println!("no lane change"),
    }
    println!("wrote {}", out.display());
    Ok(())
}
