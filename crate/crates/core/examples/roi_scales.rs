//! Crops one vehicle at ROI scales x1 to x4 from a synthetic frame.
//!
//! cargo run --example roi_scales -- [seed] [out_dir]

use std::path::PathBuf;

use lanecast::dataset::{synthesize_clip, ManeuverClass, SynthConfig};
use lanecast::imageio::write_image;
use lanecast::roi::{extract_roi, square_box, RoiSpec};

fn main() -> lanecast::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(5, |s| s.parse().expect("seed"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/roi_scales".into()));
    let clip = synthesize_clip(ManeuverClass::Rlc, 60, seed, &SynthConfig::default())?;
    let frame = clip.track.events.first().map_or(30, |e| e.0);
    let contour = clip.track.contour(frame).expect("annotated frame");
    std::fs::create_dir_all(&out)?;
    write_image(&out.join("frame.png"), &clip.frames[frame])?;
    for scale in 1..=4 {
        let b = square_box(contour, scale)?;
        let crop = extract_roi(&clip.frames[frame], contour, RoiSpec::new(scale, 112)?)?;
        println!(
            "x{scale}: centre ({:.1}, {:.1}), side {:.1} px{}",
            b.center.0,
            b.center.1,
            b.side,
            if crop.fully_outside { ", fully outside" } else { "" }
        );
        write_image(&out.join(format!("roi_x{scale}.png")), &crop.image)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
