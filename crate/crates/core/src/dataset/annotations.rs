//! Per-clip annotation directory:
//!
//! * `contours.csv`: `track_id,frame,xs,ys`, vertex coordinates separated by
//!   `;` (at least three, equal counts).
//! * `events.csv`: `track_id,frame,class` with class `LLC` or `RLC`.
//!   Optional; a missing file means no events.
//!
//! Tracks are returned in ascending `track_id` order, and the clip id is the
//! directory name.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use super::{ManeuverClass, VehicleTrack, DEFAULT_FRAME_RATE};
use crate::error::{Error, Result};
use crate::roi::Contour;

const CONTOURS: &str = "contours.csv";
const EVENTS: &str = "events.csv";

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?)
}

fn line_of(r: &csv::StringRecord) -> u64 {
    r.position().map_or(0, |p| p.line())
}

fn field<'a>(path: &Path, r: &'a csv::StringRecord, i: usize, name: &str) -> Result<&'a str> {
    r.get(i).filter(|s| !s.is_empty()).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: line_of(r),
        detail: format!("missing column '{name}'"),
    })
}

fn parse<T: std::str::FromStr>(path: &Path, r: &csv::StringRecord, s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: line_of(r),
        detail: format!("invalid {what} '{s}'"),
    })
}

fn coords(path: &Path, r: &csv::StringRecord, s: &str) -> Result<Vec<f64>> {
    s.split(';').map(|v| parse::<f64>(path, r, v.trim(), "coordinate")).collect()
}

pub fn load_annotations(dir: &Path) -> Result<Vec<VehicleTrack>> {
    let cpath = dir.join(CONTOURS);
    let clip_id = dir
        .file_name()
        .map_or_else(|| "clip".to_string(), |n| n.to_string_lossy().into_owned());
    let mut frames: BTreeMap<u64, Vec<Contour>> = BTreeMap::new();
    let mut rows = reader(&cpath)?;
    for rec in rows.records() {
        let r = rec?;
        let id: u64 = parse(&cpath, &r, field(&cpath, &r, 0, "track_id")?, "track_id")?;
        let frame: usize = parse(&cpath, &r, field(&cpath, &r, 1, "frame")?, "frame")?;
        let xs = coords(&cpath, &r, field(&cpath, &r, 2, "xs")?)?;
        let ys = coords(&cpath, &r, field(&cpath, &r, 3, "ys")?)?;
        if xs.len() != ys.len() {
            return Err(Error::Parse {
                path: cpath.clone(),
                line: line_of(&r),
                detail: format!("{} x coordinates but {} y coordinates", xs.len(), ys.len()),
            });
        }
        let c = Contour::new(frame, xs.into_iter().zip(ys).collect()).map_err(|e| Error::Parse {
            path: cpath.clone(),
            line: line_of(&r),
            detail: e.to_string(),
        })?;
        frames.entry(id).or_default().push(c);
    }

    let mut events: BTreeMap<u64, Vec<(usize, ManeuverClass)>> = BTreeMap::new();
    let epath = dir.join(EVENTS);
    if epath.exists() {
        let mut rows = reader(&epath)?;
        for rec in rows.records() {
            let r = rec?;
            let id: u64 = parse(&epath, &r, field(&epath, &r, 0, "track_id")?, "track_id")?;
            let frame: usize = parse(&epath, &r, field(&epath, &r, 1, "frame")?, "frame")?;
            let class: ManeuverClass = parse(&epath, &r, field(&epath, &r, 2, "class")?, "class")?;
            if !frames.contains_key(&id) {
                return Err(Error::Validation {
                    track_id: id,
                    detail: format!("event at frame {frame} for a track with no contours"),
                });
            }
            events.entry(id).or_default().push((frame, class));
        }
    }

    if frames.is_empty() {
        log::warn!("{} contains no contours", cpath.display());
    }
    frames
        .into_iter()
        .map(|(id, f)| VehicleTrack::new(id, clip_id.clone(), DEFAULT_FRAME_RATE, f, events.remove(&id).unwrap_or_default()))
        .collect()
}

/// Writes tracks in the format read by [`load_annotations`].
pub fn write_annotations(dir: &Path, tracks: &[VehicleTrack]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let join = |v: &mut dyn Iterator<Item = f64>| v.map(|x| format!("{x}")).collect::<Vec<_>>().join(";");
    let mut c = csv::Writer::from_path(dir.join(CONTOURS))?;
    c.write_record(["track_id", "frame", "xs", "ys"])?;
    for t in tracks {
        for f in &t.frames {
            let xs = join(&mut f.vertices.iter().map(|v| v.0));
            let ys = join(&mut f.vertices.iter().map(|v| v.1));
            c.write_record([t.track_id.to_string(), f.frame.to_string(), xs, ys])?;
        }
    }
    c.flush()?;
    let mut e = csv::Writer::from_path(dir.join(EVENTS))?;
    e.write_record(["track_id", "frame", "class"])?;
    for t in tracks {
        for (f, k) in &t.events {
            e.write_record([t.track_id.to_string(), f.to_string(), k.to_string()])?;
        }
    }
    e.flush()?;
    Ok(())
}
