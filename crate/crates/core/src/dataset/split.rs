use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ManeuverClass;
use crate::error::{Error, Result};

/// Anything carrying a source track and a class label.
pub trait Labeled {
    fn track_id(&self) -> u64;
    fn label(&self) -> ManeuverClass;
}

/// Per-track stratum: the first non-NLC label among the track's samples,
/// else NLC.
pub fn track_class<T: Labeled>(samples: &[T]) -> BTreeMap<u64, ManeuverClass> {
    let mut m = BTreeMap::new();
    for s in samples {
        let e = m.entry(s.track_id()).or_insert(ManeuverClass::Nlc);
        if *e == ManeuverClass::Nlc {
            *e = s.label();
        }
    }
    m
}

/// Splits by source track, stratified by track class: within each class,
/// tracks are shuffled with `seed` and the first `round(fraction · n)` go to
/// training. No track appears on both sides. Input order is preserved on
/// each side.
pub fn split_train_val<T: Labeled>(samples: Vec<T>, fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if samples.is_empty() {
        return Err(Error::Contract("cannot split an empty sample list".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("train fraction must lie in (0, 1), got {fraction}")));
    }
    let classes = track_class(&samples);
    if classes.len() == 1 {
        log::warn!("single source track: all samples go to training, validation is empty");
        return Ok((samples, Vec::new()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_tracks = std::collections::HashSet::new();
    for c in ManeuverClass::ALL {
        let mut ids: Vec<u64> = classes.iter().filter(|(_, &k)| k == c).map(|(&id, _)| id).collect();
        ids.shuffle(&mut rng);
        let n_train = (fraction * ids.len() as f64).round() as usize;
        train_tracks.extend(ids.into_iter().take(n_train));
    }
    Ok(samples.into_iter().partition(|s| train_tracks.contains(&s.track_id())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    struct S(u64, ManeuverClass);

    impl Labeled for S {
        fn track_id(&self) -> u64 {
            self.0
        }
        fn label(&self) -> ManeuverClass {
            self.1
        }
    }

    fn corpus() -> Vec<S> {
        (0..1000)
            .map(|i| {
                let t = i / 10;
                let c = if i % 10 == 0 { ManeuverClass::ALL[t as usize % 3] } else { ManeuverClass::Nlc };
                S(t, c)
            })
            .collect()
    }

    #[test]
    fn track_level_split_near_target() {
        let (tr, va) = split_train_val(corpus(), 0.85, 3).unwrap();
        assert!((840..=860).contains(&tr.len()), "train {}", tr.len());
        let tt: std::collections::HashSet<_> = tr.iter().map(|s| s.0).collect();
        assert!(va.iter().all(|s| !tt.contains(&s.0)));
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(split_train_val(corpus(), 0.85, 9).unwrap(), split_train_val(corpus(), 0.85, 9).unwrap());
    }

    #[test]
    fn single_track_goes_to_train() {
        let (tr, va) = split_train_val(vec![S(4, ManeuverClass::Nlc); 5], 0.85, 0).unwrap();
        assert_eq!((tr.len(), va.len()), (5, 0));
        assert!(split_train_val(Vec::<S>::new(), 0.85, 0).is_err());
    }
}
