use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::finetune::BehaviorClass;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventSource {
    #[default]
    Playbyplay,
    Annotation,
}

/// A behavior observed at one sensor during one minute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorEvent {
    pub minute_index: u32,
    pub sensor_id: String,
    pub behavior: BehaviorClass,
    #[serde(default)]
    pub source: EventSource,
}

/// The most intense behavior reported by any sensor in `minute`, or
/// `Quiet` when nothing was reported.
pub fn priority_label(events: &[BehaviorEvent], minute: u32) -> BehaviorClass {
    events
        .iter()
        .filter(|e| e.minute_index == minute)
        .map(|e| e.behavior)
        .min()
        .unwrap_or(BehaviorClass::Quiet)
}

/// Labels every minute in `0..n_minutes`.
pub fn label_minutes(events: &[BehaviorEvent], n_minutes: u32) -> Vec<BehaviorClass> {
    let mut out = vec![BehaviorClass::Quiet; n_minutes as usize];
    for e in events {
        if let Some(slot) = out.get_mut(e.minute_index as usize) {
            *slot = (*slot).min(e.behavior);
        }
    }
    out
}

/// Reads `minute_index,sensor_id,behavior[,source]` rows with a header.
pub fn read_events_csv(path: &Path) -> Result<Vec<BehaviorEvent>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(file);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use BehaviorClass::*;

    fn ev(minute: u32, sensor: &str, b: BehaviorClass) -> BehaviorEvent {
        BehaviorEvent {
            minute_index: minute,
            sensor_id: sensor.into(),
            behavior: b,
            source: EventSource::Playbyplay,
        }
    }

    #[test]
    fn documented_cases() {
        assert_eq!(priority_label(&[ev(0, "s1", Cheering), ev(0, "s1", Clapping)], 0), Cheering);
        assert_eq!(priority_label(&[], 3), Quiet);
        let evs = [ev(5, "sensor1", Moving), ev(5, "sensor4", Booing), ev(5, "sensor2", Quiet)];
        assert_eq!(priority_label(&evs, 5), Booing);
        // Other minutes do not leak in.
        assert_eq!(priority_label(&evs, 4), Quiet);
        assert_eq!(label_minutes(&evs, 7)[5], Booing);
        assert_eq!(label_minutes(&evs, 7)[0], Quiet);
    }

    #[test]
    fn events_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        std::fs::write(
            &p,
            "minute_index,sensor_id,behavior\n0,s1,clapping\n0, s2 ,cheering\n1,s1,stomping\n",
        )
        .unwrap();
        let evs = read_events_csv(&p).unwrap();
        assert_eq!(evs.len(), 3);
        assert_eq!(evs[1].sensor_id, "s2");
        assert_eq!(priority_label(&evs, 0), Cheering);
        std::fs::write(&p, "minute_index,sensor_id,behavior\n0,s1,roaring\n").unwrap();
        assert!(read_events_csv(&p).is_err());
    }

    fn class() -> impl Strategy<Value = BehaviorClass> {
        (0usize..7).prop_map(|r| BehaviorClass::ALL[r])
    }

    proptest! {
        #[test]
        fn order_independent_idempotent_monotone(
            mut classes in proptest::collection::vec(class(), 0..12),
            extra in class(),
        ) {
            let evs: Vec<_> = classes.iter().enumerate().map(|(i, &c)| ev(2, &format!("s{i}"), c)).collect();
            let base = priority_label(&evs, 2);
            let mut rev = evs.clone();
            rev.reverse();
            prop_assert_eq!(priority_label(&rev, 2), base);
            let doubled: Vec<_> = evs.iter().chain(evs.iter()).cloned().collect();
            prop_assert_eq!(priority_label(&doubled, 2), base);
            let mut more = evs.clone();
            more.push(ev(2, "new", extra));
            prop_assert!(priority_label(&more, 2) <= base);
            classes.sort();
            prop_assert_eq!(base, classes.first().copied().unwrap_or(Quiet));
        }
    }
}
