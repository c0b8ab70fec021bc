//! Line-delimited dataset serialization.
//!
//! First line is a JSON header carrying the format version and state
//! representation; every following line is one trajectory. Values round-trip
//! exactly (shortest-representation floats).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, StateFeatures, Trajectory};
use crate::error::{Error, Result};

pub const DATASET_FORMAT: &str = "trajectory-dataset";
pub const DATASET_VERSION: u32 = 1;

/// State representations a dataset file can carry.
pub trait StateRepr: PartialEq + Clone + Serialize + DeserializeOwned {
    const KIND: &'static str;
}

impl StateRepr for StateFeatures {
    const KIND: &'static str = "features";
}

impl StateRepr for usize {
    const KIND: &'static str = "discrete";
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    state: String,
}

pub fn save_jsonl<S: StateRepr>(dataset: &Dataset<S>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    let header = Header {
        format: DATASET_FORMAT.to_string(),
        version: DATASET_VERSION,
        state: S::KIND.to_string(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for traj in dataset.trajectories() {
        serde_json::to_writer(&mut w, traj)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_jsonl<S: StateRepr>(path: impl AsRef<Path>) -> Result<Dataset<S>> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Format("empty dataset file".to_string()))??;
    let header: Header = serde_json::from_str(&header_line)?;
    if header.format != DATASET_FORMAT {
        return Err(Error::Format(format!(
            "unexpected format tag `{}`",
            header.format
        )));
    }
    if header.version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset version {}",
            header.version
        )));
    }
    if header.state != S::KIND {
        return Err(Error::Format(format!(
            "dataset carries `{}` states, expected `{}`",
            header.state,
            S::KIND
        )));
    }
    let mut trajectories: Vec<Trajectory<S>> = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        trajectories.push(serde_json::from_str(&line)?);
    }
    Dataset::new(trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ActionId, Transition};

    #[test]
    fn round_trip_is_exact() {
        let mk = |s0: f64| {
            let f = |x: f64| StateFeatures::new([x, 1.0, 2.0, 3.5, 0.25, 4.0, 0.0, 1.0, 0.5, 2.0]).unwrap();
            Trajectory::new(vec![
                Transition::new(f(s0), ActionId(3), f(s0 + 0.1), false, false),
                Transition::new(f(s0 + 0.1), ActionId(7), f(s0 + 0.1), true, true),
            ])
            .unwrap()
        };
        let ds = Dataset::new(vec![mk(0.123456789012345), mk(std::f64::consts::PI)]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_jsonl(&ds, f.path()).unwrap();
        let back: Dataset<StateFeatures> = load_jsonl(f.path()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let t = Trajectory::new(vec![Transition::new(0usize, ActionId(0), 0, true, false)]).unwrap();
        let ds = Dataset::new(vec![t]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_jsonl(&ds, f.path()).unwrap();
        assert!(load_jsonl::<StateFeatures>(f.path()).is_err());
    }

    #[test]
    fn invalid_trajectory_line_is_rejected() {
        // A trajectory violating the sparse reward rule must not deserialize.
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(
            f.path(),
            format!(
                "{}\n{}\n",
                r#"{"format":"trajectory-dataset","version":1,"state":"discrete"}"#,
                r#"{"transitions":[{"state":0,"action":0,"reward":1.0,"next_state":0,"terminal":false,"success":false}]}"#
            ),
        )
        .unwrap();
        assert!(load_jsonl::<usize>(f.path()).is_err());
    }
}
