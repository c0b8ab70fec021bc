//! CSV ingestion.
//!
//! The canonical interchange format is a UTF-8 CSV with a header row, one
//! row per term (or per course, or per discrete step — declared by the
//! schema). Rewards never appear in the file; they are derived from the
//! terminal and success flags by the sparse reward rule.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{
    aggregate_term, ActionId, CourseRecord, Dataset, DiscreteDataset, FeatureDataset, ProgramInfo,
    StateFeatures, Trajectory, Transition, STATE_FEATURE_DIM,
};
use crate::error::{Error, Result};

/// Which columns carry the state, and at what row granularity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateColumns {
    /// One row per term; exactly 10 feature columns.
    Features(Vec<String>),
    /// One row per course; features are aggregated per (episode, step).
    Courses {
        grade: String,
        hours: String,
        absences: String,
        program_hours: String,
        suggested_terms: String,
        max_terms: String,
    },
    /// One row per step with a discrete state-id column.
    Discrete(String),
}

/// Column mapping for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub episode: String,
    pub step: String,
    pub action: String,
    pub terminal: String,
    pub success: String,
    pub state: StateColumns,
}

/// Default feature column names, in Table order.
pub const DEFAULT_FEATURE_COLUMNS: [&str; STATE_FEATURE_DIM] = [
    "program_hours",
    "suggested_terms",
    "max_terms",
    "grade_mean",
    "grade_std",
    "hours_mean",
    "hours_std",
    "absence_mean",
    "absence_std",
    "completed_courses",
];

impl CsvSchema {
    fn base(state: StateColumns) -> Self {
        CsvSchema {
            episode: "episode".to_string(),
            step: "step".to_string(),
            action: "action".to_string(),
            terminal: "terminal".to_string(),
            success: "success".to_string(),
            state,
        }
    }

    /// Per-term rows with the default feature column names.
    pub fn term_default() -> Self {
        Self::base(StateColumns::Features(
            DEFAULT_FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        ))
    }

    /// Per-course rows with the default column names.
    pub fn course_default() -> Self {
        Self::base(StateColumns::Courses {
            grade: "grade".to_string(),
            hours: "hours".to_string(),
            absences: "absences".to_string(),
            program_hours: "program_hours".to_string(),
            suggested_terms: "suggested_terms".to_string(),
            max_terms: "max_terms".to_string(),
        })
    }

    /// Discrete rows with a `state` column.
    pub fn discrete_default() -> Self {
        Self::base(StateColumns::Discrete("state".to_string()))
    }
}

/// A loaded dataset in whichever state representation the schema declared.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedDataset {
    Features(FeatureDataset),
    Discrete(DiscreteDataset),
}

impl LoadedDataset {
    pub fn expect_features(self) -> Result<FeatureDataset> {
        match self {
            LoadedDataset::Features(d) => Ok(d),
            LoadedDataset::Discrete(_) => Err(Error::Format(
                "expected a feature-state dataset, got a discrete one".to_string(),
            )),
        }
    }

    pub fn expect_discrete(self) -> Result<DiscreteDataset> {
        match self {
            LoadedDataset::Discrete(d) => Ok(d),
            LoadedDataset::Features(_) => Err(Error::Format(
                "expected a discrete-state dataset, got a feature one".to_string(),
            )),
        }
    }
}

struct ColumnIndex {
    map: HashMap<String, usize>,
}

impl ColumnIndex {
    fn new(headers: &csv::StringRecord) -> Self {
        let map = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        ColumnIndex { map }
    }

    fn get(&self, name: &str) -> Result<usize> {
        self.map
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }
}

fn field<'a>(record: &'a csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<&'a str> {
    record.get(idx).ok_or_else(|| Error::Parse {
        row,
        reason: format!("row too short, missing field `{name}`"),
    })
}

fn parse_f64(s: &str, row: usize, name: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        row,
        reason: format!("cannot parse `{s}` in column `{name}` as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            reason: format!("non-finite value in column `{name}`"),
        });
    }
    Ok(v)
}

fn parse_usize(s: &str, row: usize, name: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Parse {
        row,
        reason: format!("cannot parse `{s}` in column `{name}` as a nonnegative integer"),
    })
}

fn parse_bool(s: &str, row: usize, name: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::Parse {
            row,
            reason: format!("cannot parse `{s}` in column `{name}` as a boolean"),
        }),
    }
}

/// One parsed step (after per-course aggregation, if any).
struct StepRow<S> {
    step: i64,
    state: S,
    action: ActionId,
    terminal: bool,
    success: bool,
}

/// Load logged episodes from a CSV file.
///
/// Rows are grouped by episode id and ordered by step index; step indices of
/// an episode must be contiguous, exactly the last step must be terminal,
/// and rewards follow the sparse rule.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LoadedDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| map_csv_error(e, 0))?;
    let headers = reader.headers().map_err(|e| map_csv_error(e, 0))?.clone();
    let cols = ColumnIndex::new(&headers);

    let episode_c = cols.get(&schema.episode)?;
    let step_c = cols.get(&schema.step)?;
    let action_c = cols.get(&schema.action)?;
    let terminal_c = cols.get(&schema.terminal)?;
    let success_c = cols.get(&schema.success)?;

    enum StateCols {
        Features(Vec<usize>),
        Courses([usize; 6]),
        Discrete(usize),
    }
    let state_cols = match &schema.state {
        StateColumns::Features(names) => {
            if names.len() != STATE_FEATURE_DIM {
                return Err(Error::Config(format!(
                    "schema must declare exactly {STATE_FEATURE_DIM} feature columns, got {}",
                    names.len()
                )));
            }
            StateCols::Features(names.iter().map(|n| cols.get(n)).collect::<Result<_>>()?)
        }
        StateColumns::Courses {
            grade,
            hours,
            absences,
            program_hours,
            suggested_terms,
            max_terms,
        } => StateCols::Courses([
            cols.get(grade)?,
            cols.get(hours)?,
            cols.get(absences)?,
            cols.get(program_hours)?,
            cols.get(suggested_terms)?,
            cols.get(max_terms)?,
        ]),
        StateColumns::Discrete(name) => StateCols::Discrete(cols.get(name)?),
    };

    // Raw per-row parse, keeping episode order of first appearance.
    struct RawRow {
        row: usize,
        step: i64,
        action: ActionId,
        terminal: bool,
        success: bool,
        features: Option<[f64; STATE_FEATURE_DIM]>,
        course: Option<(CourseRecord, ProgramInfo)>,
        discrete: Option<usize>,
    }
    let mut episodes: Vec<(String, Vec<RawRow>)> = Vec::new();
    let mut episode_index: HashMap<String, usize> = HashMap::new();

    for (i, record) in reader.records().enumerate() {
        let row = i + 1; // 1-based data row number
        let record = record.map_err(|e| map_csv_error(e, row))?;
        let episode = field(&record, episode_c, row, &schema.episode)?.to_string();
        let step = field(&record, step_c, row, &schema.step)?
            .parse::<i64>()
            .map_err(|_| Error::Parse {
                row,
                reason: "cannot parse step index".to_string(),
            })?;
        let action = ActionId(parse_usize(
            field(&record, action_c, row, &schema.action)?,
            row,
            &schema.action,
        )?);
        let terminal = parse_bool(
            field(&record, terminal_c, row, &schema.terminal)?,
            row,
            &schema.terminal,
        )?;
        // The success flag is only meaningful on the terminal row.
        let success = terminal
            && parse_bool(
                field(&record, success_c, row, &schema.success)?,
                row,
                &schema.success,
            )?;

        let mut raw = RawRow {
            row,
            step,
            action,
            terminal,
            success,
            features: None,
            course: None,
            discrete: None,
        };
        match &state_cols {
            StateCols::Features(idxs) => {
                let mut values = [0.0; STATE_FEATURE_DIM];
                for (j, &c) in idxs.iter().enumerate() {
                    values[j] = parse_f64(field(&record, c, row, "feature")?, row, "feature")?;
                }
                raw.features = Some(values);
            }
            StateCols::Courses(idxs) => {
                let v: Vec<f64> = idxs
                    .iter()
                    .map(|&c| parse_f64(field(&record, c, row, "course")?, row, "course"))
                    .collect::<Result<_>>()?;
                raw.course = Some((
                    CourseRecord {
                        grade: v[0],
                        hours: v[1],
                        absences: v[2],
                    },
                    ProgramInfo {
                        total_hours: v[3],
                        suggested_terms: v[4],
                        max_terms: v[5],
                    },
                ));
            }
            StateCols::Discrete(c) => {
                raw.discrete = Some(parse_usize(
                    field(&record, *c, row, "state")?,
                    row,
                    "state",
                )?);
            }
        }
        let slot = *episode_index.entry(episode.clone()).or_insert_with(|| {
            episodes.push((episode, Vec::new()));
            episodes.len() - 1
        });
        episodes[slot].1.push(raw);
    }

    if episodes.is_empty() {
        return Err(Error::InsufficientData("CSV contains no data rows".to_string()));
    }

    let malformed = |episode: &str, reason: String| Error::MalformedEpisode {
        episode: episode.to_string(),
        reason,
    };

    // Collapse rows into per-step entries (aggregating course rows), then
    // validate step contiguity and terminal placement.
    let is_course = matches!(state_cols, StateCols::Courses(_));
    let is_discrete = matches!(state_cols, StateCols::Discrete(_));

    let mut feature_trajs: Vec<Trajectory<StateFeatures>> = Vec::new();
    let mut discrete_trajs: Vec<Trajectory<usize>> = Vec::new();

    for (episode, mut rows) in episodes {
        rows.sort_by_key(|r| (r.step, r.row));

        let steps: Vec<StepRow<StateOrId>> = if is_course {
            let mut grouped: Vec<StepRow<StateOrId>> = Vec::new();
            let mut i = 0;
            while i < rows.len() {
                let mut j = i;
                let mut courses = Vec::new();
                while j < rows.len() && rows[j].step == rows[i].step {
                    let (course, program) = rows[j].course.unwrap();
                    if rows[j].action != rows[i].action
                        || rows[j].terminal != rows[i].terminal
                        || rows[j].success != rows[i].success
                        || program != rows[i].course.unwrap().1
                    {
                        return Err(malformed(
                            &episode,
                            format!(
                                "course rows of step {} disagree on shared columns",
                                rows[i].step
                            ),
                        ));
                    }
                    courses.push(course);
                    j += 1;
                }
                let program = rows[i].course.unwrap().1;
                let features = aggregate_term(&courses, &program)?;
                grouped.push(StepRow {
                    step: rows[i].step,
                    state: StateOrId::Features(features),
                    action: rows[i].action,
                    terminal: rows[i].terminal,
                    success: rows[i].success,
                });
                i = j;
            }
            grouped
        } else {
            let mut out = Vec::with_capacity(rows.len());
            for r in rows {
                let state = if is_discrete {
                    StateOrId::Id(r.discrete.unwrap())
                } else {
                    StateOrId::Features(StateFeatures::new(r.features.unwrap()).map_err(|e| {
                        Error::Parse {
                            row: r.row,
                            reason: e.to_string(),
                        }
                    })?)
                };
                out.push(StepRow {
                    step: r.step,
                    state,
                    action: r.action,
                    terminal: r.terminal,
                    success: r.success,
                });
            }
            out
        };

        // Step indices must be contiguous and unique; duplicated ids (two
        // episodes sharing one id) surface here as repeated step indices.
        for w in steps.windows(2) {
            if w[1].step == w[0].step {
                return Err(malformed(
                    &episode,
                    format!("duplicate step index {}", w[0].step),
                ));
            }
            if w[1].step != w[0].step + 1 {
                return Err(malformed(
                    &episode,
                    format!("non-contiguous step indices {} -> {}", w[0].step, w[1].step),
                ));
            }
        }
        let last = steps.len() - 1;
        for (t, s) in steps.iter().enumerate() {
            if s.terminal != (t == last) {
                return Err(malformed(
                    &episode,
                    if s.terminal {
                        format!("terminal flag set before the last step (step {})", s.step)
                    } else {
                        "last step is not flagged terminal".to_string()
                    },
                ));
            }
        }

        // The terminal transition has no observed successor; its next_state
        // repeats its own state and is routed to the absorbing terminal by
        // downstream model fitting.
        macro_rules! build {
            ($extract:expr, $sink:expr) => {{
                let transitions: Vec<_> = steps
                    .iter()
                    .enumerate()
                    .map(|(t, s)| {
                        let next = if t == last { $extract(&steps[t]) } else { $extract(&steps[t + 1]) };
                        Transition::new($extract(s), s.action, next, s.terminal, s.success)
                    })
                    .collect();
                $sink.push(
                    Trajectory::new(transitions)
                        .map_err(|e| malformed(&episode, e.to_string()))?,
                );
            }};
        }
        if is_discrete {
            build!(|s: &StepRow<StateOrId>| s.state.id(), discrete_trajs);
        } else {
            build!(|s: &StepRow<StateOrId>| s.state.features(), feature_trajs);
        }
    }

    if is_discrete {
        Ok(LoadedDataset::Discrete(Dataset::new(discrete_trajs)?))
    } else {
        Ok(LoadedDataset::Features(Dataset::new(feature_trajs)?))
    }
}

#[derive(Clone, Copy)]
enum StateOrId {
    Features(StateFeatures),
    Id(usize),
}

impl StateOrId {
    fn features(&self) -> StateFeatures {
        match self {
            StateOrId::Features(f) => *f,
            StateOrId::Id(_) => unreachable!("feature access on discrete row"),
        }
    }
    fn id(&self) -> usize {
        match self {
            StateOrId::Id(i) => *i,
            StateOrId::Features(_) => unreachable!("id access on feature row"),
        }
    }
}

fn map_csv_error(e: csv::Error, row: usize) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                Error::Io(io)
            } else {
                unreachable!()
            }
        }
        _ => Error::Parse {
            row,
            reason: e.to_string(),
        },
    }
}

/// Write a feature dataset as a per-term CSV under the given schema (feature
/// schemas only). Used for emitting synthetic datasets in the interchange
/// format.
pub fn save_term_csv(
    dataset: &FeatureDataset,
    path: impl AsRef<Path>,
    schema: &CsvSchema,
) -> Result<()> {
    let feature_names = match &schema.state {
        StateColumns::Features(names) => names.clone(),
        _ => {
            return Err(Error::Config(
                "save_term_csv requires a per-term feature schema".to_string(),
            ))
        }
    };
    let mut writer = csv::Writer::from_path(path.as_ref()).map_err(|e| map_csv_error(e, 0))?;
    let mut header = vec![
        schema.episode.clone(),
        schema.step.clone(),
        schema.action.clone(),
        schema.terminal.clone(),
        schema.success.clone(),
    ];
    header.extend(feature_names);
    writer.write_record(&header).map_err(|e| map_csv_error(e, 0))?;
    for (i, traj) in dataset.trajectories().iter().enumerate() {
        for (t, tr) in traj.transitions().iter().enumerate() {
            let mut record = vec![
                format!("e{i}"),
                t.to_string(),
                tr.action.index().to_string(),
                tr.terminal.to_string(),
                tr.success.to_string(),
            ];
            record.extend(tr.state.values().iter().map(|v| format!("{v}")));
            writer.write_record(&record).map_err(|e| map_csv_error(e, 0))?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const DISCRETE_HEADER: &str = "episode,step,action,terminal,success,state\n";

    #[test]
    fn loads_single_episode_with_sparse_rewards() {
        let f = write_tmp(&format!(
            "{DISCRETE_HEADER}e1,0,1,false,false,3\ne1,1,0,false,false,4\ne1,2,2,true,true,5\n"
        ));
        let ds = load_csv(f.path(), &CsvSchema::discrete_default())
            .unwrap()
            .expect_discrete()
            .unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.m(), 3);
        let rewards: Vec<f64> = ds.trajectories()[0]
            .transitions()
            .iter()
            .map(|t| t.reward)
            .collect();
        assert_eq!(rewards, vec![0.0, 0.0, 1.0]);
        // Chain: next states follow the next row's state.
        assert_eq!(ds.trajectories()[0].transitions()[0].next_state, 4);
    }

    #[test]
    fn missing_column_is_named() {
        let f = write_tmp("episode,step,action,terminal,state\ne1,0,0,true,2\n");
        match load_csv(f.path(), &CsvSchema::discrete_default()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "success"),
            other => panic!("expected missing column error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_episode_id_is_malformed() {
        // Two episodes sharing "e1": the repeated step indices give it away.
        let f = write_tmp(&format!(
            "{DISCRETE_HEADER}e1,0,0,false,false,1\ne1,1,0,true,true,2\ne1,0,0,false,false,3\ne1,1,0,true,false,4\n"
        ));
        match load_csv(f.path(), &CsvSchema::discrete_default()) {
            Err(Error::MalformedEpisode { episode, .. }) => assert_eq!(episode, "e1"),
            other => panic!("expected malformed episode, got {other:?}"),
        }
    }

    #[test]
    fn non_contiguous_steps_cite_episode() {
        let f = write_tmp(&format!(
            "{DISCRETE_HEADER}e9,0,0,false,false,1\ne9,2,0,true,false,2\n"
        ));
        match load_csv(f.path(), &CsvSchema::discrete_default()) {
            Err(Error::MalformedEpisode { episode, reason }) => {
                assert_eq!(episode, "e9");
                assert!(reason.contains("non-contiguous"));
            }
            other => panic!("expected malformed episode, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_feature_cites_row() {
        let mut header = String::from("episode,step,action,terminal,success");
        for c in DEFAULT_FEATURE_COLUMNS {
            header.push(',');
            header.push_str(c);
        }
        let f = write_tmp(&format!(
            "{header}\ne1,0,0,false,false,1,2,3,4,5,6,7,8,9,10\ne1,1,0,true,true,1,2,NaN,4,5,6,7,8,9,10\n"
        ));
        match load_csv(f.path(), &CsvSchema::term_default()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected parse error with row, got {other:?}"),
        }
    }

    #[test]
    fn course_rows_are_aggregated() {
        let header = "episode,step,action,terminal,success,grade,hours,absences,program_hours,suggested_terms,max_terms\n";
        let f = write_tmp(&format!(
            "{header}e1,0,3,false,false,6,30,0,3000,8,14\ne1,0,3,false,false,10,60,4,3000,8,14\ne1,1,2,true,true,7,45,1,3000,8,14\n"
        ));
        let ds = load_csv(f.path(), &CsvSchema::course_default())
            .unwrap()
            .expect_features()
            .unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.m(), 2);
        let first = &ds.trajectories()[0].transitions()[0];
        let v = first.state.values();
        assert!((v[3] - 8.0).abs() < 1e-12);
        assert!((v[4] - 2.0).abs() < 1e-12);
        assert_eq!(v[9], 2.0);
        assert_eq!(first.action.index(), 3);
    }

    #[test]
    fn term_csv_round_trips_through_writer() {
        let schema = CsvSchema::term_default();
        let mut rows = String::new();
        rows.push_str("e1,0,1,false,false,3000,8,14,7.5,1.5,45,15,2,1,4\n");
        rows.push_str("e1,1,6,true,true,3000,8,14,8.5,0.5,60,0,1,0,3\n");
        let mut header = String::from("episode,step,action,terminal,success");
        for c in DEFAULT_FEATURE_COLUMNS {
            header.push(',');
            header.push_str(c);
        }
        let f = write_tmp(&format!("{header}\n{rows}"));
        let ds = load_csv(f.path(), &schema).unwrap().expect_features().unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_term_csv(&ds, out.path(), &schema).unwrap();
        let ds2 = load_csv(out.path(), &schema).unwrap().expect_features().unwrap();
        assert_eq!(ds, ds2);
    }
}
