//! Per-term aggregation of course rows into a state feature vector.

use crate::data::{StateFeatures, STATE_FEATURE_DIM};
use crate::error::{Error, Result};

/// One course taken in a term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CourseRecord {
    pub grade: f64,
    pub hours: f64,
    pub absences: f64,
}

/// Program-level constants repeated on every term of a student.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgramInfo {
    pub total_hours: f64,
    pub suggested_terms: f64,
    pub max_terms: f64,
}

/// Population standard deviation (divide by n); a single observation has
/// std 0 by convention.
fn mean_and_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Collapse the courses of one term into the 10-component state vector:
/// program constants, grade mean/std, course-hours mean/std, absence
/// mean/std, completed-course count.
pub fn aggregate_term(courses: &[CourseRecord], program: &ProgramInfo) -> Result<StateFeatures> {
    if courses.is_empty() {
        return Err(Error::EmptyTerm);
    }
    let (grade_mean, grade_std) = mean_and_std(courses.iter().map(|c| c.grade));
    let (hours_mean, hours_std) = mean_and_std(courses.iter().map(|c| c.hours));
    let (abs_mean, abs_std) = mean_and_std(courses.iter().map(|c| c.absences));
    let values: [f64; STATE_FEATURE_DIM] = [
        program.total_hours,
        program.suggested_terms,
        program.max_terms,
        grade_mean,
        grade_std,
        hours_mean,
        hours_std,
        abs_mean,
        abs_std,
        courses.len() as f64,
    ];
    StateFeatures::new(values)
}
