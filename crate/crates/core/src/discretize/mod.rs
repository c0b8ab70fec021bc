//! State-space discretization by clustering.
//!
//! Continuous 10-dimensional term features are standardized (per-dimension
//! zero mean / unit variance, variance floored) and clustered; the discrete
//! state of a feature vector is the id of the cluster it falls in. Two
//! methods are supported: X-means (BIC-grown k-means, centroids define
//! assignment) and OPTICS (xi-extracted density clusters, assignment by
//! nearest labeled training point; noise becomes one extra state id so
//! downstream tabular code needs no special case).

mod kmeans;
mod optics;
mod pca;
mod scaler;
mod xmeans;

pub use optics::{optics_ordering, OpticsOrdering};
pub use pca::pca_project;
pub use scaler::FeatureScaler;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::data::StateFeatures;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    XMeans,
    Optics,
}

/// What a fitted model stores to assign ids to unseen points (everything in
/// scaled space).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AssignmentReference {
    /// Nearest centroid (X-means / k-means).
    Centroids(Array2<f64>),
    /// Nearest labeled training point (OPTICS; labels include the noise id).
    LabeledPoints { points: Array2<f64>, labels: Vec<usize> },
}

/// A fitted discretizer: scaler + assignment reference + training labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    method: ClusterMethod,
    scaler: FeatureScaler,
    assignment: AssignmentReference,
    /// Final state id of every training point (noise already mapped to its
    /// own id).
    train_labels: Vec<usize>,
    /// Number of proper clusters (excluding the OPTICS noise id).
    n_clusters: usize,
    /// The extra state id noise points map to, when the fit produced any.
    noise_state: Option<usize>,
}

impl ClusterModel {
    pub fn method(&self) -> ClusterMethod {
        self.method
    }

    /// Proper clusters found by the fit.
    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    /// Total number of discrete state ids this model can emit (clusters plus
    /// the noise id if present). Downstream tabular sizing uses this.
    pub fn n_states(&self) -> usize {
        self.n_clusters + usize::from(self.noise_state.is_some())
    }

    pub fn noise_state(&self) -> Option<usize> {
        self.noise_state
    }

    pub fn scaler(&self) -> &FeatureScaler {
        &self.scaler
    }

    pub fn train_labels(&self) -> &[usize] {
        &self.train_labels
    }

    /// Centroids in scaled space (X-means models only).
    pub fn centroids(&self) -> Option<&Array2<f64>> {
        match &self.assignment {
            AssignmentReference::Centroids(c) => Some(c),
            AssignmentReference::LabeledPoints { .. } => None,
        }
    }

    /// Discrete state id of a feature vector. Total and deterministic for
    /// finite inputs; distance ties resolve to the lowest state id.
    pub fn assign_state(&self, features: &StateFeatures) -> usize {
        self.assign_point(features.values())
    }

    /// Same as [`ClusterModel::assign_state`] for a raw slice (must match
    /// the fitted dimensionality).
    pub fn assign_point(&self, point: &[f64]) -> usize {
        let scaled = self.scaler.transform_point(point);
        match &self.assignment {
            AssignmentReference::Centroids(centroids) => {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (i, c) in centroids.outer_iter().enumerate() {
                    let d = kmeans::squared_distance(&scaled, c.as_slice().unwrap());
                    if d < best_d {
                        best = i;
                        best_d = d;
                    }
                }
                best
            }
            AssignmentReference::LabeledPoints { points, labels } => {
                let mut best_label = usize::MAX;
                let mut best_d = f64::INFINITY;
                for (i, p) in points.outer_iter().enumerate() {
                    let d = kmeans::squared_distance(&scaled, p.as_slice().unwrap());
                    if d < best_d {
                        best_d = d;
                        best_label = labels[i];
                    } else if d == best_d && labels[i] < best_label {
                        best_label = labels[i];
                    }
                }
                best_label
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = BufWriter::new(File::create(path.as_ref())?);
        serde_json::to_writer(
            w,
            &ModelFile {
                format: MODEL_FORMAT.to_string(),
                version: MODEL_VERSION,
                model: self.clone(),
            },
        )?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path.as_ref())?);
        let file: ModelFile = serde_json::from_reader(r)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported cluster model file {}/{}",
                file.format, file.version
            )));
        }
        Ok(file.model)
    }
}

const MODEL_FORMAT: &str = "cluster-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: ClusterModel,
}

fn check_points(points: &ArrayView2<f64>) -> Result<()> {
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("points must be finite".to_string()));
    }
    Ok(())
}

/// Plain k-means with a fixed k (standardizes internally).
pub fn kmeans_fit(points: &ArrayView2<f64>, k: usize, seed: u64) -> Result<ClusterModel> {
    let scaler = FeatureScaler::fit(points);
    kmeans_fit_with_scaler(points, k, seed, scaler)
}

/// k-means against a caller-supplied scaler (identity scaler = cluster raw).
pub fn kmeans_fit_with_scaler(
    points: &ArrayView2<f64>,
    k: usize,
    seed: u64,
    scaler: FeatureScaler,
) -> Result<ClusterModel> {
    check_points(points)?;
    let scaled = scaler.transform(points);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fit = kmeans::kmeans(&scaled.view(), k, &mut rng)?;
    Ok(ClusterModel {
        method: ClusterMethod::XMeans,
        scaler,
        n_clusters: fit.centroids.nrows(),
        assignment: AssignmentReference::Centroids(fit.centroids),
        train_labels: fit.labels,
        noise_state: None,
    })
}

/// X-means: grows k from 2 by locally BIC-scored splits up to `k_max`.
pub fn xmeans_fit(points: &ArrayView2<f64>, k_max: usize, seed: u64) -> Result<ClusterModel> {
    let scaler = FeatureScaler::fit(points);
    xmeans_fit_with_scaler(points, k_max, seed, scaler)
}

pub fn xmeans_fit_with_scaler(
    points: &ArrayView2<f64>,
    k_max: usize,
    seed: u64,
    scaler: FeatureScaler,
) -> Result<ClusterModel> {
    check_points(points)?;
    let scaled = scaler.transform(points);
    let fit = xmeans::xmeans(&scaled.view(), k_max, seed)?;
    Ok(ClusterModel {
        method: ClusterMethod::XMeans,
        scaler,
        n_clusters: fit.centroids.nrows(),
        assignment: AssignmentReference::Centroids(fit.centroids),
        train_labels: fit.labels,
        noise_state: None,
    })
}

/// BIC of a fitted centroid model on (possibly new) points, in the model's
/// scaled space. Higher is better.
pub fn bic_score(points: &ArrayView2<f64>, model: &ClusterModel) -> Result<f64> {
    let centroids = model.centroids().ok_or_else(|| {
        Error::Config("bic_score requires a centroid-based model".to_string())
    })?;
    check_points(points)?;
    let scaled = model.scaler.transform(points);
    let labels: Vec<usize> = scaled
        .outer_iter()
        .map(|row| kmeans::nearest_centroid(row.as_slice().unwrap(), &centroids.view()).0)
        .collect();
    Ok(kmeans::bic_from_assignments(
        &scaled.view(),
        &centroids.view(),
        &labels,
    ))
}

/// OPTICS fit: reachability ordering (infinite epsilon) plus xi-steepness
/// cluster extraction. Points in no cluster get the noise state id (one past
/// the last cluster id, present only when noise occurred).
pub fn optics_fit(
    points: &ArrayView2<f64>,
    min_pts: usize,
    xi: f64,
) -> Result<(OpticsOrdering, ClusterModel)> {
    let scaler = FeatureScaler::fit(points);
    optics_fit_with_scaler(points, min_pts, xi, scaler)
}

pub fn optics_fit_with_scaler(
    points: &ArrayView2<f64>,
    min_pts: usize,
    xi: f64,
    scaler: FeatureScaler,
) -> Result<(OpticsOrdering, ClusterModel)> {
    check_points(points)?;
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::Config(format!("xi must lie in (0, 1), got {xi}")));
    }
    let scaled = scaler.transform(points);
    let ordering = optics::optics_ordering(&scaled.view(), min_pts)?;
    let (labels, n_clusters) = optics::extract_xi_labels(&ordering, xi, min_pts);
    let has_noise = labels.iter().any(Option::is_none);
    let noise_state = has_noise.then_some(n_clusters);
    let train_labels: Vec<usize> = labels
        .iter()
        .map(|l| l.unwrap_or(n_clusters))
        .collect();
    let model = ClusterModel {
        method: ClusterMethod::Optics,
        scaler,
        assignment: AssignmentReference::LabeledPoints {
            points: scaled,
            labels: train_labels.clone(),
        },
        train_labels,
        n_clusters,
        noise_state,
    };
    Ok((ordering, model))
}
