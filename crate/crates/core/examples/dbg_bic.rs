use batchrl::discretize::{bic_score, kmeans_fit_with_scaler, FeatureScaler};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() {
    // One pure spherical Gaussian blob in 10-dim; parent (k=1) BIC must beat
    // a 2-way split.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gauss = Normal::new(0.0, 1.0).unwrap();
    let pts = Array2::from_shape_fn((80, 10), |_| gauss.sample(&mut rng));
    let id = FeatureScaler::identity(10);
    let parent = kmeans_fit_with_scaler(&pts.view(), 1, 1, id.clone()).unwrap();
    let child = kmeans_fit_with_scaler(&pts.view(), 2, 1, id.clone()).unwrap();
    let b1 = bic_score(&pts.view(), &parent).unwrap();
    let b2 = bic_score(&pts.view(), &child).unwrap();
    println!("pure blob: parent {b1:.2} child {b2:.2} -> split accepted: {}", b2 > b1);

    // Two separated blobs: the split must be accepted.
    let mut pts2 = Array2::zeros((160, 10));
    for r in 0..160 {
        let off = if r < 80 { 0.0 } else { 8.0 };
        for d in 0..10 {
            pts2[[r, d]] = gauss.sample(&mut rng) + if d == 0 { off } else { 0.0 };
        }
    }
    let parent = kmeans_fit_with_scaler(&pts2.view(), 1, 1, id.clone()).unwrap();
    let child = kmeans_fit_with_scaler(&pts2.view(), 2, 1, id).unwrap();
    let b1 = bic_score(&pts2.view(), &parent).unwrap();
    let b2 = bic_score(&pts2.view(), &child).unwrap();
    println!("two blobs: parent {b1:.2} child {b2:.2} -> split accepted: {}", b2 > b1);
}
