//! Shared inputs for the benchmarks.

use plrdiff_core::degrade::{wald_generate, DegradationModel};
use plrdiff_core::subspace::estimate_coefficients;
use plrdiff_core::synth::low_rank_scene;
use plrdiff_core::{BandSelection, GaussianPrior, Mat, Tensor3};

/// A square rank-3 scene with 8 bands and its observations under the
/// standard degradation.
pub struct Scene {
    pub hrms: Tensor3,
    pub lrms: Tensor3,
    pub pan: Tensor3,
    pub model: DegradationModel,
    pub selection: BandSelection,
    pub coefficients: Mat,
    pub prior: GaussianPrior,
}

pub fn scene(size: usize) -> Scene {
    let hrms = low_rank_scene(size, size, 8, 3, 0).hrms;
    let model = DegradationModel::standard(8).expect("standard model");
    let (lrms, pan) = wald_generate(&hrms, &model).expect("size is a multiple of 4");
    let selection = BandSelection::equal_interval(8, 3).expect("3 of 8 bands");
    let coefficients = estimate_coefficients(&lrms, &selection).expect("coefficients");
    let prior = GaussianPrior::constant(size, size, 3, 0.5, 0.05).expect("positive variance");
    Scene {
        hrms,
        lrms,
        pan,
        model,
        selection,
        coefficients,
        prior,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_shapes() {
        let s = scene(32);
        assert_eq!(s.lrms.shape(), (8, 8, 8));
        assert_eq!(s.pan.shape(), (32, 32, 1));
        assert_eq!(s.coefficients.rows(), 8);
        assert_eq!(s.prior.mean().shape(), (32, 32, 3));
    }
}
