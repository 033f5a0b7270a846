mod common;

use common::{keyframe_adjoint_gap, random_coords, sparse_adjoint_gap};
use nvp::diff_core::Rng;
use nvp::latent_grids::{AxisPair, KeyframeGrid, SparseGrid3D};

#[test]
fn keyframe_scatter_is_adjoint_of_lookup() {
    let mut rng = Rng::new(21);
    for trial in 0..50 {
        let mut g = KeyframeGrid::new(
            AxisPair::ALL[trial % 3],
            1 + rng.below(4),
            1.35,
            (2 + rng.below(6), 2 + rng.below(6)),
            1 + rng.below(4),
        )
        .unwrap();
        let (a, b) = (rng.unit(), rng.unit());
        assert!(keyframe_adjoint_gap(&mut g, a, b, &mut rng) < 1e-10);
        // Exact grid edges are part of the domain.
        assert!(keyframe_adjoint_gap(&mut g, 1.0, 0.0, &mut rng) < 1e-10);
    }
}

#[test]
fn sparse_scatter_is_adjoint_of_lookup_in_both_modes() {
    let mut rng = Rng::new(22);
    for upsample in [false, true] {
        for _ in 0..50 {
            let shape = [2 + rng.below(5), 2 + rng.below(5), 2 + rng.below(5)];
            let window = [1 + rng.below(shape[0]), 1 + rng.below(shape[1]), 1 + rng.below(2)];
            let mut g = SparseGrid3D::new(shape, 1 + rng.below(3), window, upsample).unwrap();
            for c in random_coords(&mut rng, 4) {
                assert!(sparse_adjoint_gap(&mut g, &c, &mut rng) < 1e-10);
            }
        }
    }
}
