use plrdiff_core::degrade::{
    blur, blur_adjoint, downsample, downsample_adjoint, gaussian_kernel, pan_project, pan_project_adjoint,
    DegradationModel, Kernel, SpectralResponse,
};
use plrdiff_core::metrics::{ergas, mse, psnr, q2n, sam, scc, ssim};
use plrdiff_core::tensor3::{fold3, mode3_mul, mode3_mul_adjoint, unfold3, Mat, Tensor3};
use proptest::prelude::*;

fn tensor(h: usize, w: usize, s: usize) -> impl Strategy<Value = Tensor3> {
    prop::collection::vec(-1.0f64..1.0, h * w * s).prop_map(move |d| Tensor3::from_vec(h, w, s, d).unwrap())
}

fn mat(r: usize, c: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-1.0f64..1.0, r * c).prop_map(move |d| Mat::from_vec(r, c, d).unwrap())
}

fn kernel(size: usize) -> impl Strategy<Value = Kernel> {
    prop::collection::vec(0.01f64..1.0, size * size).prop_map(move |w| {
        let total: f64 = w.iter().sum();
        Kernel::new(size, w.iter().map(|v| v / total).collect()).unwrap()
    })
}

fn response(s: usize) -> impl Strategy<Value = SpectralResponse> {
    prop::collection::vec(0.01f64..1.0, s).prop_map(|w| {
        let total: f64 = w.iter().sum();
        SpectralResponse::new(w.iter().map(|v| v / total).collect()).unwrap()
    })
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-12 * scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unfold_fold_roundtrip(x in tensor(5, 7, 3)) {
        prop_assert_eq!(fold3(&unfold3(&x), 5, 7).unwrap(), x);
    }

    #[test]
    fn mode3_adjoint(a in tensor(4, 6, 3), r in tensor(4, 6, 5), e in mat(5, 3)) {
        let lhs = mode3_mul(&a, &e).unwrap().dot(&r).unwrap();
        let rhs = a.dot(&mode3_mul_adjoint(&r, &e).unwrap()).unwrap();
        prop_assert!(close(lhs, rhs, lhs.abs()));
    }

    #[test]
    fn mode3_matches_unfolding(a in tensor(3, 4, 2), e in mat(5, 2)) {
        let via = fold3(&e.matmul(&unfold3(&a)).unwrap(), 3, 4).unwrap();
        let direct = mode3_mul(&a, &e).unwrap();
        for (p, q) in via.as_slice().iter().zip(direct.as_slice()) {
            prop_assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn blur_adjoint_identity(x in tensor(8, 8, 2), y in tensor(8, 8, 2), k in kernel(5)) {
        let lhs = blur(&x, &k).unwrap().dot(&y).unwrap();
        let rhs = x.dot(&blur_adjoint(&y, &k).unwrap()).unwrap();
        prop_assert!(close(lhs, rhs, lhs.abs()));
    }

    #[test]
    fn blur_is_linear(x in tensor(6, 6, 2), y in tensor(6, 6, 2), k in kernel(3), c in -3.0f64..3.0) {
        let mut comb = x.clone();
        comb.axpy(c, &y).unwrap();
        let lhs = blur(&comb, &k).unwrap();
        let mut rhs = blur(&x, &k).unwrap();
        rhs.axpy(c, &blur(&y, &k).unwrap()).unwrap();
        for (p, q) in lhs.as_slice().iter().zip(rhs.as_slice()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn downsample_adjoint_identity(x in tensor(8, 12, 2), y in tensor(2, 3, 2)) {
        let lhs = downsample(&x, 4).unwrap().dot(&y).unwrap();
        let rhs = x.dot(&downsample_adjoint(&y, 4).unwrap()).unwrap();
        prop_assert!(close(lhs, rhs, lhs.abs()));
    }

    #[test]
    fn pan_adjoint_identity(x in tensor(5, 5, 4), p in tensor(5, 5, 1), r in response(4)) {
        let lhs = pan_project(&x, &r).unwrap().dot(&p).unwrap();
        let rhs = x.dot(&pan_project_adjoint(&p, &r).unwrap()).unwrap();
        prop_assert!(close(lhs, rhs, lhs.abs()));
    }

    #[test]
    fn spatial_degradation_commutes_with_spectra(a in tensor(8, 8, 2), e in mat(4, 2), k in kernel(3)) {
        let model = DegradationModel::new(2, k, SpectralResponse::uniform(4).unwrap()).unwrap();
        let lhs = model.spatial(&mode3_mul(&a, &e).unwrap()).unwrap();
        let rhs = mode3_mul(&model.spatial(&a).unwrap(), &e).unwrap();
        for (p, q) in lhs.as_slice().iter().zip(rhs.as_slice()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn metric_ranges(x in prop::collection::vec(0.0f64..1.0, 16 * 16 * 3),
                     y in prop::collection::vec(0.0f64..1.0, 16 * 16 * 3)) {
        let x = Tensor3::from_vec(16, 16, 3, x).unwrap();
        let y = Tensor3::from_vec(16, 16, 3, y).unwrap();
        prop_assert!(mse(&x, &y).unwrap() >= 0.0);
        prop_assert!(psnr(&x, &y, 1.0).unwrap() >= 0.0);
        let s = ssim(&x, &y, 1.0).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s), "ssim {}", s);
        let q = q2n(&x, &y, 8).unwrap();
        prop_assert!((0.0..=1.0).contains(&q));
        let a = sam(&x, &y).unwrap();
        prop_assert!((0.0..=180.0).contains(&a));
        prop_assert!(ergas(&x, &y, 4).unwrap() >= 0.0);
        let c = scc(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
    }

    #[test]
    fn ssim_nonnegative_for_perturbed_copies(x in prop::collection::vec(0.0f64..1.0, 16 * 16 * 2),
                                            n in prop::collection::vec(-0.3f64..0.3, 16 * 16 * 2)) {
        let x = Tensor3::from_vec(16, 16, 2, x).unwrap();
        let y = Tensor3::from_vec(16, 16, 2, n).unwrap().add(&x).unwrap();
        let s = ssim(&x, &y, 1.0).unwrap();
        prop_assert!((0.0..=1.0).contains(&s), "ssim {}", s);
    }

    #[test]
    fn sam_ignores_positive_pixel_scaling(x in prop::collection::vec(0.05f64..1.0, 6 * 6 * 4),
                                          k in prop::collection::vec(0.1f64..10.0, 36)) {
        let x = Tensor3::from_vec(6, 6, 4, x).unwrap();
        let scaled = Tensor3::from_fn(6, 6, 4, |i, j, b| x.get(i, j, b) * k[i * 6 + j]);
        prop_assert!(sam(&x, &scaled).unwrap().abs() < 1e-10);
    }

    #[test]
    fn symmetric_metrics(x in tensor(12, 12, 2), y in tensor(12, 12, 2)) {
        prop_assert_eq!(mse(&x, &y).unwrap(), mse(&y, &x).unwrap());
        prop_assert!((sam(&x, &y).unwrap() - sam(&y, &x).unwrap()).abs() < 1e-12);
        prop_assert!((ssim(&x, &y, 1.0).unwrap() - ssim(&y, &x, 1.0).unwrap()).abs() < 1e-12);
        prop_assert!((scc(&x, &y).unwrap() - scc(&y, &x).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn identity_degradation() {
    let x = Tensor3::from_fn(5, 4, 3, |i, j, b| (i * 13 + j * 7 + b) as f64 * 0.01);
    let model = DegradationModel::identity(3).unwrap();
    assert_eq!(model.spatial(&x).unwrap(), x);
    assert_eq!(blur(&x, &Kernel::delta()).unwrap(), x);
    assert_eq!(downsample(&x, 1).unwrap(), x);
}

#[test]
fn gaussian_kernel_is_rotation_symmetric() {
    let k = gaussian_kernel(9, 1.7).unwrap();
    assert_eq!(k.rotated(), k);
    let x = Tensor3::from_fn(10, 10, 1, |i, j, _| ((i * 3 + j * j) % 7) as f64);
    let (a, b) = (blur(&x, &k).unwrap(), blur_adjoint(&x, &k).unwrap());
    assert!(a.sub(&b).unwrap().norm() < 1e-12);
}
