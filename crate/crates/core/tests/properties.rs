use ccm_core::data::{self, ImageDataset, SplitSpec};
use ccm_core::eval::{aitoff_chart, knn_geodesic, poincare_chart, KnnConfig};
use ccm_core::geometry::{
    self, exp_map_unchecked, geodesic_distance, log_map, membership, project_to_ccm, AmbientPoint,
    Curvature, MembershipWidth,
};
use ccm_core::nn::{Activation, MlpStack};
use ccm_core::priors::{sample_prior, PriorSpec};
use ccm_core::rng::{self, GaussianStream};
use ndarray::{Array2, Axis};
use proptest::prelude::*;

fn kappa() -> impl Strategy<Value = Curvature> {
    prop_oneof![Just(Curvature::Spherical), Just(Curvature::Hyperbolic)]
}

fn on_manifold(k: Curvature, dim: usize, seed: u64, n: usize) -> Vec<Vec<f64>> {
    sample_prior(PriorSpec::new(k, dim, seed).unwrap(), n)
        .unwrap()
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect()
}

fn tangent_at(x: &[f64], k: Curvature, raw: &[f64], norm: f64) -> Vec<f64> {
    let c = geometry::inner_unchecked(x, raw, k) / k.level();
    let mut v: Vec<f64> = raw.iter().zip(x).map(|(r, xi)| r - c * xi).collect();
    let n = geometry::inner_unchecked(&v, &v, k).max(0.0).sqrt();
    v.iter_mut().for_each(|vi| *vi *= norm / n);
    v
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn distance_is_a_metric(k in kappa(), dim in 1usize..6, seed in any::<u64>()) {
        let p = on_manifold(k, dim, seed, 3);
        let d = |a: &[f64], b: &[f64]| geodesic_distance(a, b, k).unwrap();
        prop_assert_eq!(d(&p[0], &p[1]), d(&p[1], &p[0]));
        prop_assert!(d(&p[0], &p[1]) >= 0.0);
        prop_assert!(d(&p[0], &p[0]) < 1e-9);
        prop_assert!(d(&p[0], &p[2]) <= d(&p[0], &p[1]) + d(&p[1], &p[2]) + 1e-9);
    }

    #[test]
    fn exp_log_roundtrip(
        k in kappa(),
        dim in 1usize..6,
        seed in any::<u64>(),
        raw in prop::collection::vec(-1.0f64..1.0, 6),
        norm in 1e-3f64..3.0,
    ) {
        let x = on_manifold(k, dim, seed, 1).remove(0);
        prop_assume!(l2(&raw[..=dim]) > 1e-3);
        let v = tangent_at(&x, k, &raw[..=dim], norm);
        prop_assume!(v.iter().all(|c| c.is_finite()));
        let y = exp_map_unchecked(&x, &v, k);
        prop_assert!(geometry::is_on_manifold(&y, k));
        let back = log_map(&AmbientPoint::new(x.clone()).unwrap(), &y, k).unwrap();
        let err: Vec<f64> = v.iter().zip(back.direction()).map(|(a, b)| a - b).collect();
        prop_assert!(l2(&err) / l2(&v) < 1e-8, "rel err {}", l2(&err) / l2(&v));
        // dist(x, exp(x, v)) = ‖v‖ under the κ-product.
        prop_assert!((geodesic_distance(&x, &y, k).unwrap() - norm).abs() < 1e-8);
    }

    #[test]
    fn projection_is_idempotent(k in kappa(), z in prop::collection::vec(-3.0f64..3.0, 2..6)) {
        let z = match k {
            // Keep hyperbolic inputs inside the future light cone.
            Curvature::Hyperbolic => {
                let mut z = z;
                let last = z.len() - 1;
                z[last] = l2(&z[..last]) + 0.1 + z[last].abs();
                z
            }
            Curvature::Spherical => z,
        };
        prop_assume!(l2(&z) > 1e-6);
        let p = project_to_ccm(&z, k).unwrap();
        prop_assert!(geometry::is_on_manifold(&p, k));
        let pp = project_to_ccm(&p, k).unwrap();
        for (a, b) in p.iter().zip(pp.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn spherical_projection_is_nearest_point(
        z in prop::collection::vec(-3.0f64..3.0, 2..6),
        raw in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        prop_assume!(l2(&z) > 1e-3);
        let p = project_to_ccm(&z, Curvature::Spherical).unwrap();
        // Unit direction orthogonal to p; the great circle cos θ·p + sin θ·u
        // passes through every sphere point in the plane of p and u.
        let u = tangent_at(&p, Curvature::Spherical, &raw[..z.len()], 1.0);
        prop_assume!(u.iter().all(|c| c.is_finite()));
        let at = |t: f64| -> Vec<f64> { p.iter().zip(&u).map(|(a, b)| t.cos() * a + t.sin() * b).collect() };
        let dist = |q: &[f64]| q.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let (mut lo, mut hi) = (-3.0, 3.0);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if dist(&at(m1)) < dist(&at(m2)) { hi = m2 } else { lo = m1 }
        }
        let best = at(0.5 * (lo + hi));
        for (a, b) in p.iter().zip(&best) {
            prop_assert!((a - b).abs() < 1e-6);
        }
        prop_assert!(dist(&p) <= dist(&best) + 1e-12);
    }

    #[test]
    fn membership_decreases_with_level_deviation(
        k in kappa(),
        z in prop::collection::vec(-2.0f64..2.0, 2..5),
        s in 1.01f64..3.0,
    ) {
        let w = MembershipWidth::new(2.0).unwrap();
        let dev = geometry::level_deviation(&z, k).abs();
        prop_assume!(dev > 1e-6);
        let scaled: Vec<f64> = z.iter().map(|c| c * s).collect();
        let dev2 = geometry::level_deviation(&scaled, k).abs();
        let m1 = membership(&z, k, w);
        let m2 = membership(&scaled, k, w);
        if dev2 > dev + 1e-12 {
            prop_assert!(m2 < m1 || m1 == 0.0);
        } else if dev2 + 1e-12 < dev {
            prop_assert!(m2 > m1 || m2 == 0.0);
        }
    }

    #[test]
    fn membership_invariant_under_rotation(z in prop::collection::vec(-2.0f64..2.0, 3), theta in 0.0f64..6.3) {
        // Rotations of the spatial plane preserve both κ-products.
        let rot = vec![
            theta.cos() * z[0] - theta.sin() * z[1],
            theta.sin() * z[0] + theta.cos() * z[1],
            z[2],
        ];
        let w = MembershipWidth::default();
        for k in [Curvature::Spherical, Curvature::Hyperbolic] {
            prop_assert!((membership(&z, k, w) - membership(&rot, k, w)).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_batch_order_equivariant(seed in any::<u64>(), n in 1usize..12) {
        let mut r = rng::seeded(seed, 0);
        let stack = MlpStack::glorot(
            4,
            &[(6, Activation::LeakyRelu { alpha: 0.3 }), (3, Activation::Sigmoid)],
            0.01,
            &mut r,
        ).unwrap();
        let mut g = GaussianStream::new(rng::seeded(seed, 1));
        let x = Array2::from_shape_fn((n, 4), |_| g.next());
        let mut perm: Vec<usize> = (0..n).collect();
        rng::shuffle(&mut r, &mut perm);
        let y = stack.predict(x.view()).unwrap();
        let y_perm = stack.predict(x.select(Axis(0), &perm).view()).unwrap();
        prop_assert_eq!(y.select(Axis(0), &perm), y_perm);
        prop_assert_eq!(stack.predict(x.view()).unwrap(), y);
    }

    #[test]
    fn knn_invariant_under_rotation_and_scale(seed in any::<u64>(), theta in 0.0f64..6.3, scale in 0.1f64..10.0) {
        let pts = sample_prior(PriorSpec::new(Curvature::Spherical, 2, seed).unwrap(), 60).unwrap();
        let mut r = rng::seeded(seed, 1);
        let labels: Vec<usize> = (0..40).map(|_| rng::below(&mut r, 3)).collect();
        let (c, s) = (theta.cos(), theta.sin());
        let rotation = ndarray::array![[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let moved = pts.dot(&rotation.t()) * scale;
        let cfg = KnnConfig { k: 5, ..KnnConfig::default() };
        let a = knn_geodesic(pts.slice(ndarray::s![..40, ..]), &labels, pts.slice(ndarray::s![40.., ..]), &cfg, Curvature::Spherical).unwrap();
        let b = knn_geodesic(moved.slice(ndarray::s![..40, ..]), &labels, moved.slice(ndarray::s![40.., ..]), &cfg, Curvature::Spherical).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn splits_partition_the_corpus(n in 70usize..400, seed in any::<u64>()) {
        let ds = ImageDataset::new(Array2::zeros((n, 1)), vec![0; n]).unwrap();
        let s = data::split(&ds, SplitSpec::proportional(n, seed)).unwrap();
        let mut all: Vec<usize> = s.indices.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn idx_roundtrip_is_lossless(bytes in prop::collection::vec(any::<u8>(), data::MNIST_PIXELS * 2)) {
        let images: Vec<[u8; data::MNIST_PIXELS]> = bytes
            .chunks(data::MNIST_PIXELS)
            .map(|c| c.try_into().unwrap())
            .collect();
        let parsed = data::parse_idx_images(&data::encode_idx_images(&images)).unwrap();
        for (row, img) in parsed.rows().into_iter().zip(&images) {
            for (p, b) in row.iter().zip(img.iter()) {
                prop_assert_eq!((p * 255.0).round() as u8, *b);
            }
        }
    }

    #[test]
    fn charts_stay_in_range_and_are_odd(seed in any::<u64>()) {
        for z in on_manifold(Curvature::Hyperbolic, 2, seed, 16) {
            let p = poincare_chart(&z).unwrap();
            prop_assert!(p.u * p.u + p.v * p.v < 1.0);
        }
        for z in on_manifold(Curvature::Spherical, 2, seed, 16) {
            let a = aitoff_chart(&z).unwrap();
            prop_assert!(a.u.abs() <= std::f64::consts::PI + 1e-12);
            prop_assert!(a.v.abs() <= std::f64::consts::FRAC_PI_2 + 1e-12);
            // (λ, φ) → (−λ, −φ): negate the longitude and the polar coordinate.
            let mirrored = aitoff_chart(&[z[0], -z[1], -z[2]]).unwrap();
            prop_assert!((mirrored.u + a.u).abs() < 1e-12 && (mirrored.v + a.v).abs() < 1e-12);
        }
    }
}
