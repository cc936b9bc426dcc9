use super::{Matrix3, Point3, RigidTransform, Vector3};
use crate::error::{Error, Result};

const DEGENERATE_RATIO: f64 = 1e-9;

/// A source/target pair with a nonnegative weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPair {
    pub source: Point3,
    pub target: Point3,
    pub weight: f64,
}

impl WeightedPair {
    pub fn new(source: Point3, target: Point3, weight: f64) -> Self {
        Self {
            source,
            target,
            weight,
        }
    }
}

/// `Σ wᵢ ‖targetᵢ − T(sourceᵢ)‖²`.
pub fn weighted_objective(pairs: &[WeightedPair], t: &RigidTransform) -> f64 {
    pairs
        .iter()
        .map(|p| p.weight * (p.target - t.apply(&p.source)).norm_squared())
        .sum()
}

/// Closed-form minimizer of the weighted point-to-point objective over SE(3).
///
/// Weighted Kabsch: SVD of the weighted cross-covariance with a determinant
/// correction so the result is a rotation, never a reflection. Coplanar
/// sources are fine; coincident or collinear ones are rejected.
pub fn solve_weighted_rigid(pairs: &[WeightedPair]) -> Result<RigidTransform> {
    let active: Vec<&WeightedPair> = pairs
        .iter()
        .filter(|p| p.weight > 0.0 && p.weight.is_finite())
        .collect();
    if active.len() < 3 {
        return Err(Error::UnderConstrained {
            effective: active.len(),
        });
    }
    let total: f64 = active.iter().map(|p| p.weight).sum();
    let mut src_c = Vector3::zeros();
    let mut dst_c = Vector3::zeros();
    for p in &active {
        let w = p.weight / total;
        src_c += w * p.source.coords;
        dst_c += w * p.target.coords;
    }

    let mut cross = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for p in &active {
        let w = p.weight / total;
        let s = p.source.coords - src_c;
        let d = p.target.coords - dst_c;
        cross += w * s * d.transpose();
        scatter += w * s * s.transpose();
    }

    let sv = scatter.symmetric_eigenvalues();
    let mut sv: Vec<f64> = sv.iter().map(|x| x.abs()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let scale = src_c.norm().max(1.0);
    if sv[0] <= 1e-24 * scale * scale {
        return Err(Error::DegenerateConfiguration { ratio: 0.0 });
    }
    let ratio = sv[1] / sv[0];
    if ratio < DEGENERATE_RATIO {
        return Err(Error::DegenerateConfiguration { ratio });
    }

    let svd = cross.svd(true, true);
    let u = svd.u.expect("svd u");
    let v = svd.v_t.expect("svd v").transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = v * d * u.transpose();
    let translation = dst_c - rotation * src_c;
    Ok(RigidTransform::new(rotation, translation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::axis_angle;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle = rng.random_range(-3.1..3.1);
        let t = Vector3::new(
            rng.random_range(-200.0..200.0),
            rng.random_range(-200.0..200.0),
            rng.random_range(-200.0..200.0),
        );
        RigidTransform::new(axis_angle(&axis, angle), t)
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-100.0..100.0),
                    rng.random_range(-100.0..100.0),
                    rng.random_range(400.0..900.0),
                )
            })
            .collect()
    }

    /// Textbook unweighted Umeyama, written independently of the solver.
    fn umeyama(src: &[Point3], dst: &[Point3]) -> RigidTransform {
        let n = src.len() as f64;
        let ms = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
        let md = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
        let mut sigma = Matrix3::zeros();
        for (s, d) in src.iter().zip(dst) {
            sigma += (d.coords - md) * (s.coords - ms).transpose();
        }
        sigma /= n;
        let svd = sigma.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut sm = Matrix3::identity();
        if u.determinant() * vt.determinant() < 0.0 {
            sm[(2, 2)] = -1.0;
        }
        let r = u * sm * vt;
        RigidTransform::new(r, md - r * ms)
    }

    #[test]
    fn recovers_known_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = random_transform(&mut rng);
        let src = random_points(&mut rng, 50);
        let pairs: Vec<_> = src
            .iter()
            .map(|s| WeightedPair::new(*s, truth.apply(s), 1.0))
            .collect();
        let got = solve_weighted_rigid(&pairs).unwrap();
        assert!((got.rotation() - truth.rotation()).norm() < 1e-9);
        assert!((got.translation() - truth.translation()).norm() < 1e-9);
    }

    #[test]
    fn identical_sets_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pairs: Vec<_> = random_points(&mut rng, 20)
            .into_iter()
            .map(|p| WeightedPair::new(p, p, 1.0))
            .collect();
        let got = solve_weighted_rigid(&pairs).unwrap();
        assert!((got.rotation() - Matrix3::identity()).amax() < 1e-12);
        assert!(got.translation().amax() < 1e-9);
    }

    #[test]
    fn mixed_subsets_beat_each_subset_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_transform(&mut rng);
        let b = a.compose(&RigidTransform::new(
            axis_angle(&Vector3::y(), 0.2),
            Vector3::new(5.0, -3.0, 2.0),
        ));
        let gamma = 15.0;
        let pairs: Vec<_> = random_points(&mut rng, 40)
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                if i % 2 == 0 {
                    WeightedPair::new(s, a.apply(&s), 1.0)
                } else {
                    WeightedPair::new(s, b.apply(&s), gamma)
                }
            })
            .collect();
        let got = solve_weighted_rigid(&pairs).unwrap();
        let e = weighted_objective(&pairs, &got);
        assert!(e <= weighted_objective(&pairs, &a));
        assert!(e <= weighted_objective(&pairs, &b));
    }

    #[test]
    fn too_few_pairs() {
        let p = Point3::origin();
        let pairs = vec![WeightedPair::new(p, p, 1.0), WeightedPair::new(p, p, 0.0)];
        assert!(matches!(
            solve_weighted_rigid(&pairs),
            Err(Error::UnderConstrained { effective: 1 })
        ));
    }

    #[test]
    fn collinear_and_coincident_are_degenerate() {
        let line: Vec<_> = (0..5)
            .map(|i| {
                let p = Point3::new(i as f64, 2.0 * i as f64, 0.0);
                WeightedPair::new(p, p, 1.0)
            })
            .collect();
        assert!(matches!(
            solve_weighted_rigid(&line),
            Err(Error::DegenerateConfiguration { .. })
        ));
        let same: Vec<_> = (0..5)
            .map(|_| WeightedPair::new(Point3::new(1.0, 1.0, 1.0), Point3::origin(), 1.0))
            .collect();
        assert!(solve_weighted_rigid(&same).is_err());
    }

    #[test]
    fn coplanar_sources_are_solvable() {
        let truth = RigidTransform::new(
            axis_angle(&Vector3::new(1.0, 1.0, 0.0), 0.7),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let pairs: Vec<_> = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (7.0, 3.0)]
            .iter()
            .map(|&(x, y)| {
                let s = Point3::new(x, y, 500.0);
                WeightedPair::new(s, truth.apply(&s), 1.0)
            })
            .collect();
        let got = solve_weighted_rigid(&pairs).unwrap();
        assert!((got.rotation() - truth.rotation()).norm() < 1e-9);
    }

    proptest! {
        #[test]
        fn isometry(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_transform(&mut rng);
            let pts = random_points(&mut rng, 2);
            let before = (pts[0] - pts[1]).norm();
            let after = (t.apply(&pts[0]) - t.apply(&pts[1])).norm();
            prop_assert!((before - after).abs() < 1e-9);
        }

        #[test]
        fn weight_rescaling_is_invariant(seed in any::<u64>(), c in 1e-3f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = random_transform(&mut rng);
            let pairs: Vec<_> = random_points(&mut rng, 30)
                .into_iter()
                .map(|s| {
                    let noise = Vector3::new(
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-2.0..2.0),
                    );
                    WeightedPair::new(s, truth.apply(&s) + noise, rng.random_range(0.1..10.0))
                })
                .collect();
            let scaled: Vec<_> = pairs
                .iter()
                .map(|p| WeightedPair::new(p.source, p.target, p.weight * c))
                .collect();
            let a = solve_weighted_rigid(&pairs).unwrap();
            let b = solve_weighted_rigid(&scaled).unwrap();
            prop_assert!((a.rotation() - b.rotation()).amax() < 1e-9);
            prop_assert!((a.translation() - b.translation()).amax() < 1e-9);
        }

        #[test]
        fn unit_weights_match_umeyama(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = random_transform(&mut rng);
            let src = random_points(&mut rng, 25);
            let dst: Vec<_> = src
                .iter()
                .map(|s| {
                    truth.apply(s)
                        + Vector3::new(
                            rng.random_range(-3.0..3.0),
                            rng.random_range(-3.0..3.0),
                            rng.random_range(-3.0..3.0),
                        )
                })
                .collect();
            let pairs: Vec<_> = src
                .iter()
                .zip(&dst)
                .map(|(s, d)| WeightedPair::new(*s, *d, 1.0))
                .collect();
            let a = solve_weighted_rigid(&pairs).unwrap();
            let b = umeyama(&src, &dst);
            prop_assert!((a.rotation() - b.rotation()).amax() < 1e-9);
            prop_assert!((a.translation() - b.translation()).amax() < 1e-9);
        }
    }
}
