//! Seeded synthetic scanning sequences with ground truth: a surface of
//! revolution spun in front of the camera by two fingertips holding its poles.

mod hand;
mod shape;
mod texture;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use hand::{FingerGeometry, HandModel, HandSpec, BONE_NAMES, INDEX_TIP, THUMB_TIP};
pub use shape::{sample_profile, surface_from_pole, Shape, SyntheticObjectSpec};
pub use texture::{
    add_texture_features, apply_texture, texture_layout, Dimple, DimpleSpec, Sticker, TextureLayout, BASE_SHADE,
};

use crate::contact::PosedHand;
use crate::error::{Error, Result};
use crate::fusion::NamedProbe;
use crate::geometry::{axis_angle, CameraIntrinsics, Point3, PointCloud, RigidTransform, Vector3};
use crate::preprocess::{DetectorBox, SegmentedFrame};

/// Scripted object motion and per-frame sensing conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionScript {
    pub frames: usize,
    /// Spin about `axis` through the object center, per frame.
    pub deg_per_frame: f64,
    pub axis: [f64; 3],
    /// Translation of the object center per frame, camera frame.
    pub drift_per_frame: [f64; 3],
    /// Object center in the camera frame at frame 0.
    pub center: [f64; 3],
    /// Rotation of the visibility direction about the camera y axis per
    /// frame, opposite to the spin.
    pub view_sweep_deg_per_frame: f64,
    pub noise_sigma: f64,
}

impl Default for MotionScript {
    fn default() -> Self {
        Self {
            frames: 24,
            deg_per_frame: 6.0,
            axis: [0.0, 1.0, 0.0],
            drift_per_frame: [0.5, 0.0, 0.0],
            center: [0.0, 40.0, 700.0],
            view_sweep_deg_per_frame: 3.0,
            noise_sigma: 0.5,
        }
    }
}

impl MotionScript {
    /// Object-to-camera transform at frame `k`.
    pub fn object_pose(&self, k: usize) -> RigidTransform {
        let axis = Vector3::from(self.axis);
        let rot = axis_angle(&axis, (k as f64 * self.deg_per_frame).to_radians());
        let t = Vector3::from(self.center) + Vector3::from(self.drift_per_frame) * k as f64;
        RigidTransform::new(rot, t)
    }

    /// Direction the visible hemisphere faces away from at frame `k`.
    pub fn view_direction(&self, k: usize) -> Vector3 {
        let a = -(k as f64 * self.view_sweep_deg_per_frame).to_radians();
        axis_angle(&Vector3::y(), a) * Vector3::z()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::invalid("frames", "must be at least 1"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise", "must be nonnegative"));
        }
        if Vector3::from(self.axis).norm() == 0.0 {
            return Err(Error::invalid("axis", "must be non-zero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub object: SyntheticObjectSpec,
    pub motion: MotionScript,
    pub hand: HandSpec,
    pub texture_features: usize,
    pub texture_seed: u64,
    pub dimples: DimpleSpec,
    pub seed: u64,
    pub intrinsics: CameraIntrinsics,
    pub detector_box_px: u32,
    pub annotation_every: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            object: SyntheticObjectSpec::sphere(70.0),
            motion: MotionScript::default(),
            hand: HandSpec::default(),
            texture_features: 0,
            texture_seed: 1,
            dimples: DimpleSpec::default(),
            seed: 0,
            intrinsics: CameraIntrinsics::default(),
            detector_box_px: 24,
            annotation_every: 10,
        }
    }
}

/// Ground-truth point pairs between a frame and its predecessor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub source_frame: usize,
    pub target_frame: usize,
    /// `(point in source frame, same point in target frame)`.
    pub pairs: Vec<(Point3, Point3)>,
}

#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub config: SynthConfig,
    pub frames: Vec<SegmentedFrame>,
    /// Object-to-camera transform per frame.
    pub object_poses: Vec<RigidTransform>,
    pub annotations: Vec<Annotation>,
    pub probes: Vec<NamedProbe>,
}

impl SyntheticSequence {
    /// Frame-`k` camera coordinates to frame-0 camera coordinates.
    pub fn world_from_frame(&self, k: usize) -> RigidTransform {
        self.object_poses[0].compose(&self.object_poses[k].inverse())
    }

    /// Frame-`k` coordinates to frame-`k−1` coordinates.
    pub fn relative(&self, k: usize) -> RigidTransform {
        self.object_poses[k - 1].compose(&self.object_poses[k].inverse())
    }

    /// Object center in frame-0 coordinates.
    pub fn center(&self) -> Point3 {
        Point3::from(*self.object_poses[0].translation())
    }
}

fn frame_rng(seed: u64, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Whether the segment from the camera origin to `p` passes through a ball.
fn occluded(p: &Point3, balls: &[(Point3, f64)]) -> bool {
    balls.iter().any(|(c, r)| {
        let d = p.coords;
        let len2 = d.norm_squared();
        let t = (c.coords.dot(&d) / len2).clamp(0.0, 1.0);
        // Only occluders in front of the point count.
        t < 1.0 && (d * t - c.coords).norm() < *r && (p - c).norm() > *r
    })
}

/// Generates the frames of a synthetic sequence.
pub fn generate_sequence(config: &SynthConfig) -> Result<SyntheticSequence> {
    config.object.validate()?;
    config.motion.validate()?;
    config.intrinsics.validate()?;
    let motion = &config.motion;
    let profile = config.object.profile();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = sample_profile(&profile, config.object.density, &mut rng);
    if config.texture_features > 0 {
        let layout = texture_layout(&model, config.texture_features, config.texture_seed, &config.dimples);
        model = apply_texture(&model, &layout);
    }
    let hand = HandModel::build(&profile, &config.hand);
    let poses: Vec<RigidTransform> = (0..motion.frames).map(|k| motion.object_pose(k)).collect();
    let noise = Normal::new(0.0, motion.noise_sigma.max(0.0)).expect("valid sigma");
    let jitter = Normal::new(0.0, config.hand.jitter_sigma.max(0.0)).expect("valid sigma");
    let tracking = Normal::new(0.0, config.hand.tracking_sigma.max(0.0)).expect("valid sigma");
    let model_normals = model.normals().expect("sampled with normals");

    let frames: Result<Vec<SegmentedFrame>> = (0..motion.frames)
        .into_par_iter()
        .map(|k| {
            let pose = &poses[k];
            let view = motion.view_direction(k);
            let mut rng = frame_rng(config.seed, k);
            // Tracking error of the reported hand: one offset shared by the
            // hand plus one per finger. The physical fingers stay rigid.
            let mut sample = |d: &Normal<f64>, sigma: f64| {
                if sigma > 0.0 {
                    Vector3::new(d.sample(&mut rng), d.sample(&mut rng), d.sample(&mut rng))
                } else {
                    Vector3::zeros()
                }
            };
            let shared = sample(&tracking, config.hand.tracking_sigma);
            let offsets: Vec<Vector3> = (0..2).map(|_| shared + sample(&jitter, config.hand.jitter_sigma)).collect();
            let balls: Vec<(Point3, f64)> = hand
                .fingers
                .iter()
                .map(|f| (pose.apply(&f.occluder_center), config.hand.occluder_radius))
                .collect();

            let mut points = Vec::new();
            let mut normals = Vec::new();
            let mut colors = Vec::new();
            for (i, (x, n)) in model.points().iter().zip(model_normals).enumerate() {
                let n = pose.rotate(n);
                if n.dot(&view) >= 0.0 {
                    continue;
                }
                let p = pose.apply(x);
                if occluded(&p, &balls) {
                    continue;
                }
                let e = if motion.noise_sigma > 0.0 {
                    Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
                } else {
                    Vector3::zeros()
                };
                points.push(p + e);
                normals.push(n);
                if let Some(c) = model.colors() {
                    colors.push(c[i]);
                }
            }
            if points.is_empty() {
                return Err(Error::DegenerateMotion { frame: k });
            }

            let mut hand_vertices = Vec::with_capacity(hand.vertices.len());
            let mut hand_cloud = Vec::with_capacity(hand.vertices.len());
            for (f, o) in hand.fingers.iter().zip(&offsets) {
                for v in &hand.vertices[f.start..f.end] {
                    let v = pose.apply(v);
                    hand_vertices.push(v + o);
                    hand_cloud.push(if motion.noise_sigma > 0.0 {
                        v + Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
                    } else {
                        v
                    });
                }
            }

            let half = config.detector_box_px as f64 / 2.0;
            let boxes = hand
                .fingers
                .iter()
                .zip(["thumb", "index"])
                .filter_map(|(f, label)| {
                    let c = pose.apply(&f.pad_center);
                    let (u, v) = config.intrinsics.project(&c)?;
                    let (ju, jv) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    Some(DetectorBox {
                        label: label.to_string(),
                        u0: (u + ju - half).round() as i64,
                        v0: (v + jv - half).round() as i64,
                        width: config.detector_box_px,
                        height: config.detector_box_px,
                    })
                })
                .collect();

            let mut cloud = PointCloud::with_normals(points, normals)?;
            if model.colors().is_some() {
                cloud = cloud.set_colors(colors)?;
            }
            let mut frame = SegmentedFrame::new(k, cloud);
            frame.hand_cloud = PointCloud::new(hand_cloud);
            frame.hand_pose = Some(PosedHand::new(hand.topology.clone(), hand_vertices)?);
            frame.detector_boxes = Some(boxes);
            Ok(frame)
        })
        .collect();

    let annotations = annotate(config, &profile, &poses);
    Ok(SyntheticSequence {
        config: config.clone(),
        frames: frames?,
        object_poses: poses,
        annotations,
        probes: config.object.probes(),
    })
}

/// Two points per finger at 12 mm of arc from each pole, ±30° around the
/// meridian facing the camera, every `annotation_every` frames.
fn annotate(config: &SynthConfig, profile: &[(f64, f64)], poses: &[RigidTransform]) -> Vec<Annotation> {
    let every = config.annotation_every;
    if every == 0 {
        return Vec::new();
    }
    (every..poses.len())
        .step_by(every)
        .map(|k| {
            let facing = poses[k].rotation().transpose() * -config.motion.view_direction(k);
            let phi_c = facing.z.atan2(facing.x);
            let mut pairs = Vec::new();
            for top in [true, false] {
                for dphi in [-30f64, 30.0] {
                    let (x, _) = surface_from_pole(profile, top, 12.0, phi_c + dphi.to_radians());
                    pairs.push((poses[k].apply(&x), poses[k - 1].apply(&x)));
                }
            }
            Annotation {
                source_frame: k,
                target_frame: k - 1,
                pairs,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::{detect_contacts, ContactConfig};
    use crate::features::match_feat3d;
    use crate::features::FeatureParams;
    use crate::geometry::{solve_weighted_rigid, SpatialIndex};

    fn noiseless(frames: usize, deg: f64) -> SynthConfig {
        let mut c = SynthConfig::default();
        c.motion.frames = frames;
        c.motion.deg_per_frame = deg;
        c.motion.noise_sigma = 0.0;
        c.motion.drift_per_frame = [0.0; 3];
        c.motion.view_sweep_deg_per_frame = 0.0;
        c.hand.jitter_sigma = 0.0;
        c.hand.tracking_sigma = 0.0;
        c
    }

    #[test]
    fn static_sphere_frames_are_identical() {
        let seq = generate_sequence(&noiseless(3, 0.0)).unwrap();
        let c = seq.center();
        for f in &seq.frames {
            assert_eq!(f.object_cloud, seq.frames[0].object_cloud);
            for p in f.object_cloud.points() {
                assert!(((p - c).norm() - 35.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn noiseless_frames_follow_the_script() {
        let mut cfg = noiseless(4, 6.0);
        cfg.motion.drift_per_frame = [0.5, 0.0, 0.0];
        let seq = generate_sequence(&cfg).unwrap();
        // Frame-k points mapped to frame 0 lie on the frame-0 model surface.
        let r0 = seq.object_poses[0];
        for k in 1..4 {
            let w = seq.world_from_frame(k);
            for p in seq.frames[k].object_cloud.points().iter().step_by(50) {
                let q = r0.inverse().apply(&w.apply(p));
                assert!((q.coords.norm() - 35.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn hand_rides_rigidly() {
        let seq = generate_sequence(&noiseless(5, 6.0)).unwrap();
        let h0 = seq.frames[0].hand_pose.as_ref().unwrap();
        for k in 1..5 {
            let hk = seq.frames[k].hand_pose.as_ref().unwrap();
            let m = seq.world_from_frame(k).inverse();
            for (a, b) in h0.vertices.iter().zip(&hk.vertices) {
                assert!((m.apply(a) - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn visible_points_face_the_camera() {
        let mut cfg = SynthConfig::default();
        cfg.motion.frames = 3;
        let seq = generate_sequence(&cfg).unwrap();
        for (k, f) in seq.frames.iter().enumerate() {
            let d = cfg.motion.view_direction(k);
            for n in f.object_cloud.normals().unwrap() {
                assert!(n.dot(&d) < 0.0);
            }
        }
    }

    #[test]
    fn fingertips_touch_at_one_millimeter() {
        let seq = generate_sequence(&noiseless(2, 6.0)).unwrap();
        let f = &seq.frames[0];
        let idx = SpatialIndex::build(f.object_cloud.points()).unwrap();
        let s = detect_contacts(f.hand_pose.as_ref().unwrap(), &idx, &ContactConfig::default()).unwrap();
        assert_eq!(s.threshold_used, 1.0);
        assert_eq!(s.contact_bones, vec![THUMB_TIP, INDEX_TIP]);
    }

    #[test]
    fn annotations_are_consistent_with_ground_truth() {
        let seq = generate_sequence(&noiseless(21, 6.0)).unwrap();
        assert_eq!(seq.annotations.len(), 2);
        for a in &seq.annotations {
            assert_eq!(a.pairs.len(), 4);
            let rel = seq.relative(a.source_frame);
            for (s, t) in &a.pairs {
                assert!((rel.apply(s) - t).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn texture_is_deterministic() {
        let mut cfg = noiseless(2, 6.0);
        cfg.texture_features = 20;
        let a = generate_sequence(&cfg).unwrap();
        let b = generate_sequence(&cfg).unwrap();
        assert_eq!(a.frames[1].object_cloud, b.frames[1].object_cloud);
        let mut plain = cfg.clone();
        plain.texture_features = 0;
        let c = generate_sequence(&plain).unwrap();
        assert_ne!(a.frames[0].object_cloud, c.frames[0].object_cloud);
    }

    #[test]
    fn dimpled_sphere_copy_is_recoverable_from_features() {
        let mut cfg = SynthConfig::default();
        cfg.motion.frames = 1;
        cfg.motion.noise_sigma = 0.0;
        cfg.texture_features = 20;
        let seq = generate_sequence(&cfg).unwrap();
        let target = &seq.frames[0].object_cloud;
        let c = seq.center();
        let truth = RigidTransform::from_translation(Vector3::new(3.0, -2.0, 5.0))
            .compose(&RigidTransform::from_translation(c.coords))
            .compose(&RigidTransform::from_rotation(crate::geometry::axis_angle(
                &Vector3::new(0.3, 1.0, 0.2).normalize(),
                0.2,
            )))
            .compose(&RigidTransform::from_translation(-c.coords));
        let source = target.transformed(&truth.inverse());
        let set = match_feat3d(&source, target, &FeatureParams::default()).unwrap();
        assert!(set.len() >= 10, "{} matches", set.len());
        let got = solve_weighted_rigid(&set.weighted().collect::<Vec<_>>()).unwrap();
        let err = got.inverse().compose(&truth);
        assert!(err.angle().to_degrees() < 0.5, "{}", err.angle().to_degrees());
        assert!((got.apply(&c) - truth.apply(&c)).norm() < 0.5);
    }

    #[test]
    fn count_zero_texture_is_identity() {
        let cloud = PointCloud::with_normals(vec![Point3::origin()], vec![Vector3::z()]).unwrap();
        assert_eq!(add_texture_features(&cloud, 0, 3), cloud);
    }
}
