use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::fusion::{NamedProbe, Probe};
use crate::geometry::{Point3, PointCloud, Vector3};

const PROFILE_SEGMENTS: usize = 4000;

/// Parametric test objects; every shape is a surface of revolution about its
/// local y axis, dimensions in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Sphere { diameter: f64 },
    CapsuleBottle { diameter: f64, height: f64 },
    BowlingPin { head_diameter: f64, body_diameter: f64, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticObjectSpec {
    pub shape: Shape,
    /// Surface samples per mm².
    pub density: f64,
}

impl SyntheticObjectSpec {
    pub fn sphere(diameter: f64) -> Self {
        Self {
            shape: Shape::Sphere { diameter },
            density: 1.0,
        }
    }

    pub fn water_bottle() -> Self {
        Self {
            shape: Shape::CapsuleBottle {
                diameter: 73.0,
                height: 218.0,
            },
            density: 1.0,
        }
    }

    pub fn small_bottle() -> Self {
        Self {
            shape: Shape::CapsuleBottle {
                diameter: 52.0,
                height: 80.0,
            },
            density: 1.0,
        }
    }

    pub fn bowling_pin() -> Self {
        Self {
            shape: Shape::BowlingPin {
                head_diameter: 50.0,
                body_diameter: 82.0,
                height: 268.0,
            },
            density: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(field, format!("must be positive, got {v}")))
            }
        };
        positive("density", self.density)?;
        match self.shape {
            Shape::Sphere { diameter } => positive("diameter", diameter),
            Shape::CapsuleBottle { diameter, height } => {
                positive("diameter", diameter)?;
                positive("height", height)?;
                if height < diameter {
                    return Err(Error::invalid("height", "capsule height must be at least its diameter"));
                }
                Ok(())
            }
            Shape::BowlingPin {
                head_diameter,
                body_diameter,
                height,
            } => {
                positive("head_diameter", head_diameter)?;
                positive("body_diameter", body_diameter)?;
                positive("height", height)?;
                if head_diameter >= body_diameter || height < 2.0 * body_diameter {
                    return Err(Error::invalid(
                        "bowling_pin",
                        "needs head < body diameter and height >= twice the body diameter",
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn height(&self) -> f64 {
        match self.shape {
            Shape::Sphere { diameter } => diameter,
            Shape::CapsuleBottle { height, .. } | Shape::BowlingPin { height, .. } => height,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.shape {
            Shape::Sphere { .. } => "sphere",
            Shape::CapsuleBottle { height, .. } if height < 150.0 => "small-bottle",
            Shape::CapsuleBottle { .. } => "water-bottle",
            Shape::BowlingPin { .. } => "bowling-pin",
        }
    }

    /// Dimension probes along the object axis (world y when unrotated).
    pub fn probes(&self) -> Vec<NamedProbe> {
        let axis = [0.0, 1.0, 0.0];
        let name = self.name();
        let diameter = |label: String, at: f64, gt: f64| NamedProbe {
            name: label,
            probe: Probe::Diameter {
                axis,
                height_from_base: at,
            },
            ground_truth: Some(gt),
        };
        let height = |gt: f64| NamedProbe {
            name: format!("{name} height"),
            probe: Probe::Height { axis },
            ground_truth: Some(gt),
        };
        match self.shape {
            Shape::Sphere { diameter: d } => vec![
                diameter(format!("{name} diameter"), d / 2.0, d),
                NamedProbe {
                    name: format!("{name} volume"),
                    probe: Probe::Volume,
                    ground_truth: Some(PI * d.powi(3) / 6.0),
                },
            ],
            Shape::CapsuleBottle { diameter: d, height: h } => {
                vec![diameter(format!("{name} diameter"), h / 2.0, d), height(h)]
            }
            Shape::BowlingPin {
                head_diameter,
                body_diameter,
                height: h,
            } => {
                let p = PinProfile::new(head_diameter, body_diameter, h);
                vec![
                    diameter(format!("{name} head diameter"), p.head_y, head_diameter),
                    diameter(format!("{name} body diameter"), p.body_y, body_diameter),
                    height(h),
                ]
            }
        }
    }

    /// Profile polyline `(r, y)` from bottom pole to top pole, y measured
    /// from the object center.
    pub fn profile(&self) -> Vec<(f64, f64)> {
        let n = PROFILE_SEGMENTS;
        let h = self.height();
        let mut pts = match self.shape {
            Shape::Sphere { diameter } => {
                let r = diameter / 2.0;
                (0..=n)
                    .map(|i| {
                        let a = -FRAC_PI_2 + PI * i as f64 / n as f64;
                        (r * a.cos(), r * a.sin() + r)
                    })
                    .collect::<Vec<_>>()
            }
            Shape::CapsuleBottle { diameter, height } => {
                let r = diameter / 2.0;
                let cap = n / 4;
                let mut v = Vec::new();
                for i in 0..=cap {
                    let a = -FRAC_PI_2 + FRAC_PI_2 * i as f64 / cap as f64;
                    v.push((r * a.cos(), r + r * a.sin()));
                }
                let body = n / 2;
                for i in 1..body {
                    v.push((r, r + (height - 2.0 * r) * i as f64 / body as f64));
                }
                for i in 0..=cap {
                    let a = FRAC_PI_2 * i as f64 / cap as f64;
                    v.push((r * a.cos(), height - r + r * a.sin()));
                }
                v
            }
            Shape::BowlingPin {
                head_diameter,
                body_diameter,
                height,
            } => PinProfile::new(head_diameter, body_diameter, height).polyline(n),
        };
        for p in &mut pts {
            p.0 = p.0.max(0.0);
            p.1 -= h / 2.0;
        }
        pts[0].0 = 0.0;
        let last = pts.len() - 1;
        pts[last].0 = 0.0;
        pts
    }
}

struct PinProfile {
    r_head: f64,
    r_body: f64,
    height: f64,
    base_a: f64,
    base_r: f64,
    body_y: f64,
    neck: (f64, f64),
    head_y: f64,
}

impl PinProfile {
    fn new(head_d: f64, body_d: f64, height: f64) -> Self {
        let (r_head, r_body) = (head_d / 2.0, body_d / 2.0);
        Self {
            r_head,
            r_body,
            height,
            base_a: 0.045 * height,
            base_r: 0.68 * r_body,
            body_y: 0.28 * height,
            neck: (0.63 * height, 0.72 * r_head),
            head_y: height - r_head,
        }
    }

    fn polyline(&self, n: usize) -> Vec<(f64, f64)> {
        let smooth = |y0: f64, r0: f64, y1: f64, r1: f64, y: f64| {
            let u = (y - y0) / (y1 - y0);
            r0 + (r1 - r0) * u * u * (3.0 - 2.0 * u)
        };
        let mut v = Vec::new();
        let base = n / 8;
        for i in 0..=base {
            let a = FRAC_PI_2 * i as f64 / base as f64;
            v.push((self.base_r * a.sin(), self.base_a * (1.0 - a.cos())));
        }
        let knots = [
            (self.base_a, self.base_r),
            (self.body_y, self.r_body),
            (self.neck.0, self.neck.1),
            (self.head_y, self.r_head),
        ];
        let per = n / 6;
        for w in knots.windows(2) {
            let ((y0, r0), (y1, r1)) = (w[0], w[1]);
            for i in 1..=per {
                let y = y0 + (y1 - y0) * i as f64 / per as f64;
                v.push((smooth(y0, r0, y1, r1, y), y));
            }
        }
        let cap = n / 4;
        for i in 1..=cap {
            let a = FRAC_PI_2 * i as f64 / cap as f64;
            v.push((self.r_head * a.cos(), self.head_y + self.r_head * a.sin()));
        }
        debug_assert!((v.last().unwrap().1 - self.height).abs() < 1e-9);
        v.iter().map(|&(r, y)| (r, y)).collect()
    }
}

/// Area-weighted samples of a surface of revolution with outward normals.
pub fn sample_profile<R: Rng>(profile: &[(f64, f64)], density: f64, rng: &mut R) -> PointCloud {
    let segs: Vec<(f64, f64, f64, f64, f64)> = profile
        .windows(2)
        .map(|w| {
            let ((r0, y0), (r1, y1)) = (w[0], w[1]);
            let slant = ((r1 - r0).powi(2) + (y1 - y0).powi(2)).sqrt();
            (r0, y0, r1, y1, PI * (r0 + r1) * slant)
        })
        .collect();
    let mut cumulative = Vec::with_capacity(segs.len());
    let mut total = 0.0;
    for s in &segs {
        total += s.4;
        cumulative.push(total);
    }
    let count = (total * density).round() as usize;
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    for _ in 0..count {
        let pick = rng.random_range(0.0..total);
        let si = cumulative.partition_point(|&c| c < pick).min(segs.len() - 1);
        let (r0, y0, r1, y1, _) = segs[si];
        // Inverse CDF of a density linear in the radius.
        let u: f64 = rng.random_range(0.0..1.0);
        let t = if (r1 - r0).abs() < 1e-12 {
            u
        } else {
            let a = r0;
            let b = r1 - r0;
            (-a + (a * a + b * u * (2.0 * a + b)).max(0.0).sqrt()) / b
        };
        let r = r0 + (r1 - r0) * t;
        let y = y0 + (y1 - y0) * t;
        let phi = rng.random_range(0.0..2.0 * PI);
        let (s, c) = phi.sin_cos();
        let (dy, dr) = (y1 - y0, r1 - r0);
        let len = (dy * dy + dr * dr).sqrt();
        let (nr, ny) = (dy / len, -dr / len);
        points.push(Point3::new(r * c, y, r * s));
        normals.push(Vector3::new(nr * c, ny, nr * s).normalize());
    }
    PointCloud::with_normals(points, normals).expect("unit normals")
}

/// Position and outward normal at arclength `s` from the top (`top = true`)
/// or bottom pole, azimuth `phi`.
pub fn surface_from_pole(profile: &[(f64, f64)], top: bool, s: f64, phi: f64) -> (Point3, Vector3) {
    let ordered: Vec<(f64, f64)> = if top {
        profile.iter().rev().copied().collect()
    } else {
        profile.to_vec()
    };
    let mut acc = 0.0;
    for w in ordered.windows(2) {
        let ((r0, y0), (r1, y1)) = (w[0], w[1]);
        let len = ((r1 - r0).powi(2) + (y1 - y0).powi(2)).sqrt();
        if acc + len >= s || len == 0.0 {
            let t = if len > 0.0 { ((s - acc) / len).clamp(0.0, 1.0) } else { 0.0 };
            let (r, y) = (r0 + (r1 - r0) * t, y0 + (y1 - y0) * t);
            // Profile normal of the original bottom-to-top orientation.
            let (dy, dr) = if top { (y0 - y1, r0 - r1) } else { (y1 - y0, r1 - r0) };
            let l = (dy * dy + dr * dr).sqrt();
            let (nr, ny) = (dy / l, -dr / l);
            let (sn, cs) = phi.sin_cos();
            return (
                Point3::new(r * cs, y, r * sn),
                Vector3::new(nr * cs, ny, nr * sn).normalize(),
            );
        }
        acc += len;
    }
    let (r, y) = *ordered.last().unwrap();
    (Point3::new(r, y, 0.0), Vector3::y())
}
