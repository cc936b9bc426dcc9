use std::path::Path;

use super::{CorrespondenceSet, Tag};
use crate::error::{Error, Result};
use crate::geometry::{back_project, CameraIntrinsics};
use crate::preprocess::PixelMatch;

/// Parses a match sidecar: one `u v depth u' v' depth'` line per match,
/// `#` starts a comment.
pub fn parse_feat2d(text: &str, path: &Path) -> Result<Vec<PixelMatch>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.display().to_string(),
            line: n + 1,
            message,
        };
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| parse_err(format!("`{t}`: {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() != 6 {
            return Err(parse_err(format!("expected 6 numbers, found {}", vals.len())));
        }
        out.push(PixelMatch {
            source: (vals[0], vals[1]),
            source_depth: vals[2],
            target: (vals[3], vals[4]),
            target_depth: vals[5],
        });
    }
    Ok(out)
}

/// Back-projects both ends of every match, dropping pairs with a missing or
/// out-of-image end.
pub fn load_feat2d(matches: &[PixelMatch], k: &CameraIntrinsics) -> CorrespondenceSet {
    let mut set = CorrespondenceSet::new(Tag::Feat2d);
    for m in matches {
        let s = back_project(m.source.0, m.source.1, m.source_depth, k);
        let t = back_project(m.target.0, m.target.1, m.target_depth, k);
        if let (Ok(s), Ok(t)) = (s, t) {
            set.push(s, t);
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{axis_angle, Point3, RigidTransform, Vector3};

    #[test]
    fn empty_and_principal_point() {
        let k = CameraIntrinsics::default();
        assert!(load_feat2d(&[], &k).is_empty());
        let m = PixelMatch {
            source: (k.cx, k.cy),
            source_depth: 500.0,
            target: (k.cx, k.cy),
            target_depth: 500.0,
        };
        let set = load_feat2d(&[m], &k);
        assert_eq!(set.pairs[0].source, Point3::new(0.0, 0.0, 500.0));
        assert_eq!(set.pairs[0].target, Point3::new(0.0, 0.0, 500.0));
    }

    #[test]
    fn zero_depth_is_dropped() {
        let k = CameraIntrinsics::default();
        let m = PixelMatch {
            source: (10.0, 10.0),
            source_depth: 0.0,
            target: (10.0, 10.0),
            target_depth: 600.0,
        };
        assert!(load_feat2d(&[m], &k).is_empty());
    }

    #[test]
    fn projected_pairs_follow_the_motion() {
        let k = CameraIntrinsics::default();
        let t = RigidTransform::new(axis_angle(&Vector3::y(), 0.1), Vector3::new(5.0, -2.0, 3.0));
        let src = [
            Point3::new(10.0, 20.0, 650.0),
            Point3::new(-30.0, 5.0, 700.0),
            Point3::new(0.0, -40.0, 720.0),
        ];
        let matches: Vec<PixelMatch> = src
            .iter()
            .map(|p| {
                let q = t.apply(p);
                PixelMatch {
                    source: k.project(p).unwrap(),
                    source_depth: p.z,
                    target: k.project(&q).unwrap(),
                    target_depth: q.z,
                }
            })
            .collect();
        for c in &load_feat2d(&matches, &k).pairs {
            assert!((t.apply(&c.source) - c.target).norm() < 1e-6);
        }
    }

    #[test]
    fn parse_reports_line_numbers() {
        let ok = parse_feat2d("# header\n1 2 500 3 4 510\n\n", Path::new("m.txt")).unwrap();
        assert_eq!(ok.len(), 1);
        let err = parse_feat2d("1 2 500 3 4 510\n1 2 x 3 4 5\n", Path::new("m.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let short = parse_feat2d("1 2 3\n", Path::new("m.txt")).unwrap_err();
        assert!(matches!(short, Error::Parse { line: 1, .. }));
    }
}
