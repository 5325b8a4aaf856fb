//! Small geometric helpers shared by the volume, tracker and phantom code.

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Angle between two nonzero vectors in radians, robust near 0 and π.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Rotation by `angle` radians about coordinate axis `axis` (0 = x, 1 = y, 2 = z).
pub fn axis_rotation(axis: usize, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    match axis {
        0 => Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        1 => Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        2 => Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
        _ => panic!("axis index {axis} out of range"),
    }
}

pub fn is_orthonormal(m: &Mat3, tol: f64) -> bool {
    let d = m.transpose() * m - Mat3::identity();
    d.iter().all(|v| v.abs() <= tol)
}

/// Closest point on segment `a`–`b` to `p`, returned as the segment parameter in [0, 1].
pub fn segment_param(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return 0.0;
    }
    ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
}

pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let t = segment_param(p, a, b);
    (p - (a + (b - a) * t)).norm()
}

pub fn polyline_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Resample a polyline (with per-point values) at fixed arc-length spacing,
/// always keeping both end points.
pub fn resample_polyline(points: &[Vec3], values: &[f64], spacing: f64) -> (Vec<Vec3>, Vec<f64>) {
    assert_eq!(points.len(), values.len());
    assert!(spacing > 0.0);
    if points.len() < 2 {
        return (points.to_vec(), values.to_vec());
    }
    let mut cum = Vec::with_capacity(points.len());
    cum.push(0.0);
    for w in points.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    if total == 0.0 {
        return (vec![points[0]], vec![values[0]]);
    }
    let n = (total / spacing).floor() as usize;
    let mut out_p = Vec::with_capacity(n + 2);
    let mut out_v = Vec::with_capacity(n + 2);
    let mut seg = 0;
    for i in 0..=n {
        let s = i as f64 * spacing;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 {
            ((s - cum[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out_p.push(points[seg] + (points[seg + 1] - points[seg]) * t);
        out_v.push(values[seg] + (values[seg + 1] - values[seg]) * t);
    }
    if total - n as f64 * spacing > 1e-9 {
        out_p.push(*points.last().unwrap());
        out_v.push(*values.last().unwrap());
    }
    (out_p, out_v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_rotations_are_orthonormal_and_right_handed() {
        for axis in 0..3 {
            let r = axis_rotation(axis, 0.7);
            assert!(is_orthonormal(&r, 1e-12));
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
        let rz = axis_rotation(2, std::f64::consts::FRAC_PI_2);
        let v = rz * Vec3::x();
        assert!((v - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn resampling_keeps_endpoints_and_spacing() {
        let pts = vec![
            Vec3::zeros(),
            Vec3::new(1.2, 0.0, 0.0),
            Vec3::new(1.2, 2.0, 0.0),
        ];
        let vals = vec![1.0, 2.0, 3.0];
        let (p, v) = resample_polyline(&pts, &vals, 0.5);
        assert_eq!(p.first().unwrap(), &pts[0]);
        assert_eq!(p.last().unwrap(), &pts[2]);
        assert_eq!(p.len(), 8);
        // Chords equal the arc spacing except across the corner.
        for (i, w) in p.windows(2).enumerate().take(6) {
            if i != 2 {
                assert!(((w[1] - w[0]).norm() - 0.5).abs() < 1e-12);
            }
        }
        assert!((v[2] - (1.0 + 1.0 / 1.2)).abs() < 1e-12);
    }

    #[test]
    fn angle_is_symmetric_and_bounded() {
        let a = Vec3::new(1.0, 2.0, -0.5);
        let b = Vec3::new(-0.3, 0.1, 4.0);
        let t = angle_between(&a, &b);
        assert!((t - angle_between(&b, &a)).abs() < 1e-15);
        assert!((angle_between(&a, &(-a)) - std::f64::consts::PI).abs() < 1e-12);
        assert!(angle_between(&a, &(a * 3.0)) < 1e-12);
    }
}
