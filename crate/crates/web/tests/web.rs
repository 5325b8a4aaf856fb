use vtrack_web::{
    codebook_points, entropy_of, peaked_distribution, proximity_values, suite_names, suite_size,
    PhantomView,
};

fn entropy_oracle(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&q| q > 0.0)
        .map(|q| q * q.log2())
        .sum::<f64>()
        / (p.len() as f64).log2()
}

#[test]
fn suites_are_listed_with_sizes() {
    let names = suite_names();
    assert_eq!(
        names,
        ["straight", "curved", "branching", "degraded", "loop"]
    );
    assert!(names.iter().all(|n| suite_size(n) > 0));
    assert_eq!(suite_size("nope"), 0);
}

#[test]
fn slices_show_the_reference_centerline() {
    let v = PhantomView::load("straight", 0).unwrap();
    assert_eq!(v.name(), "straight-00");
    let d = v.dims();
    for axis in 0..3 {
        let (w, h) = match axis {
            0 => (d[1], d[2]),
            1 => (d[0], d[2]),
            _ => (d[0], d[1]),
        };
        let k = d[axis] as usize / 2;
        let px = v.render(axis, k).unwrap();
        assert_eq!(px.len(), (w * h * 4) as usize);
        assert!(px.chunks(4).all(|c| c[3] == 255));
    }
    // Some slice across z cuts every tube, so red marks appear somewhere.
    let red = (0..d[2] as usize)
        .map(|k| v.render(2, k).unwrap())
        .any(|px| px.chunks(4).any(|c| c[..3] == [220, 40, 40]));
    assert!(red);
    assert!(v.render(3, 0).is_err());
    assert!(v.render(2, d[2] as usize).is_err());
    assert!(PhantomView::load("straight", 99).is_err());
    assert!(PhantomView::load("nope", 0).is_err());
}

#[test]
fn codebook_is_unit_vectors() {
    let p = codebook_points(100).unwrap();
    assert_eq!(p.len(), 300);
    for c in p.chunks(3) {
        assert!(((c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt() - 1.0).abs() < 1e-12);
    }
    assert!(codebook_points(0).is_err());
}

#[test]
fn entropy_falls_as_the_distribution_sharpens() {
    let flat = peaked_distribution(100, 0.0, true).unwrap();
    assert!((entropy_of(&flat).unwrap() - 1.0).abs() < 1e-12);
    let mut last = 1.0;
    for kappa in [1.0, 5.0, 20.0, 80.0] {
        for bi in [false, true] {
            let p = peaked_distribution(100, kappa, bi).unwrap();
            let h = entropy_of(&p).unwrap();
            assert!((h - entropy_oracle(&p)).abs() < 1e-12);
            if bi {
                assert!(h < last, "kappa {kappa}: {h} !< {last}");
                last = h;
            }
        }
    }
    assert!(entropy_of(&[0.5, 0.6]).is_err());
}

#[test]
fn proximity_curve_matches_its_closed_form() {
    let v = proximity_values(6.0, 4.0, 8.0, 9).unwrap();
    assert_eq!(v.len(), 9);
    for (i, y) in v.iter().enumerate() {
        let d = i as f64;
        let want = if d < 4.0 {
            (6.0 * (1.0 - d / 4.0)).exp() - 1.0
        } else {
            0.0
        };
        assert!((y - want).abs() < 1e-12, "d {d}: {y} vs {want}");
    }
    assert!(proximity_values(6.0, 0.0, 8.0, 9).is_err());
    assert!(proximity_values(6.0, 4.0, 8.0, 1).is_err());
}
