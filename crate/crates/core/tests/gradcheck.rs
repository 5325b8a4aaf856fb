use vtrack::cnn::{check_gradients, Head, NetworkSpec};

fn tiny(head: Head, output_bn: bool) -> NetworkSpec {
    let mut spec = NetworkSpec::dilated_stack([2, 2, 2, 2, 3, 3], head).unwrap();
    spec.layers.last_mut().unwrap().batch_norm = output_bn;
    spec
}

fn assert_all_classes(spec: &NetworkSpec, width: usize) {
    let report = check_gradients(spec, 6, width, 12, 1e-5, 5).unwrap();
    for c in &report {
        assert!(c.checked > 0, "{} not checked", c.class);
        assert!(c.max_rel_error <= 1e-3, "{}: {}", c.class, c.max_rel_error);
    }
}

#[test]
fn tracker_head_gradients() {
    assert_all_classes(&tiny(Head::Tracker { num_directions: 6 }, false), 19);
    assert_all_classes(&tiny(Head::Tracker { num_directions: 6 }, true), 19);
}

#[test]
fn proximity_head_gradients() {
    assert_all_classes(&tiny(Head::Proximity, false), 21);
}
