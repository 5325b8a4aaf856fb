use std::path::Path;
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vtrack::cnn::{load_weights, Head, NetworkParams, NetworkSpec};
use vtrack::training::read_centerlines;
use vtrack_cli::commands::DESK_HIDDEN;

fn vtrack(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vtrack"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

const SMALL_SPEC: &str = "\
dims = 40 40 40
spacing = 0.5 0.5 0.5
origin = 0 0 0
background = 0
noise = 0.05
seed = 3
branch
  intensity = 1
  point = 4 10 10 1.5
  point = 16 10 10 1.5
end
";

fn small_phantom(dir: &Path) {
    std::fs::write(dir.join("tube-00.txt"), SMALL_SPEC).unwrap();
    let o = vtrack(dir, &["phantom", "--spec", "tube-00.txt", "--out", "data"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_errors_exit_with_code_2() {
    let d = tempfile::tempdir().unwrap();
    let o = vtrack(
        d.path(),
        &[
            "track",
            "--volume",
            "v.vtv",
            "--weights",
            "w.vtw",
            "--out",
            "x.vte",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--seed-point"));
    assert_eq!(
        vtrack(
            d.path(),
            &["phantom", "--suite", "straight", "--out", "o", "--bogus"]
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        vtrack(d.path(), &["phantom", "--suite", "nope", "--out", "o"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        vtrack(
            d.path(),
            &[
                "track",
                "--volume",
                "v",
                "--weights",
                "w",
                "--out",
                "o",
                "--seed-point",
                "1,2"
            ]
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn help_succeeds() {
    let d = tempfile::tempdir().unwrap();
    let o = vtrack(d.path(), &["--help"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("autotrack"));
}

#[test]
fn missing_files_exit_with_code_3() {
    let d = tempfile::tempdir().unwrap();
    let o = vtrack(
        d.path(),
        &[
            "track",
            "--volume",
            "none.vtv",
            "--weights",
            "w.vtw",
            "--seed-point",
            "1,2,3",
            "--out",
            "x.vte",
        ],
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn zero_iterations_store_the_initialization() {
    let d = tempfile::tempdir().unwrap();
    small_phantom(d.path());
    let o = vtrack(
        d.path(),
        &[
            "train",
            "--data",
            "data",
            "--head",
            "tracker",
            "--desk",
            "--iters",
            "0",
            "--seed",
            "11",
            "--out",
            "net/w.vtw",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let w = load_weights(&d.path().join("net/w.vtw")).unwrap();
    let spec = NetworkSpec::dilated_stack(
        DESK_HIDDEN,
        Head::Tracker {
            num_directions: 100,
        },
    )
    .unwrap();
    assert_eq!(w.spec, spec);
    let init = NetworkParams::<f32>::init(&spec, &mut ChaCha8Rng::seed_from_u64(11));
    assert_eq!(w.params, init);
    assert!(d.path().join("net/w.vtw.run.cfg").exists());
}

#[test]
fn phantom_outputs_and_rerun_are_identical() {
    let d = tempfile::tempdir().unwrap();
    let o = vtrack(
        d.path(),
        &["--threads", "1", "phantom", "--suite", "loop", "--out", "a"],
    );
    assert!(o.status.success());
    for i in 0..3 {
        for ext in ["vtv", "vtc", "spec", "ostia"] {
            assert!(d.path().join(format!("a/loop-{i:02}.{ext}")).exists());
        }
    }
    let first = std::fs::read(d.path().join("a/loop-01.vtv")).unwrap();
    std::fs::remove_file(d.path().join("a/loop-01.vtv")).unwrap();
    // Rerun from a different working directory.
    let elsewhere = tempfile::tempdir().unwrap();
    let cfg = d.path().join("a/run.cfg");
    let o = vtrack(elsewhere.path(), &["rerun", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(d.path().join("a/loop-01.vtv")).unwrap(),
        first
    );
}

#[test]
fn eval_of_reference_copies_is_perfect() {
    let d = tempfile::tempdir().unwrap();
    small_phantom(d.path());
    let refs = read_centerlines(&d.path().join("data/tube-00.vtc")).unwrap();
    std::fs::create_dir(d.path().join("ext")).unwrap();
    let (id, r) = &refs[0];
    let n = r.points().len();
    let cl = vtrack::tracker::Centerline {
        seed: r.points()[n / 2],
        points: r.points().to_vec(),
        radii: r.radii().to_vec(),
        entropies: vec![0.1; n],
        stop_fwd: vtrack::tracker::Termination::Entropy,
        stop_bwd: vtrack::tracker::Termination::Entropy,
    };
    vtrack::tracker::write_centerline(&cl, &d.path().join(format!("ext/tube-00__b{id}.vte")))
        .unwrap();
    let o = vtrack(
        d.path(),
        &[
            "eval",
            "--ref-dir",
            "data",
            "--extracted-dir",
            "ext",
            "--out",
            "report.txt",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("mean_ov=100.0000"), "{out}");
    assert!(out.contains("mean_ai=0.0000"), "{out}");
    assert!(out.contains("ostium_reached=1"), "{out}");
    assert_eq!(
        std::fs::read_to_string(d.path().join("report.txt")).unwrap(),
        out
    );
    let o = vtrack(
        d.path(),
        &["radius-eval", "--ref-dir", "data", "--extracted-dir", "ext"],
    );
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("mean_difference=0.00000"));
}
