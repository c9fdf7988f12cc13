use std::path::Path;
use std::process::Command;

fn romopt(args: &[&str], threads: Option<&str>) -> (bool, String) {
    let mut c = Command::new(env!("CARGO_BIN_EXE_romopt"));
    c.args(args).env("RUST_LOG", "off");
    if let Some(t) = threads {
        c.env("ROMOPT_THREADS", t);
    }
    let out = c.output().unwrap();
    (out.status.success(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn demo() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.toml").display().to_string()
}

#[test]
fn failures_are_one_machine_readable_line() {
    let (ok, err) = romopt(&["fit", "--config", "/nonexistent.toml"], None);
    assert!(!ok);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[config]: "), "{err}");

    let (ok, err) = romopt(&["frobnicate"], None);
    assert!(!ok);
    assert!(err.starts_with("error[argument]: ") && err.lines().count() == 1, "{err}");

    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().display().to_string();
    let (ok, err) = romopt(&["validate", "--config", &demo(), "--out", &out], None);
    assert!(!ok);
    assert!(err.starts_with("error[argument]: ") && err.contains("romopt sample"), "{err}");

    let (ok, err) = romopt(&["simulate", "--config", &demo(), "--out", &out], Some("zero"));
    assert!(!ok && err.starts_with("error[config]: "), "{err}");
}

#[test]
fn bad_config_lists_every_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[params]\nm = 1\n[optim]\nbudget = 0\n").unwrap();
    let (ok, err) = romopt(&["sample", "--config", &cfg.display().to_string()], None);
    assert!(!ok);
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains("params.m") && err.contains("optim.budget"), "{err}");
}

#[test]
fn threaded_simulation_matches_serial() {
    let tmp = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(threads).display().to_string();
        for stage in ["sample", "simulate"] {
            let (ok, err) = romopt(&[stage, "--config", &demo(), "--out", &out, "--seed", "5"], Some(threads));
            assert!(ok, "{err}");
        }
        let space = romopt::params::ParameterSpace::read(&Path::new(&out).join("space.csv")).unwrap();
        digests.push(romopt::store::SnapshotStore::open(&Path::new(&out).join("store"), &space).unwrap().digest().unwrap());
    }
    assert_eq!(digests[0], digests[1]);
}
