//! End-to-end runs of the binary on the bundled configs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biasfield"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn constants_match_classical_moduli_in_natural_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("natural.toml");
    let o = run(&["constants", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("constants.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# biasfield-table v1"));
    assert_eq!(lines.next(), Some("name,index,effective,classical,difference"));
    let mut rows = 0;
    for l in lines {
        let diff: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(diff, 0.0, "{l}");
        rows += 1;
    }
    // G, R, Lambda, L, P, kappa and alpha in 2-D.
    assert_eq!(rows, 16 + 8 + 4 + 4 + 2 + 4 + 1);
}

#[test]
fn energy_study_passes_on_standing_wave_and_coupled_bar() {
    for name in ["standing_wave.toml", "coupled_bar.toml"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(name);
        let o = run(&["verify-energy", "--config", cfg.to_str().unwrap(), "--levels", "3"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stdout(&o));
        let m = manifest(dir.path());
        assert_eq!(m["status"], "pass");
        assert_eq!(m["details"]["dt"].as_array().unwrap().len(), 4);
        for f in ["energy_convergence.csv", "energy_convergence.svg", "ledger.csv", "ledger.svg"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        if name == "coupled_bar.toml" {
            for o in m["details"]["orders"].as_array().unwrap() {
                assert!(o.as_f64().unwrap() >= 0.9);
            }
        }
    }
}

#[test]
fn reciprocity_passes_and_sign_flag_discriminates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("bar_two_loads.toml");
    let o = run(&["verify-reciprocity", "--config", cfg.to_str().unwrap(), "--p", "1,2,4"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let m = manifest(dir.path());
    let results = m["details"]["results"].as_array().unwrap();
    assert_eq!(results.len(), 3);
    for r in results {
        assert!(r["relative"].as_f64().unwrap() <= 1e-3);
    }

    let text = std::fs::read_to_string(&cfg).unwrap().replace(
        "[verification]\n",
        "[verification]\nelectric_sign = \"symmetric\"\n",
    );
    let alt = dir.path().join("symmetric.toml");
    std::fs::write(&alt, text).unwrap();
    let o = run(&["verify-reciprocity", "--config", alt.to_str().unwrap(), "--p", "1"], &dir.path().join("sym"));
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
}

#[test]
fn other_verifications_pass_on_coupled_bar() {
    let cfg = config("coupled_bar.toml");
    for cmd in ["verify-uniqueness", "verify-hamilton", "converge"] {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&[cmd, "--config", cfg.to_str().unwrap(), "--seed", "5"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stdout(&o));
        assert_eq!(manifest(dir.path())["seed"], 5);
    }
}

#[test]
fn simulate_writes_levels_and_is_deterministic() {
    let cfg = config("coupled_bar.toml");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["simulate", "--config", cfg.to_str().unwrap()], d.path());
        assert_eq!(o.status.code(), Some(0));
    }
    let m = manifest(a.path());
    let levels = m["details"]["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 51);
    assert_eq!(levels[3]["file"], "fields/level_00003.csv");
    for f in ["manifest.json", "fields/level_00050.csv", "ledger.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let csv = std::fs::read_to_string(a.path().join("fields/level_00000.csv")).unwrap();
    assert!(csv.starts_with("# biasfield-fields v1\nx,u,v,phi,theta\n"));
    assert_eq!(csv.lines().count(), 2 + 31);
}

#[test]
fn invalid_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let base = std::fs::read_to_string(config("standing_wave.toml")).unwrap();

    std::fs::write(&bad, format!("{base}\nmystery = 1\n")).unwrap();
    let o = run(&["simulate", "--config", bad.to_str().unwrap()], &dir.path().join("o1"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));

    let overlap = base.replace(
        "[initial.u]",
        "[partitions]\nmechanical = { essential = [\"left\", \"right\"], natural = [\"right\"] }\nelectric = { essential = [\"left\", \"right\"], natural = [] }\nthermal = { essential = [\"left\", \"right\"], natural = [] }\n\n[initial.u]",
    );
    std::fs::write(&bad, overlap).unwrap();
    let o = run(&["simulate", "--config", bad.to_str().unwrap()], &dir.path().join("o2"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("disjoint"));

    let cfg = config("standing_wave.toml");
    let o = run(&["verify-reciprocity", "--config", cfg.to_str().unwrap()], &dir.path().join("o3"));
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["nonsense", "--config", cfg.to_str().unwrap()], &dir.path().join("o4"));
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["simulate", "--config", "/does/not/exist.toml"], &dir.path().join("o5"));
    assert_eq!(o.status.code(), Some(2));
}
