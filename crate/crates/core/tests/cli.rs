use rescap::config::RunConfig;
use serde_json::Value;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

const DUFFING_LOCKING: &str = r#"
[system]
name = "duffing"
n = 2
p = 1
kappa = 1
varkappa = 2
epsilon = 0.1
[system.params]
theta = 0.03125
P1 = 1.0
Q0 = -0.25
B0 = 3.6
[envelope]
kind = "power"
q = 4
tau0 = 1.0
[phase]
s0 = 1.5
"#;

fn rescap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rescap"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn run_ok(dir: &Path, config: &str, args: &[&str]) -> Value {
    fs::write(dir.join("run.toml"), config).unwrap();
    let mut full = vec![args[0], "--config", "run.toml", "--out", "out"];
    full.extend_from_slice(&args[1..]);
    let out = rescap(dir, &full);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| {
            r.unwrap()
                .iter()
                .map(|v| v.parse::<f64>().unwrap())
                .collect()
        })
        .collect();
    (header, rows)
}

#[test]
fn resonance_reports_duffing_and_example1_amplitudes() {
    let dir = TempDir::new().unwrap();
    let v = run_ok(dir.path(), DUFFING_LOCKING, &["resonance"]);
    let r0 = v["result"]["r0"].as_f64().unwrap();
    assert!((r0 - 3.6).abs() < 0.05, "{r0}");
    assert!(v["result"]["eta"].as_f64().unwrap() < 0.0);
    let (header, rows) = read_csv(&dir.path().join("out/nu.csv"));
    assert_eq!(header, ["r", "nu"]);
    assert_eq!(rows[0], [0.0, 1.0]);

    let v = run_ok(dir.path(), "", &["resonance"]);
    assert!((v["result"]["r0"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-14);
}

#[test]
fn classify_reports_locking_angles() {
    let dir = TempDir::new().unwrap();
    let v = run_ok(dir.path(), "", &["classify"]);
    assert_eq!(v["result"]["regime"], "PhaseLocking");
    assert!((v["result"]["psi0"].as_f64().unwrap() - FRAC_PI_4).abs() < 1e-8);

    let drive_locked = "[system]\nepsilon = 0.001\n[system.params]\nQ0 = -0.126\nZ1 = 0.3535533905932738\nB0 = 2.0\nB1 = 0.0\n";
    let v = run_ok(dir.path(), drive_locked, &["classify"]);
    assert_eq!(v["result"]["regime"], "PhaseLocking");
    assert!((v["result"]["psi0"].as_f64().unwrap() - 2.0 * PI / 3.0).abs() < 1e-2);

    let drift = DUFFING_LOCKING.replace("Q0 = -0.25", "Q0 = -1.0");
    let v = run_ok(dir.path(), &drift, &["classify"]);
    assert_eq!(v["result"]["regime"], "PhaseDrift");
}

#[test]
fn averaged_tables_vanish_without_perturbation() {
    let dir = TempDir::new().unwrap();
    let cfg = "[system]\nepsilon = 0.0\n[system.params]\nQ0 = 0.0\nB1 = 0.0\n";
    let v = run_ok(dir.path(), cfg, &["averaged", "--order", "3"]);
    assert_eq!(v["result"]["order"], 3);
    // Only the expansion of the unperturbed frequency survives, in the angle rate.
    for table in v["result"]["tables"].as_array().unwrap() {
        for mode in table["modes"].as_array().unwrap() {
            let nonzero = mode["poly"]
                .as_array()
                .unwrap()
                .iter()
                .flat_map(|p| p.as_array().unwrap())
                .any(|c| c.as_f64().unwrap() != 0.0);
            if nonzero {
                assert_eq!(table["target"], "Omega", "{table}");
                assert_eq!((mode["j"].as_i64(), mode["l"].as_i64()), (Some(0), Some(0)));
            }
        }
    }
    let (header, rows) = read_csv(&dir.path().join("out/lambda.csv"));
    assert_eq!(header, ["psi", "lambda"]);
    assert_eq!(rows.len(), 361);
    assert!(rows.iter().all(|r| r[1] == 0.0));
}

#[test]
fn simulate_writes_paths_and_locks_without_noise() {
    let dir = TempDir::new().unwrap();
    let cfg = "[system]\np = 2\nepsilon = 0.0\n[system.params]\nQ0 = -0.1\nZ1 = 0.5\nB0 = 1.0\nB1 = 1.0\n\
               [integration]\nt_end = 3000.0\nr = 1.0\nrecord_stride = 1000\n";
    let v = run_ok(dir.path(), cfg, &["simulate"]);
    assert_eq!(v["result"]["regime"], "PhaseLocking");
    let (header, rows) = read_csv(&dir.path().join("out/paths.csv"));
    assert_eq!(header, ["path_id", "t", "x1", "x2", "r", "phi", "psi", "M"]);
    let r0 = 2f64.sqrt();
    let last = rows.last().unwrap();
    assert_eq!(last[1], 3000.0);
    assert!((last[4] - r0).abs() < 0.05 * r0, "r = {}", last[4]);
    let tail: Vec<f64> = rows
        .iter()
        .filter(|r| r[1] > 500.0)
        .map(|r| (r[4] - r0).abs())
        .collect();
    assert!(tail.iter().all(|d| *d < 0.02), "{tail:?}");
}

#[test]
fn simulate_unperturbed_amplitude_is_constant() {
    let dir = TempDir::new().unwrap();
    let cfg = "[system]\nepsilon = 0.0\n[system.params]\nQ0 = 0.0\nB1 = 0.0\n[integration]\nr = 1.1\nt_end = 100.0\n";
    run_ok(dir.path(), cfg, &["simulate", "--paths", "2"]);
    let (_, rows) = read_csv(&dir.path().join("out/paths.csv"));
    assert!(rows.iter().all(|r| (r[4] - 1.1).abs() < 1e-12));
    assert_eq!(rows.iter().filter(|r| r[0] == 1.0).count(), rows.len() / 2);
}

#[test]
fn duffing_paths_settle_near_the_locking_angle() {
    let dir = TempDir::new().unwrap();
    let cfg = DUFFING_LOCKING.replace("epsilon = 0.1", "epsilon = 0.01")
        + "[integration]\nt0 = 1000.0\npsi = 2.5633\nt_end = 8000.0\nrecord_stride = 100000\nn_paths = 4\nscheme = \"drift_heun\"\n";
    let v = run_ok(dir.path(), &cfg, &["simulate"]);
    let mut settled = 0;
    for p in v["result"]["paths"].as_array().unwrap() {
        // Angles here run a quarter turn ahead of the cosine-based orbit convention.
        let psi = (p["psi_final"].as_f64().unwrap() - FRAC_PI_2).rem_euclid(PI);
        let r = p["r_final"].as_f64().unwrap();
        if p["escape"].is_null() && (psi - 1.01).abs() < 0.3 && (r - 3.6).abs() < 0.2 {
            settled += 1;
        }
    }
    assert!(settled >= 3, "{}", v["result"]);
}

#[test]
fn reports_are_deterministic_and_reproducible_from_their_config() {
    let dir = TempDir::new().unwrap();
    let first = run_ok(dir.path(), "", &["capture", "--paths", "30", "--seed", "5"]);
    let bytes = fs::read(dir.path().join("out/capture.json")).unwrap();
    let second = run_ok(dir.path(), "", &["capture", "--paths", "30", "--seed", "5"]);
    assert_eq!(first, second);
    assert_eq!(
        bytes,
        fs::read(dir.path().join("out/capture.json")).unwrap()
    );

    fs::copy(
        dir.path().join("out/capture.json"),
        dir.path().join("report.json"),
    )
    .unwrap();
    let out = rescap(dir.path(), &["capture", "--config", "report.json"]);
    assert!(out.status.success());
    assert_eq!(
        bytes,
        fs::read(dir.path().join("out/capture.json")).unwrap()
    );

    let embedded = RunConfig::from_json_str(&String::from_utf8(bytes).unwrap()).unwrap();
    assert_eq!(embedded.monte_carlo.seed, 5);
    assert_eq!(embedded.monte_carlo.n_paths, 30);
    let stats = &first["result"];
    for key in [
        "n_paths",
        "n_captured",
        "p_hat",
        "ci_low",
        "ci_high",
        "horizon",
        "seed",
    ] {
        assert!(stats.get(key).is_some(), "{key}");
    }
    assert!((stats["horizon"].as_f64().unwrap() - 10.0).abs() < 1e-8);
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = TempDir::new().unwrap();
    let code = |cfg: &str, args: &[&str]| {
        fs::write(dir.path().join("c.toml"), cfg).unwrap();
        let mut full = vec![args[0], "--config", "c.toml", "--out", "out"];
        full.extend_from_slice(&args[1..]);
        rescap(dir.path(), &full).status.code().unwrap()
    };
    assert_eq!(code("", &["resonance"]), 0);
    assert_eq!(code("bogus = 1\n", &["resonance"]), 2);
    assert_eq!(code("[system]\nepsilon = -1.0\n", &["resonance"]), 2);
    assert_eq!(code("[system.params]\nsurprise = 1.0\n", &["resonance"]), 2);
    assert_eq!(code("", &["averaged", "--order", "0"]), 2);
    assert_eq!(code("[phase]\ns0 = 3.0\n", &["resonance"]), 3);
    let degenerate = "[system]\np = 2\nepsilon = 0.0\n[system.params]\nQ0 = -0.7071067811865476\nZ1 = 1.0\nB1 = 0.0\n";
    assert_eq!(code(degenerate, &["classify"]), 3);
    let report: Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/classify.json")).unwrap()).unwrap();
    assert_eq!(report["result"]["regime"], "Degenerate");
    let missing = rescap(dir.path(), &["resonance", "--config", "absent.toml"]);
    assert_eq!(missing.status.code(), Some(2));
}
