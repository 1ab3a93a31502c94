use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cqad(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqad"))
        .args(args)
        .current_dir(dir)
        .env_remove("CQAD_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = cqad(&[], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cqad(&["bogus"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn every_subcommand_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for sub in [
        "evolve",
        "stark",
        "purcell",
        "fit",
        "tof",
        "echo",
        "reset-sweep",
        "regimes",
        "selftest",
    ] {
        let out = cqad(&[sub, "--help"], dir.path());
        assert_eq!(out.status.code(), Some(0), "{sub}");
    }
}

#[test]
fn malformed_config_fails_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "dt1_ns = \"three\"\n").unwrap();
    let out = cqad(&["tof", "--config", "bad.toml", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("malformed config") && err.contains("dt1_ns"),
        "{err}"
    );
    let m = manifest(&dir.path().join("o"));
    assert_eq!(m["subcommand"], "tof");
    assert_eq!(m["exit_code"], 1);
    assert_eq!(m["config_path"], "bad.toml");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "dt3_ns = 1.0\n").unwrap();
    let out = cqad(&["tof", "--config", "c.toml", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn tof_reproduces_measured_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let out = cqad(&["tof", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let g = json(&dir.path().join("o/tof.json"));
    let close = |k: &str, v: f64| (g[k].as_f64().unwrap() - v).abs() / v < 0.005;
    assert!(close("v_e_m_per_s", 3937.8));
    assert!(close("d0_um", 5.91));
    assert!(close("r_s", 0.058));
    assert!(close("l_c_um", 53.2));

    fs::write(dir.path().join("long.toml"), "dt1_ns = 4.0\n").unwrap();
    cqad(&["tof", "--config", "long.toml", "--out", "o"], dir.path());
    let g = json(&dir.path().join("o/tof.json"));
    assert!((g["d0_um"].as_f64().unwrap() - 7.88).abs() < 0.04);
}

#[test]
fn reset_sweep_minimum_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        cqad(&["reset-sweep", "--out", "a"], dir.path())
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        cqad(&["reset-sweep", "--out", "b"], dir.path())
            .status
            .code(),
        Some(0)
    );
    let a = fs::read(dir.path().join("a/reset_sweep.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/reset_sweep.csv")).unwrap());

    let mut rdr = csv::Reader::from_reader(a.as_slice());
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["ratio", "t_reset_99_us", "t_reset_999_us"]
    );
    let rows: Vec<(f64, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect();
    let (ratio, _) = rows
        .iter()
        .cloned()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!((0.25..=4.0).contains(&ratio), "{ratio}");
    let summary = json(&dir.path().join("a/reset_summary.json"));
    assert!((summary["minima"][0]["ratio"].as_f64().unwrap() / ratio - 1.0).abs() < 1e-8);
}

#[test]
fn unreached_threshold_is_written_as_inf() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("short.toml"),
        "ratios = [0.01, 1.0]\nt_max = 1.0\n",
    )
    .unwrap();
    assert_eq!(
        cqad(
            &["reset-sweep", "--config", "short.toml", "--out", "o"],
            dir.path()
        )
        .status
        .code(),
        Some(0)
    );
    let csv = fs::read_to_string(dir.path().join("o/reset_sweep.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",inf,inf"), "{csv}");
}

#[test]
fn seeded_echo_noise_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("e.toml"),
        "noise = 0.01\npulse_len_ns = 30.0\n",
    )
    .unwrap();
    let run = |out: &str, seed: &str| {
        let o = cqad(
            &["echo", "--config", "e.toml", "--seed", seed, "--out", out],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0));
        fs::read(dir.path().join(out).join("echo.csv")).unwrap()
    };
    let a = run("a", "3");
    assert_eq!(a, run("b", "3"));
    assert_ne!(a, run("c", "4"));
    assert!(String::from_utf8_lossy(&a).starts_with("t_ns,amplitude\n"));
    assert_eq!(manifest(&dir.path().join("a"))["seed"], 3);
    let summary = json(&dir.path().join("a/echo_summary.json"));
    assert_eq!(summary["sub_echo"], false);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cqad"))
        .arg("regimes")
        .current_dir(dir.path())
        .env("CQAD_OUTPUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("from-env/regimes.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8);
    // mode 6 sits above the exceptional point but short of the strong regime
    assert!(
        csv.lines().nth(6).unwrap().ends_with(",transition"),
        "{csv}"
    );
}

fn write_trace(path: &Path, f: impl Fn(f64) -> f64) {
    let mut s = String::from("t_us,p_e\n");
    for k in 0..200 {
        let t = k as f64 * 0.03;
        s.push_str(&format!("{t},{}\n", f(t)));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn fit_recovers_exponential_lifetime() {
    let dir = tempfile::tempdir().unwrap();
    write_trace(&dir.path().join("trace.csv"), |t| {
        0.9 * (-t / 1.2).exp() + 0.05
    });
    fs::write(
        dir.path().join("fit.toml"),
        "input = \"trace.csv\"\nmodel = \"exponential\"\n",
    )
    .unwrap();
    let out = cqad(&["fit", "--config", "fit.toml", "--out", "o"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = json(&dir.path().join("o/fit.json"));
    let t1 = r["params"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["name"] == "T1")
        .unwrap();
    assert!((t1["value"].as_f64().unwrap() - 1.2).abs() < 1e-6);
}

#[test]
fn fit_on_flat_trace_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    write_trace(&dir.path().join("flat.csv"), |_| 0.5);
    fs::write(dir.path().join("fit.toml"), "input = \"flat.csv\"\n").unwrap();
    let out = cqad(&["fit", "--config", "fit.toml", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(manifest(&dir.path().join("o"))["exit_code"], 2);
}

#[test]
fn resonant_fit_needs_fixed_decay() {
    let dir = tempfile::tempdir().unwrap();
    write_trace(&dir.path().join("t.csv"), |t| (-t).exp());
    fs::write(
        dir.path().join("fit.toml"),
        "input = \"t.csv\"\nmodel = \"resonant\"\n",
    )
    .unwrap();
    let out = cqad(&["fit", "--config", "fit.toml", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma_prime_mhz"));
}

#[test]
fn evolve_engine_tracks_exact_solution() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("e.toml"), "modes = [6, 4]\npoints = 101\n").unwrap();
    let out = cqad(&["evolve", "--config", "e.toml", "--out", "o"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = json(&dir.path().join("o/evolve_summary.json"));
    for row in s["modes"].as_array().unwrap() {
        assert!(row["max_engine_vs_exact"].as_f64().unwrap() < 1e-4);
    }
    let csv = fs::read_to_string(dir.path().join("o/evolve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 101);
}

#[test]
fn stark_signs_follow_straddling() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.toml"), "nbar = [1.0]\n").unwrap();
    assert_eq!(
        cqad(&["stark", "--config", "s.toml", "--out", "o"], dir.path())
            .status
            .code(),
        Some(0)
    );
    let csv = fs::read_to_string(dir.path().join("o/stark.csv")).unwrap();
    let signs: String = csv
        .lines()
        .skip(1)
        .map(|l| {
            if l.split(',').nth(4).unwrap().starts_with('-') {
                '-'
            } else {
                '+'
            }
        })
        .collect();
    assert_eq!(signs, "-----++");
}

#[test]
fn selftest_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = cqad(&["selftest", "--out", "o"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        stdout
            .lines()
            .filter(|l| l.starts_with("PASS") || l.starts_with("FAIL"))
            .count(),
        12
    );
    let all_pass = !stdout.contains("FAIL");
    assert_eq!(out.status.code(), Some(if all_pass { 0 } else { 2 }));
    assert_eq!(
        json(&dir.path().join("o/selftest.json"))
            .as_array()
            .unwrap()
            .len(),
        12
    );
}
