use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("twpa-cli-{}-{name}", std::process::id()));
    fs::remove_dir_all(&dir).ok();
    dir
}

fn twpa(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twpa"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn missing_config_is_a_config_error() {
    let out = scratch("missing");
    let r = twpa(&["snail-sweep", "--config", "/nonexistent/run.toml"], &out);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("/nonexistent/run.toml"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let out = scratch("unknown");
    fs::create_dir_all(&out).unwrap();
    let cfg = out.join("bad.toml");
    fs::write(&cfg, "[operating]\nflux = 0.3\npump_ghz = 6.0\n").unwrap();
    let r = twpa(&["snail-sweep", "--config", cfg.to_str().unwrap()], &out.join("run"));
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("pump_ghz"));
    fs::remove_dir_all(&out).ok();
}

#[test]
fn snail_sweep_writes_the_table_and_manifest() {
    let out = scratch("snail");
    let r = twpa(&["snail-sweep"], &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = fs::read_to_string(out.join("snail_sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "phi_ext_over_phi0,phi_min_rad,c2,c3,c4,chi3,chi4,L_henries"
    );
    assert_eq!(lines.count(), 501);
    let manifest = fs::read_to_string(out.join("MANIFEST")).unwrap();
    let names: Vec<&str> = manifest.lines().map(|l| l.split_whitespace().nth(1).unwrap()).collect();
    assert_eq!(names, ["calibration.txt", "resolved_config.toml", "snail_sweep.csv"]);
    fs::remove_dir_all(&out).ok();
}

#[test]
fn resolved_config_reproduces_the_run() {
    let first = scratch("echo-a");
    let r = twpa(&["dispersion", "--flux", "0.3", "--cells", "60"], &first);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let echo = first.join("resolved_config.toml");
    let second = scratch("echo-b");
    let r = twpa(&["dispersion", "--config", echo.to_str().unwrap()], &second);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read(&first, "dispersion.csv"), read(&second, "dispersion.csv"));
    assert_eq!(read(&first, "bands.csv"), read(&second, "bands.csv"));
    // The echo names the first output directory; everything else matches.
    let strip = |b: Vec<u8>| String::from_utf8(b).unwrap().lines().filter(|l| !l.starts_with("out")).collect::<Vec<_>>().join("\n");
    assert_eq!(
        strip(read(&first, "resolved_config.toml")),
        strip(read(&second, "resolved_config.toml"))
    );
    fs::remove_dir_all(&first).ok();
    fs::remove_dir_all(&second).ok();
}

#[test]
fn noise_fit_reads_measurements() {
    let out = scratch("noise");
    fs::create_dir_all(&out).unwrap();
    let data = out.join("dsnr.csv");
    // D = 0.73, A_H = 24.85 at the vacuum floor.
    let mut body = String::from("gain_db,t_noise_k,f_hz\n");
    for i in 0..10 {
        let g_db = 2.0 + 2.5 * i as f64;
        let g = 10f64.powf(g_db / 10.0);
        let n = 0.5 + (g * (2.0 - 0.73) - 1.0) / (2.0 * g * 0.73) + 24.85 / (g * 0.73);
        let t = n * 6.62607015e-34 * 6e9 / 1.380649e-23;
        body.push_str(&format!("{g_db},{t},6e9\n"));
    }
    fs::write(&data, body).unwrap();
    let run = out.join("run");
    let r = Command::new(env!("CARGO_BIN_EXE_twpa"))
        .args(["noise-fit", "--data", data.to_str().unwrap(), "--out", run.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let report = fs::read_to_string(run.join("noise_fit.txt")).unwrap();
    let d: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("d = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((d - 0.73).abs() < 0.0073, "{report}");
    assert!(report.contains("h * f / k_B"));
    let rows = fs::read_to_string(run.join("noise_residuals.csv")).unwrap();
    assert_eq!(rows.lines().count(), 11);
    fs::remove_dir_all(&out).ok();
}

#[test]
fn out_of_band_second_harmonic_check_fails_numerically() {
    let out = scratch("shg");
    // 2 x 6.2 GHz falls in the first stop band at 0.38 Phi0.
    let r = twpa(&["shg"], &out);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
    fs::remove_dir_all(&out).ok();
}
